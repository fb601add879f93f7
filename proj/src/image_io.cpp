#include "vesseg/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace vesseg::io {

namespace {
cv::Mat imread_or_throw(const std::string& path, int flags) {
    cv::Mat m = cv::imread(path, flags);
    if (m.empty()) throw IngestionError("cannot read image: " + path);
    return m;
}

double dtype_scale(const cv::Mat& m) {
    switch (m.depth()) {
        case CV_8U: return 255.0;
        case CV_16U: return 65535.0;
        default: throw IngestionError("unsupported image depth (expected 8- or 16-bit)");
    }
}

double pixel_value(const cv::Mat& m, int r, int c, int ch) {
    if (m.depth() == CV_8U) return static_cast<double>(m.ptr<std::uint8_t>(r)[c * m.channels() + ch]);
    return static_cast<double>(m.ptr<std::uint16_t>(r)[c * m.channels() + ch]);
}
}  // namespace

Tensor read_image(const std::string& path, int channels) {
    if (channels != 1 && channels != 3) throw ConfigError("read_image supports 1 or 3 channels");
    cv::Mat m = imread_or_throw(path, channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
    const double scale = dtype_scale(m);
    Tensor t({channels, m.rows, m.cols});
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c)
            for (int ch = 0; ch < channels; ++ch) {
                // OpenCV loads color as BGR
                const int src_ch = channels == 3 ? 2 - ch : 0;
                t.data[(static_cast<index_t>(ch) * m.rows + r) * m.cols + c] =
                    pixel_value(m, r, c, src_ch) / scale;
            }
    return t;
}

Tensor read_image_raw(const std::string& path) {
    cv::Mat m = imread_or_throw(path, cv::IMREAD_UNCHANGED);
    if (m.channels() != 1) throw IngestionError("expected single-channel image: " + path);
    (void)dtype_scale(m);
    Tensor t({1, m.rows, m.cols});
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) t.data[static_cast<index_t>(r) * m.cols + c] = pixel_value(m, r, c, 0);
    return t;
}

metrics::BinaryMask read_mask(const std::string& path) {
    cv::Mat m = imread_or_throw(path, cv::IMREAD_GRAYSCALE);
    const double half = dtype_scale(m) / 2.0;
    metrics::BinaryMask mask(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) mask.at(r, c) = pixel_value(m, r, c, 0) > half ? 1 : 0;
    return mask;
}

namespace {
std::uint8_t to_u8(double v) {
    const double x = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<std::uint8_t>(x);
}

void imwrite_or_throw(const std::string& path, const cv::Mat& m) {
    if (!cv::imwrite(path, m)) throw IngestionError("cannot write image: " + path);
}
}  // namespace

void write_gray_png(const std::string& path, const Tensor& img) {
    index_t h, w;
    const double* data;
    if (img.ndim() == 2) {
        h = img.dim(0);
        w = img.dim(1);
        data = img.data.data();
    } else if (img.ndim() == 3 && img.dim(0) == 1) {
        h = img.dim(1);
        w = img.dim(2);
        data = img.data.data();
    } else {
        throw ShapeError("write_gray_png expects (H,W) or (1,H,W), got " + img.shape_str());
    }
    cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
    for (index_t r = 0; r < h; ++r)
        for (index_t c = 0; c < w; ++c) m.ptr<std::uint8_t>(static_cast<int>(r))[c] = to_u8(data[r * w + c]);
    imwrite_or_throw(path, m);
}

void write_gray16_png(const std::string& path, const Tensor& raw) {
    index_t h, w;
    if (raw.ndim() == 2) {
        h = raw.dim(0);
        w = raw.dim(1);
    } else if (raw.ndim() == 3 && raw.dim(0) == 1) {
        h = raw.dim(1);
        w = raw.dim(2);
    } else {
        throw ShapeError("write_gray16_png expects (H,W) or (1,H,W), got " + raw.shape_str());
    }
    cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_16UC1);
    for (index_t r = 0; r < h; ++r)
        for (index_t c = 0; c < w; ++c) {
            const double v = std::clamp(raw.data[r * w + c], 0.0, 65535.0);
            m.ptr<std::uint16_t>(static_cast<int>(r))[c] = static_cast<std::uint16_t>(std::lround(v));
        }
    imwrite_or_throw(path, m);
}

void write_mask_png(const std::string& path, const metrics::BinaryMask& mask) {
    cv::Mat m(static_cast<int>(mask.h), static_cast<int>(mask.w), CV_8UC1);
    for (index_t r = 0; r < mask.h; ++r)
        for (index_t c = 0; c < mask.w; ++c)
            m.ptr<std::uint8_t>(static_cast<int>(r))[c] = mask.at(r, c) ? 255 : 0;
    imwrite_or_throw(path, m);
}

void write_rgb_png(const std::string& path, const Tensor& img) {
    if (img.ndim() != 3 || img.dim(0) != 3)
        throw ShapeError("write_rgb_png expects (3,H,W), got " + img.shape_str());
    const index_t h = img.dim(1), w = img.dim(2);
    cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_8UC3);
    for (index_t r = 0; r < h; ++r)
        for (index_t c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)  // tensor RGB -> mat BGR
                m.ptr<std::uint8_t>(static_cast<int>(r))[c * 3 + (2 - ch)] =
                    to_u8(img.data[(static_cast<index_t>(ch) * h + r) * w + c]);
    imwrite_or_throw(path, m);
}

Tensor render_overlay(const Tensor& image, const metrics::BinaryMask& pred,
                      const metrics::BinaryMask* gt) {
    index_t h, w;
    if (image.ndim() == 3) {
        h = image.dim(1);
        w = image.dim(2);
    } else if (image.ndim() == 2) {
        h = image.dim(0);
        w = image.dim(1);
    } else {
        throw ShapeError("render_overlay expects (C,H,W) or (H,W) image, got " + image.shape_str());
    }
    Tensor out({3, h, w});
    for (index_t c = 0; c < 3; ++c)
        for (index_t i = 0; i < h * w; ++i) {
            double v;
            if (image.ndim() == 2) v = image.data[i];
            else if (image.dim(0) == 3) v = image.data[c * h * w + i];
            else v = image.data[i];
            out.data[c * h * w + i] = v;
        }

    auto paint = [&](const metrics::BinaryMask& m, double r, double g, double b) {
        metrics::BinaryMask unit = m;
        unit.spacing = {1.0, 1.0};  // paint at pixel coordinates
        for (const metrics::SurfacePoint& p : metrics::extract_surface(unit)) {
            const index_t pr = static_cast<index_t>(p.r), pc = static_cast<index_t>(p.c);
            out.data[0 * h * w + pr * w + pc] = r;
            out.data[1 * h * w + pr * w + pc] = g;
            out.data[2 * h * w + pr * w + pc] = b;
        }
    };
    if (gt) paint(*gt, 0.0, 1.0, 0.0);
    paint(pred, 0.0, 0.0, 1.0);
    return out;
}

}  // namespace vesseg::io
