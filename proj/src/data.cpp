#include "vesseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "vesseg/autograd.hpp"
#include "vesseg/image_io.hpp"

namespace fs = std::filesystem;

namespace vesseg::data {

void ImageSample::validate() const {
    if (image.ndim() != 3) throw ValidationError("sample image must be (C,H,W), got " + image.shape_str());
    if (image.dim(1) != mask.h || image.dim(2) != mask.w)
        throw ValidationError("sample " + case_id + ": image " + image.shape_str() + " does not match mask " +
                              std::to_string(mask.h) + "x" + std::to_string(mask.w));
    mask.validate();
}

void AugmentationConfig::validate() const {
    auto check = [](const Range& r, const char* name) {
        if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
            throw ConfigError(std::string("augmentation range ") + name + " is invalid");
    };
    check(rotation_deg, "rotation_deg");
    check(shear_deg, "shear_deg");
    check(translate_frac, "translate_frac");
    check(blur_sigma, "blur_sigma");
    check(noise_std, "noise_std");
    if (blur_sigma.lo < 0 || noise_std.lo < 0) throw ConfigError("blur/noise ranges must be non-negative");
}

double foreground_fraction(const metrics::BinaryMask& mask) {
    return static_cast<double>(mask.foreground_count()) / static_cast<double>(mask.h * mask.w);
}

Tensor mask_to_tensor(const metrics::BinaryMask& mask) {
    Tensor t({1, mask.h, mask.w});
    for (index_t i = 0; i < mask.h * mask.w; ++i) t.data[i] = mask.values[static_cast<size_t>(i)];
    return t;
}

Tensor stack_images(const std::vector<const ImageSample*>& samples) {
    if (samples.empty()) throw ValidationError("cannot stack an empty batch");
    const Tensor& first = samples[0]->image;
    Tensor out({static_cast<index_t>(samples.size()), first.dim(0), first.dim(1), first.dim(2)});
    const index_t stride = first.numel();
    for (size_t i = 0; i < samples.size(); ++i) {
        require_same_shape(first, samples[i]->image, "stack_images");
        std::copy_n(samples[i]->image.data.begin(), stride, out.data.begin() + static_cast<index_t>(i) * stride);
    }
    return out;
}

Tensor stack_masks(const std::vector<const ImageSample*>& samples) {
    if (samples.empty()) throw ValidationError("cannot stack an empty batch");
    const index_t h = samples[0]->mask.h, w = samples[0]->mask.w;
    Tensor out({static_cast<index_t>(samples.size()), 1, h, w});
    for (size_t i = 0; i < samples.size(); ++i) {
        if (samples[i]->mask.h != h || samples[i]->mask.w != w)
            throw ShapeError("stack_masks: inconsistent mask sizes in batch");
        for (index_t j = 0; j < h * w; ++j)
            out.data[static_cast<index_t>(i) * h * w + j] = samples[i]->mask.values[static_cast<size_t>(j)];
    }
    return out;
}

Tensor resize_bilinear(const Tensor& chw, index_t out_h, index_t out_w) {
    if (chw.ndim() != 3) throw ShapeError("resize_bilinear expects (C,H,W), got " + chw.shape_str());
    Tensor four({1, chw.dim(0), chw.dim(1), chw.dim(2)}, chw.data);
    Tensor r = ag::bilinear_resize(ag::leaf(four), out_h, out_w).val();
    return Tensor({chw.dim(0), out_h, out_w}, std::move(r.data));
}

metrics::BinaryMask resize_nearest(const metrics::BinaryMask& mask, index_t out_h, index_t out_w) {
    metrics::BinaryMask out(out_h, out_w, mask.spacing);
    const double sr = static_cast<double>(mask.h) / static_cast<double>(out_h);
    const double sc = static_cast<double>(mask.w) / static_cast<double>(out_w);
    for (index_t r = 0; r < out_h; ++r) {
        index_t src_r = static_cast<index_t>(std::floor((static_cast<double>(r) + 0.5) * sr));
        src_r = std::clamp<index_t>(src_r, 0, mask.h - 1);
        for (index_t c = 0; c < out_w; ++c) {
            index_t src_c = static_cast<index_t>(std::floor((static_cast<double>(c) + 0.5) * sc));
            src_c = std::clamp<index_t>(src_c, 0, mask.w - 1);
            out.at(r, c) = mask.at(src_r, src_c);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

namespace {
struct Affine {
    // source = M * (dest - center) + center + shift  (inverse mapping)
    double m00 = 1, m01 = 0, m10 = 0, m11 = 1;
    double shift_r = 0, shift_c = 0;
    bool is_identity() const {
        return m00 == 1 && m01 == 0 && m10 == 0 && m11 == 1 && shift_r == 0 && shift_c == 0;
    }
};

Tensor gaussian_blur(const Tensor& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i / sigma) * (i / sigma));
        sum += k[static_cast<size_t>(i + radius)];
    }
    for (double& v : k) v /= sum;

    const index_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor tmp({C, H, W}), out({C, H, W});
    for (index_t ch = 0; ch < C; ++ch) {
        const double* src = &img.data[ch * H * W];
        double* mid = &tmp.data[ch * H * W];
        for (index_t r = 0; r < H; ++r)
            for (index_t c = 0; c < W; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const index_t cc = std::clamp<index_t>(c + i, 0, W - 1);
                    acc += k[static_cast<size_t>(i + radius)] * src[r * W + cc];
                }
                mid[r * W + c] = acc;
            }
        double* dst = &out.data[ch * H * W];
        for (index_t r = 0; r < H; ++r)
            for (index_t c = 0; c < W; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const index_t rr = std::clamp<index_t>(r + i, 0, H - 1);
                    acc += k[static_cast<size_t>(i + radius)] * mid[rr * W + c];
                }
                dst[r * W + c] = acc;
            }
    }
    return out;
}
}  // namespace

ImageSample augment(const ImageSample& sample, const AugmentationConfig& cfg, Rng& rng) {
    cfg.validate();
    sample.validate();

    // fixed draw order keeps streams aligned regardless of range degeneracy
    const double rot = rng.uniform(cfg.rotation_deg.lo, cfg.rotation_deg.hi) * M_PI / 180.0;
    const double shear = rng.uniform(cfg.shear_deg.lo, cfg.shear_deg.hi) * M_PI / 180.0;
    const double tr = rng.uniform(cfg.translate_frac.lo, cfg.translate_frac.hi);
    const double tc = rng.uniform(cfg.translate_frac.lo, cfg.translate_frac.hi);
    const bool flip = cfg.flip && rng.coin(0.5);
    const double sigma = rng.uniform(cfg.blur_sigma.lo, cfg.blur_sigma.hi);
    const double noise = rng.uniform(cfg.noise_std.lo, cfg.noise_std.hi);

    const index_t C = sample.image.dim(0), H = sample.image.dim(1), W = sample.image.dim(2);

    // forward map: flip, shear (columns by rows), then rotate; inverse applied per pixel
    const double f00 = std::cos(rot), f01 = -std::sin(rot);
    const double f10 = std::sin(rot), f11 = std::cos(rot);
    const double sh = std::tan(shear);  // shear: c' = c + tan(shear) * r
    double a00 = f00, a01 = f01;
    double a10 = f10, a11 = f11;
    {  // apply shear on the right: [r; c] -> [r; c + sh*r]
        const double b00 = a00 + a01 * sh, b01 = a01;
        const double b10 = a10 + a11 * sh, b11 = a11;
        a00 = b00;
        a01 = b01;
        a10 = b10;
        a11 = b11;
    }
    if (flip) {  // horizontal flip: c -> -c
        a01 = -a01;
        a11 = -a11;
    }
    // invert the 2x2
    const double det = a00 * a11 - a01 * a10;
    Affine inv;
    inv.m00 = a11 / det;
    inv.m01 = -a01 / det;
    inv.m10 = -a10 / det;
    inv.m11 = a00 / det;
    inv.shift_r = tr * static_cast<double>(H);
    inv.shift_c = tc * static_cast<double>(W);

    const double cr = (static_cast<double>(H) - 1.0) / 2.0;
    const double cc = (static_cast<double>(W) - 1.0) / 2.0;

    ImageSample out = sample;
    const bool geometric = !(rot == 0.0 && shear == 0.0 && tr == 0.0 && tc == 0.0 && !flip);
    if (geometric) {
        Tensor img({C, H, W});
        metrics::BinaryMask msk(H, W, sample.mask.spacing);
        for (index_t r = 0; r < H; ++r) {
            for (index_t c = 0; c < W; ++c) {
                const double dr = static_cast<double>(r) - cr - inv.shift_r;
                const double dc = static_cast<double>(c) - cc - inv.shift_c;
                const double sr = inv.m00 * dr + inv.m01 * dc + cr;
                const double sc = inv.m10 * dr + inv.m11 * dc + cc;

                // nearest neighbour keeps the mask binary
                const index_t nr = static_cast<index_t>(std::lround(sr));
                const index_t nc = static_cast<index_t>(std::lround(sc));
                if (nr >= 0 && nr < H && nc >= 0 && nc < W) msk.at(r, c) = sample.mask.at(nr, nc);

                const index_t r0 = static_cast<index_t>(std::floor(sr));
                const index_t c0 = static_cast<index_t>(std::floor(sc));
                const double fr = sr - static_cast<double>(r0);
                const double fc = sc - static_cast<double>(c0);
                for (index_t ch = 0; ch < C; ++ch) {
                    auto sample_px = [&](index_t rr, index_t ccx) -> double {
                        if (rr < 0 || rr >= H || ccx < 0 || ccx >= W) return 0.0;
                        return sample.image.data[(ch * H + rr) * W + ccx];
                    };
                    const double v00 = sample_px(r0, c0), v01 = sample_px(r0, c0 + 1);
                    const double v10 = sample_px(r0 + 1, c0), v11 = sample_px(r0 + 1, c0 + 1);
                    const double top = v00 + (v01 - v00) * fc;
                    const double bot = v10 + (v11 - v10) * fc;
                    img.data[(ch * H + r) * W + c] = top + (bot - top) * fr;
                }
            }
        }
        out.image = std::move(img);
        out.mask = std::move(msk);
    }

    if (sigma > 0.0) out.image = gaussian_blur(out.image, sigma);
    if (noise > 0.0) {
        for (double& v : out.image.data) v += rng.normal(0.0, noise);
    }
    for (double& v : out.image.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// synthetic vascular trees
// ---------------------------------------------------------------------------

namespace {
struct Segment {
    double r0, c0, r1, c1, width;
};

void grow_branch(Rng& rng, std::vector<Segment>& segs, double r, double c, double angle,
                 int generation, int max_generation, double scale, int* branch_count) {
    const double width = generation == 0 ? 3.0 : (generation == 1 ? 2.0 : 1.0);
    const int steps = 3;
    double len = scale * rng.uniform(0.28, 0.45) * std::pow(0.78, generation);
    double cr = r, cc = c, a = angle;
    const double safe_lo = 3.0, safe_hi = scale - 4.0;
    for (int s = 0; s < steps; ++s) {
        a += rng.uniform(-0.25, 0.25);
        // near the frame, steer back toward the center so the tree stays whole
        if (cr < safe_lo + 4.0 || cr > safe_hi - 4.0 || cc < safe_lo + 4.0 || cc > safe_hi - 4.0)
            a = std::atan2(scale / 2.0 - cr, scale / 2.0 - cc) + rng.uniform(-0.4, 0.4);
        double nr = cr + (len / steps) * std::sin(a);
        double nc = cc + (len / steps) * std::cos(a);
        nr = std::clamp(nr, safe_lo, safe_hi);
        nc = std::clamp(nc, safe_lo, safe_hi);
        segs.push_back({cr, cc, nr, nc, width});
        cr = nr;
        cc = nc;
    }
    ++*branch_count;
    if (generation >= max_generation) return;
    // the root always bifurcates; deeper nodes bifurcate with probability 0.7
    const bool bifurcate = generation == 0 || rng.coin(0.7);
    const double spread = rng.uniform(0.35, 0.75);
    if (bifurcate) {
        grow_branch(rng, segs, cr, cc, a - spread, generation + 1, max_generation, scale, branch_count);
        grow_branch(rng, segs, cr, cc, a + spread, generation + 1, max_generation, scale, branch_count);
    } else {
        grow_branch(rng, segs, cr, cc, a + rng.uniform(-0.3, 0.3), generation + 1, max_generation, scale,
                    branch_count);
    }
}

double segment_distance(double pr, double pc, const Segment& s) {
    const double vr = s.r1 - s.r0, vc = s.c1 - s.c0;
    const double wr = pr - s.r0, wc = pc - s.c0;
    const double vv = vr * vr + vc * vc;
    double t = vv > 0.0 ? (wr * vr + wc * vc) / vv : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dr = pr - (s.r0 + t * vr), dc = pc - (s.c0 + t * vc);
    return std::sqrt(dr * dr + dc * dc);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

bool single_component_8(const metrics::BinaryMask& m) {
    std::vector<char> seen(m.values.size(), 0);
    index_t start = -1;
    for (index_t i = 0; i < m.h * m.w; ++i)
        if (m.values[static_cast<size_t>(i)]) {
            start = i;
            break;
        }
    if (start < 0) return false;
    std::vector<index_t> stack{start};
    seen[static_cast<size_t>(start)] = 1;
    while (!stack.empty()) {
        const index_t cur = stack.back();
        stack.pop_back();
        const index_t r = cur / m.w, c = cur % m.w;
        for (index_t dr = -1; dr <= 1; ++dr)
            for (index_t dc = -1; dc <= 1; ++dc) {
                const index_t rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= m.h || cc < 0 || cc >= m.w) continue;
                const index_t i = rr * m.w + cc;
                if (m.values[static_cast<size_t>(i)] && !seen[static_cast<size_t>(i)]) {
                    seen[static_cast<size_t>(i)] = 1;
                    stack.push_back(i);
                }
            }
    }
    for (index_t i = 0; i < m.h * m.w; ++i)
        if (m.values[static_cast<size_t>(i)] && !seen[static_cast<size_t>(i)]) return false;
    return true;
}

// one attempt at rendering a tree; returns anti-aliased coverage + mask
bool render_tree(Rng& rng, index_t size, Tensor& coverage, metrics::BinaryMask& mask,
                 int* branch_count) {
    std::vector<Segment> segs;
    *branch_count = 0;
    const double margin = 0.12 * static_cast<double>(size);
    // root on a random border side, pointing inward
    const int side = static_cast<int>(rng.below(4));
    double r, c, angle;
    const double u = rng.uniform(0.25, 0.75) * static_cast<double>(size);
    switch (side) {
        case 0: r = margin; c = u; angle = M_PI / 2; break;              // top, growing down
        case 1: r = static_cast<double>(size) - margin; c = u; angle = -M_PI / 2; break;
        case 2: r = u; c = margin; angle = 0.0; break;                   // left, growing right
        default: r = u; c = static_cast<double>(size) - margin; angle = M_PI; break;
    }
    angle += rng.uniform(-0.35, 0.35);
    grow_branch(rng, segs, r, c, angle, 0, 3, static_cast<double>(size), branch_count);

    coverage = Tensor::zeros({1, size, size});
    for (const Segment& s : segs) {
        const double pad = s.width / 2.0 + 1.5;
        const index_t r0 = std::clamp<index_t>(static_cast<index_t>(std::floor(std::min(s.r0, s.r1) - pad)), 0, size - 1);
        const index_t r1 = std::clamp<index_t>(static_cast<index_t>(std::ceil(std::max(s.r0, s.r1) + pad)), 0, size - 1);
        const index_t c0 = std::clamp<index_t>(static_cast<index_t>(std::floor(std::min(s.c0, s.c1) - pad)), 0, size - 1);
        const index_t c1 = std::clamp<index_t>(static_cast<index_t>(std::ceil(std::max(s.c0, s.c1) + pad)), 0, size - 1);
        for (index_t pr = r0; pr <= r1; ++pr)
            for (index_t pc = c0; pc <= c1; ++pc) {
                const double d = segment_distance(static_cast<double>(pr), static_cast<double>(pc), s);
                const double cov = std::clamp(s.width / 2.0 + 0.5 - d, 0.0, 1.0);
                double& v = coverage.data[pr * size + pc];
                if (cov > v) v = cov;
            }
    }
    mask = metrics::BinaryMask(size, size);
    for (index_t i = 0; i < size * size; ++i) mask.values[static_cast<size_t>(i)] = coverage.data[i] > 0.5 ? 1 : 0;

    const double frac = foreground_fraction(mask);
    return frac >= 0.005 && frac <= 0.15 && *branch_count >= 2 && single_component_8(mask);
}
}  // namespace

std::uint64_t synthetic_case_seed(std::uint64_t seed, index_t index) {
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

std::vector<ImageSample> generate_synthetic(index_t count, index_t size, std::uint64_t seed) {
    if (size < 32) throw ConfigError("synthetic size must be >= 32, got " + std::to_string(size));
    if (count < 1) throw ConfigError("synthetic count must be >= 1");

    int digits = 1;
    for (index_t v = count - 1; v >= 10; v /= 10) ++digits;
    digits = std::max(digits, 3);

    std::vector<ImageSample> out;
    out.reserve(static_cast<size_t>(count));
    for (index_t i = 0; i < count; ++i) {
        const std::uint64_t case_seed = synthetic_case_seed(seed, i);
        Tensor coverage;
        metrics::BinaryMask mask;
        int branches = 0;
        for (std::uint64_t attempt = 0;; ++attempt) {
            Rng rng(splitmix64(case_seed + attempt));
            if (render_tree(rng, size, coverage, mask, &branches)) break;
            if (attempt > 64) throw ValidationError("synthetic generator failed to satisfy constraints");
        }

        // textured background + bright vessels + noise
        Rng irng(splitmix64(case_seed ^ 0x1337ull));
        Tensor noise_field({1, size, size});
        for (double& v : noise_field.data) v = irng.uniform();
        Tensor texture = gaussian_blur(noise_field, static_cast<double>(size) / 10.0);
        double tmin = 1e9, tmax = -1e9;
        for (double v : texture.data) {
            tmin = std::min(tmin, v);
            tmax = std::max(tmax, v);
        }
        Tensor vessel = gaussian_blur(coverage, 0.7);
        Tensor img({1, size, size});
        for (index_t j = 0; j < size * size; ++j) {
            const double tex = tmax > tmin ? (texture.data[j] - tmin) / (tmax - tmin) : 0.5;
            double v = 0.15 + 0.25 * tex + 0.55 * vessel.data[j] + irng.normal(0.0, 0.03);
            img.data[j] = std::clamp(v, 0.0, 1.0);
        }

        char id[32];
        std::snprintf(id, sizeof(id), "case_%0*lld", digits, static_cast<long long>(i));
        ImageSample s;
        s.image = std::move(img);
        s.mask = std::move(mask);
        s.case_id = id;
        s.group_id = id;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// folds
// ---------------------------------------------------------------------------

std::vector<FoldSplit> make_folds(const std::vector<ImageSample>& samples, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold split needs k >= 2, got " + std::to_string(k));
    std::vector<std::string> groups;
    std::map<std::string, std::vector<std::string>> group_cases;
    for (const ImageSample& s : samples) {
        if (!group_cases.count(s.group_id)) groups.push_back(s.group_id);
        group_cases[s.group_id].push_back(s.case_id);
    }
    if (static_cast<int>(groups.size()) < k)
        throw ConfigError("cannot make " + std::to_string(k) + " folds from " + std::to_string(groups.size()) +
                          " groups");

    Rng rng(seed ^ 0x666f6c64ull);
    rng.shuffle(groups);

    std::vector<std::set<std::string>> val_groups(static_cast<size_t>(k));
    for (size_t i = 0; i < groups.size(); ++i) val_groups[i % static_cast<size_t>(k)].insert(groups[i]);

    std::vector<FoldSplit> folds(static_cast<size_t>(k));
    for (int f = 0; f < k; ++f) {
        folds[static_cast<size_t>(f)].fold_index = f;
        for (const ImageSample& s : samples) {
            if (val_groups[static_cast<size_t>(f)].count(s.group_id))
                folds[static_cast<size_t>(f)].val_ids.push_back(s.case_id);
            else
                folds[static_cast<size_t>(f)].train_ids.push_back(s.case_id);
        }
    }
    return folds;
}

// ---------------------------------------------------------------------------
// loaders
// ---------------------------------------------------------------------------

namespace {
std::string stem_of(const fs::path& p) { return p.stem().string(); }

std::string numeric_prefix(const std::string& stem) {
    std::string digits;
    for (char ch : stem) {
        if (ch >= '0' && ch <= '9') digits += ch;
        else break;
    }
    return digits;
}

std::vector<fs::path> list_files(const fs::path& dir, const std::set<std::string>& exts) {
    std::vector<fs::path> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (exts.count(ext)) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}
}  // namespace

std::vector<ImageSample> load_drive(const std::string& root_dir) {
    const fs::path root(root_dir);
    const auto images = list_files(root / "images", {".tif", ".tiff", ".png", ".jpg"});
    const auto masks = list_files(root / "masks", {".png", ".tif", ".tiff"});
    if (images.empty()) {
        std::cerr << "warning: no images found under " << (root / "images") << "\n";
        return {};
    }

    std::map<std::string, fs::path> mask_by_prefix;
    for (const fs::path& m : masks) {
        const std::string key = numeric_prefix(stem_of(m));
        if (!key.empty()) mask_by_prefix[key] = m;
    }

    std::vector<std::string> orphans;
    std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
    for (const fs::path& img : images) {
        const std::string key = numeric_prefix(stem_of(img));
        auto it = key.empty() ? mask_by_prefix.end() : mask_by_prefix.find(key);
        if (it == mask_by_prefix.end()) orphans.push_back(img.filename().string());
        else pairs.emplace_back(key, std::make_pair(img, it->second));
    }
    if (!orphans.empty()) {
        std::string msg = "images without masks:";
        for (const std::string& o : orphans) msg += " " + o;
        throw IngestionError(msg);
    }

    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        if (a.first.size() != b.first.size()) return a.first.size() < b.first.size();
        return a.first < b.first;
    });

    std::vector<ImageSample> out;
    for (const auto& [key, files] : pairs) {
        ImageSample s;
        s.image = resize_bilinear(io::read_image(files.first.string(), 3), 512, 512);
        s.mask = resize_nearest(io::read_mask(files.second.string()), 512, 512);
        s.case_id = key;
        s.group_id = key;
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<ImageSample> load_ircadb_slices(const std::string& root_dir) {
    const fs::path root(root_dir);
    std::vector<fs::path> patients;
    if (fs::exists(root))
        for (const auto& e : fs::directory_iterator(root))
            if (e.is_directory()) patients.push_back(e.path());
    std::sort(patients.begin(), patients.end());
    if (patients.empty()) {
        std::cerr << "warning: no patient directories under " << root << "\n";
        return {};
    }

    constexpr double kHuOffset = 1024.0;  // stored value = HU + 1024
    constexpr double kWindowLo = -100.0, kWindowHi = 400.0;
    constexpr index_t kPad = 8;
    constexpr index_t kOutSize = 256;

    std::vector<ImageSample> out;
    for (const fs::path& patient : patients) {
        const auto slices = list_files(patient / "slices", {".png"});
        for (const fs::path& slice : slices) {
            const std::string name = slice.filename().string();
            const fs::path liver_p = patient / "liver" / name;
            const fs::path vessel_p = patient / "vessels" / name;
            if (!fs::exists(liver_p) || !fs::exists(vessel_p)) {
                std::cerr << "warning: skipping " << slice << " (missing labels)\n";
                continue;
            }
            metrics::BinaryMask liver = io::read_mask(liver_p.string());
            if (liver.foreground_count() == 0) {
                std::cerr << "warning: skipping " << slice << " (empty liver label)\n";
                continue;
            }
            Tensor raw = io::read_image_raw(slice.string());
            metrics::BinaryMask vessels = io::read_mask(vessel_p.string());
            const index_t H = raw.dim(1), W = raw.dim(2);
            if (liver.h != H || liver.w != W || vessels.h != H || vessels.w != W)
                throw IngestionError("label size mismatch for " + slice.string());

            index_t r0 = H, r1 = -1, c0 = W, c1 = -1;
            for (index_t r = 0; r < H; ++r)
                for (index_t c = 0; c < W; ++c)
                    if (liver.at(r, c)) {
                        r0 = std::min(r0, r);
                        r1 = std::max(r1, r);
                        c0 = std::min(c0, c);
                        c1 = std::max(c1, c);
                    }
            r0 = std::max<index_t>(0, r0 - kPad);
            c0 = std::max<index_t>(0, c0 - kPad);
            r1 = std::min<index_t>(H - 1, r1 + kPad);
            c1 = std::min<index_t>(W - 1, c1 + kPad);
            const index_t ch = r1 - r0 + 1, cw = c1 - c0 + 1;

            Tensor crop({1, ch, cw});
            metrics::BinaryMask mcrop(ch, cw);
            for (index_t r = 0; r < ch; ++r)
                for (index_t c = 0; c < cw; ++c) {
                    const double hu = raw.data[(r0 + r) * W + (c0 + c)] - kHuOffset;
                    crop.data[r * cw + c] = std::clamp((hu - kWindowLo) / (kWindowHi - kWindowLo), 0.0, 1.0);
                    mcrop.at(r, c) = vessels.at(r0 + r, c0 + c);
                }

            ImageSample s;
            s.image = resize_bilinear(crop, kOutSize, kOutSize);
            s.mask = resize_nearest(mcrop, kOutSize, kOutSize);
            s.case_id = patient.filename().string() + "_" + slice.stem().string();
            s.group_id = patient.filename().string();
            s.validate();
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<ImageSample> load_png_dir(const std::string& root_dir, int channels) {
    const fs::path root(root_dir);
    const auto images = list_files(root / "images", {".png", ".tif", ".tiff", ".jpg"});
    const auto masks = list_files(root / "masks", {".png"});
    if (images.empty()) {
        std::cerr << "warning: no images found under " << (root / "images") << "\n";
        return {};
    }
    std::map<std::string, fs::path> mask_by_stem;
    for (const fs::path& m : masks) mask_by_stem[stem_of(m)] = m;

    std::vector<std::string> orphans;
    std::vector<ImageSample> out;
    for (const fs::path& img : images) {
        auto it = mask_by_stem.find(stem_of(img));
        if (it == mask_by_stem.end()) {
            orphans.push_back(img.filename().string());
            continue;
        }
        ImageSample s;
        s.image = io::read_image(img.string(), channels);
        s.mask = io::read_mask(it->second.string());
        s.case_id = stem_of(img);
        s.group_id = s.case_id;
        s.validate();
        out.push_back(std::move(s));
    }
    if (!orphans.empty()) {
        std::string msg = "images without masks:";
        for (const std::string& o : orphans) msg += " " + o;
        throw IngestionError(msg);
    }
    return out;
}

std::vector<ImageSample> write_synthetic_dataset(const std::string& out_dir, index_t count,
                                                 index_t size, std::uint64_t seed) {
    std::vector<ImageSample> samples = generate_synthetic(count, size, seed);
    const fs::path root(out_dir);
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");

    std::ofstream manifest(root / "manifest.csv");
    if (!manifest) throw IngestionError("cannot write manifest under " + out_dir);
    manifest << "case_id,seed,foreground_fraction\n";
    for (index_t i = 0; i < count; ++i) {
        const ImageSample& s = samples[static_cast<size_t>(i)];
        io::write_gray_png((root / "images" / (s.case_id + ".png")).string(), s.image);
        io::write_mask_png((root / "masks" / (s.case_id + ".png")).string(), s.mask);
        char frac[32];
        std::snprintf(frac, sizeof(frac), "%.6f", foreground_fraction(s.mask));
        manifest << s.case_id << ',' << synthetic_case_seed(seed, i) << ',' << frac << '\n';
    }
    return samples;
}

}  // namespace vesseg::data
