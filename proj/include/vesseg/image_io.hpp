#pragma once

#include <optional>
#include <string>

#include "vesseg/metrics.hpp"
#include "vesseg/tensor.hpp"

namespace vesseg::io {

// Images are (C, H, W) tensors scaled to [0,1]; 16-bit files scale by 1/65535.
Tensor read_image(const std::string& path, int channels);  // channels: 1 or 3
// raw integer pixel values without scaling (16-bit CT slices)
Tensor read_image_raw(const std::string& path);
metrics::BinaryMask read_mask(const std::string& path);

void write_gray_png(const std::string& path, const Tensor& img);  // (H,W) or (1,H,W) in [0,1]
// raw integer values clamped to [0, 65535], e.g. HU + 1024 CT slices
void write_gray16_png(const std::string& path, const Tensor& raw);
void write_mask_png(const std::string& path, const metrics::BinaryMask& mask);
void write_rgb_png(const std::string& path, const Tensor& img);  // (3,H,W) in [0,1]

// Prediction contour in blue over the input; ground truth contour in green
// when supplied.
Tensor render_overlay(const Tensor& image, const metrics::BinaryMask& pred,
                      const metrics::BinaryMask* gt);

}  // namespace vesseg::io
