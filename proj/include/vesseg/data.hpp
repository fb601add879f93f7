#pragma once

#include <string>
#include <vector>

#include "vesseg/metrics.hpp"
#include "vesseg/rng.hpp"
#include "vesseg/tensor.hpp"

namespace vesseg::data {

// One image with its binary vessel mask. group_id drives fold splitting
// (patient for IRCADb, otherwise the case itself).
struct ImageSample {
    Tensor image;  // (C, H, W) in [0,1]
    metrics::BinaryMask mask;
    std::string case_id;
    std::string group_id;

    void validate() const;
};

struct FoldSplit {
    int fold_index = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct AugmentationConfig {
    Range rotation_deg{-15.0, 15.0};
    Range shear_deg{-10.0, 10.0};
    Range translate_frac{-0.10, 0.10};
    bool flip = true;
    Range blur_sigma{0.0, 1.5};
    Range noise_std{0.0, 0.05};

    static AugmentationConfig identity() {
        return {{0, 0}, {0, 0}, {0, 0}, false, {0, 0}, {0, 0}};
    }
    void validate() const;
};

// Identical geometric transform on image (bilinear) and mask (nearest);
// blur and noise touch the image only. Out-of-frame pixels read as 0.
ImageSample augment(const ImageSample& sample, const AugmentationConfig& cfg, Rng& rng);

// Randomized branching vessel trees rendered as anti-aliased segments with
// width shrinking 3 -> 1 px per branch generation; image = blurred mask over
// a textured background plus Gaussian noise. Deterministic per (seed, index).
std::vector<ImageSample> generate_synthetic(index_t count, index_t size, std::uint64_t seed);
// per-case sub-seed recorded in the dataset manifest
std::uint64_t synthetic_case_seed(std::uint64_t seed, index_t index);

std::vector<FoldSplit> make_folds(const std::vector<ImageSample>& samples, int k, std::uint64_t seed);

std::vector<ImageSample> load_drive(const std::string& root_dir);
std::vector<ImageSample> load_ircadb_slices(const std::string& root_dir);
// images/ + masks/ pairs matched by file stem (the layout `synth` writes)
std::vector<ImageSample> load_png_dir(const std::string& root_dir, int channels);

// writes images/, masks/ and manifest.csv (case_id, seed, foreground_fraction)
std::vector<ImageSample> write_synthetic_dataset(const std::string& out_dir, index_t count,
                                                 index_t size, std::uint64_t seed);

// helpers shared with training
Tensor mask_to_tensor(const metrics::BinaryMask& mask);
Tensor stack_images(const std::vector<const ImageSample*>& samples);
Tensor stack_masks(const std::vector<const ImageSample*>& samples);
Tensor resize_bilinear(const Tensor& chw, index_t out_h, index_t out_w);
metrics::BinaryMask resize_nearest(const metrics::BinaryMask& mask, index_t out_h, index_t out_w);
double foreground_fraction(const metrics::BinaryMask& mask);

}  // namespace vesseg::data
