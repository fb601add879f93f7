#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vesseg/tensor.hpp"

namespace vesseg::metrics {

struct Spacing {
    double row_mm = 1.0;
    double col_mm = 1.0;
};

// Strictly binary 2-d mask with physical pixel spacing.
struct BinaryMask {
    index_t h = 0;
    index_t w = 0;
    std::vector<std::uint8_t> values;  // row-major, each 0 or 1
    Spacing spacing;

    BinaryMask() = default;
    BinaryMask(index_t h_, index_t w_, Spacing s = {}) : h(h_), w(w_), values(static_cast<size_t>(h_ * w_), 0), spacing(s) {}

    std::uint8_t& at(index_t r, index_t c) { return values[static_cast<size_t>(r * w + c)]; }
    std::uint8_t at(index_t r, index_t c) const { return values[static_cast<size_t>(r * w + c)]; }
    index_t foreground_count() const;
    void validate() const;  // binary values, positive spacing
};

struct SurfacePoint {
    double r = 0.0;  // physical units (pixel index * spacing)
    double c = 0.0;
};
using SurfacePointSet = std::vector<SurfacePoint>;

// Boundary pixels under 4-connectivity; the image border counts as background.
SurfacePointSet extract_surface(const BinaryMask& m);

double dice(const BinaryMask& gt, const BinaryMask& p);
double avd(const BinaryMask& gt, const BinaryMask& p);        // asymmetric by definition
double assd(const BinaryMask& gt, const BinaryMask& p);       // mm
double hausdorff(const BinaryMask& gt, const BinaryMask& p);  // mm

struct CaseMetrics {
    std::string case_id;
    std::optional<double> dsc, avd, assd_mm, hd_mm;
};

struct Aggregate {
    double mean = 0.0;
    double stdev = 0.0;
    index_t count = 0;  // cases with a defined value
};

struct MetricsReport {
    std::vector<CaseMetrics> per_case;
    Aggregate dsc, avd, assd_mm, hd_mm;
    bool complete = true;  // false when any case is missing any metric

    void aggregate();
    std::string to_csv() const;  // per-case rows + a mean/std summary row
    std::string to_text() const;
};

// Binarize a probability map at `threshold` and compute all four metrics;
// undefined metrics are recorded as missing instead of aborting.
CaseMetrics evaluate_case(const BinaryMask& gt, const Tensor& p_prob, double threshold = 0.5,
                          const std::string& case_id = "");

BinaryMask binarize(const Tensor& prob, double threshold, Spacing spacing = {});

}  // namespace vesseg::metrics
