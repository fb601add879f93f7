#include "vesseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace vesseg::metrics {

index_t BinaryMask::foreground_count() const {
    index_t n = 0;
    for (std::uint8_t v : values) n += v;
    return n;
}

void BinaryMask::validate() const {
    if (h <= 0 || w <= 0 || static_cast<size_t>(h * w) != values.size())
        throw ShapeError("mask dimensions inconsistent with storage");
    for (std::uint8_t v : values)
        if (v > 1) throw ValidationError("mask is not binary (found value " + std::to_string(int(v)) + ")");
    if (!(spacing.row_mm > 0.0) || !(spacing.col_mm > 0.0))
        throw ValidationError("mask spacing must be positive");
}

namespace {
void require_same_grid(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (a.h != b.h || a.w != b.w)
        throw ShapeError(std::string(what) + ": mask shapes differ, " + std::to_string(a.h) + "x" +
                         std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" + std::to_string(b.w));
}

// directed distances between point sets; exact pairwise Euclidean minimization
void directed_stats(const SurfacePointSet& from, const SurfacePointSet& to, double& sum_min,
                    double& max_min) {
    sum_min = 0.0;
    max_min = 0.0;
    for (const SurfacePoint& s : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const SurfacePoint& t : to) {
            const double dr = s.r - t.r;
            const double dc = s.c - t.c;
            const double d2 = dr * dr + dc * dc;
            if (d2 < best) best = d2;
        }
        best = std::sqrt(best);
        sum_min += best;
        if (best > max_min) max_min = best;
    }
}
}  // namespace

SurfacePointSet extract_surface(const BinaryMask& m) {
    SurfacePointSet pts;
    for (index_t r = 0; r < m.h; ++r) {
        for (index_t c = 0; c < m.w; ++c) {
            if (!m.at(r, c)) continue;
            const bool boundary = r == 0 || r == m.h - 1 || c == 0 || c == m.w - 1 ||
                                  !m.at(r - 1, c) || !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1);
            if (boundary)
                pts.push_back({static_cast<double>(r) * m.spacing.row_mm,
                               static_cast<double>(c) * m.spacing.col_mm});
        }
    }
    return pts;
}

double dice(const BinaryMask& gt, const BinaryMask& p) {
    require_same_grid(gt, p, "dice");
    index_t ngt = 0, np = 0, inter = 0;
    for (size_t i = 0; i < gt.values.size(); ++i) {
        ngt += gt.values[i];
        np += p.values[i];
        inter += gt.values[i] & p.values[i];
    }
    if (ngt + np == 0) return 1.0;  // both empty: perfect agreement by convention
    return 2.0 * static_cast<double>(inter) / static_cast<double>(ngt + np);
}

double avd(const BinaryMask& gt, const BinaryMask& p) {
    require_same_grid(gt, p, "avd");
    const index_t ngt = gt.foreground_count();
    if (ngt == 0) throw MetricUndefined("avd undefined: ground truth is empty");
    const index_t np = p.foreground_count();
    return std::abs(static_cast<double>(ngt - np)) / static_cast<double>(ngt);
}

double assd(const BinaryMask& gt, const BinaryMask& p) {
    require_same_grid(gt, p, "assd");
    const SurfacePointSet sg = extract_surface(gt);
    const SurfacePointSet sp = extract_surface(p);
    if (sg.empty() || sp.empty()) throw MetricUndefined("assd undefined: a surface is empty");
    double sum_gp, max_gp, sum_pg, max_pg;
    directed_stats(sg, sp, sum_gp, max_gp);
    directed_stats(sp, sg, sum_pg, max_pg);
    return (sum_gp + sum_pg) / static_cast<double>(sg.size() + sp.size());
}

double hausdorff(const BinaryMask& gt, const BinaryMask& p) {
    require_same_grid(gt, p, "hausdorff");
    const SurfacePointSet sg = extract_surface(gt);
    const SurfacePointSet sp = extract_surface(p);
    if (sg.empty() || sp.empty()) throw MetricUndefined("hausdorff undefined: a surface is empty");
    double sum_gp, max_gp, sum_pg, max_pg;
    directed_stats(sg, sp, sum_gp, max_gp);
    directed_stats(sp, sg, sum_pg, max_pg);
    return std::max(max_gp, max_pg);
}

BinaryMask binarize(const Tensor& prob, double threshold, Spacing spacing) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("threshold must lie in (0,1), got " + std::to_string(threshold));
    index_t h, w;
    if (prob.ndim() == 2) {
        h = prob.dim(0);
        w = prob.dim(1);
    } else if (prob.ndim() == 3 && prob.dim(0) == 1) {
        h = prob.dim(1);
        w = prob.dim(2);
    } else if (prob.ndim() == 4 && prob.dim(0) == 1 && prob.dim(1) == 1) {
        h = prob.dim(2);
        w = prob.dim(3);
    } else {
        throw ShapeError("binarize expects a single 2-d probability map, got " + prob.shape_str());
    }
    BinaryMask m(h, w, spacing);
    for (index_t i = 0; i < h * w; ++i)
        m.values[static_cast<size_t>(i)] = prob.data[static_cast<size_t>(i)] >= threshold ? 1 : 0;
    return m;
}

CaseMetrics evaluate_case(const BinaryMask& gt, const Tensor& p_prob, double threshold,
                          const std::string& case_id) {
    gt.validate();
    const BinaryMask p = binarize(p_prob, threshold, gt.spacing);
    require_same_grid(gt, p, "evaluate_case");
    CaseMetrics out;
    out.case_id = case_id;
    out.dsc = dice(gt, p);
    try {
        out.avd = avd(gt, p);
    } catch (const MetricUndefined&) {
    }
    try {
        out.assd_mm = assd(gt, p);
    } catch (const MetricUndefined&) {
    }
    try {
        out.hd_mm = hausdorff(gt, p);
    } catch (const MetricUndefined&) {
    }
    return out;
}

namespace {
Aggregate aggregate_of(const std::vector<CaseMetrics>& cases,
                       std::optional<double> CaseMetrics::*field) {
    Aggregate a;
    double sum = 0.0;
    for (const CaseMetrics& c : cases)
        if (c.*field) {
            sum += *(c.*field);
            ++a.count;
        }
    if (a.count == 0) return a;
    a.mean = sum / static_cast<double>(a.count);
    double ss = 0.0;
    for (const CaseMetrics& c : cases)
        if (c.*field) {
            const double d = *(c.*field) - a.mean;
            ss += d * d;
        }
    a.stdev = a.count > 1 ? std::sqrt(ss / static_cast<double>(a.count)) : 0.0;
    return a;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string cell(const std::optional<double>& v) { return v ? fmt(*v) : "nan"; }
}  // namespace

void MetricsReport::aggregate() {
    dsc = aggregate_of(per_case, &CaseMetrics::dsc);
    avd = aggregate_of(per_case, &CaseMetrics::avd);
    assd_mm = aggregate_of(per_case, &CaseMetrics::assd_mm);
    hd_mm = aggregate_of(per_case, &CaseMetrics::hd_mm);
    complete = true;
    for (const CaseMetrics& c : per_case)
        if (!c.dsc || !c.avd || !c.assd_mm || !c.hd_mm) complete = false;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os << "case_id,dsc,avd,assd_mm,hd_mm\n";
    for (const CaseMetrics& c : per_case)
        os << c.case_id << ',' << cell(c.dsc) << ',' << cell(c.avd) << ',' << cell(c.assd_mm) << ','
           << cell(c.hd_mm) << '\n';
    os << "summary," << fmt(dsc.mean) << "±" << fmt(dsc.stdev) << ',' << fmt(avd.mean) << "±"
       << fmt(avd.stdev) << ',' << fmt(assd_mm.mean) << "±" << fmt(assd_mm.stdev) << ','
       << fmt(hd_mm.mean) << "±" << fmt(hd_mm.stdev) << '\n';
    return os.str();
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os << "cases: " << per_case.size() << (complete ? "" : " (some metrics missing)") << "\n";
    os << "  DSC : " << fmt(dsc.mean) << " ± " << fmt(dsc.stdev) << "  (n=" << dsc.count << ")\n";
    os << "  AVD : " << fmt(avd.mean) << " ± " << fmt(avd.stdev) << "  (n=" << avd.count << ")\n";
    os << "  ASSD: " << fmt(assd_mm.mean) << " ± " << fmt(assd_mm.stdev) << " mm  (n=" << assd_mm.count
       << ")\n";
    os << "  HD  : " << fmt(hd_mm.mean) << " ± " << fmt(hd_mm.stdev) << " mm  (n=" << hd_mm.count << ")\n";
    return os.str();
}

}  // namespace vesseg::metrics
