#pragma once

#include <functional>
#include <vector>

#include "sraseg/core.hpp"
#include "sraseg/kde.hpp"
#include "sraseg/model.hpp"
#include "sraseg/pseudo_label.hpp"

namespace sraseg {

// KDE domain-gap diagnostic: a per-image scalar statistic is computed on two
// pools under the same model, density-estimated, and compared.

using ImageStatistic = std::function<double(const SoftLabelMap& probs)>;

/// Default statistic: predicted area fraction of one class.
inline ImageStatistic area_fraction_statistic(int cls) {
    return [cls](const SoftLabelMap& probs) {
        require(cls < probs.channels, "area_fraction_statistic: class out of range");
        HardLabelMap hard = argmax_labels(probs);
        long long n = 0;
        for (int v : hard.labels) n += v == cls;
        return static_cast<double>(n) / static_cast<double>(hard.labels.size());
    };
}

struct DomainGapReport {
    KdeCurve curve_a, curve_b;  // shared grid
    double gap_score = 0.0;     // 1 - density overlap
    std::vector<double> stats_a, stats_b;
};

inline std::vector<double> pool_statistics(SegmentationModel& model,
                                           const std::vector<ImageSlice>& pool,
                                           const ImageStatistic& stat) {
    std::vector<double> out;
    out.reserve(pool.size());
    for (const auto& img : pool) {
        std::vector<LogitMap> l = model.forward_inference({img});
        out.push_back(stat(softmax_probs(l[0])));
    }
    return out;
}

inline DomainGapReport domain_gap_report(SegmentationModel& model,
                                         const std::vector<ImageSlice>& pool_a,
                                         const std::vector<ImageSlice>& pool_b,
                                         const ImageStatistic& stat) {
    require(!pool_a.empty() && !pool_b.empty(), "domain_gap_report: empty pool");
    DomainGapReport rep;
    rep.stats_a = pool_statistics(model, pool_a, stat);
    rep.stats_b = pool_statistics(model, pool_b, stat);

    const double ha = silverman_bandwidth(rep.stats_a);
    const double hb = silverman_bandwidth(rep.stats_b);
    std::vector<double> pooled = rep.stats_a;
    pooled.insert(pooled.end(), rep.stats_b.begin(), rep.stats_b.end());
    std::vector<double> grid = kde_grid(pooled, std::max(ha, hb));
    rep.curve_a = kde(rep.stats_a, grid, ha);
    rep.curve_b = kde(rep.stats_b, grid, hb);
    rep.gap_score = density_gap_score(rep.curve_a, rep.curve_b);
    return rep;
}

}  // namespace sraseg
