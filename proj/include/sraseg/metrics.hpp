#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sraseg/core.hpp"

namespace sraseg {

// Segmentation metrics: per-class Dice / Jaccard (percent) and boundary
// distances (95HD, ASD, in pixels).

struct ClassMetrics {
    double dice = 0.0;      // percent
    double jaccard = 0.0;   // percent
    double hd95 = 0.0;      // pixels
    double asd = 0.0;       // pixels
    bool overlap_defined = true;
    bool surface_defined = true;  // false when exactly one mask is empty
};

struct MetricsRecord {
    std::vector<ClassMetrics> per_class;  // foreground classes 1..C-1
    double mean_dice = 0.0;
    double mean_jaccard = 0.0;
    double mean_hd95 = 0.0;
    double mean_asd = 0.0;
    int surface_undefined_count = 0;
};

/// Per-foreground-class Dice and Jaccard, in percent. Both masks empty for a
/// class -> 100 by convention; exactly one empty -> 0.
inline std::vector<ClassMetrics> overlap_metrics(const HardLabelMap& pred,
                                                 const HardLabelMap& gt, int num_classes) {
    require(pred.height == gt.height && pred.width == gt.width,
            "overlap_metrics: shape mismatch");
    std::vector<ClassMetrics> out(num_classes > 1 ? num_classes - 1 : 0);
    for (int c = 1; c < num_classes; ++c) {
        long long a = 0, b = 0, inter = 0;
        for (std::size_t i = 0; i < pred.labels.size(); ++i) {
            const bool in_a = pred.labels[i] == c;
            const bool in_b = gt.labels[i] == c;
            a += in_a;
            b += in_b;
            inter += in_a && in_b;
        }
        ClassMetrics& m = out[c - 1];
        if (a == 0 && b == 0) {
            m.dice = m.jaccard = 100.0;
        } else if (a == 0 || b == 0) {
            m.dice = m.jaccard = 0.0;
        } else {
            m.dice = 100.0 * 2.0 * inter / static_cast<double>(a + b);
            m.jaccard = 100.0 * inter / static_cast<double>(a + b - inter);
        }
    }
    return out;
}

namespace detail {

/// Boundary pixels: mask pixels with at least one 4-neighbor outside the
/// mask; the image border counts as outside.
inline std::vector<std::pair<int, int>> boundary_pixels(const std::vector<char>& mask,
                                                        int h, int w) {
    std::vector<std::pair<int, int>> out;
    auto inside = [&](int y, int x) {
        return y >= 0 && y < h && x >= 0 && x < w && mask[static_cast<std::size_t>(y) * w + x];
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask[static_cast<std::size_t>(y) * w + x]) continue;
            if (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) ||
                !inside(y, x + 1))
                out.emplace_back(y, x);
        }
    return out;
}

// empty cells carry a large finite cost so the envelope arithmetic stays
// well defined; any true distance in-image is far below it
inline constexpr double kEdtEmpty = 1e15;

/// 1D squared-distance lower envelope (Felzenszwalb-Huttenlocher).
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n) {
    static thread_local std::vector<int> v;
    static thread_local std::vector<double> z;
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        for (;;) {
            int p = v[k];
            s = ((f[q] + q * (double)q) - (f[p] + p * (double)p)) / (2.0 * q - 2.0 * p);
            if (s <= z[k]) {
                --k;  // z[0] = -inf, so k never goes negative
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        int p = v[k];
        d[q] = (q - p) * (double)(q - p) + f[p];
    }
}

/// Exact squared Euclidean distance transform to the seed set.
inline std::vector<double> edt_2d(const std::vector<char>& seeds, int h, int w) {
    std::vector<double> g(static_cast<std::size_t>(h) * w);
    // column pass
    std::vector<double> f(std::max(h, w)), d(std::max(h, w));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y)
            f[y] = seeds[static_cast<std::size_t>(y) * w + x] ? 0.0 : kEdtEmpty;
        edt_1d(f, d, h);
        for (int y = 0; y < h; ++y) g[static_cast<std::size_t>(y) * w + x] = d[y];
    }
    // row pass
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = g[static_cast<std::size_t>(y) * w + x];
        edt_1d(f, d, w);
        for (int x = 0; x < w; ++x) g[static_cast<std::size_t>(y) * w + x] = d[x];
    }
    return g;
}

/// Linear interpolation between order statistics at p in [0,1].
inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = p * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - lo;
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace detail

struct SurfaceMetrics {
    double hd95 = 0.0;
    double asd = 0.0;
    bool defined = true;
};

/// Symmetric boundary distances between two binary masks: the pooled set of
/// directed boundary-to-boundary Euclidean distances gives asd (mean) and
/// hd95 (95th percentile, linear interpolation). Both masks empty -> (0,0);
/// exactly one empty -> undefined.
inline SurfaceMetrics surface_metrics(const std::vector<char>& a, const std::vector<char>& b,
                                      int h, int w) {
    require(a.size() == static_cast<std::size_t>(h) * w && a.size() == b.size(),
            "surface_metrics: shape mismatch");
    const bool a_empty = std::find(a.begin(), a.end(), char(1)) == a.end();
    const bool b_empty = std::find(b.begin(), b.end(), char(1)) == b.end();
    SurfaceMetrics m;
    if (a_empty && b_empty) return m;  // (0, 0)
    if (a_empty || b_empty) {
        m.defined = false;
        return m;
    }
    auto ba = detail::boundary_pixels(a, h, w);
    auto bb = detail::boundary_pixels(b, h, w);
    std::vector<char> seed_a(a.size(), 0), seed_b(b.size(), 0);
    for (auto [y, x] : ba) seed_a[static_cast<std::size_t>(y) * w + x] = 1;
    for (auto [y, x] : bb) seed_b[static_cast<std::size_t>(y) * w + x] = 1;
    std::vector<double> dist_to_b = detail::edt_2d(seed_b, h, w);
    std::vector<double> dist_to_a = detail::edt_2d(seed_a, h, w);

    std::vector<double> pooled;
    pooled.reserve(ba.size() + bb.size());
    for (auto [y, x] : ba)
        pooled.push_back(std::sqrt(dist_to_b[static_cast<std::size_t>(y) * w + x]));
    for (auto [y, x] : bb)
        pooled.push_back(std::sqrt(dist_to_a[static_cast<std::size_t>(y) * w + x]));

    double sum = 0.0;
    for (double d : pooled) sum += d;
    m.asd = sum / pooled.size();
    m.hd95 = detail::percentile(pooled, 0.95);
    return m;
}

inline std::vector<char> class_mask(const HardLabelMap& labels, int cls) {
    std::vector<char> m(labels.labels.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = labels.labels[i] == cls;
    return m;
}

/// All four metrics for one prediction / ground-truth pair.
inline std::vector<ClassMetrics> image_metrics(const HardLabelMap& pred,
                                               const HardLabelMap& gt, int num_classes) {
    std::vector<ClassMetrics> out = overlap_metrics(pred, gt, num_classes);
    for (int c = 1; c < num_classes; ++c) {
        SurfaceMetrics s = surface_metrics(class_mask(pred, c), class_mask(gt, c),
                                           pred.height, pred.width);
        out[c - 1].hd95 = s.hd95;
        out[c - 1].asd = s.asd;
        out[c - 1].surface_defined = s.defined;
    }
    return out;
}

/// Macro-averages per-image, per-class metrics: undefined surface entries
/// are excluded from the means and counted.
inline MetricsRecord aggregate_metrics(const std::vector<std::vector<ClassMetrics>>& per_image,
                                       int num_classes) {
    MetricsRecord rec;
    rec.per_class.resize(num_classes - 1);
    int defined_classes = 0, surf_classes = 0;
    for (int c = 0; c < num_classes - 1; ++c) {
        double dice = 0, jac = 0, hd = 0, asd = 0;
        int n = 0, ns = 0;
        for (const auto& img : per_image) {
            dice += img[c].dice;
            jac += img[c].jaccard;
            ++n;
            if (img[c].surface_defined) {
                hd += img[c].hd95;
                asd += img[c].asd;
                ++ns;
            } else {
                ++rec.surface_undefined_count;
            }
        }
        ClassMetrics& m = rec.per_class[c];
        if (n > 0) {
            m.dice = dice / n;
            m.jaccard = jac / n;
            ++defined_classes;
            rec.mean_dice += m.dice;
            rec.mean_jaccard += m.jaccard;
        }
        if (ns > 0) {
            m.hd95 = hd / ns;
            m.asd = asd / ns;
            ++surf_classes;
            rec.mean_hd95 += m.hd95;
            rec.mean_asd += m.asd;
        } else {
            m.surface_defined = false;
        }
    }
    if (defined_classes > 0) {
        rec.mean_dice /= defined_classes;
        rec.mean_jaccard /= defined_classes;
    }
    if (surf_classes > 0) {
        rec.mean_hd95 /= surf_classes;
        rec.mean_asd /= surf_classes;
    }
    return rec;
}

}  // namespace sraseg
