#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "sraseg/core.hpp"

namespace sraseg {

struct KdeCurve {
    std::vector<double> grid;     // ascending
    std::vector<double> density;  // non-negative
    double bandwidth = 0.0;
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& v, double p) {
    const double pos = p * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - lo;
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace detail

/// Silverman's rule: h = 0.9 * min(sigma, IQR/1.34) * n^(-1/5), floored at
/// 1e-6. sigma is the sample standard deviation (n-1 denominator).
inline double silverman_bandwidth(const std::vector<double>& samples) {
    require(!samples.empty(), "silverman_bandwidth: empty samples");
    const std::size_t n = samples.size();
    if (n == 1) return 1e-6;
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= n;
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= (n - 1);
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const double iqr = detail::quantile_sorted(sorted, 0.75) -
                       detail::quantile_sorted(sorted, 0.25);
    double spread = std::sqrt(var);
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    const double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
    return std::max(h, 1e-6);
}

/// Gaussian-kernel density on an explicit grid:
/// f(x) = (1 / (n h)) * sum_i K((x - s_i) / h), K the standard normal pdf.
inline KdeCurve kde(const std::vector<double>& samples, const std::vector<double>& grid,
                    double bandwidth) {
    require(!samples.empty(), "kde: empty samples");
    require(bandwidth > 0.0, "kde: bandwidth must be positive");
    KdeCurve c;
    c.grid = grid;
    c.bandwidth = bandwidth;
    c.density.resize(grid.size());
    const double norm = 1.0 / (samples.size() * bandwidth * std::sqrt(2.0 * M_PI));
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double acc = 0.0;
        for (double s : samples) {
            const double u = (grid[g] - s) / bandwidth;
            acc += std::exp(-0.5 * u * u);
        }
        c.density[g] = norm * acc;
    }
    return c;
}

/// Uniform grid covering the data range extended by `pad` bandwidths.
inline std::vector<double> kde_grid(const std::vector<double>& samples, double bandwidth,
                                    int points = 256, double pad = 4.0) {
    require(!samples.empty(), "kde_grid: empty samples");
    auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    const double lo = *lo_it - pad * bandwidth;
    const double hi = *hi_it + pad * bandwidth;
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i)
        grid[i] = lo + (hi - lo) * i / static_cast<double>(points - 1);
    return grid;
}

inline double trapezoid(const std::vector<double>& grid, const std::vector<double>& y) {
    double acc = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        acc += 0.5 * (y[i] + y[i - 1]) * (grid[i] - grid[i - 1]);
    return acc;
}

/// 1 - integral of min(f, g) over the shared grid; near 0 for matching
/// distributions, near 1 for disjoint ones.
inline double density_gap_score(const KdeCurve& a, const KdeCurve& b) {
    require(a.grid.size() == b.grid.size(), "density_gap_score: grid mismatch");
    std::vector<double> mn(a.grid.size());
    for (std::size_t i = 0; i < mn.size(); ++i)
        mn[i] = std::min(a.density[i], b.density[i]);
    return std::clamp(1.0 - trapezoid(a.grid, mn), 0.0, 1.0);
}

// -- plot emission ----------------------------------------------------------

inline void write_kde_csv(const KdeCurve& a, const KdeCurve& b, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "x,density_a,density_b\n";
    for (std::size_t i = 0; i < a.grid.size(); ++i)
        out << a.grid[i] << "," << a.density[i] << "," << b.density[i] << "\n";
}

/// Minimal two-curve SVG line chart.
inline void write_kde_svg(const KdeCurve& a, const KdeCurve& b, const std::string& path,
                          const std::string& label_a = "labeled",
                          const std::string& label_b = "unlabeled") {
    const int W = 640, H = 400, pad = 40;
    double ymax = 1e-12;
    for (double v : a.density) ymax = std::max(ymax, v);
    for (double v : b.density) ymax = std::max(ymax, v);
    const double x0 = a.grid.front(), x1 = a.grid.back();
    auto px = [&](double x) { return pad + (x - x0) / (x1 - x0) * (W - 2 * pad); };
    auto py = [&](double y) { return H - pad - y / ymax * (H - 2 * pad); };
    auto polyline = [&](const KdeCurve& c, const char* color) {
        std::string s = "<polyline fill=\"none\" stroke=\"";
        s += color;
        s += "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < c.grid.size(); ++i)
            s += std::to_string(px(c.grid[i])) + "," + std::to_string(py(c.density[i])) + " ";
        s += "\"/>\n";
        return s;
    };
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad
        << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
        << H - pad << "\" stroke=\"black\"/>\n"
        << polyline(a, "green") << polyline(b, "blue") << "<text x=\"" << W - 180
        << "\" y=\"" << pad << "\" fill=\"green\">" << label_a << "</text>\n"
        << "<text x=\"" << W - 180 << "\" y=\"" << pad + 18 << "\" fill=\"blue\">" << label_b
        << "</text>\n</svg>\n";
}

}  // namespace sraseg
