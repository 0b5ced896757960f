#pragma once

#include <cmath>
#include <random>

#include "sraseg/core.hpp"

namespace sraseg {

// Blend-mask construction (rectangular hole + average-pool smoothing) and
// bidirectional soft blending of images and labels.

struct Rect {
    int top = 0, left = 0, height = 0, width = 0;
};

struct BlendMask {
    std::vector<double> raw;     // H x W in {0,1}; 0 inside the hole
    std::vector<double> smooth;  // H x W blend coefficient in [0,1]
    int height = 0, width = 0;
    Rect rect;

    double raw_at(int y, int x) const { return raw[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return smooth[static_cast<std::size_t>(y) * width + x]; }
};

/// Uniformly samples the hole rectangle; each side is round(beta * dim).
inline Rect sample_blend_region(int height, int width, double beta, std::mt19937_64& rng) {
    Rect r;
    r.height = static_cast<int>(std::llround(beta * height));
    r.width = static_cast<int>(std::llround(beta * width));
    require(r.height >= 1 && r.height <= height && r.width >= 1 && r.width <= width,
            "sample_blend_region: degenerate dimensions");
    r.top = std::uniform_int_distribution<int>(0, height - r.height)(rng);
    r.left = std::uniform_int_distribution<int>(0, width - r.width)(rng);
    return r;
}

/// Raw mask is 0 inside the rectangle and 1 outside; the smooth coefficient
/// is a k x k mean filter of the raw mask with replicate (edge-clamp)
/// padding, stride 1. k = 1 leaves the mask unchanged (hard copy-paste).
inline BlendMask build_blend_mask(int height, int width, const Rect& rect, int kernel) {
    require(kernel >= 1 && kernel % 2 == 1, "build_blend_mask: kernel must be odd >= 1");
    require(rect.top >= 0 && rect.left >= 0 && rect.top + rect.height <= height &&
                rect.left + rect.width <= width,
            "build_blend_mask: rect out of bounds");
    BlendMask m;
    m.height = height;
    m.width = width;
    m.rect = rect;
    m.raw.assign(static_cast<std::size_t>(height) * width, 1.0);
    for (int y = rect.top; y < rect.top + rect.height; ++y)
        for (int x = rect.left; x < rect.left + rect.width; ++x)
            m.raw[static_cast<std::size_t>(y) * width + x] = 0.0;

    m.smooth.resize(m.raw.size());
    const int r = kernel / 2;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double sum = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int yy = std::clamp(y + dy, 0, height - 1);
                    int xx = std::clamp(x + dx, 0, width - 1);
                    sum += m.raw[static_cast<std::size_t>(yy) * width + xx];
                }
            m.smooth[static_cast<std::size_t>(y) * width + x] =
                sum / (static_cast<double>(kernel) * kernel);
        }
    return m;
}

/// out = coeff * a + (1 - coeff) * b, the coefficient broadcast across planes.
template <class T>
Planes<T> blend_planes(const Planes<T>& a, const Planes<T>& b, const BlendMask& mask) {
    require(a.same_shape(b), "blend: shape mismatch");
    require(a.height == mask.height && a.width == mask.width,
            "blend: mask shape mismatch");
    Planes<T> out(a.channels, a.height, a.width);
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                double w = mask.at(y, x);
                out.at(c, y, x) = static_cast<T>(w * a.at(c, y, x) +
                                                 (1.0 - w) * b.at(c, y, x));
            }
    return out;
}

inline ImageSlice blend_images(const ImageSlice& a, const ImageSlice& b,
                               const BlendMask& mask) {
    return blend_planes(a, b, mask);
}

inline SoftLabelMap blend_labels(const SoftLabelMap& a, const SoftLabelMap& b,
                                 const BlendMask& mask) {
    return blend_planes(a, b, mask);
}

struct MixedPair {
    ImageSlice v1, v2;
    SoftLabelMap l1, l2;
    BlendMask mask;
};

/// Two complementary mixtures sharing one mask:
///   v1 = coeff*syn + (1-coeff)*lab, v2 = coeff*lab + (1-coeff)*syn,
/// labels blended the same way with (pseudo, lab).
inline MixedPair make_complementary_mixtures(const ImageSlice& v_lab,
                                             const SoftLabelMap& l_lab,
                                             const ImageSlice& v_syn,
                                             const SoftLabelMap& l_pseudo,
                                             const BlendMask& mask) {
    MixedPair p;
    p.v1 = blend_images(v_syn, v_lab, mask);
    p.v2 = blend_images(v_lab, v_syn, mask);
    p.l1 = blend_labels(l_pseudo, l_lab, mask);
    p.l2 = blend_labels(l_lab, l_pseudo, mask);
    p.mask = mask;
    return p;
}

}  // namespace sraseg
