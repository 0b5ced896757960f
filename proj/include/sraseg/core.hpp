#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sraseg {

/// Plane-major 3D array: data[c*h*w + y*w + x].
/// Used for images (channels x H x W) and per-class probability maps
/// (classes x H x W).
template <class T>
struct Planes {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Planes() = default;
    Planes(int c, int h, int w, T fill = T{})
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {}

    T& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    const T& at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::size_t size() const { return data.size(); }

    bool same_shape(const Planes& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

using ImageSlice = Planes<double>;    // values in [0,1] after loading
using SoftLabelMap = Planes<double>;  // per-pixel class distribution
using LogitMap = Planes<double>;

/// H x W integer class map, labels in [0, C).
struct HardLabelMap {
    int height = 0;
    int width = 0;
    std::vector<int> labels;

    HardLabelMap() = default;
    HardLabelMap(int h, int w, int fill = 0)
        : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

    int& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
    int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

/// M x D row-major embedding matrix.
struct EmbeddingBatch {
    int rows = 0;
    int dim = 0;
    std::vector<double> data;

    EmbeddingBatch() = default;
    EmbeddingBatch(int m, int d)
        : rows(m), dim(d), data(static_cast<std::size_t>(m) * d, 0.0) {}

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * dim + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * dim + j]; }
};

template <class S>
using ParameterVector = std::vector<S>;

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

template <class T>
bool all_finite(const std::vector<T>& v) {
    return std::all_of(v.begin(), v.end(),
                       [](T x) { return std::isfinite(static_cast<double>(x)); });
}

}  // namespace sraseg
