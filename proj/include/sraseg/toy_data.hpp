#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sraseg/core.hpp"
#include "sraseg/image_io.hpp"
#include "sraseg/rng.hpp"

namespace sraseg {

// Procedural desk-scale dataset: 64x64 single-channel images of 2-3 random
// filled ellipses (class 1) and elliptical rings (class 2) on a noisy
// background, with exact masks; both classes appear in every image. The synthetic pool applies a global
// intensity offset and mild blur controlled by `shift` to emulate a
// generator's domain gap.

inline constexpr int kToySize = 64;
inline constexpr int kToyClasses = 3;
inline constexpr int kToyGroupSize = 4;

struct ToyShape {
    int cls = 1;  // 1 = disk, 2 = ring
    double cy = 0, cx = 0, ay = 1, ax = 1;
    double level = 0.0;  // mean intensity; class ranges overlap
};

struct ToySample {
    ImageSlice image;
    HardLabelMap mask;
    std::vector<ToyShape> shapes;
};

inline bool shape_contains(const ToyShape& s, int y, int x) {
    const double ry = (y - s.cy) / s.ay;
    const double rx = (x - s.cx) / s.ax;
    const double r2 = ry * ry + rx * rx;
    if (s.cls == 1) return r2 <= 1.0;
    // ring: outer ellipse minus a 0.6-scaled inner one
    const double iy = (y - s.cy) / (0.6 * s.ay);
    const double ix = (x - s.cx) / (0.6 * s.ax);
    return r2 <= 1.0 && iy * iy + ix * ix > 1.0;
}

inline HardLabelMap rasterize_shapes(const std::vector<ToyShape>& shapes, int h, int w) {
    HardLabelMap m(h, w, 0);
    for (const auto& s : shapes)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (shape_contains(s, y, x)) m.at(y, x) = s.cls;
    return m;
}

inline ToySample toy_sample(std::mt19937_64& rng) {
    const int n = kToySize;
    ToySample s;
    std::uniform_int_distribution<int> extra_dist(0, 2);
    std::uniform_int_distribution<int> cls_dist(1, 2);
    std::uniform_real_distribution<double> center(10.0, 54.0);
    std::uniform_real_distribution<double> axis(4.0, 14.0);
    // every image carries one disk and one ring (later shapes may overwrite
    // earlier ones, so resample until both classes survive rasterization)
    std::uniform_real_distribution<double> disk_level(0.72, 0.95);
    std::uniform_real_distribution<double> ring_level(0.45, 0.62);
    for (;;) {
        s.shapes.clear();
        const int k = 2 + extra_dist(rng);
        for (int i = 0; i < k; ++i) {
            ToyShape sh;
            sh.cls = i < 2 ? i + 1 : cls_dist(rng);
            sh.cy = center(rng);
            sh.cx = center(rng);
            sh.ay = axis(rng);
            sh.ax = axis(rng);
            sh.level = sh.cls == 1 ? disk_level(rng) : ring_level(rng);
            s.shapes.push_back(sh);
        }
        s.mask = rasterize_shapes(s.shapes, n, n);
        long long c1 = 0, c2 = 0;
        for (int v : s.mask.labels) {
            c1 += v == 1;
            c2 += v == 2;
        }
        if (c1 >= 20 && c2 >= 20) break;
    }

    // per-pixel owning shape (last drawn wins, matching rasterization order)
    std::vector<int> owner(static_cast<std::size_t>(n) * n, -1);
    for (std::size_t si = 0; si < s.shapes.size(); ++si)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                if (shape_contains(s.shapes[si], y, x))
                    owner[static_cast<std::size_t>(y) * n + x] = static_cast<int>(si);

    std::normal_distribution<double> noise(0.0, 0.06);
    std::normal_distribution<double> jitter_dist(0.0, 0.05);
    const double jitter = jitter_dist(rng);  // per-image brightness
    s.image = ImageSlice(1, n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const int own = owner[static_cast<std::size_t>(y) * n + x];
            double v = own < 0 ? 0.25 : s.shapes[own].level;
            // checkered ring texture: a flat blend of background and disk
            // intensities cannot impersonate the ring class
            if (s.mask.at(y, x) == 2) v += ((y + x) % 2 ? 0.15 : -0.15);
            s.image.at(0, y, x) = std::clamp(v + jitter + noise(rng), 0.0, 1.0);
        }
    return s;
}

/// Box-blur blend plus intensity offset, both scaled by `shift`.
inline ImageSlice apply_domain_shift(const ImageSlice& img, double shift) {
    const double w = std::clamp(shift, 0.0, 1.0);
    const double offset = 0.6 * shift;
    ImageSlice out(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double blur = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int yy = std::clamp(y + dy, 0, img.height - 1);
                        int xx = std::clamp(x + dx, 0, img.width - 1);
                        blur += img.at(c, yy, xx);
                    }
                blur /= 9.0;
                double v = (1.0 - w) * img.at(c, y, x) + w * blur + offset;
                out.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
    return out;
}

/// Writes the full toy dataset tree:
/// out_dir/{labeled,unlabeled_synthetic,val,test}/{images[,masks]}.
/// `n_images` training images; val and test each get max(8, n/5).
inline void make_toy_data(const std::string& out_dir, int n_images, double shift,
                          std::uint64_t seed) {
    namespace fs = std::filesystem;
    require(n_images >= 20, "make_toy_data: need at least 20 images");
    const int n_eval = std::max(8, n_images / 5);

    auto emit = [&](const char* pool, int count, std::mt19937_64 rng, bool masks,
                    bool shifted) {
        fs::path dir = fs::path(out_dir) / pool;
        fs::create_directories(dir / "images");
        if (masks) fs::create_directories(dir / "masks");
        for (int i = 0; i < count; ++i) {
            ToySample s = toy_sample(rng);
            ImageSlice img = shifted ? apply_domain_shift(s.image, shift) : s.image;
            char name[32];
            std::snprintf(name, sizeof(name), "g%04d_%d.pgm", i / kToyGroupSize,
                          i % kToyGroupSize);
            save_image_u8(img, (dir / "images" / name).string());
            if (masks) save_mask(s.mask, (dir / "masks" / name).string());
        }
    };

    emit("labeled", n_images, make_stream(seed, "toy/labeled"), true, false);
    emit("unlabeled_synthetic", n_images, make_stream(seed, "toy/synthetic"), false, true);
    emit("val", n_eval, make_stream(seed, "toy/val"), true, false);
    emit("test", n_eval, make_stream(seed, "toy/test"), true, false);
}

}  // namespace sraseg
