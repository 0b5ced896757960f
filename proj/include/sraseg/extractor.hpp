#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sraseg/config.hpp"
#include "sraseg/core.hpp"
#include "sraseg/rng.hpp"

namespace sraseg {

/// Frozen feature extractor interface. `embed` never mutates internal state
/// and is deterministic. Real backbones (e.g. an external ViT adapter) plug
/// in behind this; the shipped default is the linear stub below.
class FeatureExtractor {
  public:
    struct InputSpec {
        int height = 0;    // 0: any
        int width = 0;
        int channels = 0;  // 0: any
        std::string normalization = "none";
    };

    virtual ~FeatureExtractor() = default;
    virtual std::vector<double> embed(const ImageSlice& image) const = 0;
    virtual int dim() const = 0;
    virtual InputSpec input_spec() const = 0;

    /// Gradient of <g, embed(x)> with respect to x. Only differentiable
    /// extractors implement this.
    virtual ImageSlice embed_input_grad(const ImageSlice& x,
                                        const std::vector<double>& g) const {
        (void)x;
        (void)g;
        throw std::logic_error("extractor is not differentiable");
    }
};

/// Deterministic linear test extractor: the image is channel-averaged,
/// bilinearly downsampled to a 16x16 grid, flattened, and projected by a
/// fixed seeded matrix. Linear in the input, hence exactly differentiable.
class StubExtractor final : public FeatureExtractor {
    static constexpr int kGrid = 16;

  public:
    StubExtractor(std::uint64_t seed, int dim) : dim_(dim) {
        require(dim >= 1, "stub_extractor: dim must be >= 1");
        std::mt19937_64 rng = make_stream(seed, "extractor");
        std::normal_distribution<double> dist(0.0, 1.0 / kGrid);  // 1/sqrt(256)
        weights_.resize(static_cast<std::size_t>(dim) * kGrid * kGrid);
        for (auto& w : weights_) w = dist(rng);
    }

    int dim() const override { return dim_; }

    InputSpec input_spec() const override { return InputSpec{0, 0, 0, "none"}; }

    std::vector<double> embed(const ImageSlice& image) const override {
        std::vector<double> z = downsampled(image);
        std::vector<double> e(dim_, 0.0);
        for (int d = 0; d < dim_; ++d) {
            const double* w = &weights_[static_cast<std::size_t>(d) * kGrid * kGrid];
            double s = 0.0;
            for (int i = 0; i < kGrid * kGrid; ++i) s += w[i] * z[i];
            e[d] = s;
        }
        return e;
    }

    ImageSlice embed_input_grad(const ImageSlice& x,
                                const std::vector<double>& g) const override {
        require(static_cast<int>(g.size()) == dim_, "embed_input_grad: bad g size");
        std::vector<double> gz(kGrid * kGrid, 0.0);
        for (int d = 0; d < dim_; ++d) {
            const double* w = &weights_[static_cast<std::size_t>(d) * kGrid * kGrid];
            for (int i = 0; i < kGrid * kGrid; ++i) gz[i] += g[d] * w[i];
        }
        // transpose of channel-mean + bilinear downsample
        ImageSlice gx(x.channels, x.height, x.width, 0.0);
        const double inv_ch = 1.0 / x.channels;
        for (int i = 0; i < kGrid; ++i)
            for (int j = 0; j < kGrid; ++j) {
                Taps t = taps(i, j, x.height, x.width);
                const double gv = gz[i * kGrid + j] * inv_ch;
                for (int c = 0; c < x.channels; ++c) {
                    gx.at(c, t.y0, t.x0) += gv * (1 - t.wy) * (1 - t.wx);
                    gx.at(c, t.y0, t.x1) += gv * (1 - t.wy) * t.wx;
                    gx.at(c, t.y1, t.x0) += gv * t.wy * (1 - t.wx);
                    gx.at(c, t.y1, t.x1) += gv * t.wy * t.wx;
                }
            }
        return gx;
    }

  private:
    struct Taps {
        int y0, y1, x0, x1;
        double wy, wx;
    };

    static Taps taps(int i, int j, int h, int w) {
        auto axis = [](int idx, int src, int& lo, int& hi, double& frac) {
            double c = (idx + 0.5) * src / static_cast<double>(kGrid) - 0.5;
            c = std::clamp(c, 0.0, static_cast<double>(src - 1));
            lo = static_cast<int>(std::floor(c));
            hi = std::min(lo + 1, src - 1);
            frac = c - lo;
        };
        Taps t;
        axis(i, h, t.y0, t.y1, t.wy);
        axis(j, w, t.x0, t.x1, t.wx);
        return t;
    }

    std::vector<double> downsampled(const ImageSlice& img) const {
        std::vector<double> z(kGrid * kGrid);
        const double inv_ch = 1.0 / img.channels;
        for (int i = 0; i < kGrid; ++i)
            for (int j = 0; j < kGrid; ++j) {
                Taps t = taps(i, j, img.height, img.width);
                double v = 0.0;
                for (int c = 0; c < img.channels; ++c) {
                    v += (1 - t.wy) * ((1 - t.wx) * img.at(c, t.y0, t.x0) +
                                       t.wx * img.at(c, t.y0, t.x1)) +
                         t.wy * ((1 - t.wx) * img.at(c, t.y1, t.x0) +
                                 t.wx * img.at(c, t.y1, t.x1));
                }
                z[i * kGrid + j] = v * inv_ch;
            }
        return z;
    }

    int dim_;
    std::vector<double> weights_;  // dim x 256, row-major
};

inline EmbeddingBatch embed_batch(const FeatureExtractor& ext,
                                  const std::vector<ImageSlice>& images) {
    require(!images.empty(), "embed_batch: empty batch");
    EmbeddingBatch b(static_cast<int>(images.size()), ext.dim());
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::vector<double> e = ext.embed(images[i]);
        std::copy(e.begin(), e.end(), b.data.begin() + static_cast<std::ptrdiff_t>(i) * ext.dim());
    }
    return b;
}

/// Builds the tensor fed to the feature extractor for the alignment loss.
///  - prob_weighted_image: image scaled per pixel by the predicted
///    foreground probability (1 - p_background); differentiable through the
///    student's predictions.
///  - prob_map: expected class index, normalized to [0,1], replicated to the
///    image's channel count.
///  - raw_image: the image itself; the alignment term then carries no
///    parameter gradient and acts as a monitored diagnostic.
inline ImageSlice sa_input(const ImageSlice& image, const SoftLabelMap& probs,
                           SaInputMode mode) {
    require(image.height == probs.height && image.width == probs.width,
            "sa_input: shape mismatch");
    switch (mode) {
        case SaInputMode::raw_image:
            return image;
        case SaInputMode::prob_weighted_image: {
            ImageSlice out(image.channels, image.height, image.width);
            for (int c = 0; c < image.channels; ++c)
                for (int y = 0; y < image.height; ++y)
                    for (int x = 0; x < image.width; ++x)
                        out.at(c, y, x) = image.at(c, y, x) * (1.0 - probs.at(0, y, x));
            return out;
        }
        case SaInputMode::prob_map: {
            ImageSlice out(image.channels, image.height, image.width);
            const double scale = 1.0 / (probs.channels - 1);
            for (int y = 0; y < image.height; ++y)
                for (int x = 0; x < image.width; ++x) {
                    double v = 0.0;
                    for (int c = 1; c < probs.channels; ++c)
                        v += c * scale * probs.at(c, y, x);
                    for (int c = 0; c < image.channels; ++c) out.at(c, y, x) = v;
                }
            return out;
        }
    }
    throw std::invalid_argument("sa_input: unknown mode");
}

/// Gradient of the alignment input with respect to the probability maps,
/// given the gradient with respect to sa_input's output.
inline SoftLabelMap sa_input_backward(const ImageSlice& image, const SoftLabelMap& probs,
                                      SaInputMode mode, const ImageSlice& grad_out) {
    SoftLabelMap g(probs.channels, probs.height, probs.width, 0.0);
    switch (mode) {
        case SaInputMode::raw_image:
            return g;  // no dependence on the prediction
        case SaInputMode::prob_weighted_image:
            for (int y = 0; y < probs.height; ++y)
                for (int x = 0; x < probs.width; ++x) {
                    double s = 0.0;
                    for (int c = 0; c < image.channels; ++c)
                        s += image.at(c, y, x) * grad_out.at(c, y, x);
                    g.at(0, y, x) = -s;
                }
            return g;
        case SaInputMode::prob_map: {
            const double scale = 1.0 / (probs.channels - 1);
            for (int y = 0; y < probs.height; ++y)
                for (int x = 0; x < probs.width; ++x) {
                    double s = 0.0;
                    for (int c = 0; c < image.channels; ++c) s += grad_out.at(c, y, x);
                    for (int c = 1; c < probs.channels; ++c)
                        g.at(c, y, x) = c * scale * s;
                }
            return g;
        }
    }
    throw std::invalid_argument("sa_input_backward: unknown mode");
}

}  // namespace sraseg
