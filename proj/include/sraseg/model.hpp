#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "sraseg/core.hpp"
#include "sraseg/rng.hpp"

namespace sraseg {

/// Pluggable segmentation network. Parameters cross this boundary as flat
/// double vectors regardless of the compute scalar; set_params(get_params())
/// leaves forward outputs bit-identical.
struct SegmentationModel {
    virtual ~SegmentationModel() = default;

    /// Training-mode forward: caches activations for a following backward.
    virtual std::vector<LogitMap> forward(const std::vector<ImageSlice>& images) = 0;
    /// Inference-mode forward: no caching, no state change, deterministic.
    virtual std::vector<LogitMap> forward_inference(
        const std::vector<ImageSlice>& images) = 0;
    /// Consumes the most recent forward's caches; returns the parameter
    /// gradient of sum_i <grad_logits[i], logits[i]>.
    virtual ParameterVector<double> backward(
        const std::vector<Planes<double>>& grad_logits) = 0;

    virtual ParameterVector<double> get_params() const = 0;
    virtual void set_params(const ParameterVector<double>& p) = 0;
    virtual std::size_t num_params() const = 0;
};

struct ReferenceNetSpec {
    int in_channels = 1;
    int num_classes = 3;
    int w0 = 16, w1 = 32, w2 = 64;  // level widths
};

/// Small encoder-decoder with additive skip connections:
/// conv3(w0) -> pool -> conv3(w1) -> pool -> conv3(w2)
/// -> up -> 1x1(w1)+skip -> conv3(w1) -> up -> 1x1(w0)+skip -> conv3(w0)
/// -> 1x1 head. ReLU everywhere except the head; logits out.
/// Input H and W must be divisible by 4.
template <class S>
class ReferenceNet final : public SegmentationModel {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

    struct Conv {
        int in = 0, out = 0, k = 1;
        Mat w;  // out x (in * k * k)
        Vec b;
    };

  public:
    ReferenceNet(const ReferenceNetSpec& spec, std::uint64_t seed) : spec_(spec) {
        require(spec.in_channels >= 1 && spec.num_classes >= 2 && spec.w0 >= 1 &&
                    spec.w1 >= 1 && spec.w2 >= 1,
                "reference_net: bad spec");
        std::mt19937_64 rng = make_stream(seed, "init");
        enc0_ = init_conv(spec.in_channels, spec.w0, 3, rng);
        enc1_ = init_conv(spec.w0, spec.w1, 3, rng);
        bott_ = init_conv(spec.w1, spec.w2, 3, rng);
        red1_ = init_conv(spec.w2, spec.w1, 1, rng);
        dec1_ = init_conv(spec.w1, spec.w1, 3, rng);
        red0_ = init_conv(spec.w1, spec.w0, 1, rng);
        dec0_ = init_conv(spec.w0, spec.w0, 3, rng);
        head_ = init_conv(spec.w0, spec.num_classes, 1, rng);
    }

    const ReferenceNetSpec& spec() const { return spec_; }

    std::vector<LogitMap> forward(const std::vector<ImageSlice>& images) override {
        return run_forward(images, /*cache=*/true);
    }

    std::vector<LogitMap> forward_inference(const std::vector<ImageSlice>& images) override {
        return run_forward(images, /*cache=*/false);
    }

    ParameterVector<double> backward(const std::vector<Planes<double>>& grad_logits) override {
        require(!caches_.empty(), "backward: no cached forward");
        require(grad_logits.size() == caches_.size(),
                "backward: gradient count does not match cached forward");
        std::vector<Conv*> layers = layer_list();
        std::vector<Mat> gw;
        std::vector<Vec> gb;
        for (Conv* c : layers) {
            gw.push_back(Mat::Zero(c->w.rows(), c->w.cols()));
            gb.push_back(Vec::Zero(c->b.size()));
        }
        for (std::size_t i = 0; i < caches_.size(); ++i)
            backward_one(caches_[i], grad_logits[i], gw, gb);

        ParameterVector<double> g;
        g.reserve(num_params());
        for (std::size_t li = 0; li < layers.size(); ++li) {
            for (Eigen::Index r = 0; r < gw[li].rows(); ++r)
                for (Eigen::Index c = 0; c < gw[li].cols(); ++c)
                    g.push_back(static_cast<double>(gw[li](r, c)));
            for (Eigen::Index r = 0; r < gb[li].size(); ++r)
                g.push_back(static_cast<double>(gb[li](r)));
        }
        caches_.clear();  // consumed
        return g;
    }

    ParameterVector<double> get_params() const override {
        ParameterVector<double> p;
        p.reserve(num_params());
        for (const Conv* c : const_cast<ReferenceNet*>(this)->layer_list()) {
            for (Eigen::Index r = 0; r < c->w.rows(); ++r)
                for (Eigen::Index cc = 0; cc < c->w.cols(); ++cc)
                    p.push_back(static_cast<double>(c->w(r, cc)));
            for (Eigen::Index r = 0; r < c->b.size(); ++r)
                p.push_back(static_cast<double>(c->b(r)));
        }
        return p;
    }

    void set_params(const ParameterVector<double>& p) override {
        require(p.size() == num_params(), "set_params: length mismatch");
        std::size_t i = 0;
        for (Conv* c : layer_list()) {
            for (Eigen::Index r = 0; r < c->w.rows(); ++r)
                for (Eigen::Index cc = 0; cc < c->w.cols(); ++cc)
                    c->w(r, cc) = static_cast<S>(p[i++]);
            for (Eigen::Index r = 0; r < c->b.size(); ++r)
                c->b(r) = static_cast<S>(p[i++]);
        }
    }

    std::size_t num_params() const override {
        std::size_t n = 0;
        for (const Conv* c : const_cast<ReferenceNet*>(this)->layer_list())
            n += static_cast<std::size_t>(c->w.size()) + c->b.size();
        return n;
    }

  private:
    struct Cache {
        int h = 0, w = 0;
        Mat x, a0, p0, a1, p1, a2, u1, d1in, d1, u0, d0in, d0;
    };

    std::vector<Conv*> layer_list() {
        return {&enc0_, &enc1_, &bott_, &red1_, &dec1_, &red0_, &dec0_, &head_};
    }

    static Conv init_conv(int in, int out, int k, std::mt19937_64& rng) {
        Conv c;
        c.in = in;
        c.out = out;
        c.k = k;
        const int fan_in = in * k * k;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        c.w = Mat(out, fan_in);
        for (Eigen::Index r = 0; r < c.w.rows(); ++r)
            for (Eigen::Index cc = 0; cc < c.w.cols(); ++cc)
                c.w(r, cc) = static_cast<S>(dist(rng));
        c.b = Vec::Zero(out);
        return c;
    }

    // -- spatial helpers; feature maps are (channels x H*W) matrices --------

    static void im2col3(const Mat& in, int h, int w, Mat& col) {
        const int ch = static_cast<int>(in.rows());
        col.resize(static_cast<Eigen::Index>(ch) * 9, static_cast<Eigen::Index>(h) * w);
        for (int c = 0; c < ch; ++c)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const Eigen::Index row = c * 9 + (dy + 1) * 3 + (dx + 1);
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + dy;
                        S* dst = col.row(row).data() + static_cast<Eigen::Index>(y) * w;
                        if (sy < 0 || sy >= h) {
                            std::fill(dst, dst + w, S(0));
                            continue;
                        }
                        const S* src = in.row(c).data() + static_cast<Eigen::Index>(sy) * w;
                        for (int x = 0; x < w; ++x) {
                            const int sx = x + dx;
                            dst[x] = (sx < 0 || sx >= w) ? S(0) : src[sx];
                        }
                    }
                }
    }

    static void col2im3(const Mat& colgrad, int h, int w, Mat& ingrad) {
        const int ch = static_cast<int>(colgrad.rows()) / 9;
        ingrad = Mat::Zero(ch, static_cast<Eigen::Index>(h) * w);
        for (int c = 0; c < ch; ++c)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const Eigen::Index row = c * 9 + (dy + 1) * 3 + (dx + 1);
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= h) continue;
                        const S* src = colgrad.row(row).data() + static_cast<Eigen::Index>(y) * w;
                        S* dst = ingrad.row(c).data() + static_cast<Eigen::Index>(sy) * w;
                        for (int x = 0; x < w; ++x) {
                            const int sx = x + dx;
                            if (sx >= 0 && sx < w) dst[sx] += src[x];
                        }
                    }
                }
    }

    Mat conv_forward(const Conv& c, const Mat& in, int h, int w, Mat* col_out = nullptr) const {
        Mat out;
        if (c.k == 1) {
            out = c.w * in;
        } else {
            Mat col;
            im2col3(in, h, w, col);
            out = c.w * col;
            if (col_out) *col_out = std::move(col);
        }
        out.colwise() += c.b;
        return out;
    }

    /// Accumulates parameter grads and returns the input gradient.
    Mat conv_backward(const Conv& c, const Mat& in, const Mat& gout, int h, int w,
                      Mat& gw, Vec& gb, bool need_input_grad = true) const {
        gb += gout.rowwise().sum();
        if (c.k == 1) {
            gw += gout * in.transpose();
            return need_input_grad ? Mat(c.w.transpose() * gout) : Mat();
        }
        Mat col;
        im2col3(in, h, w, col);
        gw += gout * col.transpose();
        if (!need_input_grad) return Mat();
        Mat gcol = c.w.transpose() * gout;
        Mat gin;
        col2im3(gcol, h, w, gin);
        return gin;
    }

    static Mat avgpool2(const Mat& in, int h, int w) {
        const int ch = static_cast<int>(in.rows());
        const int oh = h / 2, ow = w / 2;
        Mat out(ch, static_cast<Eigen::Index>(oh) * ow);
        for (int c = 0; c < ch; ++c)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    const S* r0 = in.row(c).data() + static_cast<Eigen::Index>(2 * y) * w;
                    const S* r1 = r0 + w;
                    out(c, static_cast<Eigen::Index>(y) * ow + x) =
                        (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * S(0.25);
                }
        return out;
    }

    static Mat avgpool2_backward(const Mat& gout, int h, int w) {
        // h, w: input (pre-pool) dims
        const int ch = static_cast<int>(gout.rows());
        const int oh = h / 2, ow = w / 2;
        Mat gin(ch, static_cast<Eigen::Index>(h) * w);
        for (int c = 0; c < ch; ++c)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    const S g = gout(c, static_cast<Eigen::Index>(y) * ow + x) * S(0.25);
                    S* r0 = gin.row(c).data() + static_cast<Eigen::Index>(2 * y) * w;
                    S* r1 = r0 + w;
                    r0[2 * x] = g;
                    r0[2 * x + 1] = g;
                    r1[2 * x] = g;
                    r1[2 * x + 1] = g;
                }
        return gin;
    }

    static Mat upsample2(const Mat& in, int h, int w) {
        // nearest neighbor; h, w: input dims
        const int ch = static_cast<int>(in.rows());
        const int oh = 2 * h, ow = 2 * w;
        Mat out(ch, static_cast<Eigen::Index>(oh) * ow);
        for (int c = 0; c < ch; ++c)
            for (int y = 0; y < oh; ++y) {
                const S* src = in.row(c).data() + static_cast<Eigen::Index>(y / 2) * w;
                S* dst = out.row(c).data() + static_cast<Eigen::Index>(y) * ow;
                for (int x = 0; x < ow; ++x) dst[x] = src[x / 2];
            }
        return out;
    }

    static Mat upsample2_backward(const Mat& gout, int h, int w) {
        // h, w: input (pre-upsample) dims
        const int ch = static_cast<int>(gout.rows());
        const int ow = 2 * w;
        Mat gin = Mat::Zero(ch, static_cast<Eigen::Index>(h) * w);
        for (int c = 0; c < ch; ++c)
            for (int y = 0; y < 2 * h; ++y) {
                const S* src = gout.row(c).data() + static_cast<Eigen::Index>(y) * ow;
                S* dst = gin.row(c).data() + static_cast<Eigen::Index>(y / 2) * w;
                for (int x = 0; x < ow; ++x) dst[x / 2] += src[x];
            }
        return gin;
    }

    static void relu_inplace(Mat& m) {
        m = m.cwiseMax(S(0));
    }

    static void relu_mask(Mat& grad, const Mat& act) {
        grad = (act.array() > S(0)).template cast<S>() * grad.array();
    }

    // -- network ------------------------------------------------------------

    std::vector<LogitMap> run_forward(const std::vector<ImageSlice>& images, bool cache) {
        if (cache) caches_.clear();
        std::vector<LogitMap> out;
        out.reserve(images.size());
        for (const auto& img : images) {
            require(img.channels == spec_.in_channels, "forward: channel mismatch");
            require(img.height % 4 == 0 && img.width % 4 == 0,
                    "forward: H and W must be divisible by 4");
            Cache c;
            c.h = img.height;
            c.w = img.width;
            c.x = Mat(img.channels, static_cast<Eigen::Index>(img.height) * img.width);
            for (std::size_t i = 0; i < img.size(); ++i)
                c.x.data()[i] = static_cast<S>(img.data[i]);
            const int h = c.h, w = c.w, h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;

            c.a0 = conv_forward(enc0_, c.x, h, w);
            relu_inplace(c.a0);
            c.p0 = avgpool2(c.a0, h, w);
            c.a1 = conv_forward(enc1_, c.p0, h2, w2);
            relu_inplace(c.a1);
            c.p1 = avgpool2(c.a1, h2, w2);
            c.a2 = conv_forward(bott_, c.p1, h4, w4);
            relu_inplace(c.a2);
            c.u1 = upsample2(c.a2, h4, w4);
            c.d1in = conv_forward(red1_, c.u1, h2, w2) + c.a1;
            relu_inplace(c.d1in);
            c.d1 = conv_forward(dec1_, c.d1in, h2, w2);
            relu_inplace(c.d1);
            c.u0 = upsample2(c.d1, h2, w2);
            c.d0in = conv_forward(red0_, c.u0, h, w) + c.a0;
            relu_inplace(c.d0in);
            c.d0 = conv_forward(dec0_, c.d0in, h, w);
            relu_inplace(c.d0);
            Mat logits = conv_forward(head_, c.d0, h, w);

            LogitMap lm(spec_.num_classes, h, w);
            for (std::size_t i = 0; i < lm.size(); ++i)
                lm.data[i] = static_cast<double>(logits.data()[i]);
            out.push_back(std::move(lm));
            if (cache) caches_.push_back(std::move(c));
        }
        return out;
    }

    void backward_one(const Cache& c, const Planes<double>& grad_logits,
                      std::vector<Mat>& gw, std::vector<Vec>& gb) const {
        require(grad_logits.channels == spec_.num_classes &&
                    grad_logits.height == c.h && grad_logits.width == c.w,
                "backward: gradient shape mismatch");
        const int h = c.h, w = c.w, h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
        // layer indices in layer_list() order
        enum { E0, E1, BO, R1, D1, R0, D0, HD };

        Mat g(spec_.num_classes, static_cast<Eigen::Index>(h) * w);
        for (std::size_t i = 0; i < grad_logits.size(); ++i)
            g.data()[i] = static_cast<S>(grad_logits.data[i]);

        Mat gd0 = conv_backward(head_, c.d0, g, h, w, gw[HD], gb[HD]);
        relu_mask(gd0, c.d0);
        Mat gd0in = conv_backward(dec0_, c.d0in, gd0, h, w, gw[D0], gb[D0]);
        relu_mask(gd0in, c.d0in);
        Mat gu0 = conv_backward(red0_, c.u0, gd0in, h, w, gw[R0], gb[R0]);
        Mat ga0 = gd0in;  // skip branch
        Mat gd1 = upsample2_backward(gu0, h2, w2);
        relu_mask(gd1, c.d1);
        Mat gd1in = conv_backward(dec1_, c.d1in, gd1, h2, w2, gw[D1], gb[D1]);
        relu_mask(gd1in, c.d1in);
        Mat gu1 = conv_backward(red1_, c.u1, gd1in, h2, w2, gw[R1], gb[R1]);
        Mat ga1 = gd1in;  // skip branch
        Mat ga2 = upsample2_backward(gu1, h4, w4);
        relu_mask(ga2, c.a2);
        Mat gp1 = conv_backward(bott_, c.p1, ga2, h4, w4, gw[BO], gb[BO]);
        ga1 += avgpool2_backward(gp1, h2, w2);
        relu_mask(ga1, c.a1);
        Mat gp0 = conv_backward(enc1_, c.p0, ga1, h2, w2, gw[E1], gb[E1]);
        ga0 += avgpool2_backward(gp0, h, w);
        relu_mask(ga0, c.a0);
        conv_backward(enc0_, c.x, ga0, h, w, gw[E0], gb[E0], /*need_input_grad=*/false);
    }

    ReferenceNetSpec spec_;
    Conv enc0_, enc1_, bott_, red1_, dec1_, red0_, dec0_, head_;
    std::vector<Cache> caches_;
};

}  // namespace sraseg
