#pragma once

#include <cmath>
#include <vector>

#include "sraseg/core.hpp"

namespace sraseg {

// Differentiable objectives: soft Dice, soft cross-entropy, the
// similarity-alignment loss, and the combined scalar. Each returns value
// plus analytic gradient with respect to its differentiable argument.

struct SaConfig {
    double lambda = 0.1;
    double epsilon = 1e-5;     // Dice smoothing
    double prob_clamp = 1e-7;  // CE log floor
};

struct LossResult {
    double value = 0.0;
    Planes<double> grad;  // wrt the prediction
};

struct SaLossResult {
    double value = 0.0;
    EmbeddingBatch grad;             // wrt the synthetic batch only
    std::vector<double> distances;   // d_i per synthetic row
    std::vector<int> nearest_index;  // argmin per synthetic row
};

/// 1 - 2*sum(P*T) / (sum(P) + sum(T) + eps), sums over all (c,x,y).
inline LossResult soft_dice_loss(const SoftLabelMap& pred, const SoftLabelMap& target,
                                 double eps) {
    require(pred.same_shape(target), "soft_dice_loss: shape mismatch");
    require(eps > 0.0, "soft_dice_loss: eps must be positive");
    double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += pred.data[i] * target.data[i];
        sum_p += pred.data[i];
        sum_t += target.data[i];
    }
    const double denom = sum_p + sum_t + eps;
    LossResult r;
    r.value = 1.0 - 2.0 * inter / denom;
    r.grad = Planes<double>(pred.channels, pred.height, pred.width);
    // quotient rule: dL/dP_i = 2*inter/denom^2 - 2*T_i/denom
    const double a = 2.0 * inter / (denom * denom);
    const double b = 2.0 / denom;
    for (std::size_t i = 0; i < pred.size(); ++i)
        r.grad.data[i] = a - b * target.data[i];
    return r;
}

/// -sum T * log(clamp(P, prob_clamp, 1)); gradient is -T/P where unclamped.
inline LossResult soft_cross_entropy(const SoftLabelMap& pred, const SoftLabelMap& target,
                                     double prob_clamp) {
    require(pred.same_shape(target), "soft_cross_entropy: shape mismatch");
    require(prob_clamp > 0.0 && prob_clamp < 1.0,
            "soft_cross_entropy: prob_clamp must be in (0,1)");
    LossResult r;
    r.grad = Planes<double>(pred.channels, pred.height, pred.width);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = pred.data[i];
        double pc = std::clamp(p, prob_clamp, 1.0);
        r.value -= target.data[i] * std::log(pc);
        r.grad.data[i] = (p >= prob_clamp && p <= 1.0) ? -target.data[i] / pc : 0.0;
    }
    return r;
}

/// L_soft = L_Dice + L_CE; values and gradients add.
inline LossResult soft_segmentation_loss(const SoftLabelMap& pred,
                                         const SoftLabelMap& target,
                                         const SaConfig& cfg) {
    LossResult dice = soft_dice_loss(pred, target, cfg.epsilon);
    LossResult ce = soft_cross_entropy(pred, target, cfg.prob_clamp);
    LossResult r;
    r.value = dice.value + ce.value;
    r.grad = std::move(dice.grad);
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad.data[i] += ce.grad.data[i];
    return r;
}

struct NnDistances {
    std::vector<double> dist;   // per synthetic row
    std::vector<int> index;     // argmin over real rows, ties -> lowest j
};

/// d_i = min_j || syn_i - real_j ||_2.
inline NnDistances nn_min_distances(const EmbeddingBatch& syn, const EmbeddingBatch& real) {
    require(syn.dim == real.dim, "nn_min_distances: dimension mismatch");
    require(syn.rows >= 1, "nn_min_distances: empty synthetic batch");
    require(real.rows >= 1, "nn_min_distances: empty real batch");
    NnDistances out;
    out.dist.resize(syn.rows);
    out.index.resize(syn.rows);
    for (int i = 0; i < syn.rows; ++i) {
        double best = 0.0;
        int bj = -1;
        for (int j = 0; j < real.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < syn.dim; ++k) {
                double d = syn.at(i, k) - real.at(j, k);
                s += d * d;
            }
            if (bj < 0 || s < best) {
                best = s;
                bj = j;
            }
        }
        out.dist[i] = std::sqrt(best);
        out.index[i] = bj;
    }
    return out;
}

/// Mean of per-row nearest-neighbor distances. Gradient flows only to the
/// synthetic side: row i gets (syn_i - real_j*) / (M * d_i), and the zero
/// subgradient when d_i = 0.
inline SaLossResult sa_loss(const EmbeddingBatch& syn, const EmbeddingBatch& real) {
    NnDistances nn = nn_min_distances(syn, real);
    SaLossResult r;
    r.distances = nn.dist;
    r.nearest_index = nn.index;
    r.grad = EmbeddingBatch(syn.rows, syn.dim);
    const double inv_m = 1.0 / syn.rows;
    for (int i = 0; i < syn.rows; ++i) {
        r.value += nn.dist[i] * inv_m;
        if (nn.dist[i] > 0.0) {
            const int j = nn.index[i];
            const double scale = inv_m / nn.dist[i];
            for (int k = 0; k < syn.dim; ++k)
                r.grad.at(i, k) = scale * (syn.at(i, k) - real.at(j, k));
        }
    }
    return r;
}

/// L = L_soft + lambda * L_SA; gradient composition is the caller's job.
inline double total_loss(double l_soft, double l_sa, double lambda) {
    require(lambda >= 0.0, "total_loss: lambda must be non-negative");
    return l_soft + lambda * l_sa;
}

}  // namespace sraseg
