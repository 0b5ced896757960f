#pragma once

#include <cmath>
#include <vector>

#include "sraseg/core.hpp"

namespace sraseg {

// Teacher maintenance and pseudo-label synthesis:
// EMA update -> softmax -> argmax -> largest-connected-component filter
// -> one-hot.

template <class S>
struct EmaState {
    ParameterVector<S> teacher;
    double decay = 0.99;  // in [0,1)
};

/// teacher' = decay * teacher + (1 - decay) * student, element-wise.
template <class S>
void ema_update(EmaState<S>& state, const ParameterVector<S>& student) {
    require(state.teacher.size() == student.size(), "ema_update: length mismatch");
    require(state.decay >= 0.0 && state.decay < 1.0, "ema_update: decay must be in [0,1)");
    const S d = static_cast<S>(state.decay);
    const S od = static_cast<S>(1.0 - state.decay);
    for (std::size_t i = 0; i < student.size(); ++i)
        state.teacher[i] = d * state.teacher[i] + od * student[i];
}

/// Per-pixel softmax over the class dimension, stabilized by max-subtraction.
inline SoftLabelMap softmax_probs(const LogitMap& logits) {
    SoftLabelMap probs(logits.channels, logits.height, logits.width);
    const int C = logits.channels;
    for (int y = 0; y < logits.height; ++y)
        for (int x = 0; x < logits.width; ++x) {
            double m = logits.at(0, y, x);
            for (int c = 1; c < C; ++c) m = std::max(m, logits.at(c, y, x));
            double z = 0.0;
            for (int c = 0; c < C; ++c) {
                double e = std::exp(logits.at(c, y, x) - m);
                probs.at(c, y, x) = e;
                z += e;
            }
            for (int c = 0; c < C; ++c) probs.at(c, y, x) /= z;
        }
    return probs;
}

/// Per-pixel argmax; ties resolve to the lowest class index.
inline HardLabelMap argmax_labels(const SoftLabelMap& probs) {
    HardLabelMap out(probs.height, probs.width);
    for (int y = 0; y < probs.height; ++y)
        for (int x = 0; x < probs.width; ++x) {
            int best = 0;
            double bv = probs.at(0, y, x);
            for (int c = 1; c < probs.channels; ++c)
                if (probs.at(c, y, x) > bv) {
                    bv = probs.at(c, y, x);
                    best = c;
                }
            out.at(y, x) = best;
        }
    return out;
}

/// Keeps, for each foreground class, only its largest connected component;
/// all other pixels of that class revert to background (class 0). Ties by
/// size resolve to the component containing the smallest row-major pixel.
/// Background itself is never filtered.
inline HardLabelMap largest_component_filter(const HardLabelMap& in, int connectivity) {
    require(connectivity == 4 || connectivity == 8,
            "largest_component_filter: connectivity must be 4 or 8");
    const int H = in.height, W = in.width;
    HardLabelMap out = in;
    std::vector<int> comp(static_cast<std::size_t>(H) * W, -1);
    std::vector<int> comp_class, comp_size;
    std::vector<int> stack;

    static const int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1};
    static const int dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};
    const int ndirs = connectivity == 8 ? 8 : 4;

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int idx = y * W + x;
            const int cls = in.at(y, x);
            if (cls == 0 || comp[idx] != -1) continue;
            const int id = static_cast<int>(comp_class.size());
            comp_class.push_back(cls);
            comp_size.push_back(0);
            comp[idx] = id;
            stack.assign(1, idx);
            while (!stack.empty()) {
                int cur = stack.back();
                stack.pop_back();
                ++comp_size[id];
                int cy = cur / W, cx = cur % W;
                for (int d = 0; d < ndirs; ++d) {
                    int ny = cy + dy8[d], nx = cx + dx8[d];
                    if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                    int nidx = ny * W + nx;
                    if (comp[nidx] == -1 && in.at(ny, nx) == cls) {
                        comp[nidx] = id;
                        stack.push_back(nidx);
                    }
                }
            }
        }

    // per class, the winning component is the largest; the row-major scan
    // above discovers components in top-left order, so "keep the first of
    // equal size" implements the tie rule
    std::vector<int> winner;  // per class, component id or -1
    for (int id = 0; id < static_cast<int>(comp_class.size()); ++id) {
        int cls = comp_class[id];
        if (cls >= static_cast<int>(winner.size())) winner.resize(cls + 1, -1);
        if (winner[cls] == -1 || comp_size[id] > comp_size[winner[cls]])
            winner[cls] = id;
    }
    for (int i = 0; i < H * W; ++i) {
        int id = comp[i];
        if (id != -1 && winner[comp_class[id]] != id) out.labels[i] = 0;
    }
    return out;
}

/// One-hot encoding of a hard label map.
inline SoftLabelMap one_hot(const HardLabelMap& labels, int num_classes) {
    SoftLabelMap out(num_classes, labels.height, labels.width, 0.0);
    for (int y = 0; y < labels.height; ++y)
        for (int x = 0; x < labels.width; ++x) {
            int cls = labels.at(y, x);
            require(cls >= 0 && cls < num_classes, "one_hot: label out of range");
            out.at(cls, y, x) = 1.0;
        }
    return out;
}

/// Full pseudo-label pipeline for one logit map.
inline SoftLabelMap pseudo_label_from_logits(const LogitMap& logits, int connectivity) {
    HardLabelMap hard = argmax_labels(softmax_probs(logits));
    return one_hot(largest_component_filter(hard, connectivity), logits.channels);
}

/// Pseudo-labels for a batch: the teacher is evaluated in inference mode and
/// the outputs carry no gradient (they are plain values by construction).
template <class Model>
std::vector<SoftLabelMap> generate_pseudo_labels(Model& teacher,
                                                 const std::vector<ImageSlice>& batch,
                                                 int connectivity) {
    std::vector<LogitMap> logits = teacher.forward_inference(batch);
    std::vector<SoftLabelMap> out;
    out.reserve(logits.size());
    for (const auto& l : logits)
        out.push_back(pseudo_label_from_logits(l, connectivity));
    return out;
}

}  // namespace sraseg
