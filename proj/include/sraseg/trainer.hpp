#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sraseg/checkpoint.hpp"
#include "sraseg/config.hpp"
#include "sraseg/core.hpp"
#include "sraseg/data_io.hpp"
#include "sraseg/extractor.hpp"
#include "sraseg/image_io.hpp"
#include "sraseg/losses.hpp"
#include "sraseg/metrics.hpp"
#include "sraseg/model.hpp"
#include "sraseg/pseudo_label.hpp"
#include "sraseg/soft_mix.hpp"

namespace sraseg {

struct OptimizerState {
    ParameterVector<double> velocity;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

/// v' = momentum*v + grads + weight_decay*params; params' = params - lr*v'.
inline void sgd_step(ParameterVector<double>& params, const ParameterVector<double>& grads,
                     OptimizerState& state) {
    require(params.size() == grads.size() && params.size() == state.velocity.size(),
            "sgd_step: length mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw std::runtime_error("sgd_step: non-finite gradient at index " +
                                     std::to_string(i));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.velocity[i] = state.momentum * state.velocity[i] + grads[i] +
                            state.weight_decay * params[i];
        params[i] -= state.lr * state.velocity[i];
    }
}

struct TrainRecord {
    long long iteration = 0;
    double l_soft = 0.0;
    double l_sa = 0.0;
    double total = 0.0;
    double mean_nn_distance = 0.0;
    double lr = 0.0;
};

inline std::string format_record(const TrainRecord& r) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%lld %.10g %.10g %.10g %.10g %.10g", r.iteration,
                  r.l_soft, r.l_sa, r.total, r.mean_nn_distance, r.lr);
    return buf;
}

/// dlogit_c = p_c * (g_c - sum_k g_k * p_k), per pixel.
inline Planes<double> softmax_backward(const SoftLabelMap& probs,
                                       const Planes<double>& grad_probs) {
    Planes<double> g(probs.channels, probs.height, probs.width);
    for (int y = 0; y < probs.height; ++y)
        for (int x = 0; x < probs.width; ++x) {
            double dot = 0.0;
            for (int c = 0; c < probs.channels; ++c)
                dot += grad_probs.at(c, y, x) * probs.at(c, y, x);
            for (int c = 0; c < probs.channels; ++c)
                g.at(c, y, x) = probs.at(c, y, x) * (grad_probs.at(c, y, x) - dot);
        }
    return g;
}

struct BatchLossResult {
    double l_soft = 0.0;
    double l_sa = 0.0;
    double total = 0.0;
    double mean_nn_distance = 0.0;
    std::vector<Planes<double>> grad_logits;
};

/// Loss assembly for a batch of logit maps arranged in `groups` equal
/// consecutive groups. Per group: batch-global soft Dice plus soft CE
/// (optionally mean-normalized over pixels for SGD scale stability);
/// l_soft is the average over groups. When `sa_images` is given, each image
/// is routed through sa_input -> extractor and the alignment loss against
/// `real_embeddings` is added with weight lambda, its gradient chained back
/// through the student's probabilities. Gradients are returned with respect
/// to the logits.
inline BatchLossResult compute_batch_loss(
    const std::vector<LogitMap>& logits, const std::vector<SoftLabelMap>& targets,
    int groups, const SaConfig& sa_cfg, bool normalize_ce,
    const std::vector<ImageSlice>* sa_images = nullptr,
    const EmbeddingBatch* real_embeddings = nullptr,
    const FeatureExtractor* extractor = nullptr,
    SaInputMode sa_mode = SaInputMode::prob_weighted_image) {
    require(!logits.empty() && logits.size() == targets.size(),
            "compute_batch_loss: batch mismatch");
    require(groups >= 1 && logits.size() % groups == 0,
            "compute_batch_loss: batch not divisible into groups");
    const std::size_t n = logits.size();
    const std::size_t per_group = n / groups;

    std::vector<SoftLabelMap> probs(n);
    for (std::size_t i = 0; i < n; ++i) probs[i] = softmax_probs(logits[i]);

    BatchLossResult out;
    std::vector<Planes<double>> grad_probs(n);
    for (std::size_t i = 0; i < n; ++i)
        grad_probs[i] =
            Planes<double>(probs[i].channels, probs[i].height, probs[i].width, 0.0);

    const double group_weight = 1.0 / groups;
    for (int g = 0; g < groups; ++g) {
        const std::size_t b0 = g * per_group;
        // batch-global Dice: sums pooled over the whole group
        double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
        std::size_t pixel_count = 0;
        for (std::size_t i = b0; i < b0 + per_group; ++i) {
            require(probs[i].same_shape(targets[i]), "compute_batch_loss: shape mismatch");
            for (std::size_t k = 0; k < probs[i].size(); ++k) {
                inter += probs[i].data[k] * targets[i].data[k];
                sum_p += probs[i].data[k];
                sum_t += targets[i].data[k];
            }
            pixel_count +=
                static_cast<std::size_t>(probs[i].height) * probs[i].width;
        }
        const double denom = sum_p + sum_t + sa_cfg.epsilon;
        const double dice = 1.0 - 2.0 * inter / denom;
        const double da = 2.0 * inter / (denom * denom);
        const double db = 2.0 / denom;

        double ce = 0.0;
        const double ce_scale = normalize_ce ? 1.0 / static_cast<double>(pixel_count) : 1.0;
        for (std::size_t i = b0; i < b0 + per_group; ++i) {
            for (std::size_t k = 0; k < probs[i].size(); ++k) {
                const double p = probs[i].data[k];
                const double t = targets[i].data[k];
                const double pc = std::clamp(p, sa_cfg.prob_clamp, 1.0);
                ce -= t * std::log(pc) * ce_scale;
                double gce = (p >= sa_cfg.prob_clamp) ? -t / pc * ce_scale : 0.0;
                grad_probs[i].data[k] +=
                    group_weight * (da - db * t + gce);
            }
        }
        out.l_soft += group_weight * (dice + ce);
    }

    // similarity alignment over the same batch
    if (sa_images && real_embeddings && extractor) {
        require(sa_images->size() == n, "compute_batch_loss: sa batch mismatch");
        std::vector<ImageSlice> inputs(n);
        for (std::size_t i = 0; i < n; ++i)
            inputs[i] = sa_input((*sa_images)[i], probs[i], sa_mode);
        EmbeddingBatch syn = embed_batch(*extractor, inputs);
        SaLossResult sa = sa_loss(syn, *real_embeddings);
        out.l_sa = sa.value;
        out.mean_nn_distance = sa.value;
        if (sa_cfg.lambda > 0.0 && sa_mode != SaInputMode::raw_image) {
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> gf(syn.dim);
                for (int k = 0; k < syn.dim; ++k)
                    gf[k] = sa_cfg.lambda * sa.grad.at(static_cast<int>(i), k);
                ImageSlice gx = extractor->embed_input_grad(inputs[i], gf);
                SoftLabelMap gp =
                    sa_input_backward((*sa_images)[i], probs[i], sa_mode, gx);
                for (std::size_t k = 0; k < gp.size(); ++k)
                    grad_probs[i].data[k] += gp.data[k];
            }
        }
    }

    out.total = total_loss(out.l_soft, out.l_sa, sa_cfg.lambda);
    out.grad_logits.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.grad_logits[i] = softmax_backward(probs[i], grad_probs[i]);
    return out;
}

/// Joint optimization loop: batch assembly, pseudo-labeling, soft-mix, loss
/// evaluation, SGD update, EMA teacher update, warm-up, checkpointing and
/// periodic evaluation.
class Trainer {
  public:
    Trainer(const RunConfig& cfg, const SplitManifest& split)
        : cfg_(cfg),
          student_(net_spec(cfg, split), cfg.seed),
          teacher_net_(net_spec(cfg, split), cfg.seed),
          extractor_(cfg.seed, cfg.embed_dim),
          shuffle_rng_(make_stream(cfg.seed, "shuffle")),
          mask_rng_(make_stream(cfg.seed, "mask")) {
        cfg_.validate();
        sa_cfg_.lambda = cfg.lambda_sa;
        if (cfg_.train_mode == TrainMode::sra)
            require(cfg_.batch_labeled == cfg_.batch_unlabeled,
                    "trainer: sra mode pairs batches 1:1; batch sizes must match");
        load_data(split);
        params_ = student_.get_params();
        ema_.teacher = params_;
        ema_.decay = cfg_.ema_decay;
        teacher_net_.set_params(ema_.teacher);
        opt_.velocity.assign(params_.size(), 0.0);
        opt_.lr = cfg_.lr;
        opt_.momentum = cfg_.momentum;
        opt_.weight_decay = cfg_.weight_decay;
    }

    long long iteration() const { return iteration_; }
    const ParameterVector<double>& student_params() const { return params_; }
    const ParameterVector<double>& teacher_params() const { return ema_.teacher; }
    SegmentationModel& student() { return student_; }
    SegmentationModel& teacher() { return teacher_net_; }

    double current_lr() const {
        if (cfg_.lr_schedule == LrSchedule::poly && cfg_.iterations > 0)
            return cfg_.lr * std::pow(1.0 - static_cast<double>(iteration_) /
                                                cfg_.iterations,
                                      cfg_.lr_poly_power);
        return cfg_.lr;
    }

    /// Supervised step on ground-truth labels (used during warm-up and in
    /// supervised-only mode).
    TrainRecord warmup_step() {
        require(!labeled_.empty(), "warmup_step: no labeled data");
        std::vector<ImageSlice> images;
        std::vector<SoftLabelMap> targets;
        std::uniform_int_distribution<std::size_t> pick(0, labeled_.size() - 1);
        for (int i = 0; i < cfg_.batch_labeled; ++i) {
            const auto& item = labeled_[pick(shuffle_rng_)];
            images.push_back(item.image);
            targets.push_back(item.onehot);
        }
        std::vector<LogitMap> logits = student_.forward(images);
        BatchLossResult loss =
            compute_batch_loss(logits, targets, 1, sa_cfg_, /*normalize_ce=*/true);
        apply_update(loss.grad_logits);
        TrainRecord rec{iteration_, loss.l_soft, 0.0, loss.l_soft, 0.0, opt_.lr};
        ++iteration_;
        return rec;
    }

    /// One semi-supervised iteration: teacher pseudo-labels a synthetic
    /// batch, each pair is soft-mixed both ways under one shared mask, the
    /// student trains on both mixtures with the alignment term, then SGD and
    /// the EMA teacher update run.
    TrainRecord train_step() {
        require(!labeled_.empty() && !synthetic_.empty(),
                "train_step: need labeled and synthetic data");
        const int B = cfg_.batch_labeled;
        std::vector<const LabeledItem*> lab(B);
        std::vector<ImageSlice> syn(B);
        std::uniform_int_distribution<std::size_t> pick_lab(0, labeled_.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_syn(0, synthetic_.size() - 1);
        for (int i = 0; i < B; ++i) lab[i] = &labeled_[pick_lab(shuffle_rng_)];
        for (int i = 0; i < B; ++i) syn[i] = synthetic_[pick_syn(shuffle_rng_)];

        // (1) pseudo-labels from the EMA teacher, detached by construction
        std::vector<SoftLabelMap> pseudo =
            generate_pseudo_labels(teacher_net_, syn, cfg_.connectivity);

        // (2)-(3) one blend mask per pair, both complementary mixtures; with
        // soft-mix off there is no mixing and the synthetic images train on
        // their raw pseudo-labels
        std::vector<ImageSlice> mixed(2 * B);
        std::vector<SoftLabelMap> targets(2 * B);
        for (int i = 0; i < B; ++i) {
            const ImageSlice& vl = lab[i]->image;
            require(vl.height == syn[i].height && vl.width == syn[i].width,
                    "train_step: labeled/synthetic shape mismatch");
            if (!cfg_.soft_mix) {
                mixed[i] = vl;
                targets[i] = lab[i]->onehot;
                mixed[B + i] = syn[i];
                targets[B + i] = pseudo[i];
                continue;
            }
            Rect rect = sample_blend_region(vl.height, vl.width, cfg_.patch_fraction,
                                            mask_rng_);
            BlendMask mask = build_blend_mask(vl.height, vl.width, rect,
                                              cfg_.smooth_kernel);
            MixedPair p = make_complementary_mixtures(vl, lab[i]->onehot, syn[i],
                                                      pseudo[i], mask);
            mixed[i] = std::move(p.v1);
            mixed[B + i] = std::move(p.v2);
            targets[i] = std::move(p.l1);
            targets[B + i] = std::move(p.l2);
        }
        if (!cfg_.soft_loss)
            for (auto& t : targets) t = one_hot(argmax_labels(t), cfg_.num_classes);

        // (4)-(6) student forward on both mixtures, losses and gradients
        std::vector<LogitMap> logits = student_.forward(mixed);
        // the labeled side goes through the same alignment transform, with
        // its ground-truth one-hot standing in for the prediction
        std::vector<ImageSlice> real_raw;
        real_raw.reserve(B);
        for (int i = 0; i < B; ++i)
            real_raw.push_back(
                sa_input(lab[i]->image, lab[i]->onehot, cfg_.sa_input_mode));
        EmbeddingBatch real_emb = embed_batch(extractor_, real_raw);
        BatchLossResult loss = compute_batch_loss(
            logits, targets, 2, sa_cfg_, /*normalize_ce=*/true, &mixed, &real_emb,
            &extractor_, cfg_.sa_input_mode);

        // (7)-(9) backprop through the student only, SGD, EMA
        apply_update(loss.grad_logits);
        ema_update(ema_, params_);
        teacher_net_.set_params(ema_.teacher);

        TrainRecord rec{iteration_, loss.l_soft, loss.l_sa, loss.total,
                        loss.mean_nn_distance, opt_.lr};
        ++iteration_;
        return rec;
    }

    /// Copies the student into the teacher (warm-up/self-training boundary).
    void sync_teacher() {
        ema_.teacher = params_;
        teacher_net_.set_params(ema_.teacher);
    }

    MetricsRecord evaluate_pool(const std::vector<std::pair<ImageSlice, HardLabelMap>>& pool,
                                bool with_surface = false) {
        require(!pool.empty(), "evaluate_pool: empty pool");
        std::vector<std::vector<ClassMetrics>> per_image;
        for (const auto& [img, gt] : pool) {
            std::vector<LogitMap> l = student_.forward_inference({img});
            HardLabelMap pred = argmax_labels(softmax_probs(l[0]));
            per_image.push_back(with_surface ? image_metrics(pred, gt, cfg_.num_classes)
                                             : overlap_metrics(pred, gt, cfg_.num_classes));
        }
        return aggregate_metrics(per_image, cfg_.num_classes);
    }

    MetricsRecord evaluate_val() { return evaluate_pool(val_); }
    MetricsRecord evaluate_test(bool with_surface = true) {
        return evaluate_pool(test_, with_surface);
    }

    Checkpoint make_checkpoint() const {
        Checkpoint cp;
        cp.iteration = static_cast<std::uint64_t>(iteration_);
        cp.best_dice = best_dice_;
        cp.student = params_;
        cp.teacher = ema_.teacher;
        cp.velocity = opt_.velocity;
        cp.rng_states["shuffle"] = serialize_engine(shuffle_rng_);
        cp.rng_states["mask"] = serialize_engine(mask_rng_);
        return cp;
    }

    void restore(const Checkpoint& cp) {
        require(cp.student.size() == params_.size(), "restore: parameter count mismatch");
        iteration_ = static_cast<long long>(cp.iteration);
        best_dice_ = cp.best_dice;
        params_ = cp.student;
        ema_.teacher = cp.teacher;
        opt_.velocity = cp.velocity;
        student_.set_params(params_);
        teacher_net_.set_params(ema_.teacher);
        deserialize_engine(shuffle_rng_, cp.rng_states.at("shuffle"));
        deserialize_engine(mask_rng_, cp.rng_states.at("mask"));
    }

    /// Full run: warm-up then self-training, periodic validation, log and
    /// best/last checkpoints under out_dir. Returns the best val mean
    /// foreground Dice (percent).
    double run(const std::string& out_dir, const std::string& resume_path = "") {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        {
            std::ofstream cfg_out(fs::path(out_dir) / "config.resolved");
            write_config(cfg_, cfg_out);
        }
        if (!resume_path.empty()) restore(load_checkpoint(resume_path));

        std::ofstream log(fs::path(out_dir) / "train.log",
                          resume_path.empty() ? std::ios::trunc : std::ios::app);
        const int warmup = cfg_.train_mode == TrainMode::supervised
                               ? cfg_.iterations
                               : cfg_.effective_warmup();
        while (iteration_ < cfg_.iterations) {
            if (iteration_ == warmup) sync_teacher();
            opt_.lr = current_lr();
            TrainRecord rec = iteration_ < warmup ? warmup_step() : train_step();
            log << format_record(rec) << "\n";
            if (!std::isfinite(rec.total))
                throw std::runtime_error("training aborted: non-finite loss at iteration " +
                                         std::to_string(rec.iteration));
            const bool last = iteration_ == cfg_.iterations;
            if ((cfg_.eval_every > 0 && iteration_ % cfg_.eval_every == 0) || last) {
                MetricsRecord m = evaluate_val();
                if (m.mean_dice > best_dice_) {
                    best_dice_ = m.mean_dice;
                    save_checkpoint(make_checkpoint(), (fs::path(out_dir) / "best.ckpt").string());
                }
                save_checkpoint(make_checkpoint(), (fs::path(out_dir) / "last.ckpt").string());
            }
        }
        if (cfg_.train_mode == TrainMode::supervised) sync_teacher();
        save_checkpoint(make_checkpoint(), (fs::path(out_dir) / "last.ckpt").string());
        return best_dice_;
    }

    struct LabeledItem {
        ImageSlice image;
        SoftLabelMap onehot;
        HardLabelMap mask;
    };

    const std::vector<LabeledItem>& labeled_items() const { return labeled_; }
    const std::vector<ImageSlice>& synthetic_images() const { return synthetic_; }
    const std::vector<std::pair<ImageSlice, HardLabelMap>>& val_items() const { return val_; }

  private:
    static ReferenceNetSpec net_spec(const RunConfig& cfg, const SplitManifest& split) {
        ReferenceNetSpec spec;
        spec.num_classes = cfg.num_classes;
        if (!split.labeled.empty())
            spec.in_channels = load_image(split.labeled.front().image_path).channels;
        return spec;
    }

    void load_data(const SplitManifest& split) {
        require(!split.labeled.empty(), "trainer: empty labeled pool");
        for (const auto& e : split.labeled) {
            LabeledItem item;
            item.image = load_image(e.image_path);
            item.mask = load_mask(e.mask_path, cfg_.num_classes);
            require(item.image.height == item.mask.height &&
                        item.image.width == item.mask.width,
                    "trainer: image/mask shape mismatch for " + e.image_path);
            item.onehot = one_hot(item.mask, cfg_.num_classes);
            labeled_.push_back(std::move(item));
        }
        for (const auto& e : split.synthetic) synthetic_.push_back(load_image(e.image_path));
        for (const auto& e : split.val)
            val_.emplace_back(load_image(e.image_path),
                              load_mask(e.mask_path, cfg_.num_classes));
        for (const auto& e : split.test)
            test_.emplace_back(load_image(e.image_path),
                               load_mask(e.mask_path, cfg_.num_classes));
    }

    void apply_update(const std::vector<Planes<double>>& grad_logits) {
        ParameterVector<double> grads = student_.backward(grad_logits);
        sgd_step(params_, grads, opt_);
        student_.set_params(params_);
    }

    RunConfig cfg_;
    SaConfig sa_cfg_;
    ReferenceNet<float> student_;
    ReferenceNet<float> teacher_net_;
    EmaState<double> ema_;
    ParameterVector<double> params_;
    OptimizerState opt_;
    StubExtractor extractor_;
    std::mt19937_64 shuffle_rng_;
    std::mt19937_64 mask_rng_;
    long long iteration_ = 0;
    double best_dice_ = -1.0;

    std::vector<LabeledItem> labeled_;
    std::vector<ImageSlice> synthetic_;
    std::vector<std::pair<ImageSlice, HardLabelMap>> val_;
    std::vector<std::pair<ImageSlice, HardLabelMap>> test_;
};

}  // namespace sraseg
