#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "sraseg/checkpoint.hpp"
#include "sraseg/config.hpp"
#include "sraseg/data_io.hpp"
#include "sraseg/diag.hpp"
#include "sraseg/image_io.hpp"
#include "sraseg/model.hpp"
#include "sraseg/pseudo_label.hpp"
#include "sraseg/soft_mix.hpp"
#include "sraseg/toy_data.hpp"
#include "sraseg/trainer.hpp"

namespace sraseg::cli {

namespace fs = std::filesystem;

/// Shared config plumbing: defaults, then --config file, then --set
/// overrides, then an explicit --seed (highest precedence).
struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    long long seed = -1;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "key = value config file");
        app->add_option("--set", overrides, "override, key=value (repeatable)");
        app->add_option("--seed", seed, "rng seed (overrides config)");
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path.empty()) load_config_file(cfg, config_path);
        apply_overrides(cfg, overrides);
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.validate();
        return cfg;
    }
};

inline void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "config.resolved");
    if (!out) throw std::runtime_error("cannot write config.resolved under " + out_dir);
    write_config(cfg, out);
}

/// Rebuilds a student net from a checkpoint; the input channel count is
/// probed from the first available split image.
inline ReferenceNet<float> model_from_checkpoint(const Checkpoint& cp,
                                                 const RunConfig& cfg,
                                                 const SplitManifest& split,
                                                 bool teacher) {
    ReferenceNetSpec spec;
    spec.num_classes = cfg.num_classes;
    const ManifestEntry* probe = nullptr;
    if (!split.labeled.empty()) probe = &split.labeled.front();
    else if (!split.synthetic.empty()) probe = &split.synthetic.front();
    else if (!split.val.empty()) probe = &split.val.front();
    else if (!split.test.empty()) probe = &split.test.front();
    require(probe != nullptr, "empty split manifest");
    spec.in_channels = load_image(probe->image_path).channels;
    ReferenceNet<float> net(spec, cfg.seed);
    require(net.num_params() == cp.student.size(),
            "checkpoint does not match the configured model");
    net.set_params(teacher ? cp.teacher : cp.student);
    return net;
}

inline std::vector<ImageSlice> load_pool_images(const std::vector<ManifestEntry>& pool) {
    std::vector<ImageSlice> out;
    out.reserve(pool.size());
    for (const auto& e : pool) out.push_back(load_image(e.image_path));
    return out;
}

inline void print_metrics(const MetricsRecord& m, std::ostream& os, bool surface) {
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
        os << "class " << c + 1 << ": dice " << m.per_class[c].dice << " jaccard "
           << m.per_class[c].jaccard;
        if (surface && m.per_class[c].surface_defined)
            os << " hd95 " << m.per_class[c].hd95 << " asd " << m.per_class[c].asd;
        os << "\n";
    }
    os << "mean: dice " << m.mean_dice << " jaccard " << m.mean_jaccard;
    if (surface) os << " hd95 " << m.mean_hd95 << " asd " << m.mean_asd;
    os << "\n";
    if (m.surface_undefined_count > 0)
        os << "surface metrics undefined for " << m.surface_undefined_count
           << " image/class pairs (excluded)\n";
}

inline int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"sra-seg: semi-supervised segmentation toolkit"};
    app.require_subcommand(1);

    // make-toy-data
    auto* toy = app.add_subcommand("make-toy-data", "generate the procedural dataset");
    std::string toy_out;
    int toy_count = 80;
    double toy_shift = 0.3;
    long long toy_seed = 0;
    toy->add_option("--out", toy_out, "output directory")->required();
    toy->add_option("--count", toy_count, "training images per pool");
    toy->add_option("--shift", toy_shift, "synthetic-pool domain shift in [0,1]");
    toy->add_option("--seed", toy_seed, "rng seed");

    // split
    auto* split_cmd = app.add_subcommand("split", "derive a train/val/test split manifest");
    std::string split_root, split_out;
    double split_fraction = 0.10;
    long long split_seed = 0;
    split_cmd->add_option("--data-root", split_root, "dataset root directory")->required();
    split_cmd->add_option("--out", split_out, "split manifest path")->required();
    split_cmd->add_option("--fraction", split_fraction, "labeled fraction in (0,1)");
    split_cmd->add_option("--seed", split_seed, "rng seed");

    // train
    auto* train = app.add_subcommand("train", "run the training loop");
    ConfigArgs train_cfg;
    std::string train_split, train_out, train_resume;
    train_cfg.attach(train);
    train->add_option("--split", train_split, "split manifest")->required();
    train->add_option("--out", train_out, "run output directory")->required();
    train->add_option("--resume", train_resume, "checkpoint to resume from");

    // pseudo-label
    auto* plabel = app.add_subcommand("pseudo-label",
                                      "emit teacher pseudo-label masks for the synthetic pool");
    ConfigArgs plabel_cfg;
    std::string plabel_split, plabel_ckpt, plabel_out;
    plabel_cfg.attach(plabel);
    plabel->add_option("--split", plabel_split, "split manifest")->required();
    plabel->add_option("--checkpoint", plabel_ckpt, "training checkpoint")->required();
    plabel->add_option("--out", plabel_out, "output directory")->required();

    // augment-preview
    auto* preview = app.add_subcommand("augment-preview",
                                       "write one soft-mixed pair for inspection");
    ConfigArgs preview_cfg;
    std::string preview_split, preview_ckpt, preview_out;
    preview_cfg.attach(preview);
    preview->add_option("--split", preview_split, "split manifest")->required();
    preview->add_option("--checkpoint", preview_ckpt, "training checkpoint")->required();
    preview->add_option("--out", preview_out, "output directory")->required();

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "score a checkpoint on the test pool");
    ConfigArgs eval_cfg;
    std::string eval_split, eval_ckpt, eval_out;
    std::string eval_pool = "test";
    eval_cfg.attach(eval);
    eval->add_option("--split", eval_split, "split manifest")->required();
    eval->add_option("--checkpoint", eval_ckpt, "training checkpoint")->required();
    eval->add_option("--out", eval_out, "output directory (metrics.txt)");
    eval->add_option("--pool", eval_pool, "val or test")
        ->check(CLI::IsMember({"val", "test"}));

    // diagnose-kde
    auto* diag_cmd = app.add_subcommand("diagnose-kde",
                                        "kde domain-gap diagnostic between two pools");
    ConfigArgs diag_cfg;
    std::string diag_split, diag_ckpt, diag_out;
    int diag_class = 1;
    diag_cfg.attach(diag_cmd);
    diag_cmd->add_option("--split", diag_split, "split manifest")->required();
    diag_cmd->add_option("--checkpoint", diag_ckpt, "training checkpoint")->required();
    diag_cmd->add_option("--out", diag_out, "output directory")->required();
    diag_cmd->add_option("--class", diag_class, "foreground class for the area statistic");

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (toy->parsed()) {
            make_toy_data(toy_out, toy_count, toy_shift,
                          static_cast<std::uint64_t>(toy_seed));
            std::cout << "wrote toy dataset to " << toy_out << "\n";
        } else if (split_cmd->parsed()) {
            DatasetManifest manifest = scan_dataset_root(split_root);
            SplitManifest split = make_splits(manifest, split_fraction,
                                              static_cast<std::uint64_t>(split_seed));
            fs::create_directories(fs::path(split_out).parent_path().empty()
                                       ? fs::path(".")
                                       : fs::path(split_out).parent_path());
            save_split(split, split_out);
            std::cout << "labeled " << split.labeled.size() << ", unlabeled slots "
                      << split.unlabeled_slots.size() << ", synthetic "
                      << split.synthetic.size() << ", val " << split.val.size()
                      << ", test " << split.test.size() << "\n";
        } else if (train->parsed()) {
            RunConfig cfg = train_cfg.resolve();
            SplitManifest split = load_split(train_split);
            Trainer trainer(cfg, split);
            const double best = trainer.run(train_out, train_resume);
            std::cout << "best val dice " << best << "\n";
        } else if (plabel->parsed()) {
            RunConfig cfg = plabel_cfg.resolve();
            SplitManifest split = load_split(plabel_split);
            require(!split.synthetic.empty(), "pseudo-label: empty synthetic pool");
            Checkpoint cp = load_checkpoint(plabel_ckpt);
            ReferenceNet<float> teacher =
                model_from_checkpoint(cp, cfg, split, /*teacher=*/true);
            fs::create_directories(plabel_out);
            for (const auto& e : split.synthetic) {
                ImageSlice img = load_image(e.image_path);
                std::vector<SoftLabelMap> pl =
                    generate_pseudo_labels(teacher, std::vector<ImageSlice>{img},
                                           cfg.connectivity);
                HardLabelMap hard = argmax_labels(pl[0]);
                fs::path name = fs::path(e.image_path).filename();
                save_mask(hard, (fs::path(plabel_out) / name).string());
            }
            std::cout << "wrote " << split.synthetic.size() << " pseudo-label masks to "
                      << plabel_out << "\n";
        } else if (preview->parsed()) {
            RunConfig cfg = preview_cfg.resolve();
            SplitManifest split = load_split(preview_split);
            require(!split.labeled.empty() && !split.synthetic.empty(),
                    "augment-preview: need labeled and synthetic entries");
            Checkpoint cp = load_checkpoint(preview_ckpt);
            ReferenceNet<float> teacher =
                model_from_checkpoint(cp, cfg, split, /*teacher=*/true);
            ImageSlice v_lab = load_image(split.labeled.front().image_path);
            HardLabelMap gt = load_mask(split.labeled.front().mask_path, cfg.num_classes);
            ImageSlice v_syn = load_image(split.synthetic.front().image_path);
            std::vector<SoftLabelMap> pl = generate_pseudo_labels(
                teacher, std::vector<ImageSlice>{v_syn}, cfg.connectivity);
            std::mt19937_64 rng = make_stream(cfg.seed, "mask");
            Rect rect = sample_blend_region(v_lab.height, v_lab.width,
                                            cfg.patch_fraction, rng);
            BlendMask mask = build_blend_mask(v_lab.height, v_lab.width, rect,
                                              cfg.smooth_kernel);
            MixedPair p = make_complementary_mixtures(v_lab, one_hot(gt, cfg.num_classes),
                                                      v_syn, pl[0], mask);
            fs::create_directories(preview_out);
            fs::path out(preview_out);
            save_image_u8(v_lab, (out / "labeled.pgm").string());
            save_image_u8(v_syn, (out / "synthetic.pgm").string());
            save_image_u8(p.v1, (out / "mix1.pgm").string());
            save_image_u8(p.v2, (out / "mix2.pgm").string());
            save_mask(argmax_labels(p.l1), (out / "mix1_mask.pgm").string());
            save_mask(argmax_labels(p.l2), (out / "mix2_mask.pgm").string());
            ImageSlice mvis(1, mask.height, mask.width);
            mvis.data = mask.smooth;
            save_image_u8(mvis, (out / "blend_mask.pgm").string());
            std::cout << "wrote augmentation preview to " << preview_out << "\n";
        } else if (eval->parsed()) {
            RunConfig cfg = eval_cfg.resolve();
            SplitManifest split = load_split(eval_split);
            Checkpoint cp = load_checkpoint(eval_ckpt);
            ReferenceNet<float> net =
                model_from_checkpoint(cp, cfg, split, /*teacher=*/false);
            const auto& pool = eval_pool == "val" ? split.val : split.test;
            require(!pool.empty(), "evaluate: empty " + eval_pool + " pool");
            std::vector<std::vector<ClassMetrics>> per_image;
            for (const auto& e : pool) {
                ImageSlice img = load_image(e.image_path);
                HardLabelMap gt = load_mask(e.mask_path, cfg.num_classes);
                std::vector<LogitMap> l = net.forward_inference({img});
                HardLabelMap pred = argmax_labels(softmax_probs(l[0]));
                per_image.push_back(image_metrics(pred, gt, cfg.num_classes));
            }
            MetricsRecord m = aggregate_metrics(per_image, cfg.num_classes);
            print_metrics(m, std::cout, /*surface=*/true);
            if (!eval_out.empty()) {
                fs::create_directories(eval_out);
                std::ofstream out(fs::path(eval_out) / "metrics.txt");
                print_metrics(m, out, /*surface=*/true);
            }
        } else if (diag_cmd->parsed()) {
            RunConfig cfg = diag_cfg.resolve();
            SplitManifest split = load_split(diag_split);
            Checkpoint cp = load_checkpoint(diag_ckpt);
            ReferenceNet<float> net =
                model_from_checkpoint(cp, cfg, split, /*teacher=*/false);
            require(diag_class >= 1 && diag_class < cfg.num_classes,
                    "diagnose-kde: class out of range");
            std::vector<ImageSlice> pool_a = load_pool_images(split.labeled);
            std::vector<ImageSlice> pool_b = load_pool_images(split.synthetic);
            DomainGapReport rep = domain_gap_report(net, pool_a, pool_b,
                                                    area_fraction_statistic(diag_class));
            fs::create_directories(diag_out);
            write_kde_csv(rep.curve_a, rep.curve_b,
                          (fs::path(diag_out) / "kde.csv").string());
            write_kde_svg(rep.curve_a, rep.curve_b,
                          (fs::path(diag_out) / "kde.svg").string(), "labeled",
                          "synthetic");
            std::ofstream score(fs::path(diag_out) / "gap.txt");
            score << rep.gap_score << "\n";
            std::cout << "gap_score " << rep.gap_score << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace sraseg::cli
