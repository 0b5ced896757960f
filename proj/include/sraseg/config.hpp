#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sraseg/core.hpp"

namespace sraseg {

enum class SaInputMode { raw_image, prob_weighted_image, prob_map };
enum class TrainMode { sra, supervised };
enum class LrSchedule { constant, poly };

struct RunConfig {
    double labeled_fraction = 0.10;
    double patch_fraction = 2.0 / 3.0;  // beta
    int smooth_kernel = 3;
    double lambda_sa = 0.1;
    double ema_decay = 0.99;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int iterations = 2000;
    int warmup_iterations = -1;  // -1: 10% of iterations
    int eval_every = 200;
    int batch_labeled = 8;
    int batch_unlabeled = 8;
    std::uint64_t seed = 0;
    int num_classes = 3;
    SaInputMode sa_input_mode = SaInputMode::prob_weighted_image;
    int connectivity = 8;
    bool soft_mix = true;   // off: no mixing, raw pseudo-label training
    bool soft_loss = true;  // off: blended targets hardened by argmax
    TrainMode train_mode = TrainMode::sra;
    LrSchedule lr_schedule = LrSchedule::constant;
    double lr_poly_power = 0.9;
    int embed_dim = 64;
    std::string data_root;

    int effective_warmup() const {
        return warmup_iterations >= 0 ? warmup_iterations : iterations / 10;
    }

    void validate() const {
        require(labeled_fraction > 0.0 && labeled_fraction < 1.0,
                "labeled_fraction must be in (0,1)");
        require(patch_fraction > 0.0 && patch_fraction <= 1.0,
                "patch_fraction must be in (0,1]");
        require(smooth_kernel >= 1 && smooth_kernel % 2 == 1,
                "smooth_kernel must be odd and >= 1");
        require(lambda_sa >= 0.0, "lambda_sa must be non-negative");
        require(ema_decay >= 0.0 && ema_decay < 1.0, "ema_decay must be in [0,1)");
        require(lr > 0.0, "lr must be positive");
        require(num_classes >= 2, "num_classes must be >= 2");
        require(connectivity == 4 || connectivity == 8, "connectivity must be 4 or 8");
        require(iterations >= 0, "iterations must be non-negative");
        require(batch_labeled >= 1 && batch_unlabeled >= 1, "batch sizes must be >= 1");
        require(embed_dim >= 1, "embed_dim must be >= 1");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
}

inline double parse_real(const std::string& v, const std::string& key) {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument("config: bad number for '" + key + "': " + v);
    return x;
}

inline long long parse_int(const std::string& v, const std::string& key) {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
    return x;
}

}  // namespace detail

/// Applies one "key = value" assignment. Unknown keys are errors.
inline void apply_config_entry(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
    using namespace detail;
    if (key == "labeled_fraction") cfg.labeled_fraction = parse_real(value, key);
    else if (key == "patch_fraction") cfg.patch_fraction = parse_real(value, key);
    else if (key == "smooth_kernel") cfg.smooth_kernel = (int)parse_int(value, key);
    else if (key == "lambda_sa") cfg.lambda_sa = parse_real(value, key);
    else if (key == "ema_decay") cfg.ema_decay = parse_real(value, key);
    else if (key == "lr") cfg.lr = parse_real(value, key);
    else if (key == "momentum") cfg.momentum = parse_real(value, key);
    else if (key == "weight_decay") cfg.weight_decay = parse_real(value, key);
    else if (key == "iterations") cfg.iterations = (int)parse_int(value, key);
    else if (key == "warmup_iterations") cfg.warmup_iterations = (int)parse_int(value, key);
    else if (key == "eval_every") cfg.eval_every = (int)parse_int(value, key);
    else if (key == "batch_labeled") cfg.batch_labeled = (int)parse_int(value, key);
    else if (key == "batch_unlabeled") cfg.batch_unlabeled = (int)parse_int(value, key);
    else if (key == "seed") cfg.seed = (std::uint64_t)parse_int(value, key);
    else if (key == "num_classes") cfg.num_classes = (int)parse_int(value, key);
    else if (key == "connectivity") cfg.connectivity = (int)parse_int(value, key);
    else if (key == "soft_mix") cfg.soft_mix = parse_bool(value, key);
    else if (key == "soft_loss") cfg.soft_loss = parse_bool(value, key);
    else if (key == "embed_dim") cfg.embed_dim = (int)parse_int(value, key);
    else if (key == "lr_poly_power") cfg.lr_poly_power = parse_real(value, key);
    else if (key == "data_root") cfg.data_root = value;
    else if (key == "sa_input_mode") {
        if (value == "raw_image") cfg.sa_input_mode = SaInputMode::raw_image;
        else if (value == "prob_weighted_image") cfg.sa_input_mode = SaInputMode::prob_weighted_image;
        else if (value == "prob_map") cfg.sa_input_mode = SaInputMode::prob_map;
        else throw std::invalid_argument("config: unknown sa_input_mode: " + value);
    } else if (key == "train_mode") {
        if (value == "sra") cfg.train_mode = TrainMode::sra;
        else if (value == "supervised") cfg.train_mode = TrainMode::supervised;
        else throw std::invalid_argument("config: unknown train_mode: " + value);
    } else if (key == "lr_schedule") {
        if (value == "constant") cfg.lr_schedule = LrSchedule::constant;
        else if (value == "poly") cfg.lr_schedule = LrSchedule::poly;
        else throw std::invalid_argument("config: unknown lr_schedule: " + value);
    } else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

/// Reads a "key = value" config file ('#' starts a comment).
inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: missing '=' at " + path + ":" +
                                        std::to_string(lineno));
        apply_config_entry(cfg, detail::trim(line.substr(0, eq)),
                           detail::trim(line.substr(eq + 1)));
    }
}

/// Applies "key=value" CLI overrides, after any file load.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override must be key=value: " + ov);
        apply_config_entry(cfg, detail::trim(ov.substr(0, eq)),
                           detail::trim(ov.substr(eq + 1)));
    }
}

inline std::string to_string(SaInputMode m) {
    switch (m) {
        case SaInputMode::raw_image: return "raw_image";
        case SaInputMode::prob_weighted_image: return "prob_weighted_image";
        case SaInputMode::prob_map: return "prob_map";
    }
    return "?";
}

/// Writes the fully resolved config back out, for run provenance.
inline void write_config(const RunConfig& cfg, std::ostream& os) {
    os << "labeled_fraction = " << cfg.labeled_fraction << "\n"
       << "patch_fraction = " << cfg.patch_fraction << "\n"
       << "smooth_kernel = " << cfg.smooth_kernel << "\n"
       << "lambda_sa = " << cfg.lambda_sa << "\n"
       << "ema_decay = " << cfg.ema_decay << "\n"
       << "lr = " << cfg.lr << "\n"
       << "momentum = " << cfg.momentum << "\n"
       << "weight_decay = " << cfg.weight_decay << "\n"
       << "iterations = " << cfg.iterations << "\n"
       << "warmup_iterations = " << cfg.warmup_iterations << "\n"
       << "eval_every = " << cfg.eval_every << "\n"
       << "batch_labeled = " << cfg.batch_labeled << "\n"
       << "batch_unlabeled = " << cfg.batch_unlabeled << "\n"
       << "seed = " << cfg.seed << "\n"
       << "num_classes = " << cfg.num_classes << "\n"
       << "sa_input_mode = " << to_string(cfg.sa_input_mode) << "\n"
       << "connectivity = " << cfg.connectivity << "\n"
       << "soft_mix = " << (cfg.soft_mix ? "true" : "false") << "\n"
       << "soft_loss = " << (cfg.soft_loss ? "true" : "false") << "\n"
       << "train_mode = " << (cfg.train_mode == TrainMode::sra ? "sra" : "supervised") << "\n"
       << "lr_schedule = " << (cfg.lr_schedule == LrSchedule::constant ? "constant" : "poly") << "\n"
       << "lr_poly_power = " << cfg.lr_poly_power << "\n"
       << "embed_dim = " << cfg.embed_dim << "\n"
       << "data_root = " << cfg.data_root << "\n";
}

}  // namespace sraseg
