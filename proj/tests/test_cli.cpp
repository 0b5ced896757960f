#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sraseg/cli.hpp"
#include "sraseg/toy_data.hpp"

using namespace sraseg;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    fs::path p = fs::temp_directory_path() / "sraseg_test_cli";
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(std::initializer_list<std::string> args) {
    return cli::dispatch(std::vector<std::string>(args));
}

}  // namespace

TEST_CASE("config precedence: defaults, file, overrides, seed flag") {
    fs::path dir = work_dir();
    fs::path cfg_file = dir / "precedence.cfg";
    {
        std::ofstream out(cfg_file);
        out << "# comment line\n"
            << "lr = 0.5\n"
            << "iterations = 123  # trailing comment\n"
            << "seed = 11\n";
    }
    RunConfig cfg;
    load_config_file(cfg, cfg_file.string());
    REQUIRE(cfg.lr == 0.5);
    REQUIRE(cfg.iterations == 123);
    REQUIRE(cfg.seed == 11);
    REQUIRE(cfg.momentum == 0.9);  // untouched default
    apply_overrides(cfg, {"lr=0.25", "seed=22"});
    REQUIRE(cfg.lr == 0.25);
    REQUIRE(cfg.seed == 22);
}

TEST_CASE("unknown config keys and malformed values are errors") {
    RunConfig cfg;
    REQUIRE_THROWS(apply_config_entry(cfg, "no_such_key", "1"));
    REQUIRE_THROWS(apply_config_entry(cfg, "lr", "fast"));
    REQUIRE_THROWS(apply_config_entry(cfg, "iterations", "10x"));
    REQUIRE_THROWS(apply_config_entry(cfg, "soft_mix", "maybe"));
    REQUIRE_THROWS(apply_config_entry(cfg, "train_mode", "magic"));
    REQUIRE_THROWS(apply_overrides(cfg, {"lr0.1"}));  // missing '='
}

TEST_CASE("config validation rejects out-of-range values") {
    RunConfig cfg;
    cfg.smooth_kernel = 4;
    REQUIRE_THROWS(cfg.validate());
    cfg = RunConfig{};
    cfg.ema_decay = 1.0;
    REQUIRE_THROWS(cfg.validate());
    cfg = RunConfig{};
    cfg.labeled_fraction = 0.0;
    REQUIRE_THROWS(cfg.validate());
    cfg = RunConfig{};
    cfg.connectivity = 6;
    REQUIRE_THROWS(cfg.validate());
}

TEST_CASE("resolved config round-trips through its own writer") {
    RunConfig cfg;
    cfg.lr = 0.123;
    cfg.train_mode = TrainMode::supervised;
    cfg.sa_input_mode = SaInputMode::prob_map;
    cfg.soft_mix = false;
    fs::path p = work_dir() / "roundtrip.cfg";
    {
        std::ofstream out(p);
        write_config(cfg, out);
    }
    RunConfig back;
    load_config_file(back, p.string());
    REQUIRE(back.lr == Approx(cfg.lr).margin(1e-12));
    REQUIRE(back.train_mode == TrainMode::supervised);
    REQUIRE(back.sa_input_mode == SaInputMode::prob_map);
    REQUIRE(back.soft_mix == false);
}

TEST_CASE("usage errors exit with code 2, domain errors with 1") {
    REQUIRE(run({}) == 2);
    REQUIRE(run({"no-such-command"}) == 2);
    REQUIRE(run({"train", "--split"}) == 2);  // missing value
    fs::path dir = work_dir();
    REQUIRE(run({"train", "--split", (dir / "missing.tsv").string(), "--out",
                 (dir / "r").string()}) == 1);
    REQUIRE(run({"split", "--data-root", (dir / "nowhere").string(), "--out",
                 (dir / "s.tsv").string()}) == 1);
}

TEST_CASE("toy generation is deterministic and honors the seed") {
    fs::path dir = work_dir();
    fs::path a = dir / "toy_a", b = dir / "toy_b", c = dir / "toy_c";
    fs::remove_all(a);
    fs::remove_all(b);
    fs::remove_all(c);
    REQUIRE(run({"make-toy-data", "--out", a.string(), "--count", "20", "--seed", "4"}) == 0);
    REQUIRE(run({"make-toy-data", "--out", b.string(), "--count", "20", "--seed", "4"}) == 0);
    REQUIRE(run({"make-toy-data", "--out", c.string(), "--count", "20", "--seed", "5"}) == 0);
    const char* sample = "labeled/images/g0000_0.pgm";
    REQUIRE(slurp(a / sample) == slurp(b / sample));
    REQUIRE(slurp(a / sample) != slurp(c / sample));
    REQUIRE(slurp(a / "labeled/masks/g0000_0.pgm") == slurp(b / "labeled/masks/g0000_0.pgm"));
}

TEST_CASE("toy masks agree with an independent rasterization of the shapes") {
    auto rng = make_stream(91, "test/toy-raster");
    for (int trial = 0; trial < 5; ++trial) {
        ToySample s = toy_sample(rng);
        HardLabelMap oracle(kToySize, kToySize, 0);
        for (const auto& sh : s.shapes)
            for (int y = 0; y < kToySize; ++y)
                for (int x = 0; x < kToySize; ++x) {
                    const double ry = (y - sh.cy) / sh.ay, rx = (x - sh.cx) / sh.ax;
                    const double r2 = ry * ry + rx * rx;
                    bool in;
                    if (sh.cls == 1) {
                        in = r2 <= 1.0;
                    } else {
                        const double iy = (y - sh.cy) / (0.6 * sh.ay);
                        const double ix = (x - sh.cx) / (0.6 * sh.ax);
                        in = r2 <= 1.0 && iy * iy + ix * ix > 1.0;
                    }
                    if (in) oracle.at(y, x) = sh.cls;
                }
        REQUIRE(s.mask.labels == oracle.labels);
        for (double v : s.image.data) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
    }
}

TEST_CASE("zero domain shift is the identity transform") {
    auto rng = make_stream(92, "test/shift");
    ToySample s = toy_sample(rng);
    ImageSlice same = apply_domain_shift(s.image, 0.0);
    REQUIRE(same.data == s.image.data);
    ImageSlice moved = apply_domain_shift(s.image, 0.5);
    REQUIRE(moved.data != s.image.data);
    for (double v : moved.data) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
}

TEST_CASE("end-to-end cli pipeline with deterministic reruns") {
    fs::path dir = work_dir();
    fs::path data = dir / "pipeline_data";
    if (!fs::exists(data / "test" / "images")) {
        fs::remove_all(data);
        REQUIRE(run({"make-toy-data", "--out", data.string(), "--count", "20", "--shift",
                     "0.3", "--seed", "3"}) == 0);
    }
    fs::path split = dir / "pipeline_split.tsv";
    REQUIRE(run({"split", "--data-root", data.string(), "--out", split.string(),
                 "--fraction", "0.2", "--seed", "3"}) == 0);
    SplitManifest sm = load_split(split.string());
    REQUIRE(sm.labeled.size() == 4);
    REQUIRE(!sm.synthetic.empty());

    auto train_into = [&](const fs::path& out) {
        fs::remove_all(out);
        return run({"train", "--split", split.string(), "--out", out.string(), "--seed",
                    "3", "--set", "iterations=6", "--set", "warmup_iterations=2",
                    "--set", "eval_every=3", "--set", "batch_labeled=2", "--set",
                    "batch_unlabeled=2"});
    };
    fs::path r1 = dir / "pipeline_run1", r2 = dir / "pipeline_run2";
    REQUIRE(train_into(r1) == 0);
    REQUIRE(train_into(r2) == 0);
    // identical seeds give byte-identical logs and checkpoints
    REQUIRE(slurp(r1 / "train.log") == slurp(r2 / "train.log"));
    REQUIRE(slurp(r1 / "last.ckpt") == slurp(r2 / "last.ckpt"));

    // the resolved config records the cli overrides
    RunConfig resolved;
    load_config_file(resolved, (r1 / "config.resolved").string());
    REQUIRE(resolved.iterations == 6);
    REQUIRE(resolved.seed == 3);

    // downstream commands run off the checkpoint
    fs::path ckpt = r1 / "last.ckpt";
    REQUIRE(run({"evaluate", "--split", split.string(), "--checkpoint", ckpt.string(),
                 "--out", (dir / "pipeline_eval").string()}) == 0);
    REQUIRE(fs::exists(dir / "pipeline_eval" / "metrics.txt"));
    REQUIRE(run({"pseudo-label", "--split", split.string(), "--checkpoint",
                 ckpt.string(), "--out", (dir / "pipeline_pl").string()}) == 0);
    REQUIRE(run({"augment-preview", "--split", split.string(), "--checkpoint",
                 ckpt.string(), "--out", (dir / "pipeline_prev").string(), "--seed",
                 "3"}) == 0);
    REQUIRE(fs::exists(dir / "pipeline_prev" / "mix1.pgm"));
    REQUIRE(run({"diagnose-kde", "--split", split.string(), "--checkpoint",
                 ckpt.string(), "--out", (dir / "pipeline_kde").string()}) == 0);
    REQUIRE(fs::exists(dir / "pipeline_kde" / "kde.csv"));
    REQUIRE(fs::exists(dir / "pipeline_kde" / "kde.svg"));
    REQUIRE(fs::exists(dir / "pipeline_kde" / "gap.txt"));
}

TEST_CASE("cli seed flag wins over file and --set") {
    fs::path dir = work_dir();
    fs::path cfg_file = dir / "seed.cfg";
    {
        std::ofstream out(cfg_file);
        out << "seed = 100\n";
    }
    cli::ConfigArgs args;
    args.config_path = cfg_file.string();
    args.overrides = {"seed=200"};
    args.seed = 300;
    REQUIRE(args.resolve().seed == 300);
    args.seed = -1;
    REQUIRE(args.resolve().seed == 200);
    args.overrides.clear();
    REQUIRE(args.resolve().seed == 100);
}
