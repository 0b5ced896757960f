#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "sraseg/data_io.hpp"
#include "sraseg/image_io.hpp"
#include "sraseg/rng.hpp"

using namespace sraseg;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path p = fs::temp_directory_path() / "sraseg_test_data_io";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

DatasetManifest synthetic_manifest(int n_train, int group_size) {
    DatasetManifest m;
    for (int i = 0; i < n_train; ++i) {
        ManifestEntry e;
        e.image_path = "img_" + std::to_string(i) + ".pgm";
        e.mask_path = "mask_" + std::to_string(i) + ".pgm";
        e.group_id = "g" + std::to_string(i / group_size);
        e.pool = Pool::labeled;
        m.entries.push_back(e);
    }
    return m;
}

void write_pgm8(const fs::path& p, int w, int h, const std::vector<unsigned char>& px) {
    std::ofstream out(p, std::ios::binary);
    out << "P5\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

}  // namespace

TEST_CASE("10 percent of 1312 images in groups of 8 selects 136 images") {
    DatasetManifest m = synthetic_manifest(1312, 8);
    SplitManifest s = make_splits(m, 0.10, 7);
    // target round(131.2) = 131; whole groups of 8 -> 136
    REQUIRE(s.labeled.size() == 136);
    REQUIRE(s.unlabeled_slots.size() == 1312 - 136);
}

TEST_CASE("5 percent of 560 images in groups of 4 selects 28 images") {
    DatasetManifest m = synthetic_manifest(560, 4);
    SplitManifest s = make_splits(m, 0.05, 7);
    REQUIRE(s.labeled.size() == 28);
    REQUIRE(s.unlabeled_slots.size() == 560 - 28);
}

TEST_CASE("splits are group-atomic") {
    DatasetManifest m = synthetic_manifest(100, 5);
    SplitManifest s = make_splits(m, 0.3, 42);
    std::set<std::string> labeled_groups, slot_groups;
    for (const auto& e : s.labeled) labeled_groups.insert(e.group_id);
    for (const auto& e : s.unlabeled_slots) slot_groups.insert(e.group_id);
    for (const auto& g : labeled_groups) REQUIRE(slot_groups.count(g) == 0);
    // every labeled group is complete
    REQUIRE(s.labeled.size() % 5 == 0);
}

TEST_CASE("splits are deterministic in the seed and vary across seeds") {
    DatasetManifest m = synthetic_manifest(200, 4);
    SplitManifest a = make_splits(m, 0.2, 1);
    SplitManifest b = make_splits(m, 0.2, 1);
    REQUIRE(a.labeled.size() == b.labeled.size());
    for (std::size_t i = 0; i < a.labeled.size(); ++i)
        REQUIRE(a.labeled[i].image_path == b.labeled[i].image_path);
    SplitManifest c = make_splits(m, 0.2, 2);
    bool differs = c.labeled.size() != a.labeled.size();
    for (std::size_t i = 0; !differs && i < a.labeled.size(); ++i)
        differs = a.labeled[i].image_path != c.labeled[i].image_path;
    REQUIRE(differs);
}

TEST_CASE("unlabeled slots have their masks withheld") {
    DatasetManifest m = synthetic_manifest(40, 4);
    SplitManifest s = make_splits(m, 0.25, 3);
    for (const auto& e : s.unlabeled_slots) REQUIRE(e.mask_path.empty());
    for (const auto& e : s.labeled) REQUIRE(!e.mask_path.empty());
}

TEST_CASE("a fraction selecting zero groups is an error") {
    DatasetManifest m = synthetic_manifest(10, 5);
    REQUIRE_THROWS(make_splits(m, 0.01, 1));
    REQUIRE_THROWS(make_splits(m, 0.0, 1));
    REQUIRE_THROWS(make_splits(m, 1.0, 1));
}

TEST_CASE("group ids derive from the filename stem up to the last underscore") {
    REQUIRE(group_from_filename("patient012_03.pgm") == "patient012");
    REQUIRE(group_from_filename("a_b_c.pgm") == "a_b");
    REQUIRE(group_from_filename("solo.pgm") == "solo");
}

TEST_CASE("split manifests round-trip through the tsv format") {
    DatasetManifest m = synthetic_manifest(24, 4);
    for (int i = 0; i < 4; ++i) {
        ManifestEntry e;
        e.image_path = "syn_" + std::to_string(i) + ".pgm";
        e.group_id = "s" + std::to_string(i);
        e.pool = Pool::unlabeled_synthetic;
        m.entries.push_back(e);
    }
    SplitManifest s = make_splits(m, 0.34, 9);
    fs::path dir = temp_dir();
    fs::path path = dir / "split.tsv";
    save_split(s, path.string());
    SplitManifest r = load_split(path.string());
    REQUIRE(r.labeled.size() == s.labeled.size());
    REQUIRE(r.unlabeled_slots.size() == s.unlabeled_slots.size());
    REQUIRE(r.synthetic.size() == s.synthetic.size());
    for (std::size_t i = 0; i < s.labeled.size(); ++i) {
        REQUIRE(r.labeled[i].image_path == s.labeled[i].image_path);
        REQUIRE(r.labeled[i].mask_path == s.labeled[i].mask_path);
        REQUIRE(r.labeled[i].group_id == s.labeled[i].group_id);
    }
}

TEST_CASE("manifest validation rejects duplicates and inconsistent masks") {
    DatasetManifest m = synthetic_manifest(4, 2);
    m.entries.push_back(m.entries.front());
    REQUIRE_THROWS(m.validate());
    DatasetManifest m2 = synthetic_manifest(4, 2);
    m2.entries[0].mask_path.clear();
    REQUIRE_THROWS(m2.validate());
    DatasetManifest m3 = synthetic_manifest(4, 2);
    m3.entries[0].group_id.clear();
    REQUIRE_THROWS(m3.validate());
}

TEST_CASE("8-bit pgm normalizes to the min-max range") {
    fs::path dir = temp_dir();
    fs::path p = dir / "grad.pgm";
    write_pgm8(p, 2, 1, {0, 128});
    ImageSlice img = load_image(p.string());
    REQUIRE(img.channels == 1);
    REQUIRE(img.at(0, 0, 0) == 0.0);
    REQUIRE(img.at(0, 0, 1) == 1.0);  // max maps to 1 after min-max
    write_pgm8(p, 3, 1, {0, 128, 255});
    img = load_image(p.string());
    REQUIRE(img.at(0, 0, 1) == Approx(128.0 / 255.0).margin(1e-12));
}

TEST_CASE("constant images normalize to all zeros") {
    fs::path dir = temp_dir();
    fs::path p = dir / "flat.pgm";
    write_pgm8(p, 3, 2, {77, 77, 77, 77, 77, 77});
    ImageSlice img = load_image(p.string());
    for (double v : img.data) REQUIRE(v == 0.0);
}

TEST_CASE("16-bit pgm is big-endian per sample") {
    fs::path dir = temp_dir();
    fs::path p = dir / "deep.pgm";
    std::ofstream out(p, std::ios::binary);
    out << "P5\n2 1\n65535\n";
    const unsigned char bytes[] = {0x00, 0x00, 0x01, 0x00};  // 0 and 256
    out.write(reinterpret_cast<const char*>(bytes), 4);
    out.close();
    ImageSlice img = load_image(p.string());
    REQUIRE(img.at(0, 0, 0) == 0.0);
    REQUIRE(img.at(0, 0, 1) == 1.0);
}

TEST_CASE("pnm comments in the header are skipped") {
    fs::path dir = temp_dir();
    fs::path p = dir / "comment.pgm";
    std::ofstream out(p, std::ios::binary);
    out << "P5\n# a comment line\n2 1\n# another\n255\n";
    out.put(char(10));
    out.put(char(200));
    out.close();
    ImageSlice img = load_image(p.string());
    REQUIRE(img.width == 2);
    REQUIRE(img.at(0, 0, 1) == 1.0);
}

TEST_CASE("truncated pixel data is an error") {
    fs::path dir = temp_dir();
    fs::path p = dir / "trunc.pgm";
    std::ofstream out(p, std::ios::binary);
    out << "P5\n4 4\n255\n";
    out.put(char(1));  // 1 of 16 bytes
    out.close();
    REQUIRE_THROWS(load_image(p.string()));
}

TEST_CASE("masks reject out-of-range classes and color rasters") {
    fs::path dir = temp_dir();
    fs::path p = dir / "mask.pgm";
    write_pgm8(p, 2, 1, {0, 3});
    REQUIRE_THROWS(load_mask(p.string(), 3));
    HardLabelMap m = load_mask(p.string(), 4);
    REQUIRE(m.at(0, 1) == 3);
}

TEST_CASE("mask save/load preserves raw class indices") {
    fs::path dir = temp_dir();
    HardLabelMap m(3, 4, 0);
    m.at(0, 0) = 2;
    m.at(2, 3) = 1;
    fs::path p = dir / "roundtrip_mask.pgm";
    save_mask(m, p.string());
    HardLabelMap r = load_mask(p.string(), 3);
    REQUIRE(r.labels == m.labels);
}

TEST_CASE("embedding files round-trip at float precision") {
    auto rng = make_stream(41, "test/embed");
    std::uniform_real_distribution<double> d(-10.0, 10.0);
    for (int trial = 0; trial < 10; ++trial) {
        EmbeddingBatch b(3 + trial, 5);
        for (auto& v : b.data) v = d(rng);
        EmbeddingBatch r = read_embeddings(write_embeddings(b));
        REQUIRE(r.rows == b.rows);
        REQUIRE(r.dim == b.dim);
        for (std::size_t i = 0; i < b.data.size(); ++i)
            REQUIRE(r.data[i] == static_cast<double>(static_cast<float>(b.data[i])));
    }
}

TEST_CASE("embedding file layout: 16-byte header plus 4 bytes per value") {
    EmbeddingBatch b(2, 3);
    auto bytes = write_embeddings(b);
    REQUIRE(bytes.size() == 16 + 2 * 3 * 4);
    REQUIRE(bytes[0] == 'S');
    REQUIRE(bytes[1] == 'R');
    REQUIRE(bytes[2] == 'A');
    REQUIRE(bytes[3] == 'E');
    REQUIRE(bytes[4] == 1);  // version, little endian
}

TEST_CASE("embedding reader rejects bad magic, version and truncation") {
    EmbeddingBatch b(2, 2);
    auto good = write_embeddings(b);
    auto bad = good;
    bad[0] = 'X';
    REQUIRE_THROWS(read_embeddings(bad));
    bad = good;
    bad[4] = 9;
    REQUIRE_THROWS(read_embeddings(bad));
    bad = good;
    bad.pop_back();
    REQUIRE_THROWS(read_embeddings(bad));
    REQUIRE_THROWS(read_embeddings(std::vector<std::uint8_t>{'S', 'R'}));
}

TEST_CASE("non-finite embeddings refuse to serialize") {
    EmbeddingBatch b(1, 2);
    b.data[1] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS(write_embeddings(b));
}

TEST_CASE("embedding files round-trip through disk") {
    fs::path dir = temp_dir();
    EmbeddingBatch b(4, 6);
    for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] = 0.25 * static_cast<double>(i);
    fs::path p = dir / "emb.srae";
    save_embeddings(b, p.string());
    EmbeddingBatch r = load_embeddings(p.string());
    REQUIRE(r.data == b.data);
}

TEST_CASE("scan picks up the pool directory layout and demands masks") {
    fs::path dir = temp_dir();
    auto mk = [&](const char* pool, const char* name, bool with_mask) {
        fs::create_directories(dir / pool / "images");
        write_pgm8(dir / pool / "images" / name, 2, 2, {0, 1, 2, 3});
        if (with_mask) {
            fs::create_directories(dir / pool / "masks");
            write_pgm8(dir / pool / "masks" / name, 2, 2, {0, 0, 1, 1});
        }
    };
    mk("labeled", "g0_0.pgm", true);
    mk("labeled", "g0_1.pgm", true);
    mk("unlabeled_synthetic", "s0_0.pgm", false);
    mk("val", "v0_0.pgm", true);
    DatasetManifest m = scan_dataset_root(dir.string());
    REQUIRE(m.entries.size() == 4);
    REQUIRE(m.entries[0].group_id == "g0");
    // labeled without a mask file is an error
    fs::remove(dir / "labeled" / "masks" / "g0_1.pgm");
    REQUIRE_THROWS(scan_dataset_root(dir.string()));
}

TEST_CASE("named rng substreams are decorrelated and reproducible") {
    auto a1 = make_stream(5, "shuffle");
    auto a2 = make_stream(5, "shuffle");
    auto b = make_stream(5, "mask");
    REQUIRE(a1() == a2());
    REQUIRE(make_stream(5, "shuffle")() != b());
    REQUIRE(make_stream(5, "shuffle")() != make_stream(6, "shuffle")());
}

TEST_CASE("rng engine state serializes and resumes bit-exactly") {
    auto e = make_stream(9, "resume");
    for (int i = 0; i < 100; ++i) e();
    std::string state = serialize_engine(e);
    auto e2 = make_stream(0, "other");
    deserialize_engine(e2, state);
    for (int i = 0; i < 50; ++i) REQUIRE(e() == e2());
}
