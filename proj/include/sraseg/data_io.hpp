#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sraseg/core.hpp"
#include "sraseg/rng.hpp"

namespace sraseg {

enum class Pool { labeled, unlabeled_synthetic, val, test };

inline std::string to_string(Pool p) {
    switch (p) {
        case Pool::labeled: return "labeled";
        case Pool::unlabeled_synthetic: return "unlabeled_synthetic";
        case Pool::val: return "val";
        case Pool::test: return "test";
    }
    return "?";
}

inline Pool pool_from_string(const std::string& s) {
    if (s == "labeled") return Pool::labeled;
    if (s == "unlabeled_synthetic") return Pool::unlabeled_synthetic;
    if (s == "val") return Pool::val;
    if (s == "test") return Pool::test;
    throw std::invalid_argument("unknown pool: " + s);
}

struct ManifestEntry {
    std::string image_path;
    std::string mask_path;  // empty for unlabeled entries
    std::string group_id;
    Pool pool = Pool::labeled;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    void validate() const {
        std::set<std::string> paths;
        for (const auto& e : entries) {
            require(!e.group_id.empty(), "manifest: empty group_id for " + e.image_path);
            if (e.pool == Pool::unlabeled_synthetic)
                require(e.mask_path.empty(),
                        "manifest: unlabeled entry has a mask: " + e.image_path);
            else
                require(!e.mask_path.empty(),
                        "manifest: missing mask for " + e.image_path);
            require(paths.insert(e.image_path).second,
                    "manifest: duplicate path " + e.image_path);
        }
    }
};

/// Training pool after splitting. `unlabeled_slots` are training entries
/// whose labels are withheld; the synthetic pool stands in for them.
struct SplitManifest {
    std::vector<ManifestEntry> labeled;
    std::vector<ManifestEntry> unlabeled_slots;
    std::vector<ManifestEntry> synthetic;
    std::vector<ManifestEntry> val;
    std::vector<ManifestEntry> test;
};

/// Derives the group id from an image filename: the stem up to the last '_',
/// or the whole stem when there is no '_' (one group per image).
inline std::string group_from_filename(const std::string& filename) {
    std::string stem = std::filesystem::path(filename).stem().string();
    auto us = stem.rfind('_');
    return us == std::string::npos ? stem : stem.substr(0, us);
}

/// Scans `root/{labeled,unlabeled_synthetic,val,test}/{images,masks}`.
inline DatasetManifest scan_dataset_root(const std::string& root) {
    namespace fs = std::filesystem;
    DatasetManifest m;
    const std::pair<const char*, Pool> pools[] = {
        {"labeled", Pool::labeled},
        {"unlabeled_synthetic", Pool::unlabeled_synthetic},
        {"val", Pool::val},
        {"test", Pool::test},
    };
    for (const auto& [dir, pool] : pools) {
        fs::path images = fs::path(root) / dir / "images";
        if (!fs::exists(images)) continue;
        std::vector<fs::path> files;
        for (const auto& de : fs::directory_iterator(images))
            if (de.is_regular_file()) files.push_back(de.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            ManifestEntry e;
            e.image_path = f.string();
            e.group_id = group_from_filename(f.filename().string());
            e.pool = pool;
            if (pool != Pool::unlabeled_synthetic) {
                fs::path mask = fs::path(root) / dir / "masks" / f.filename();
                if (!fs::exists(mask))
                    throw std::runtime_error("missing mask: " + mask.string());
                e.mask_path = mask.string();
            }
            m.entries.push_back(e);
        }
    }
    if (m.entries.empty())
        throw std::runtime_error("no dataset entries under " + root);
    m.validate();
    return m;
}

/// Splits the training pool into labeled / unlabeled slots at group
/// granularity: whole groups are assigned, in seeded shuffled order, until
/// the labeled image count reaches round(fraction * training count) to
/// within one group's size.
inline SplitManifest make_splits(const DatasetManifest& manifest, double fraction,
                                 std::uint64_t seed) {
    require(!manifest.entries.empty(), "make_splits: empty manifest");
    require(fraction > 0.0 && fraction < 1.0, "make_splits: fraction must be in (0,1)");
    manifest.validate();

    SplitManifest out;
    std::vector<ManifestEntry> training;
    for (const auto& e : manifest.entries) {
        switch (e.pool) {
            case Pool::labeled: training.push_back(e); break;
            case Pool::unlabeled_synthetic: out.synthetic.push_back(e); break;
            case Pool::val: out.val.push_back(e); break;
            case Pool::test: out.test.push_back(e); break;
        }
    }
    require(!training.empty(), "make_splits: no training entries");

    std::map<std::string, std::vector<ManifestEntry>> groups;
    for (const auto& e : training) groups[e.group_id].push_back(e);
    std::vector<std::string> order;
    for (const auto& [g, _] : groups) order.push_back(g);
    std::mt19937_64 rng = make_stream(seed, "split");
    std::shuffle(order.begin(), order.end(), rng);

    const long long target = std::llround(fraction * static_cast<double>(training.size()));
    if (target < 1)
        throw std::invalid_argument("make_splits: fraction selects zero labeled groups");

    std::set<std::string> chosen;
    long long count = 0;
    for (const auto& g : order) {
        if (count >= target) break;
        chosen.insert(g);
        count += static_cast<long long>(groups[g].size());
    }
    if (chosen.empty())
        throw std::invalid_argument("make_splits: fraction selects zero labeled groups");

    for (auto& e : training) {
        if (chosen.count(e.group_id)) {
            out.labeled.push_back(e);
        } else {
            ManifestEntry slot = e;
            slot.mask_path.clear();  // label withheld
            out.unlabeled_slots.push_back(slot);
        }
    }
    return out;
}

// -- line-oriented manifest files ------------------------------------------

namespace detail {

inline void write_entries(std::ostream& os, const std::string& pool,
                          const std::vector<ManifestEntry>& es) {
    for (const auto& e : es)
        os << pool << "\t" << e.group_id << "\t" << e.image_path << "\t"
           << (e.mask_path.empty() ? "-" : e.mask_path) << "\n";
}

inline ManifestEntry parse_entry_line(const std::string& line, std::string& pool_out) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
        auto tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (cols.size() != 4) throw std::runtime_error("manifest: bad line: " + line);
    pool_out = cols[0];
    ManifestEntry e;
    e.group_id = cols[1];
    e.image_path = cols[2];
    if (cols[3] != "-") e.mask_path = cols[3];
    return e;
}

}  // namespace detail

inline void save_split(const SplitManifest& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    detail::write_entries(out, "labeled", s.labeled);
    detail::write_entries(out, "unlabeled_slot", s.unlabeled_slots);
    detail::write_entries(out, "synthetic", s.synthetic);
    detail::write_entries(out, "val", s.val);
    detail::write_entries(out, "test", s.test);
}

inline SplitManifest load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open split manifest " + path);
    SplitManifest s;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::string pool;
        ManifestEntry e = detail::parse_entry_line(line, pool);
        if (pool == "labeled") { e.pool = Pool::labeled; s.labeled.push_back(e); }
        else if (pool == "unlabeled_slot") { e.pool = Pool::labeled; s.unlabeled_slots.push_back(e); }
        else if (pool == "synthetic") { e.pool = Pool::unlabeled_synthetic; s.synthetic.push_back(e); }
        else if (pool == "val") { e.pool = Pool::val; s.val.push_back(e); }
        else if (pool == "test") { e.pool = Pool::test; s.test.push_back(e); }
        else throw std::runtime_error("manifest: unknown pool " + pool);
    }
    return s;
}

// -- embedding exchange format ---------------------------------------------
// "SRAE" | u32 version=1 | u32 count | u32 dim | count*dim f32, little endian

inline constexpr char kEmbeddingMagic[4] = {'S', 'R', 'A', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<std::uint8_t> write_embeddings(const EmbeddingBatch& b) {
    require(all_finite(b.data), "write_embeddings: non-finite value");
    std::vector<std::uint8_t> out;
    out.reserve(16 + b.data.size() * 4);
    out.insert(out.end(), kEmbeddingMagic, kEmbeddingMagic + 4);
    detail::put_u32(out, kEmbeddingVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(b.rows));
    detail::put_u32(out, static_cast<std::uint32_t>(b.dim));
    for (double v : b.data) {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32(out, bits);
    }
    return out;
}

inline EmbeddingBatch read_embeddings(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0)
        throw std::runtime_error("embeddings: bad magic");
    if (detail::get_u32(bytes.data() + 4) != kEmbeddingVersion)
        throw std::runtime_error("embeddings: unsupported version");
    const std::uint32_t count = detail::get_u32(bytes.data() + 8);
    const std::uint32_t dim = detail::get_u32(bytes.data() + 12);
    const std::size_t payload = static_cast<std::size_t>(count) * dim * 4;
    if (bytes.size() != 16 + payload)
        throw std::runtime_error("embeddings: truncated payload");
    EmbeddingBatch b(static_cast<int>(count), static_cast<int>(dim));
    for (std::size_t i = 0; i < static_cast<std::size_t>(count) * dim; ++i) {
        std::uint32_t bits = detail::get_u32(bytes.data() + 16 + 4 * i);
        float f;
        std::memcpy(&f, &bits, 4);
        b.data[i] = f;
    }
    return b;
}

inline void save_embeddings(const EmbeddingBatch& b, const std::string& path) {
    auto bytes = write_embeddings(b);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline EmbeddingBatch load_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return read_embeddings(bytes);
}

}  // namespace sraseg
