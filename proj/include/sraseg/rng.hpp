#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace sraseg {

/// Derives a substream seed from a base seed and a stream name so that
/// independent components (split / mask / init / shuffle / data) draw from
/// unrelated deterministic sequences.
inline std::uint64_t stream_seed(std::uint64_t base, std::string_view name) {
    std::uint64_t h = 1469598103934665603ull ^ (base * 0x9e3779b97f4a7c15ull);
    for (char ch : name) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ull;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return h;
}

inline std::mt19937_64 make_stream(std::uint64_t base, std::string_view name) {
    return std::mt19937_64(stream_seed(base, name));
}

inline std::string serialize_engine(const std::mt19937_64& eng) {
    std::ostringstream os;
    os << eng;
    return os.str();
}

inline void deserialize_engine(std::mt19937_64& eng, const std::string& state) {
    std::istringstream is(state);
    is >> eng;
}

}  // namespace sraseg
