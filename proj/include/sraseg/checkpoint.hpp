#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sraseg/core.hpp"

namespace sraseg {

/// Versioned training snapshot: student/teacher/velocity parameter vectors,
/// iteration counter, best validation score, and the rng stream states
/// needed to resume bit-exactly.
struct Checkpoint {
    std::uint64_t iteration = 0;
    double best_dice = -1.0;
    ParameterVector<double> student;
    ParameterVector<double> teacher;
    ParameterVector<double> velocity;
    std::map<std::string, std::string> rng_states;
};

inline constexpr char kCheckpointMagic[4] = {'S', 'R', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get_raw(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
    put_raw<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
    auto n = get_raw<std::uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("checkpoint: truncated string");
    return s;
}

inline void put_vector(std::ostream& os, const ParameterVector<double>& v) {
    put_raw<std::uint64_t>(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline ParameterVector<double> get_vector(std::istream& is) {
    auto n = get_raw<std::uint64_t>(is);
    ParameterVector<double> v(n);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated parameters");
    return v;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& cp, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kCheckpointMagic, 4);
    detail::put_raw<std::uint32_t>(out, kCheckpointVersion);
    detail::put_raw<std::uint64_t>(out, cp.iteration);
    detail::put_raw<double>(out, cp.best_dice);
    detail::put_vector(out, cp.student);
    detail::put_vector(out, cp.teacher);
    detail::put_vector(out, cp.velocity);
    detail::put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(cp.rng_states.size()));
    for (const auto& [name, state] : cp.rng_states) {
        detail::put_string(out, name);
        detail::put_string(out, state);
    }
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    if (detail::get_raw<std::uint32_t>(in) != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version in " + path);
    Checkpoint cp;
    cp.iteration = detail::get_raw<std::uint64_t>(in);
    cp.best_dice = detail::get_raw<double>(in);
    cp.student = detail::get_vector(in);
    cp.teacher = detail::get_vector(in);
    cp.velocity = detail::get_vector(in);
    auto n = detail::get_raw<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = detail::get_string(in);
        cp.rng_states[name] = detail::get_string(in);
    }
    return cp;
}

}  // namespace sraseg
