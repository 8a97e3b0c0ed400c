// "CGW1" tensor container, the checkpoint format shared repo-wide.
//
// Layout (all integers little-endian):
//   magic "CGW1"
//   u32 tensor count
//   per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
//               raw 32-bit little-endian IEEE-754 values
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "synthaug/params.hpp"
#include "synthaug/tensor.hpp"

namespace synthaug {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) throw FormatError("truncated CGW1 file");
    return std::uint16_t(b[0]) | (std::uint16_t(b[1]) << 8);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated CGW1 file");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

}  // namespace detail

inline void save_cgw1(const std::string& path, const NamedTensors& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    os.write("CGW1", 4);
    detail::put_u32(os, std::uint32_t(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff) throw ValueError("tensor name too long: " + name);
        detail::put_u16(os, std::uint16_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        os.put(char(t.rank()));
        for (std::size_t d = 0; d < t.rank(); ++d) detail::put_u32(os, std::uint32_t(t.dim(d)));
        static_assert(sizeof(float) == 4);
        os.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 4));
    }
    if (!os) throw FormatError("write failed for " + path);
}

inline NamedTensors load_cgw1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "CGW1")
        throw FormatError(path + ": bad magic, not a CGW1 file");
    const std::uint32_t count = detail::get_u32(is);
    NamedTensors out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = detail::get_u16(is);
        std::string name(name_len, '\0');
        if (name_len && !is.read(name.data(), name_len)) throw FormatError("truncated CGW1 file");
        const int rank = is.get();
        if (rank < 0) throw FormatError("truncated CGW1 file");
        Shape shape(static_cast<std::size_t>(rank), 0);
        for (auto& d : shape) d = detail::get_u32(is);
        Tensor<float> value(shape.empty() ? Shape{1} : shape);
        if (!is.read(reinterpret_cast<char*>(value.data()), std::streamsize(value.numel() * 4)))
            throw FormatError("truncated CGW1 file");
        out.emplace_back(std::move(name), std::move(value));
    }
    return out;
}

// Flatten a ParamSet (parameters then buffers) into checkpoint entries under
// a prefix, e.g. "g/conv1.kernel".
inline NamedTensors paramset_entries(const std::string& prefix, const ParamSet<float>& params) {
    NamedTensors out;
    for (std::size_t i = 0; i < params.size(); ++i)
        out.emplace_back(prefix + params[i].name, params[i].value);
    for (std::size_t i = 0; i < params.buffer_count(); ++i)
        out.emplace_back(prefix + params.buffer(i).name, params.buffer(i).value);
    return out;
}

// Restore entries saved by paramset_entries into an already-built ParamSet.
inline void restore_paramset(const std::string& prefix, const NamedTensors& entries,
                             ParamSet<float>& params) {
    std::size_t hits = 0;
    for (const auto& [name, t] : entries) {
        if (name.rfind(prefix, 0) != 0) continue;
        const std::string local = name.substr(prefix.size());
        bool found = false;
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].name == local) {
                if (!params[i].value.same_shape(t))
                    throw FormatError("checkpoint tensor " + name + " has shape " + shape_str(t.shape()) +
                                      ", expected " + shape_str(params[i].value.shape()));
                params[i].value = t;
                found = true;
                break;
            }
        for (std::size_t i = 0; !found && i < params.buffer_count(); ++i)
            if (params.buffer(i).name == local) {
                params.buffer(i).value = t;
                found = true;
            }
        if (found) ++hits;
    }
    if (hits != params.size() + params.buffer_count())
        throw FormatError("checkpoint is missing tensors under prefix " + prefix);
}

}  // namespace synthaug
