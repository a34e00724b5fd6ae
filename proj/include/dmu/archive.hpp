#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "dmu/dense_array.hpp"
#include "dmu/error.hpp"
#include "dmu/params.hpp"

// Parameter archive layout (all integers and values little-endian):
//
//   "DMUPARAM"                      8 bytes
//   format version                  u32
//   embed_dim, n_chains, n_tied_keys, n_classes, gru_hidden   u64 each
//   gate_mode, delay_input          u8 each
//   vocabulary hash                 u64
//   array count                     u32
//   per array: name length u32, name bytes, rank u32, dims u64 x rank,
//              element size u8 (4 or 8), raw values

namespace dmu {

inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr char kArchiveMagic[8] = {'D', 'M', 'U', 'P', 'A', 'R', 'A', 'M'};

namespace detail {

template <typename U>
void put_le(std::ostream& out, U v) {
    static_assert(std::is_unsigned_v<U>);
    unsigned char b[sizeof(U)];
    for (std::size_t k = 0; k < sizeof(U); ++k) {
        b[k] = static_cast<unsigned char>(v >> (8 * k));
    }
    out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
    unsigned char b[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) {
        throw FormatError("archive: unexpected end of file");
    }
    U v = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) {
        v |= static_cast<U>(b[k]) << (8 * k);
    }
    return v;
}

template <typename T>
using bits_of = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

}  // namespace detail

struct ArchiveHeader {
    std::uint32_t version = kArchiveVersion;
    std::uint32_t element_size = 0;  // precision of the stored arrays
    ModelConfig config;
    std::uint64_t vocabulary_hash = 0;
};

template <typename T>
void write_archive(std::ostream& out, const ModelParams<T>& params, const ModelConfig& config,
                   std::uint64_t vocabulary_hash) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using detail::put_le;
    out.write(kArchiveMagic, sizeof(kArchiveMagic));
    put_le<std::uint32_t>(out, kArchiveVersion);
    for (std::size_t v : {config.embed_dim, config.n_chains, config.n_tied_keys, config.n_classes,
                          config.gru_hidden}) {
        put_le<std::uint64_t>(out, v);
    }
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(config.gate_mode));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(config.delay_input));
    put_le<std::uint64_t>(out, vocabulary_hash);
    std::uint32_t count = 0;
    params.visit([&](const std::string&, const DenseArray<T>&, bool) { ++count; });
    put_le<std::uint32_t>(out, count);
    params.visit([&](const std::string& name, const DenseArray<T>& a, bool) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.rank()));
        for (auto d : a.shape()) put_le<std::uint64_t>(out, d);
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(T)));
        for (T x : a.values()) put_le(out, std::bit_cast<detail::bits_of<T>>(x));
    });
    if (!out) {
        throw FormatError("archive: write failed");
    }
}

inline ArchiveHeader read_archive_header(std::istream& in) {
    using detail::get_le;
    char magic[sizeof(kArchiveMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kArchiveMagic, sizeof(magic)) != 0) {
        throw FormatError("archive: bad magic, not a parameter archive");
    }
    ArchiveHeader h;
    h.version = get_le<std::uint32_t>(in);
    if (h.version != kArchiveVersion) {
        throw IncompatibleArtifactError("archive: unsupported format version " +
                                        std::to_string(h.version));
    }
    h.config.embed_dim = get_le<std::uint64_t>(in);
    h.config.n_chains = get_le<std::uint64_t>(in);
    h.config.n_tied_keys = get_le<std::uint64_t>(in);
    h.config.n_classes = get_le<std::uint64_t>(in);
    h.config.gru_hidden = get_le<std::uint64_t>(in);
    const auto gate = get_le<std::uint8_t>(in);
    const auto delay = get_le<std::uint8_t>(in);
    if (gate > 1 || delay > 1) {
        throw FormatError("archive: bad enum value in header");
    }
    h.config.gate_mode = static_cast<GateMode>(gate);
    h.config.delay_input = static_cast<DelayInput>(delay);
    h.vocabulary_hash = get_le<std::uint64_t>(in);
    return h;
}

/// Reads the arrays following the header into `T` (converting if the
/// archive stores the other precision).
template <typename T>
ModelParams<T> read_archive_arrays(std::istream& in, ArchiveHeader& header) {
    using detail::get_le;
    ModelParams<T> params = zero_params<T>(header.config);
    std::vector<std::pair<std::string, DenseArray<T>*>> slots;
    params.visit([&](const std::string& name, DenseArray<T>& a, bool) { slots.emplace_back(name, &a); });
    const auto count = get_le<std::uint32_t>(in);
    if (count != slots.size()) {
        throw FormatError("archive: expected " + std::to_string(slots.size()) + " arrays, found " +
                          std::to_string(count));
    }
    for (auto& [expected, dst] : slots) {
        const auto len = get_le<std::uint32_t>(in);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw FormatError("archive: truncated name");
        if (name != expected) {
            throw FormatError("archive: expected array '" + expected + "', found '" + name + "'");
        }
        const auto rank = get_le<std::uint32_t>(in);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = get_le<std::uint64_t>(in);
        if (shape != dst->shape()) {
            throw FormatError("archive: array '" + name + "' has the wrong shape");
        }
        const auto elem = get_le<std::uint8_t>(in);
        header.element_size = elem;
        for (auto& x : dst->values()) {
            if (elem == 4) {
                x = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(in)));
            } else if (elem == 8) {
                x = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(in)));
            } else {
                throw FormatError("archive: unsupported element size " + std::to_string(elem));
            }
        }
        dst->require_finite("archive array '" + name + "'");
    }
    return params;
}

template <typename T>
void save_archive(const std::string& path, const ModelParams<T>& params, const ModelConfig& config,
                  std::uint64_t vocabulary_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write archive '" + path + "'");
    }
    write_archive(out, params, config, vocabulary_hash);
}

template <typename T>
struct LoadedModel {
    ArchiveHeader header;
    ModelParams<T> params;
};

template <typename T>
LoadedModel<T> load_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open archive '" + path + "'");
    }
    LoadedModel<T> m;
    m.header = read_archive_header(in);
    m.params = read_archive_arrays<T>(in, m.header);
    return m;
}

/// Precision (4 or 8 bytes) of the arrays in an archive file.
inline std::uint32_t archive_element_size(const std::string& path) {
    auto m = load_archive<double>(path);
    return m.header.element_size;
}

}  // namespace dmu
