#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dmu/error.hpp"

namespace dmu {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Frozen token -> vector store. Lookups are total: tokens missing from the
/// table get a deterministic vector drawn from U(-0.05, 0.05), seeded by a
/// hash of the token and the table's OOV seed.
class EmbeddingTable {
public:
    static constexpr double kOovRange = 0.05;

    explicit EmbeddingTable(std::size_t dim, std::uint64_t oov_seed = 0)
        : dim_(dim), oov_seed_(oov_seed) {
        if (dim == 0) {
            throw ConfigError("embedding dimension must be positive");
        }
        vocab_hash_ = fnv1a(std::to_string(dim_));
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return index_.size(); }
    std::uint64_t oov_seed() const noexcept { return oov_seed_; }
    bool contains(const std::string& token) const { return index_.contains(token); }

    /// Hash over the table's dimension and every token in load order.
    std::uint64_t vocabulary_hash() const noexcept { return vocab_hash_; }

    /// Lines skipped because a value did not parse as a number.
    std::size_t malformed_lines() const noexcept { return malformed_; }

    /// Adds a vector. Only used while building a table; duplicates keep the first entry.
    void insert(const std::string& token, std::span<const double> values) {
        if (values.size() != dim_) {
            throw FormatError("embedding for '" + token + "' has " +
                              std::to_string(values.size()) + " values, expected " +
                              std::to_string(dim_));
        }
        note_token(token);
        if (index_.contains(token)) {
            return;
        }
        index_.emplace(token, tokens_.size());
        tokens_.push_back(token);
        data_.insert(data_.end(), values.begin(), values.end());
    }

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    /// Writes the vector for `token` into `out` (length dim()).
    template <typename T>
    void lookup_into(const std::string& token, std::span<T> out) const {
        if (out.size() != dim_) {
            throw DimensionError("lookup: output length differs from embedding dimension");
        }
        if (auto it = index_.find(token); it != index_.end()) {
            const double* src = data_.data() + it->second * dim_;
            for (std::size_t k = 0; k < dim_; ++k) {
                out[k] = static_cast<T>(src[k]);
            }
            return;
        }
        std::mt19937_64 engine(fnv1a(token, 0xcbf29ce484222325ULL ^ oov_seed_));
        for (std::size_t k = 0; k < dim_; ++k) {
            const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
            out[k] = static_cast<T>((2.0 * u - 1.0) * kOovRange);
        }
    }

    std::vector<double> lookup(const std::string& token) const {
        std::vector<double> v(dim_);
        lookup_into<double>(token, v);
        return v;
    }

    /// Loader bookkeeping: a token present in the source but not stored.
    void record_filtered(const std::string& token) { note_token(token); }
    void record_malformed() { ++malformed_; }

private:
    void note_token(const std::string& token) {
        vocab_hash_ = fnv1a(token, vocab_hash_);
        vocab_hash_ = fnv1a(std::string_view("\n", 1), vocab_hash_);
    }

    std::size_t dim_;
    std::uint64_t oov_seed_;
    std::uint64_t vocab_hash_ = 0;
    std::size_t malformed_ = 0;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> tokens_;
    std::vector<double> data_;
};

/// Reads a whitespace-separated text table ("token v1 ... v_dim" per line).
///
/// A line with the wrong number of values is a FormatError naming the line;
/// a line whose values do not parse is skipped and counted. When `keep` is
/// given, only those tokens are stored, but the vocabulary hash still covers
/// every token in the file so filtered and unfiltered loads are compatible.
inline EmbeddingTable load_embeddings(const std::string& path, std::size_t dim,
                                      const std::unordered_set<std::string>* keep = nullptr) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open embedding file '" + path + "'");
    }
    EmbeddingTable table(dim);
    std::string line;
    std::vector<double> values;
    values.reserve(dim);
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::string_view rest(line);
        auto next_field = [&rest]() -> std::optional<std::string_view> {
            const auto start = rest.find_first_not_of(" \t");
            if (start == std::string_view::npos) {
                return std::nullopt;
            }
            rest.remove_prefix(start);
            const auto end = rest.find_first_of(" \t");
            std::string_view field = rest.substr(0, end);
            rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
            return field;
        };
        auto token = next_field();
        if (!token) {
            continue;
        }
        values.clear();
        bool parsed = true;
        while (auto field = next_field()) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(field->data(), field->data() + field->size(), v);
            if (ec != std::errc() || ptr != field->data() + field->size()) {
                parsed = false;
            }
            values.push_back(v);
        }
        if (values.size() != dim) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(dim) + " values, found " +
                              std::to_string(values.size()));
        }
        const std::string tok(*token);
        if (!parsed) {
            table.record_malformed();
            continue;
        }
        if (keep != nullptr && !keep->contains(tok)) {
            table.record_filtered(tok);
            continue;
        }
        table.insert(tok, values);
    }
    return table;
}

/// Writes a table in the format load_embeddings reads (shortest round-trip decimals).
inline void save_embeddings(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write embedding file '" + path + "'");
    }
    char buf[64];
    for (const auto& tok : table.tokens()) {
        out << tok;
        for (double v : table.lookup(tok)) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
            out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
        }
        out << '\n';
    }
}

}  // namespace dmu
