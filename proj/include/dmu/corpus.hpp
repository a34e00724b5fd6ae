#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dmu/embedding.hpp"
#include "dmu/error.hpp"

namespace dmu {

/// Class order used by every probability vector in the library.
enum class Polarity : int { Positive = 0, Negative = 1, None = 2 };

inline constexpr int kNumClasses = 3;

inline const char* to_string(Polarity p) {
    switch (p) {
        case Polarity::Positive:
            return "positive";
        case Polarity::Negative:
            return "negative";
        case Polarity::None:
            return "none";
    }
    return "none";
}

inline std::string lowercase(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

/// Case-insensitive "positive" / "negative" / "none".
inline Polarity parse_polarity(std::string_view s) {
    const std::string l = lowercase(s);
    if (l == "positive") return Polarity::Positive;
    if (l == "negative") return Polarity::Negative;
    if (l == "none") return Polarity::None;
    throw FormatError("unknown sentiment '" + std::string(s) + "'");
}

inline const std::vector<std::string>& default_aspects() {
    static const std::vector<std::string> aspects = {"general", "price", "transit-location",
                                                     "safety"};
    return aspects;
}

struct Opinion {
    std::string target;  // as written in the corpus, e.g. "LOC1"
    std::string aspect;
    Polarity sentiment = Polarity::Positive;
};

struct SentenceRecord {
    std::int64_t id = 0;
    std::string text;
    std::vector<Opinion> opinions;
};

/// One (sentence, target, aspect) classification unit.
struct Instance {
    std::int64_t sentence_id = 0;
    std::vector<std::string> tokens;
    std::string target;  // case-folded target token, e.g. "loc1"
    std::string aspect;
    Polarity gold = Polarity::None;
};

namespace detail {

inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80 || c == '_'; }

/// Characters that stay inside a word when flanked by word characters.
inline bool is_joiner(char c) { return c == '\'' || c == '-' || c == '.' || c == ','; }

}  // namespace detail

/// True for target markers such as "loc1" (after case folding).
inline bool is_target_token(std::string_view tok) {
    if (tok.size() < 4 || tok.substr(0, 3) != "loc") {
        return false;
    }
    return std::all_of(tok.begin() + 3, tok.end(),
                       [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

/// Lower-cases and splits on whitespace; punctuation becomes separate tokens
/// except apostrophes, hyphens and (between digits) '.' and ',' inside a word,
/// so "won't", "that's" and "loc1" stay whole.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    const std::string s = lowercase(text);
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        const bool leading_apostrophe =
            c == '\'' && i + 1 < n && detail::is_word_byte(static_cast<unsigned char>(s[i + 1]));
        if (!detail::is_word_byte(c) && !leading_apostrophe) {
            tokens.emplace_back(1, s[i]);
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n) {
            const auto cj = static_cast<unsigned char>(s[j]);
            if (detail::is_word_byte(cj)) {
                ++j;
                continue;
            }
            if (detail::is_joiner(s[j]) && j + 1 < n &&
                detail::is_word_byte(static_cast<unsigned char>(s[j + 1]))) {
                const bool numeric_only = s[j] == '.' || s[j] == ',';
                if (!numeric_only || (std::isdigit(static_cast<unsigned char>(s[j - 1])) &&
                                      std::isdigit(static_cast<unsigned char>(s[j + 1])))) {
                    j += 2;
                    continue;
                }
            }
            break;
        }
        std::string word = s.substr(i, j - i);
        // "loc1's" -> "loc1", "'s" so the target marker stays recognisable.
        if (const auto apos = word.find('\''); apos != std::string::npos &&
                                              is_target_token(std::string_view(word).substr(0, apos))) {
            tokens.push_back(word.substr(0, apos));
            tokens.push_back(word.substr(apos));
        } else {
            tokens.push_back(std::move(word));
        }
        i = j;
    }
    if (tokens.empty()) {
        throw EmptyInputError("tokenize: text is empty");
    }
    return tokens;
}

/// Distinct target markers of a token list, ordered by marker index.
inline std::vector<std::string> targets_in(std::span<const std::string> tokens) {
    std::set<std::pair<long, std::string>> found;
    for (const auto& t : tokens) {
        if (is_target_token(t)) {
            found.emplace(std::stol(t.substr(3)), t);
        }
    }
    std::vector<std::string> out;
    for (auto& [_, t] : found) {
        out.push_back(t);
    }
    return out;
}

/// One Instance per (target present, aspect); unannotated pairs get gold = none.
/// Opinions on aspects outside `aspects` are dropped.
inline std::vector<Instance> expand_instances(const SentenceRecord& record,
                                              std::span<const std::string> aspects) {
    const std::vector<std::string> tokens = tokenize(record.text);
    const std::vector<std::string> targets = targets_in(tokens);
    std::map<std::pair<std::string, std::string>, Polarity> gold;
    for (const auto& op : record.opinions) {
        if (std::find(aspects.begin(), aspects.end(), op.aspect) == aspects.end()) {
            continue;
        }
        const std::string target = lowercase(op.target);
        if (std::find(targets.begin(), targets.end(), target) == targets.end()) {
            throw IntegrityError("sentence " + std::to_string(record.id) + ": opinion target '" +
                                 op.target + "' does not occur in the text");
        }
        auto [it, inserted] = gold.emplace(std::make_pair(target, op.aspect), op.sentiment);
        if (!inserted && it->second != op.sentiment) {
            throw IntegrityError("sentence " + std::to_string(record.id) +
                                 ": conflicting annotations for (" + op.target + ", " +
                                 op.aspect + ")");
        }
    }
    std::vector<Instance> out;
    out.reserve(targets.size() * aspects.size());
    for (const auto& target : targets) {
        for (const auto& aspect : aspects) {
            Instance inst;
            inst.sentence_id = record.id;
            inst.tokens = tokens;
            inst.target = target;
            inst.aspect = aspect;
            auto it = gold.find({target, aspect});
            inst.gold = it == gold.end() ? Polarity::None : it->second;
            out.push_back(std::move(inst));
        }
    }
    return out;
}

inline std::vector<Instance> expand_instances(std::span<const SentenceRecord> records,
                                              std::span<const std::string> aspects) {
    std::vector<Instance> out;
    for (const auto& r : records) {
        auto part = expand_instances(r, aspects);
        out.insert(out.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
    }
    return out;
}

/// Aspect embedding: the mean of the embeddings of its hyphen-separated words.
template <typename T>
std::vector<T> aspect_vector(const std::string& aspect, const EmbeddingTable& table,
                             std::span<const std::string> aspects = default_aspects()) {
    if (std::find(aspects.begin(), aspects.end(), aspect) == aspects.end()) {
        throw ConfigError("unknown aspect '" + aspect + "'");
    }
    std::vector<std::string> words;
    std::size_t start = 0;
    while (start <= aspect.size()) {
        const auto dash = aspect.find('-', start);
        const auto end = dash == std::string::npos ? aspect.size() : dash;
        if (end > start) {
            words.push_back(aspect.substr(start, end - start));
        }
        if (dash == std::string::npos) break;
        start = dash + 1;
    }
    std::vector<T> out(table.dim(), T(0));
    std::vector<T> tmp(table.dim());
    for (const auto& w : words) {
        table.lookup_into<T>(w, tmp);
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k] += tmp[k];
        }
    }
    for (auto& x : out) {
        x /= static_cast<T>(words.size());
    }
    return out;
}

// ---- corpus files ----

inline std::vector<SentenceRecord> parse_corpus(const nlohmann::json& j) {
    if (!j.is_array()) {
        throw FormatError("corpus: top-level value must be an array of records");
    }
    std::vector<SentenceRecord> records;
    records.reserve(j.size());
    for (const auto& r : j) {
        try {
            SentenceRecord rec;
            rec.id = r.at("id").get<std::int64_t>();
            rec.text = r.at("text").get<std::string>();
            if (r.contains("opinions")) {
                for (const auto& o : r.at("opinions")) {
                    Opinion op;
                    op.target = o.at("target_entity").get<std::string>();
                    op.aspect = o.at("aspect").get<std::string>();
                    op.sentiment = parse_polarity(o.at("sentiment").get<std::string>());
                    rec.opinions.push_back(std::move(op));
                }
            }
            records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("corpus record: ") + e.what());
        }
    }
    return records;
}

inline std::vector<SentenceRecord> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open corpus file '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return parse_corpus(j);
}

inline nlohmann::json corpus_to_json(std::span<const SentenceRecord> records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json ops = nlohmann::json::array();
        for (const auto& o : r.opinions) {
            std::string s = to_string(o.sentiment);
            s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
            ops.push_back({{"target_entity", o.target}, {"aspect", o.aspect}, {"sentiment", s}});
        }
        arr.push_back({{"id", r.id}, {"text", r.text}, {"opinions", ops}});
    }
    return arr;
}

inline void save_corpus(std::span<const SentenceRecord> records, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write corpus file '" + path + "'");
    }
    out << corpus_to_json(records).dump(1) << '\n';
}

struct CorpusSplit {
    std::vector<SentenceRecord> train;
    std::vector<SentenceRecord> validation;
    std::vector<SentenceRecord> test;
};

/// Deterministic 70/10/20 partition after a seeded shuffle.
inline CorpusSplit split_corpus(std::vector<SentenceRecord> records, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::shuffle(records.begin(), records.end(), rng);
    const std::size_t n = records.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train,
                                static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
    CorpusSplit s;
    s.train.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train),
                        records.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), records.end());
    return s;
}

inline void check_disjoint(const CorpusSplit& s) {
    std::set<std::int64_t> seen;
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
        std::set<std::int64_t> local;
        for (const auto& r : *part) {
            local.insert(r.id);
        }
        for (auto id : local) {
            if (!seen.insert(id).second) {
                throw IntegrityError("record id " + std::to_string(id) +
                                     " appears in more than one split");
            }
        }
    }
}

/// Loads train/validation/test corpora.
///
/// `path` may be a directory holding three files whose names contain "train",
/// "dev" or "val", and "test" (checked for overlapping ids), or a directory
/// with one .json file, or a single corpus file; the latter two are split
/// 70/10/20 with `seed`.
inline CorpusSplit load_split(const std::string& path, std::uint64_t seed) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) {
        throw FormatError("corpus path '" + path + "' does not exist");
    }
    if (fs::is_regular_file(path)) {
        return split_corpus(load_corpus(path), seed);
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
        if (e.is_regular_file() && e.path().extension() == ".json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    auto find = [&](std::initializer_list<const char*> keys) -> std::optional<fs::path> {
        for (const auto& f : files) {
            const std::string name = lowercase(f.filename().string());
            for (const char* k : keys) {
                if (name.find(k) != std::string::npos) return f;
            }
        }
        return std::nullopt;
    };
    auto train = find({"train"});
    auto val = find({"dev", "val"});
    auto test = find({"test"});
    if (train && val && test) {
        CorpusSplit s{load_corpus(train->string()), load_corpus(val->string()),
                      load_corpus(test->string())};
        check_disjoint(s);
        return s;
    }
    if (files.size() == 1) {
        return split_corpus(load_corpus(files.front().string()), seed);
    }
    throw FormatError("corpus directory '" + path +
                      "' must contain train/dev/test files or exactly one corpus file");
}

}  // namespace dmu
