#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dmu/corpus.hpp"
#include "dmu/embedding.hpp"
#include "dmu/error.hpp"

namespace dmu {

enum class CuePlacement { After, Before, Either };

/// Parameters of the templated corpus generator.
///
/// Each sentence mentions `targets` distinct markers (LOC1..LOCn) in random
/// order. For every target, each aspect is mentioned with `mention_prob`; a
/// mentioned aspect gets a sentiment (positive with `positive_prob`) and a cue
/// word from the aspect/sentiment lexicon, placed with `distance` intervening
/// tokens after (or before) the target, distance drawn uniformly from
/// [min_distance, max_distance]. Gaps are filled with filler words.
struct SynthSpec {
    std::size_t sentences = 100;
    std::size_t targets = 2;
    std::vector<std::string> aspects = default_aspects();
    double mention_prob = 0.5;
    double positive_prob = 0.5;
    std::size_t min_distance = 0;
    std::size_t max_distance = 0;
    CuePlacement placement = CuePlacement::After;
    std::size_t lead_filler = 0;    // max filler tokens before the first segment
    std::size_t trail_filler = 0;   // max filler tokens after the last segment
    std::size_t filler_vocab = 20;
    std::size_t embed_dim = 32;
    std::uint64_t seed = 1;
    /// lexicon[aspect] = {positive cues, negative cues}
    std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> lexicon =
        default_lexicon();

    static std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>>
    default_lexicon() {
        return {
            {"general", {{"lovely", "great", "nice"}, {"awful", "boring", "dull"}}},
            {"price", {{"cheap", "affordable", "bargain"}, {"expensive", "pricey", "overpriced"}}},
            {"transit-location", {{"central", "convenient", "close"}, {"far", "remote", "isolated"}}},
            {"safety", {{"safe", "secure", "peaceful"}, {"dangerous", "rough", "unsafe"}}},
        };
    }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace detail

/// Parses "key = value" lines ('#' starts a comment). Lexicon entries are
/// written as `lexicon.<aspect>.positive = a, b, c`.
inline SynthSpec parse_synth_spec(std::istream& in) {
    SynthSpec spec;
    std::string line;
    std::size_t line_no = 0;
    auto to_size = [&](const std::string& v) -> std::size_t {
        try {
            return static_cast<std::size_t>(std::stoull(v));
        } catch (const std::exception&) {
            throw FormatError("synth spec line " + std::to_string(line_no) + ": bad integer '" +
                              v + "'");
        }
    };
    auto to_real = [&](const std::string& v) -> double {
        try {
            return std::stod(v);
        } catch (const std::exception&) {
            throw FormatError("synth spec line " + std::to_string(line_no) + ": bad number '" +
                              v + "'");
        }
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos) {
            throw FormatError("synth spec line " + std::to_string(line_no) + ": expected key = value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "sentences") spec.sentences = to_size(val);
        else if (key == "targets") spec.targets = to_size(val);
        else if (key == "aspects") spec.aspects = detail::split_list(val);
        else if (key == "mention_prob") spec.mention_prob = to_real(val);
        else if (key == "positive_prob") spec.positive_prob = to_real(val);
        else if (key == "min_distance") spec.min_distance = to_size(val);
        else if (key == "max_distance") spec.max_distance = to_size(val);
        else if (key == "lead_filler") spec.lead_filler = to_size(val);
        else if (key == "trail_filler") spec.trail_filler = to_size(val);
        else if (key == "filler_vocab") spec.filler_vocab = to_size(val);
        else if (key == "embed_dim") spec.embed_dim = to_size(val);
        else if (key == "seed") spec.seed = to_size(val);
        else if (key == "placement") {
            if (val == "after") spec.placement = CuePlacement::After;
            else if (val == "before") spec.placement = CuePlacement::Before;
            else if (val == "either") spec.placement = CuePlacement::Either;
            else throw FormatError("synth spec: placement must be after, before or either");
        } else if (key.rfind("lexicon.", 0) == 0) {
            const auto dot = key.rfind('.');
            const std::string aspect = key.substr(8, dot - 8);
            const std::string polarity = key.substr(dot + 1);
            auto& entry = spec.lexicon[aspect];
            if (polarity == "positive") entry.first = detail::split_list(val);
            else if (polarity == "negative") entry.second = detail::split_list(val);
            else throw FormatError("synth spec: lexicon key must end in .positive or .negative");
        } else {
            throw FormatError("synth spec line " + std::to_string(line_no) + ": unknown key '" +
                              key + "'");
        }
    }
    return spec;
}

inline SynthSpec load_synth_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open synth spec '" + path + "'");
    }
    return parse_synth_spec(in);
}

inline void validate(const SynthSpec& spec) {
    if (spec.targets == 0) throw ConfigError("synth: targets must be positive");
    if (spec.min_distance > spec.max_distance) {
        throw ConfigError("synth: min_distance exceeds max_distance");
    }
    if (spec.mention_prob < 0 || spec.mention_prob > 1 || spec.positive_prob < 0 ||
        spec.positive_prob > 1) {
        throw ConfigError("synth: probabilities must lie in [0, 1]");
    }
    if (spec.filler_vocab == 0) throw ConfigError("synth: filler_vocab must be positive");
    for (const auto& a : spec.aspects) {
        auto it = spec.lexicon.find(a);
        if (it == spec.lexicon.end() || it->second.first.empty() || it->second.second.empty()) {
            throw ConfigError("synth: aspect '" + a + "' needs positive and negative cue words");
        }
    }
}

inline std::string filler_word(std::size_t k) { return "w" + std::to_string(k); }

/// Generates a corpus in the record format the loader reads.
inline std::vector<SentenceRecord> synth_generate(const SynthSpec& spec, std::mt19937_64& rng) {
    validate(spec);
    std::uniform_int_distribution<std::size_t> filler(0, spec.filler_vocab - 1);
    std::uniform_int_distribution<std::size_t> distance(spec.min_distance, spec.max_distance);
    std::bernoulli_distribution mention(spec.mention_prob);
    std::bernoulli_distribution positive(spec.positive_prob);
    std::bernoulli_distribution after(0.5);
    auto fillers = [&](std::vector<std::string>& out, std::size_t count) {
        for (std::size_t k = 0; k < count; ++k) out.push_back(filler_word(filler(rng)));
    };

    std::vector<SentenceRecord> corpus;
    corpus.reserve(spec.sentences);
    for (std::size_t s = 0; s < spec.sentences; ++s) {
        SentenceRecord rec;
        rec.id = static_cast<std::int64_t>(s);
        std::vector<std::size_t> order(spec.targets);
        for (std::size_t t = 0; t < spec.targets; ++t) order[t] = t + 1;
        std::shuffle(order.begin(), order.end(), rng);

        std::vector<std::string> words;
        fillers(words, std::uniform_int_distribution<std::size_t>(0, spec.lead_filler)(rng));
        for (std::size_t t : order) {
            const std::string marker = "LOC" + std::to_string(t);
            // Offsets relative to the target: +k means k-1 tokens in between.
            std::map<long, std::string> placed;
            for (const auto& aspect : spec.aspects) {
                if (!mention(rng)) continue;
                const bool pos = positive(rng);
                const auto& cues = pos ? spec.lexicon.at(aspect).first : spec.lexicon.at(aspect).second;
                const std::string cue =
                    cues[std::uniform_int_distribution<std::size_t>(0, cues.size() - 1)(rng)];
                bool is_after = spec.placement == CuePlacement::After ||
                                (spec.placement == CuePlacement::Either && after(rng));
                long offset = static_cast<long>(distance(rng)) + 1;
                const long dir = is_after ? 1 : -1;
                while (placed.contains(dir * offset)) ++offset;
                placed.emplace(dir * offset, cue);
                rec.opinions.push_back({marker, aspect,
                                        pos ? Polarity::Positive : Polarity::Negative});
            }
            const long lo = placed.empty() ? 0 : std::min(0L, placed.begin()->first);
            const long hi = placed.empty() ? 0 : std::max(0L, placed.rbegin()->first);
            for (long k = lo; k <= hi; ++k) {
                if (k == 0) words.push_back(marker);
                else if (auto it = placed.find(k); it != placed.end()) words.push_back(it->second);
                else words.push_back(filler_word(filler(rng)));
            }
        }
        fillers(words, std::uniform_int_distribution<std::size_t>(0, spec.trail_filler)(rng));
        for (std::size_t k = 0; k < words.size(); ++k) {
            if (k) rec.text += ' ';
            rec.text += words[k];
        }
        corpus.push_back(std::move(rec));
    }
    return corpus;
}

/// Every word the generator can emit plus the aspect words, case-folded.
inline std::vector<std::string> synth_vocabulary(const SynthSpec& spec) {
    std::vector<std::string> vocab;
    for (std::size_t t = 1; t <= spec.targets; ++t) vocab.push_back("loc" + std::to_string(t));
    for (std::size_t k = 0; k < spec.filler_vocab; ++k) vocab.push_back(filler_word(k));
    for (const auto& [aspect, cues] : spec.lexicon) {
        for (const auto& w : cues.first) vocab.push_back(lowercase(w));
        for (const auto& w : cues.second) vocab.push_back(lowercase(w));
    }
    for (std::string a : spec.aspects) {
        std::replace(a.begin(), a.end(), '-', ',');
        for (const auto& w : detail::split_list(a)) vocab.push_back(w);
    }
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    return vocab;
}

/// Random embeddings for the synthetic vocabulary: i.i.d. N(0, 1/dim)
/// entries, so vectors have roughly unit norm and are nearly orthogonal.
inline EmbeddingTable synth_embeddings(const SynthSpec& spec, std::mt19937_64& rng) {
    EmbeddingTable table(spec.embed_dim);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.embed_dim)));
    std::vector<double> v(spec.embed_dim);
    for (const auto& tok : synth_vocabulary(spec)) {
        for (auto& x : v) x = normal(rng);
        table.insert(tok, v);
    }
    return table;
}

}  // namespace dmu
