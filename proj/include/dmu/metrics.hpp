#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmu/corpus.hpp"
#include "dmu/error.hpp"
#include "dmu/model.hpp"

namespace dmu {

struct PredictionRecord {
    std::int64_t sentence_id = 0;
    std::string target;
    std::string aspect;
    Polarity gold = Polarity::None;
    Polarity predicted = Polarity::None;
    std::array<double, kNumClasses> probabilities{};  // positive, negative, none
};

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(score+ > score-) + 0.5 P(tie), from tie-averaged ranks.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("roc_auc: scores and labels differ in length");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positive_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // Ranks i+1..j share their average.
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) {
                positive_rank_sum += rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw UndefinedMetricError("roc_auc: needs at least one positive and one negative label");
    }
    const double np = static_cast<double>(n_pos);
    const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

struct AspectBreakdown {
    std::string aspect;
    std::optional<double> f1;
    std::optional<double> auc;
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t false_negative = 0;
    std::size_t support = 0;  // records with gold != none
};

struct AspectMetrics {
    double strict_accuracy = 0.0;
    double slot_accuracy = 0.0;
    std::optional<double> macro_f1;
    std::optional<double> macro_auc;
    std::vector<AspectBreakdown> per_aspect;
    std::vector<std::string> skipped_f1;
    std::vector<std::string> skipped_auc;
};

/// Aspect detection (predicted != none vs gold != none): strict sentence
/// accuracy, macro-F1 and macro-AUC over aspects, with 1 - P(none) as the
/// detection score. Aspects whose F1 or AUC is undefined are skipped and listed.
inline AspectMetrics aspect_metrics(std::span<const PredictionRecord> records,
                                    std::span<const std::string> aspects = default_aspects()) {
    if (records.empty()) {
        throw UndefinedMetricError("aspect_metrics: no records");
    }
    // Grid check: every (sentence, target) carries each aspect exactly once.
    std::map<std::pair<std::int64_t, std::string>, std::set<std::string>> grid;
    for (const auto& r : records) {
        if (std::find(aspects.begin(), aspects.end(), r.aspect) == aspects.end()) {
            throw IntegrityError("aspect_metrics: unknown aspect '" + r.aspect + "'");
        }
        if (!grid[{r.sentence_id, r.target}].insert(r.aspect).second) {
            throw IntegrityError("aspect_metrics: duplicate slot for sentence " +
                                 std::to_string(r.sentence_id));
        }
    }
    for (const auto& [key, seen] : grid) {
        if (seen.size() != aspects.size()) {
            throw IntegrityError("aspect_metrics: incomplete aspect grid for sentence " +
                                 std::to_string(key.first) + ", target " + key.second);
        }
    }

    AspectMetrics m;
    std::map<std::int64_t, bool> sentence_ok;
    std::size_t slots_ok = 0;
    for (const auto& r : records) {
        const bool ok = (r.predicted != Polarity::None) == (r.gold != Polarity::None);
        slots_ok += ok ? 1 : 0;
        auto [it, inserted] = sentence_ok.emplace(r.sentence_id, ok);
        if (!inserted) it->second = it->second && ok;
    }
    m.slot_accuracy = static_cast<double>(slots_ok) / static_cast<double>(records.size());
    std::size_t strict = 0;
    for (const auto& [_, ok] : sentence_ok) strict += ok ? 1 : 0;
    m.strict_accuracy = static_cast<double>(strict) / static_cast<double>(sentence_ok.size());

    double f1_sum = 0.0, auc_sum = 0.0;
    std::size_t f1_n = 0, auc_n = 0;
    for (const auto& aspect : aspects) {
        AspectBreakdown b;
        b.aspect = aspect;
        std::vector<double> scores;
        std::vector<int> labels;
        for (const auto& r : records) {
            if (r.aspect != aspect) continue;
            const bool gold = r.gold != Polarity::None;
            const bool pred = r.predicted != Polarity::None;
            b.true_positive += (gold && pred) ? 1 : 0;
            b.false_positive += (!gold && pred) ? 1 : 0;
            b.false_negative += (gold && !pred) ? 1 : 0;
            b.support += gold ? 1 : 0;
            scores.push_back(1.0 - r.probabilities[static_cast<std::size_t>(Polarity::None)]);
            labels.push_back(gold ? 1 : 0);
        }
        const std::size_t denom = 2 * b.true_positive + b.false_positive + b.false_negative;
        if (denom > 0) {
            b.f1 = 2.0 * static_cast<double>(b.true_positive) / static_cast<double>(denom);
            f1_sum += *b.f1;
            ++f1_n;
        } else {
            m.skipped_f1.push_back(aspect);
        }
        try {
            b.auc = roc_auc(scores, labels);
            auc_sum += *b.auc;
            ++auc_n;
        } catch (const UndefinedMetricError&) {
            m.skipped_auc.push_back(aspect);
        }
        m.per_aspect.push_back(std::move(b));
    }
    if (f1_n > 0) m.macro_f1 = f1_sum / static_cast<double>(f1_n);
    if (auc_n > 0) m.macro_auc = auc_sum / static_cast<double>(auc_n);
    return m;
}

struct SentimentMetrics {
    double accuracy = 0.0;
    std::optional<double> macro_auc;
    std::optional<double> positive_auc;
    std::optional<double> negative_auc;
    std::size_t count = 0;
};

/// Polarity classification over records with gold != none: accuracy of the
/// argmax over {positive, negative}, and the mean of the per-polarity AUCs
/// (each class scored by its own probability).
inline SentimentMetrics sentiment_metrics(std::span<const PredictionRecord> records) {
    SentimentMetrics m;
    std::size_t correct = 0;
    std::vector<double> pos_scores, neg_scores;
    std::vector<int> pos_labels, neg_labels;
    for (const auto& r : records) {
        if (r.gold == Polarity::None) continue;
        ++m.count;
        const Polarity pred = r.probabilities[0] >= r.probabilities[1] ? Polarity::Positive
                                                                       : Polarity::Negative;
        correct += pred == r.gold ? 1 : 0;
        pos_scores.push_back(r.probabilities[0]);
        pos_labels.push_back(r.gold == Polarity::Positive ? 1 : 0);
        neg_scores.push_back(r.probabilities[1]);
        neg_labels.push_back(r.gold == Polarity::Negative ? 1 : 0);
    }
    if (m.count == 0) {
        throw UndefinedMetricError("sentiment_metrics: no records with a polarity label");
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);
    try {
        m.positive_auc = roc_auc(pos_scores, pos_labels);
    } catch (const UndefinedMetricError&) {
    }
    try {
        m.negative_auc = roc_auc(neg_scores, neg_labels);
    } catch (const UndefinedMetricError&) {
    }
    if (m.positive_auc && m.negative_auc) {
        m.macro_auc = 0.5 * (*m.positive_auc + *m.negative_auc);
    } else if (m.positive_auc || m.negative_auc) {
        m.macro_auc = m.positive_auc ? *m.positive_auc : *m.negative_auc;
    }
    return m;
}

struct EvalReport {
    AspectMetrics aspect;
    std::optional<SentimentMetrics> sentiment;
    std::size_t records = 0;
    std::size_t sentences = 0;

    double aspect_strict_acc() const { return aspect.strict_accuracy; }
    std::optional<double> aspect_macro_f1() const { return aspect.macro_f1; }
    std::optional<double> aspect_macro_auc() const { return aspect.macro_auc; }
    std::optional<double> sentiment_acc() const {
        return sentiment ? std::optional<double>(sentiment->accuracy) : std::nullopt;
    }
    std::optional<double> sentiment_macro_auc() const {
        return sentiment ? sentiment->macro_auc : std::nullopt;
    }
};

inline EvalReport evaluate_records(std::span<const PredictionRecord> records,
                                   std::span<const std::string> aspects = default_aspects()) {
    EvalReport r;
    r.aspect = aspect_metrics(records, aspects);
    try {
        r.sentiment = sentiment_metrics(records);
    } catch (const UndefinedMetricError&) {
    }
    r.records = records.size();
    std::set<std::int64_t> ids;
    for (const auto& p : records) ids.insert(p.sentence_id);
    r.sentences = ids.size();
    return r;
}

namespace detail {
inline nlohmann::json opt(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace detail

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& b : r.aspect.per_aspect) {
        per.push_back({{"aspect", b.aspect},
                       {"f1", detail::opt(b.f1)},
                       {"auc", detail::opt(b.auc)},
                       {"true_positive", b.true_positive},
                       {"false_positive", b.false_positive},
                       {"false_negative", b.false_negative},
                       {"support", b.support}});
    }
    return {{"aspect_strict_acc", r.aspect.strict_accuracy},
            {"aspect_slot_acc", r.aspect.slot_accuracy},
            {"aspect_macro_f1", detail::opt(r.aspect.macro_f1)},
            {"aspect_macro_auc", detail::opt(r.aspect.macro_auc)},
            {"sentiment_acc", detail::opt(r.sentiment_acc())},
            {"sentiment_macro_auc", detail::opt(r.sentiment_macro_auc())},
            {"per_aspect", per},
            {"skipped_f1", r.aspect.skipped_f1},
            {"skipped_auc", r.aspect.skipped_auc},
            {"records", r.records},
            {"sentences", r.sentences}};
}

/// The scalar metrics of a report, keyed by their JSON names.
inline std::map<std::string, std::optional<double>> headline_metrics(const EvalReport& r) {
    return {{"aspect_strict_acc", r.aspect.strict_accuracy},
            {"aspect_macro_f1", r.aspect.macro_f1},
            {"aspect_macro_auc", r.aspect.macro_auc},
            {"sentiment_acc", r.sentiment_acc()},
            {"sentiment_macro_auc", r.sentiment_macro_auc()}};
}

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
    std::size_t n = 0;
};

inline MeanStd mean_std(std::span<const double> xs) {
    MeanStd m;
    m.n = xs.size();
    if (xs.empty()) return m;
    m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(xs.size()));
    return m;
}

/// Mean and standard deviation of each headline metric over several reports
/// (metrics undefined in a report are left out of that metric's average).
inline nlohmann::json summarize(std::span<const EvalReport> reports) {
    std::map<std::string, std::vector<double>> values;
    for (const auto& r : reports) {
        for (const auto& [k, v] : headline_metrics(r)) {
            auto& slot = values[k];
            if (v) slot.push_back(*v);
        }
    }
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, xs] : values) {
        const MeanStd ms = mean_std(xs);
        out[k] = {{"mean", xs.empty() ? nlohmann::json(nullptr) : nlohmann::json(ms.mean)},
                  {"std", xs.empty() ? nlohmann::json(nullptr) : nlohmann::json(ms.stddev)},
                  {"n", ms.n}};
    }
    return out;
}

// ---- prediction files ----

inline nlohmann::json to_json(std::span<const PredictionRecord> records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) {
        arr.push_back({{"sentence_id", r.sentence_id},
                       {"target", r.target},
                       {"aspect", r.aspect},
                       {"gold", to_string(r.gold)},
                       {"predicted", to_string(r.predicted)},
                       {"probabilities", r.probabilities}});
    }
    return arr;
}

inline std::vector<PredictionRecord> parse_predictions(const nlohmann::json& j) {
    if (!j.is_array()) {
        throw FormatError("predictions: top-level value must be an array");
    }
    std::vector<PredictionRecord> out;
    for (const auto& e : j) {
        try {
            PredictionRecord r;
            r.sentence_id = e.at("sentence_id").get<std::int64_t>();
            r.target = lowercase(e.at("target").get<std::string>());
            r.aspect = e.at("aspect").get<std::string>();
            r.gold = parse_polarity(e.at("gold").get<std::string>());
            r.probabilities = e.at("probabilities").get<std::array<double, kNumClasses>>();
            if (e.contains("predicted")) {
                r.predicted = parse_polarity(e.at("predicted").get<std::string>());
            } else {
                r.predicted = static_cast<Polarity>(
                    std::max_element(r.probabilities.begin(), r.probabilities.end()) -
                    r.probabilities.begin());
            }
            const double s = r.probabilities[0] + r.probabilities[1] + r.probabilities[2];
            if (std::abs(s - 1.0) > 1e-9) {
                throw FormatError("predictions: probabilities must sum to 1");
            }
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(std::string("predictions: ") + ex.what());
        }
    }
    return out;
}

// ---- gate heatmap ----

struct HeatmapRow {
    std::size_t position = 0;
    std::string token;
    double mean = 0.0;                // over chains and both directions
    std::vector<double> forward;      // per chain
    std::vector<double> backward;     // per chain
};

/// One row per token with the gate of every chain in both directions.
template <typename T>
std::vector<HeatmapRow> export_gate_heatmap(const ChainTrace<T>& trace,
                                            std::span<const std::string> tokens) {
    const std::size_t m = tokens.size();
    const std::size_t n = trace.chains();
    if (trace.length() != m || trace.bwd.gate.size() != n ||
        (n > 0 && trace.bwd.gate.front().size() != m)) {
        throw IntegrityError("export_gate_heatmap: trace length does not match token count");
    }
    std::vector<HeatmapRow> rows(m);
    for (std::size_t i = 0; i < m; ++i) {
        HeatmapRow& r = rows[i];
        r.position = i;
        r.token = tokens[i];
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            r.forward.push_back(static_cast<double>(trace.fwd.gate[j][i]));
            r.backward.push_back(static_cast<double>(trace.bwd.gate[j][i]));
            s += r.forward.back() + r.backward.back();
        }
        r.mean = n > 0 ? s / static_cast<double>(2 * n) : 0.0;
    }
    return rows;
}

inline void write_heatmap_header(std::ostream& out, std::size_t chains) {
    out << "model,position,token,mean";
    for (const char* dir : {"fwd", "bwd"}) {
        for (std::size_t j = 0; j < chains; ++j) out << ",gate_" << dir << '_' << j;
    }
    out << '\n';
}

/// CSV rows: model label, position, token, mean gate, then one gate column per
/// (direction, chain).
inline void write_heatmap_rows(std::ostream& out, std::span<const HeatmapRow> rows,
                               const std::string& model) {
    auto csv_field = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + '"';
    };
    const auto old = out.precision(17);
    for (const auto& r : rows) {
        out << model << ',' << r.position << ',' << csv_field(r.token) << ',' << r.mean;
        for (double g : r.forward) out << ',' << g;
        for (double g : r.backward) out << ',' << g;
        out << '\n';
    }
    out.precision(old);
}

}  // namespace dmu
