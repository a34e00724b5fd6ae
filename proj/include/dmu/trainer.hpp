#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dmu/corpus.hpp"
#include "dmu/embedding.hpp"
#include "dmu/error.hpp"
#include "dmu/metrics.hpp"
#include "dmu/model.hpp"
#include "dmu/params.hpp"
#include "dmu/sampler.hpp"
#include "dmu/tape.hpp"

namespace dmu {

struct TrainConfig {
    std::size_t epochs = 800;
    std::size_t batch_size = 128;
    double learning_rate = 0.05;
    double dropout_rate = 0.2;
    double l2 = 0.001;           // lambda on the classifier weights R
    bool l2_squared = false;     // lambda * ||R||_F^2 instead of lambda * ||R||_F
    double ftrl_beta = 1.0;
    double ftrl_l1 = 0.0;
    std::uint64_t seed = 1;
    bool balanced = true;        // class-balanced batches; uniform otherwise

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("learning rate must be positive");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
            throw ConfigError("dropout rate must be in [0, 1)");
        }
        if (!(l2 >= 0.0) || !(ftrl_beta >= 0.0) || !(ftrl_l1 >= 0.0)) {
            throw ConfigError("l2, ftrl_beta and ftrl_l1 must be non-negative");
        }
        if (batch_size == 0) {
            throw ConfigError("batch size must be positive");
        }
    }
};

// ---- FTRL-Proximal ----

/// Per-coordinate accumulators, laid out like the model's arrays.
template <typename T>
struct FtrlState {
    ModelParams<T> z, n;

    static FtrlState zeros_like(const ModelParams<T>& params) {
        return {ModelParams<T>::shaped_like(params), ModelParams<T>::shaped_like(params)};
    }
};

/// One FTRL-Proximal step over every trainable coordinate. Coordinates whose
/// gradient is exactly zero are left alone (weights and accumulators), so a
/// zero gradient is a no-op even on a fresh state. Optimizer-level l2 is 0.
template <typename T>
void ftrl_step(ModelParams<T>& params, const ModelParams<T>& grads, FtrlState<T>& state,
               const TrainConfig& cfg) {
    std::vector<const DenseArray<T>*> g;
    std::vector<std::string> names;
    grads.visit([&](const std::string& name, const DenseArray<T>& a, bool) {
        g.push_back(&a);
        names.push_back(name);
    });
    // Reject before touching anything so a failed step leaves params intact.
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto v = g[k]->values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i])) {
                throw DivergenceError("non-finite gradient in parameter '" + names[k] + "' at index " +
                                      std::to_string(i));
            }
        }
    }
    std::vector<DenseArray<T>*> zs, ns;
    state.z.visit([&](const std::string&, DenseArray<T>& a, bool) { zs.push_back(&a); });
    state.n.visit([&](const std::string&, DenseArray<T>& a, bool) { ns.push_back(&a); });
    if (zs.size() != g.size() || ns.size() != g.size()) {
        throw DimensionError("ftrl_step: state does not match the parameters");
    }
    const T alpha = static_cast<T>(cfg.learning_rate);
    const T beta = static_cast<T>(cfg.ftrl_beta);
    const T l1 = static_cast<T>(cfg.ftrl_l1);
    std::size_t k = 0;
    params.visit([&](const std::string&, DenseArray<T>& w, bool trainable) {
        const std::size_t idx = k++;
        if (!trainable) return;
        auto gv = g[idx]->values();
        auto zv = zs[idx]->values();
        auto nv = ns[idx]->values();
        auto wv = w.values();
        if (gv.size() != wv.size() || zv.size() != wv.size()) {
            throw DimensionError("ftrl_step: array '" + names[idx] + "' misaligned");
        }
        for (std::size_t i = 0; i < wv.size(); ++i) {
            const T gi = gv[i];
            if (gi == T(0)) continue;
            const T n_new = nv[i] + gi * gi;
            const T sigma = (std::sqrt(n_new) - std::sqrt(nv[i])) / alpha;
            zv[i] += gi - sigma * wv[i];
            nv[i] = n_new;
            const T z = zv[i];
            if (std::abs(z) <= l1) {
                wv[i] = T(0);
            } else {
                const T sign = z < T(0) ? T(-1) : T(1);
                wv[i] = -(z - sign * l1) / ((beta + std::sqrt(n_new)) / alpha);
            }
        }
    });
}

// ---- dropout ----

/// Inverted dropout: entries are 0 or 1/(1 - rate). Eval mode gives all ones.
template <typename T>
DropoutMasks<T> make_masks(double rate, std::size_t dim, std::mt19937_64& rng, bool training = true) {
    const auto D = static_cast<Eigen::Index>(dim);
    DropoutMasks<T> m{Vector<T>::Ones(D), Vector<T>::Ones(D)};
    if (!training || rate == 0.0) return m;
    std::bernoulli_distribution keep(1.0 - rate);
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto* v : {&m.input, &m.classifier}) {
        for (Eigen::Index i = 0; i < D; ++i) (*v)[i] = keep(rng) ? scale : T(0);
    }
    return m;
}

// ---- penalty ----

/// lambda * ||R||_F, or lambda * ||R||_F^2 when `squared`.
template <typename T>
Var l2_penalty(Tape<T>& tape, Var R, double lambda, bool squared = false) {
    Var norm = squared ? squared_norm(tape, R) : frobenius_norm(tape, R);
    return scale(tape, norm, static_cast<T>(lambda));
}

template <typename T>
T l2_penalty_value(const DenseArray<T>& R, double lambda, bool squared = false) {
    const T sq = R.vec().squaredNorm();
    return static_cast<T>(lambda) * (squared ? sq : std::sqrt(sq));
}

// ---- batch objective ----

/// Mean cross-entropy over `batch` plus the classifier penalty. When `grads`
/// is non-null it is overwritten with the gradient of that objective.
/// `masks` is either empty (no dropout) or one entry per batch element.
template <typename T>
T batch_objective(const ModelParams<T>& params, const ModelConfig& config,
                  std::span<const EncodedInput<T>* const> batch,
                  std::span<const DropoutMasks<T>> masks, double lambda, bool squared,
                  ModelParams<T>* grads, Tape<T>* scratch = nullptr) {
    if (batch.empty()) {
        throw EmptyInputError("batch_objective: empty batch");
    }
    if (!masks.empty() && masks.size() != batch.size()) {
        throw DimensionError("batch_objective: one mask set per batch element required");
    }
    if (grads != nullptr) {
        grads->visit([](const std::string&, DenseArray<T>& a, bool) {
            std::fill(a.values().begin(), a.values().end(), T(0));
        });
    }
    Tape<T> local(grads != nullptr);
    Tape<T>& tape = scratch != nullptr ? *scratch : local;
    T total = T(0);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        tape.clear();
        auto bound = bind(tape, params, grads);
        auto vars = forward_on_tape(tape, bound, *batch[b], config, masks.empty() ? nullptr : &masks[b]);
        Var loss = cross_entropy(tape, vars.logits, batch[b]->gold);
        total += tape.scalar(loss);
        if (grads != nullptr) tape.backward(loss);
    }
    const T inv = T(1) / static_cast<T>(batch.size());
    if (grads != nullptr) {
        grads->visit([&](const std::string&, DenseArray<T>& a, bool) {
            for (auto& x : a.values()) x *= inv;
        });
    }
    T penalty = T(0);
    if (lambda != 0.0) {
        tape.clear();
        Var R = tape.parameter(params.R, grads != nullptr ? &grads->R : nullptr);
        Var p = l2_penalty(tape, R, lambda, squared);
        penalty = tape.scalar(p);
        if (grads != nullptr) tape.backward(p);
    }
    return total * inv + penalty;
}

// ---- encoded corpora and inference ----

/// Instances paired with their embedded form; instances of one sentence share
/// the token matrix.
template <typename T>
struct EncodedCorpus {
    std::vector<Instance> instances;
    std::vector<EncodedInput<T>> inputs;

    std::size_t size() const { return instances.size(); }
};

template <typename T>
EncodedCorpus<T> encode_corpus(std::vector<Instance> instances, const EmbeddingTable& table,
                               std::span<const std::string> aspects = default_aspects()) {
    EncodedCorpus<T> c;
    c.instances = std::move(instances);
    c.inputs.reserve(c.instances.size());
    std::map<std::string, Vector<T>> aspect_cache;
    std::shared_ptr<const Matrix<T>> tokens;
    for (std::size_t i = 0; i < c.instances.size(); ++i) {
        const Instance& inst = c.instances[i];
        if (i == 0 || inst.sentence_id != c.instances[i - 1].sentence_id ||
            inst.tokens != c.instances[i - 1].tokens) {
            tokens = std::make_shared<const Matrix<T>>(embed_tokens<T>(inst.tokens, table));
        }
        auto it = aspect_cache.find(inst.aspect);
        if (it == aspect_cache.end()) {
            it = aspect_cache.emplace(inst.aspect, embed_aspect<T>(inst.aspect, table, aspects)).first;
        }
        c.inputs.push_back({tokens, embed_token<T>(inst.target, table), it->second, inst.gold});
    }
    return c;
}

/// Eval-mode predictions for every instance; each sentence is encoded once.
template <typename T>
std::vector<PredictionRecord> predict_corpus(const ModelParams<T>& params, const ModelConfig& config,
                                             const EncodedCorpus<T>& corpus) {
    std::vector<PredictionRecord> out;
    out.reserve(corpus.size());
    std::size_t begin = 0;
    while (begin < corpus.size()) {
        std::size_t end = begin + 1;
        while (end < corpus.size() && corpus.inputs[end].tokens == corpus.inputs[begin].tokens) ++end;
        std::vector<std::pair<Vector<T>, Vector<T>>> queries;
        for (std::size_t i = begin; i < end; ++i) {
            queries.emplace_back(corpus.inputs[i].target, corpus.inputs[i].aspect);
        }
        auto preds = predict_sentence(params, config, *corpus.inputs[begin].tokens,
                                      std::span<const std::pair<Vector<T>, Vector<T>>>(queries));
        for (std::size_t i = begin; i < end; ++i) {
            const Instance& inst = corpus.instances[i];
            const auto& p = preds[i - begin];
            PredictionRecord r;
            r.sentence_id = inst.sentence_id;
            r.target = inst.target;
            r.aspect = inst.aspect;
            r.gold = inst.gold;
            r.predicted = p.predicted();
            for (std::size_t c = 0; c < kNumClasses; ++c) {
                r.probabilities[c] = static_cast<double>(p.probabilities[static_cast<Eigen::Index>(c)]);
            }
            out.push_back(std::move(r));
        }
        begin = end;
    }
    return out;
}

template <typename T>
EvalReport evaluate_model(const ModelParams<T>& params, const ModelConfig& config,
                          const EncodedCorpus<T>& corpus,
                          std::span<const std::string> aspects = default_aspects()) {
    return evaluate_records(predict_corpus(params, config, corpus), aspects);
}

// ---- training loop ----

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double mean_loss = 0.0;
    EvalReport validation;
    bool improved = false;
};

inline nlohmann::json to_json(const EpochLog& e) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["mean_loss"] = e.mean_loss;
    nlohmann::json v = nlohmann::json::object();
    for (const auto& [name, value] : headline_metrics(e.validation)) v[name] = detail::opt(value);
    j["validation"] = std::move(v);
    j["improved"] = e.improved;
    return j;
}

template <typename T>
struct TrainResult {
    ModelParams<T> best;       // best validation score
    ModelParams<T> last_good;  // parameters after the last finite step
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;  // 0: the initial model
    bool diverged = false;
    std::string diagnostic;
};

/// Selection key: aspect macro-F1, then sentiment accuracy. Undefined
/// metrics rank below every defined value.
inline std::pair<double, double> selection_score(const EvalReport& r) {
    constexpr double lowest = -std::numeric_limits<double>::infinity();
    return {r.aspect.macro_f1.value_or(lowest),
            r.sentiment ? r.sentiment->accuracy : lowest};
}

/// Epoch loop: ceil(|train| / batch) batches per epoch, FTRL updates, a
/// validation pass after every epoch. `on_epoch` sees each log entry as it
/// is produced. Divergence stops training and flags the result instead of
/// throwing, keeping the last finite parameters.
template <typename T>
TrainResult<T> train(const EncodedCorpus<T>& train_set, const EncodedCorpus<T>& val_set,
                     ModelParams<T> params, const ModelConfig& config, const TrainConfig& cfg,
                     std::span<const std::string> aspects = default_aspects(),
                     const std::function<void(const EpochLog&)>& on_epoch = {}) {
    cfg.validate();
    config.validate();
    if (train_set.size() == 0 || val_set.size() == 0) {
        throw EmptyInputError("train: training and validation sets must be non-empty");
    }
    TrainResult<T> result;
    result.best = params;
    result.last_good = params;
    if (cfg.epochs == 0) return result;

    std::mt19937_64 rng(cfg.seed);
    std::unique_ptr<BalancedSampler> balanced;
    std::unique_ptr<UniformSampler> uniform;
    if (cfg.balanced && BalancedSampler::supports(train_set.instances)) {
        balanced = std::make_unique<BalancedSampler>(train_set.instances, cfg.batch_size);
    } else {
        uniform = std::make_unique<UniformSampler>(train_set.size(), cfg.batch_size);
    }
    const std::size_t batches = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;

    FtrlState<T> state = FtrlState<T>::zeros_like(params);
    ModelParams<T> grads = ModelParams<T>::shaped_like(params);
    Tape<T> tape(true);
    std::vector<const EncodedInput<T>*> batch;
    std::vector<DropoutMasks<T>> masks;
    std::pair<double, double> best_score{-std::numeric_limits<double>::infinity(),
                                         -std::numeric_limits<double>::infinity()};
    bool have_best = false;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::vector<std::size_t> idx = balanced ? balanced->next(rng) : uniform->next(rng);
            batch.clear();
            masks.clear();
            for (std::size_t i : idx) {
                batch.push_back(&train_set.inputs[i]);
                masks.push_back(make_masks<T>(cfg.dropout_rate, config.embed_dim, rng));
            }
            const T loss = batch_objective<T>(params, config, batch, masks, cfg.l2, cfg.l2_squared,
                                              &grads, &tape);
            if (!std::isfinite(static_cast<double>(loss))) {
                result.diverged = true;
                result.diagnostic = "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(b + 1);
                result.last_good = params;
                return result;
            }
            try {
                ftrl_step(params, grads, state, cfg);
            } catch (const DivergenceError& e) {
                result.diverged = true;
                result.diagnostic = std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")";
                result.last_good = params;  // ftrl_step rejects before writing
                return result;
            }
            loss_sum += static_cast<double>(loss);
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.mean_loss = loss_sum / static_cast<double>(batches);
        entry.validation = evaluate_model(params, config, val_set, aspects);
        const auto score = selection_score(entry.validation);
        if (!have_best || score > best_score) {
            have_best = true;
            best_score = score;
            result.best = params;
            result.best_epoch = epoch;
            entry.improved = true;
        }
        if (on_epoch) on_epoch(entry);
        result.log.push_back(std::move(entry));
    }
    result.last_good = std::move(params);
    return result;
}

}  // namespace dmu
