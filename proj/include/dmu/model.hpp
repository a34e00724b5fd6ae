#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmu/corpus.hpp"
#include "dmu/embedding.hpp"
#include "dmu/ops.hpp"
#include "dmu/params.hpp"
#include "dmu/tape.hpp"

namespace dmu {

// ---- parameters bound to a tape ----

template <typename T>
struct BoundGru {
    Var W_z, U_z, b_z, W_r, U_r, b_r, W_c, U_c, b_c;
};

template <typename T>
struct BoundDirection {
    Var U, V, W, v, slope;
    BoundGru<T> gru;
};

template <typename T>
struct BoundParams {
    std::vector<Var> keys;
    BoundDirection<T> fwd, bwd;
    Var W_att, H, R, classifier_slope;
};

/// Registers every array of `params` as a tape leaf. When `grads` is given
/// (same structure), trainable arrays accumulate their gradient into it;
/// frozen arrays (tied keys) never receive one.
template <typename T>
BoundParams<T> bind(Tape<T>& tape, const ModelParams<T>& params, ModelParams<T>* grads) {
    std::vector<DenseArray<T>*> sinks;
    if (grads != nullptr) {
        grads->visit([&](const std::string&, DenseArray<T>& a, bool) { sinks.push_back(&a); });
    }
    std::vector<Var> vars;
    std::size_t k = 0;
    params.visit([&](const std::string&, const DenseArray<T>& a, bool trainable) {
        DenseArray<T>* sink = (grads != nullptr && trainable) ? sinks[k] : nullptr;
        vars.push_back(tape.parameter(a, sink));
        ++k;
    });
    std::size_t i = 0;
    BoundParams<T> b;
    for (std::size_t j = 0; j < params.keys.size(); ++j) b.keys.push_back(vars[i++]);
    for (auto* d : {&b.fwd, &b.bwd}) {
        d->U = vars[i++];
        d->V = vars[i++];
        d->W = vars[i++];
        d->v = vars[i++];
        d->gru.W_z = vars[i++];
        d->gru.U_z = vars[i++];
        d->gru.b_z = vars[i++];
        d->gru.W_r = vars[i++];
        d->gru.U_r = vars[i++];
        d->gru.b_r = vars[i++];
        d->gru.W_c = vars[i++];
        d->gru.U_c = vars[i++];
        d->gru.b_c = vars[i++];
        d->slope = vars[i++];
    }
    b.W_att = vars[i++];
    b.H = vars[i++];
    b.R = vars[i++];
    b.classifier_slope = vars[i++];
    return b;
}

// ---- per-timestep pieces ----

/// d = (1 - z) * d_prev + z * c with
/// z = sigmoid(W_z x + U_z d_prev + b_z), r = sigmoid(W_r x + U_r d_prev + b_r),
/// c = tanh(W_c x + U_c (r * d_prev) + b_c).
template <typename T>
Var gru_cell(Tape<T>& tape, Var x, Var d_prev, const BoundGru<T>& p) {
    Var z = sigmoid(tape, add(tape, affine(tape, p.W_z, x, p.b_z), matvec(tape, p.U_z, d_prev)));
    Var r = sigmoid(tape, add(tape, affine(tape, p.W_r, x, p.b_r), matvec(tape, p.U_r, d_prev)));
    Var c = tanh(tape, add(tape, affine(tape, p.W_c, x, p.b_c),
                           matvec(tape, p.U_c, hadamard(tape, r, d_prev))));
    return add(tape, hadamard(tape, one_minus(tape, z), d_prev), hadamard(tape, z, c));
}

/// phi(U h_prev + V k + W w) with phi the direction's PReLU.
template <typename T>
Var candidate_memory(Tape<T>& tape, Var w, Var k, Var h_prev, const BoundDirection<T>& dir) {
    Var pre = add(tape, add(tape, matvec(tape, dir.U, h_prev), matvec(tape, dir.V, k)),
                  matvec(tape, dir.W, w));
    return prelu(tape, pre, dir.slope);
}

/// Scalar gate sigmoid(w.h_prev + w.k [+ v.d]); the delay term is present
/// only in GateMode::Delayed.
template <typename T>
Var update_gate(Tape<T>& tape, Var w, Var k, Var h_prev, Var d, const BoundDirection<T>& dir,
                GateMode mode) {
    Var logit = add(tape, dot(tape, w, h_prev), dot(tape, w, k));
    if (mode == GateMode::Delayed) {
        logit = add(tape, logit, dot(tape, dir.v, d));
    }
    return sigmoid(tape, logit);
}

/// (h_prev + g * h_tilde) / ||h_prev + g * h_tilde||
template <typename T>
Var memory_step(Tape<T>& tape, Var h_prev, Var g, Var h_tilde) {
    return l2_normalize(tape, add(tape, h_prev, scale(tape, h_tilde, g)));
}

// ---- traces ----

/// Values recorded by one directional pass, indexed [chain][sentence position]
/// (the backward pass is stored in sentence order, not processing order).
template <typename T>
struct DirectionTrace {
    std::vector<std::vector<Vector<T>>> memory;
    std::vector<std::vector<Vector<T>>> delay;
    std::vector<std::vector<Vector<T>>> candidate;
    std::vector<std::vector<T>> gate;
};

template <typename T>
struct ChainTrace {
    DirectionTrace<T> fwd, bwd;

    std::size_t chains() const { return fwd.gate.size(); }
    std::size_t length() const { return fwd.gate.empty() ? 0 : fwd.gate.front().size(); }

    /// fwd + bwd memory at sentence position i.
    Vector<T> combined(std::size_t chain, std::size_t i) const {
        return fwd.memory[chain][i] + bwd.memory[chain][i];
    }
};

// ---- passes ----

/// Per-direction dropout-free inputs: tokens already on the tape.
template <typename T>
struct PassOutput {
    std::vector<Var> final_memory;  // per chain, after the full pass
};

/// Runs the chain updates over the sentence in one direction. Initial state
/// per chain: h = k / ||k||, d = 0. `reverse` consumes tokens right to left.
///
/// All chains advance together: memory, delay and candidate are D x n
/// matrices with one column per chain, which is the same arithmetic as
/// running gru_cell / candidate_memory / update_gate / memory_step per chain.
template <typename T>
PassOutput<T> directional_pass(Tape<T>& tape, std::span<const Var> tokens,
                               std::span<const Var> keys, const BoundDirection<T>& dir,
                               const ModelConfig& config, bool reverse,
                               DirectionTrace<T>* trace = nullptr) {
    const std::size_t m = tokens.size();
    if (m == 0) {
        throw EmptyInputError("directional_pass: empty sentence");
    }
    const std::size_t n = keys.size();
    const auto D = static_cast<Eigen::Index>(config.gru_hidden);
    const bool delayed = config.gate_mode == GateMode::Delayed;
    const auto& gru = dir.gru;

    struct Step {
        Var h, d, h_tilde, g;
    };
    std::vector<Step> steps;
    if (trace != nullptr) steps.resize(m);

    // W w_i is shared by every chain, V k_j is fixed over the sentence.
    std::vector<Var> Ww(m);
    for (std::size_t i = 0; i < m; ++i) Ww[i] = matvec(tape, dir.W, tokens[i]);
    Var K = hstack(tape, keys);
    Var VK = matmul(tape, dir.V, K);

    Var H = normalize_columns(tape, K);
    Var Dm = tape.constant(Matrix<T>::Zero(D, static_cast<Eigen::Index>(n)));
    for (std::size_t s = 0; s < m; ++s) {
        const std::size_t i = reverse ? m - 1 - s : s;
        Var w = tokens[i];
        Var H_tilde = prelu(tape, add_column(tape, add(tape, matmul(tape, dir.U, H), VK), Ww[i]), dir.slope);
        Var D_gate = Dm;
        if (delayed) {
            Var Z = sigmoid(tape, add(tape, add_column(tape, matmul(tape, gru.W_z, H_tilde), gru.b_z),
                                      matmul(tape, gru.U_z, Dm)));
            Var R = sigmoid(tape, add(tape, add_column(tape, matmul(tape, gru.W_r, H_tilde), gru.b_r),
                                      matmul(tape, gru.U_r, Dm)));
            Var C = tanh(tape, add(tape, add_column(tape, matmul(tape, gru.W_c, H_tilde), gru.b_c),
                                   matmul(tape, gru.U_c, hadamard(tape, R, Dm))));
            Var D_next = add(tape, hadamard(tape, one_minus(tape, Z), Dm), hadamard(tape, Z, C));
            if (config.delay_input == DelayInput::Current) D_gate = D_next;
            Dm = D_next;
        }
        Var logit = add(tape, vecmat(tape, w, H), vecmat(tape, w, K));
        if (delayed) logit = add(tape, logit, vecmat(tape, dir.v, D_gate));
        Var G = sigmoid(tape, logit);
        H = normalize_columns(tape, add(tape, H, scale_columns(tape, H_tilde, G)));
        if (trace != nullptr) steps[i] = {H, Dm, H_tilde, G};
    }

    PassOutput<T> out;
    for (std::size_t j = 0; j < n; ++j) {
        out.final_memory.push_back(column(tape, H, static_cast<Eigen::Index>(j)));
    }

    if (trace != nullptr) {
        trace->memory.assign(n, std::vector<Vector<T>>(m));
        trace->delay.assign(n, std::vector<Vector<T>>(m));
        trace->candidate.assign(n, std::vector<Vector<T>>(m));
        trace->gate.assign(n, std::vector<T>(m));
        for (std::size_t i = 0; i < m; ++i) {
            const auto h = tape.value(steps[i].h);
            const auto d = tape.value(steps[i].d);
            const auto c = tape.value(steps[i].h_tilde);
            const auto g = tape.vec(steps[i].g);
            for (std::size_t j = 0; j < n; ++j) {
                const auto jj = static_cast<Eigen::Index>(j);
                trace->memory[j][i] = h.col(jj);
                trace->delay[j][i] = d.col(jj);
                trace->candidate[j][i] = c.col(jj);
                trace->gate[j][i] = g(jj);
            }
        }
    }
    return out;
}

/// Both directions; the per-chain summary is the forward state after the
/// left-to-right pass plus the backward state after the right-to-left pass.
template <typename T>
std::vector<Var> encode_bidirectional(Tape<T>& tape, std::span<const Var> tokens,
                                      const BoundParams<T>& params, const ModelConfig& config,
                                      ChainTrace<T>* trace = nullptr) {
    auto f = directional_pass(tape, tokens, params.keys, params.fwd, config, false,
                              trace ? &trace->fwd : nullptr);
    auto b = directional_pass(tape, tokens, params.keys, params.bwd, config, true,
                              trace ? &trace->bwd : nullptr);
    std::vector<Var> summary(f.final_memory.size());
    for (std::size_t j = 0; j < summary.size(); ++j) {
        summary[j] = add(tape, f.final_memory[j], b.final_memory[j]);
    }
    return summary;
}

/// p_j = softmax_j(k_j^T W_att [t; a])
template <typename T>
Var attend(Tape<T>& tape, std::span<const Var> keys, Var t, Var a, Var W_att) {
    Var query = matvec(tape, W_att, concat(tape, t, a));
    std::vector<Var> logits;
    logits.reserve(keys.size());
    for (Var k : keys) logits.push_back(dot(tape, k, query));
    return softmax(tape, stack<T>(tape, logits));
}

/// Class logits R * mask(phi(H u + a)). `mask` is an invalid Var in eval mode.
template <typename T>
Var classify_logits(Tape<T>& tape, Var u, Var a, Var H, Var R, Var slope, Var mask = Var{}) {
    Var z = prelu(tape, add(tape, matvec(tape, H, u), a), slope);
    if (mask.valid()) z = hadamard(tape, z, mask);
    return matvec(tape, R, z);
}

template <typename T>
Var classify(Tape<T>& tape, Var u, Var a, Var H, Var R, Var slope, Var mask = Var{}) {
    return softmax(tape, classify_logits(tape, u, a, H, R, slope, mask));
}

// ---- whole-model forward ----

/// Embedded form of an Instance: token rows, target and aspect vectors.
template <typename T>
struct EncodedInput {
    std::shared_ptr<const Matrix<T>> tokens;  // [m x D], shared by a sentence's instances
    Vector<T> target;
    Vector<T> aspect;
    Polarity gold = Polarity::None;
};

template <typename T>
Matrix<T> embed_tokens(std::span<const std::string> tokens, const EmbeddingTable& table) {
    if (tokens.empty()) {
        throw EmptyInputError("embed_tokens: empty sentence");
    }
    Matrix<T> m(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(table.dim()));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        table.lookup_into<T>(tokens[i], std::span<T>(m.row(static_cast<Eigen::Index>(i)).data(),
                                                     table.dim()));
    }
    return m;
}

template <typename T>
Vector<T> embed_token(const std::string& token, const EmbeddingTable& table) {
    Vector<T> v(static_cast<Eigen::Index>(table.dim()));
    table.lookup_into<T>(token, std::span<T>(v.data(), table.dim()));
    return v;
}

template <typename T>
Vector<T> embed_aspect(const std::string& aspect, const EmbeddingTable& table,
                       std::span<const std::string> aspects = default_aspects()) {
    const auto a = aspect_vector<T>(aspect, table, aspects);
    return Eigen::Map<const Vector<T>>(a.data(), static_cast<Eigen::Index>(a.size()));
}

template <typename T>
EncodedInput<T> encode_input(const Instance& inst, const EmbeddingTable& table,
                             std::span<const std::string> aspects = default_aspects()) {
    EncodedInput<T> e;
    e.tokens = std::make_shared<const Matrix<T>>(embed_tokens<T>(inst.tokens, table));
    e.target = embed_token<T>(inst.target, table);
    e.aspect = embed_aspect<T>(inst.aspect, table, aspects);
    e.gold = inst.gold;
    return e;
}

/// Inverted-dropout masks; empty vectors mean "no dropout".
template <typename T>
struct DropoutMasks {
    Vector<T> input;       // shared by every timestep and both directions
    Vector<T> classifier;  // output of phi in the classifier
};

template <typename T>
struct Prediction {
    Vector<T> probabilities;  // over (positive, negative, none)
    Vector<T> attention;      // over chains
    Vector<T> summary;        // u
    Polarity predicted() const {
        Eigen::Index k = 0;
        probabilities.maxCoeff(&k);
        return static_cast<Polarity>(k);
    }
};

/// Tape handles produced by forward().
struct ForwardVars {
    Var logits, probabilities, attention, summary;
};

/// Records the full model for one input: both passes, attention over chain
/// summaries, classifier. Token dropout is applied to the embedded rows before
/// they enter the tape.
template <typename T>
ForwardVars forward_on_tape(Tape<T>& tape, const BoundParams<T>& bound, const EncodedInput<T>& in,
                            const ModelConfig& config, const DropoutMasks<T>* masks = nullptr,
                            ChainTrace<T>* trace = nullptr) {
    if (!in.tokens || in.tokens->rows() == 0) {
        throw EmptyInputError("forward: empty sentence");
    }
    const Matrix<T>& rows = *in.tokens;
    const auto m = rows.rows();
    const auto D = static_cast<Eigen::Index>(config.embed_dim);
    if (rows.cols() != D || in.target.size() != D || in.aspect.size() != D) {
        throw DimensionError("forward: input vectors do not match embed_dim");
    }
    const bool mask_input = masks != nullptr && masks->input.size() > 0;
    std::vector<Var> tokens(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        if (mask_input) {
            tokens[static_cast<std::size_t>(i)] =
                tape.constant(rows.row(i).transpose().cwiseProduct(masks->input));
        } else {
            tokens[static_cast<std::size_t>(i)] = tape.constant(rows.row(i).transpose());
        }
    }
    std::vector<Var> summary = encode_bidirectional(tape, tokens, bound, config, trace);
    Var t = tape.constant(in.target);
    Var a = tape.constant(in.aspect);
    Var p = attend(tape, bound.keys, t, a, bound.W_att);
    Var u = weighted_sum(tape, p, std::span<const Var>(summary));
    Var mask;
    if (masks != nullptr && masks->classifier.size() > 0) mask = tape.constant(masks->classifier);
    Var logits = classify_logits(tape, u, a, bound.H, bound.R, bound.classifier_slope, mask);
    return {logits, softmax(tape, logits), p, u};
}

/// Evaluation-mode forward pass (no dropout, no gradients).
template <typename T>
Prediction<T> forward(const ModelParams<T>& params, const ModelConfig& config,
                      const EncodedInput<T>& in, ChainTrace<T>* trace = nullptr) {
    Tape<T> tape(false);
    auto bound = bind(tape, params, static_cast<ModelParams<T>*>(nullptr));
    auto vars = forward_on_tape(tape, bound, in, config, static_cast<const DropoutMasks<T>*>(nullptr), trace);
    return {tape.vec(vars.probabilities), tape.vec(vars.attention), tape.vec(vars.summary)};
}

/// Encodes a sentence once and classifies several (target, aspect) queries.
template <typename T>
std::vector<Prediction<T>> predict_sentence(const ModelParams<T>& params, const ModelConfig& config,
                                            const Matrix<T>& tokens,
                                            std::span<const std::pair<Vector<T>, Vector<T>>> queries,
                                            ChainTrace<T>* trace = nullptr) {
    Tape<T> tape(false);
    auto bound = bind(tape, params, static_cast<ModelParams<T>*>(nullptr));
    std::vector<Var> tv(static_cast<std::size_t>(tokens.rows()));
    for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
        tv[static_cast<std::size_t>(i)] = tape.constant(tokens.row(i).transpose());
    }
    std::vector<Var> summary = encode_bidirectional(tape, tv, bound, config, trace);
    std::vector<Prediction<T>> out;
    out.reserve(queries.size());
    for (const auto& [target, aspect] : queries) {
        Var t = tape.constant(target);
        Var a = tape.constant(aspect);
        Var p = attend(tape, bound.keys, t, a, bound.W_att);
        Var u = weighted_sum(tape, p, std::span<const Var>(summary));
        Var probs = classify(tape, u, a, bound.H, bound.R, bound.classifier_slope);
        out.push_back({tape.vec(probs), tape.vec(p), tape.vec(u)});
    }
    return out;
}

/// -log yhat[gold] from logits, in the fused log-softmax form.
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, Polarity gold) {
    return cross_entropy_logits(tape, logits, static_cast<Eigen::Index>(gold));
}

}  // namespace dmu
