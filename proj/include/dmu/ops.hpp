#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dmu/tape.hpp"

// Differentiable primitives. Each records one node on the tape; the matching
// gradient rule lives in Tape::propagate.

namespace dmu {

namespace detail {

template <typename T>
void require_vector_length(const Tape<T>& tape, Var v, Eigen::Index n, const char* what) {
    if (tape.cols(v) != 1 || tape.rows(v) != n) {
        throw DimensionError(std::string(what) + ": expected vector of length " +
                             std::to_string(n) + ", got " + std::to_string(tape.rows(v)) + "x" +
                             std::to_string(tape.cols(v)));
    }
}

template <typename T>
void require_same_shape(const Tape<T>& tape, Var a, Var b, const char* what) {
    if (tape.rows(a) != tape.rows(b) || tape.cols(a) != tape.cols(b)) {
        throw DimensionError(std::string(what) + ": operand shapes differ");
    }
}

template <typename T>
void require_scalar(const Tape<T>& tape, Var v, const char* what) {
    if (tape.length(v) != 1) {
        throw DimensionError(std::string(what) + ": expected a scalar");
    }
}

template <typename T>
T clamp_open_unit(T y) {
    constexpr T lo = std::numeric_limits<T>::min();
    const T hi = std::nextafter(T(1), T(0));
    return std::min(std::max(y, lo), hi);
}

}  // namespace detail

/// y = M x
template <typename T>
Var matvec(Tape<T>& tape, Var m, Var x) {
    detail::require_vector_length(tape, x, tape.cols(m), "matvec");
    Var y = tape.push(Op::MatVec, tape.rows(m), 1, tape.requires_grad(m) || tape.requires_grad(x));
    tape.set_inputs(y, {m, x});
    tape.mutable_vec(y).noalias() = tape.value(m) * tape.vec(x);
    return y;
}

/// y = M x + b
template <typename T>
Var affine(Tape<T>& tape, Var m, Var x, Var b) {
    detail::require_vector_length(tape, x, tape.cols(m), "affine");
    detail::require_vector_length(tape, b, tape.rows(m), "affine bias");
    Var y = tape.push(Op::Affine, tape.rows(m), 1,
                      tape.requires_grad(m) || tape.requires_grad(x) || tape.requires_grad(b));
    tape.set_inputs(y, {m, x, b});
    tape.mutable_vec(y).noalias() = tape.value(m) * tape.vec(x);
    tape.mutable_vec(y) += tape.vec(b);
    return y;
}

template <typename T>
Var affine(Tape<T>& tape, Var m, Var x) {
    return matvec(tape, m, x);
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
    detail::require_same_shape(tape, a, b, "add");
    Var y = tape.push(Op::Add, tape.rows(a), tape.cols(a),
                      tape.requires_grad(a) || tape.requires_grad(b));
    tape.set_inputs(y, {a, b});
    tape.mutable_value(y) = tape.value(a) + tape.value(b);
    return y;
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
    detail::require_same_shape(tape, a, b, "sub");
    Var y = tape.push(Op::Sub, tape.rows(a), tape.cols(a),
                      tape.requires_grad(a) || tape.requires_grad(b));
    tape.set_inputs(y, {a, b});
    tape.mutable_value(y) = tape.value(a) - tape.value(b);
    return y;
}

template <typename T>
Var hadamard(Tape<T>& tape, Var a, Var b) {
    detail::require_same_shape(tape, a, b, "hadamard");
    Var y = tape.push(Op::Hadamard, tape.rows(a), tape.cols(a),
                      tape.requires_grad(a) || tape.requires_grad(b));
    tape.set_inputs(y, {a, b});
    tape.mutable_value(y) = tape.value(a).cwiseProduct(tape.value(b));
    return y;
}

/// y = s * x for a scalar node s.
template <typename T>
Var scale(Tape<T>& tape, Var x, Var s) {
    detail::require_scalar(tape, s, "scale");
    Var y = tape.push(Op::Scale, tape.rows(x), tape.cols(x),
                      tape.requires_grad(x) || tape.requires_grad(s));
    tape.set_inputs(y, {x, s});
    tape.mutable_value(y) = tape.scalar(s) * tape.value(x);
    return y;
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T c) {
    Var y = tape.push(Op::ScaleConst, tape.rows(x), tape.cols(x), tape.requires_grad(x));
    tape.set_inputs(y, {x});
    tape.set_aux(y, c);
    tape.mutable_value(y) = c * tape.value(x);
    return y;
}

/// y = 1 - x
template <typename T>
Var one_minus(Tape<T>& tape, Var x) {
    Var y = tape.push(Op::OneMinus, tape.rows(x), tape.cols(x), tape.requires_grad(x));
    tape.set_inputs(y, {x});
    tape.mutable_value(y) = (T(1) - tape.value(x).array()).matrix();
    return y;
}

template <typename T>
Var dot(Tape<T>& tape, Var a, Var b) {
    if (tape.length(a) != tape.length(b)) {
        throw DimensionError("dot: operand lengths differ");
    }
    Var y = tape.push(Op::Dot, 1, 1, tape.requires_grad(a) || tape.requires_grad(b));
    tape.set_inputs(y, {a, b});
    tape.mutable_vec(y)(0) = tape.vec(a).dot(tape.vec(b));
    return y;
}

/// Elementwise logistic function; outputs are kept strictly inside (0, 1).
template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
    Var y = tape.push(Op::Sigmoid, tape.rows(x), tape.cols(x), tape.requires_grad(x));
    tape.set_inputs(y, {x});
    auto in = tape.vec(x);
    auto out = tape.mutable_vec(y);
    for (Eigen::Index k = 0; k < in.size(); ++k) {
        const T v = in(k);
        T s;
        if (v >= T(0)) {
            s = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            s = e / (T(1) + e);
        }
        out(k) = detail::clamp_open_unit(s);
    }
    return y;
}

template <typename T>
Var tanh(Tape<T>& tape, Var x) {
    Var y = tape.push(Op::Tanh, tape.rows(x), tape.cols(x), tape.requires_grad(x));
    tape.set_inputs(y, {x});
    tape.mutable_vec(y) = tape.vec(x).array().tanh().matrix();
    return y;
}

/// Parametric ReLU with one shared slope (a scalar node). The subgradient at
/// x = 0 is taken from the positive branch.
template <typename T>
Var prelu(Tape<T>& tape, Var x, Var slope) {
    detail::require_scalar(tape, slope, "prelu");
    Var y = tape.push(Op::Prelu, tape.rows(x), tape.cols(x),
                      tape.requires_grad(x) || tape.requires_grad(slope));
    tape.set_inputs(y, {x, slope});
    const T s = tape.scalar(slope);
    auto in = tape.vec(x);
    auto out = tape.mutable_vec(y);
    for (Eigen::Index k = 0; k < in.size(); ++k) {
        out(k) = in(k) >= T(0) ? in(k) : s * in(k);
    }
    return y;
}

template <typename T>
Var softmax(Tape<T>& tape, Var z) {
    if (tape.length(z) == 0) {
        throw DimensionError("softmax: empty input");
    }
    Var y = tape.push(Op::Softmax, tape.length(z), 1, tape.requires_grad(z));
    tape.set_inputs(y, {z});
    auto in = tape.vec(z);
    auto out = tape.mutable_vec(y);
    const T zmax = in.maxCoeff();
    out = (in.array() - zmax).exp().matrix();
    out /= out.sum();
    return y;
}

/// x / ||x||. Throws DegenerateNormError when ||x|| <= kNormEpsilon.
template <typename T>
Var l2_normalize(Tape<T>& tape, Var x) {
    const T norm = tape.vec(x).norm();
    if (!(norm > static_cast<T>(kNormEpsilon))) {
        throw DegenerateNormError("l2_normalize: norm " + std::to_string(norm) +
                                  " is at or below the degeneracy threshold");
    }
    Var y = tape.push(Op::L2Normalize, tape.rows(x), tape.cols(x), tape.requires_grad(x));
    tape.set_inputs(y, {x});
    tape.set_aux(y, norm);
    tape.mutable_value(y) = tape.value(x) / norm;
    return y;
}

/// [a; b]
template <typename T>
Var concat(Tape<T>& tape, Var a, Var b) {
    const Eigen::Index la = tape.length(a);
    const Eigen::Index lb = tape.length(b);
    Var y = tape.push(Op::Concat, la + lb, 1, tape.requires_grad(a) || tape.requires_grad(b));
    tape.set_inputs(y, {a, b});
    tape.mutable_vec(y).head(la) = tape.vec(a);
    tape.mutable_vec(y).tail(lb) = tape.vec(b);
    return y;
}

/// Packs scalar nodes into a vector.
template <typename T>
Var stack(Tape<T>& tape, std::span<const Var> scalars) {
    if (scalars.empty()) {
        throw DimensionError("stack: empty input");
    }
    bool rg = false;
    for (Var s : scalars) {
        detail::require_scalar(tape, s, "stack");
        rg = rg || tape.requires_grad(s);
    }
    Var y = tape.push(Op::Stack, static_cast<Eigen::Index>(scalars.size()), 1, rg);
    tape.set_list(y, scalars);
    for (std::size_t k = 0; k < scalars.size(); ++k) {
        tape.mutable_vec(y)(static_cast<Eigen::Index>(k)) = tape.scalar(scalars[k]);
    }
    return y;
}

template <typename T>
Var element(Tape<T>& tape, Var v, Eigen::Index index) {
    if (index < 0 || index >= tape.length(v)) {
        throw DimensionError("element: index out of range");
    }
    Var y = tape.push(Op::Element, 1, 1, tape.requires_grad(v));
    tape.set_inputs(y, {v});
    tape.set_label(y, index);
    tape.mutable_vec(y)(0) = tape.vec(v)(index);
    return y;
}

/// sum_k weights[k] * items[k]
template <typename T>
Var weighted_sum(Tape<T>& tape, Var weights, std::span<const Var> items) {
    if (items.empty() || tape.length(weights) != static_cast<Eigen::Index>(items.size())) {
        throw DimensionError("weighted_sum: weight count does not match item count");
    }
    bool rg = tape.requires_grad(weights);
    for (Var v : items) {
        detail::require_same_shape(tape, v, items.front(), "weighted_sum");
        rg = rg || tape.requires_grad(v);
    }
    Var y = tape.push(Op::WeightedSum, tape.rows(items.front()), tape.cols(items.front()), rg);
    tape.set_inputs(y, {weights});
    tape.set_list(y, items);
    auto out = tape.mutable_vec(y);
    const auto p = tape.vec(weights);
    for (std::size_t k = 0; k < items.size(); ++k) {
        out += p(static_cast<Eigen::Index>(k)) * tape.vec(items[k]);
    }
    return y;
}

template <typename T>
Var sum(Tape<T>& tape, std::span<const Var> items) {
    if (items.empty()) {
        throw DimensionError("sum: empty input");
    }
    bool rg = false;
    for (Var v : items) {
        detail::require_same_shape(tape, v, items.front(), "sum");
        rg = rg || tape.requires_grad(v);
    }
    Var y = tape.push(Op::Sum, tape.rows(items.front()), tape.cols(items.front()), rg);
    tape.set_list(y, items);
    auto out = tape.mutable_value(y);
    for (Var v : items) {
        out += tape.value(v);
    }
    return y;
}

/// Arithmetic mean of scalar nodes.
template <typename T>
Var mean(Tape<T>& tape, std::span<const Var> scalars) {
    if (scalars.empty()) {
        throw DimensionError("mean: empty input");
    }
    bool rg = false;
    T acc = T(0);
    for (Var s : scalars) {
        detail::require_scalar(tape, s, "mean");
        rg = rg || tape.requires_grad(s);
        acc += tape.scalar(s);
    }
    Var y = tape.push(Op::Mean, 1, 1, rg);
    tape.set_list(y, scalars);
    tape.mutable_vec(y)(0) = acc / static_cast<T>(scalars.size());
    return y;
}

/// -log softmax(logits)[label], evaluated as logsumexp(logits) - logits[label].
template <typename T>
Var cross_entropy_logits(Tape<T>& tape, Var logits, Eigen::Index label) {
    if (label < 0 || label >= tape.length(logits)) {
        throw DimensionError("cross_entropy: label out of range");
    }
    Var y = tape.push(Op::CrossEntropyLogits, 1, 1, tape.requires_grad(logits));
    tape.set_inputs(y, {logits});
    tape.set_label(y, label);
    auto z = tape.vec(logits);
    const T zmax = z.maxCoeff();
    const T lse = zmax + std::log((z.array() - zmax).exp().sum());
    tape.mutable_vec(y)(0) = lse - z(label);
    return y;
}

/// ||M||_F with subgradient 0 at M = 0.
template <typename T>
Var frobenius_norm(Tape<T>& tape, Var m) {
    Var y = tape.push(Op::FrobeniusNorm, 1, 1, tape.requires_grad(m));
    tape.set_inputs(y, {m});
    tape.mutable_vec(y)(0) = tape.value(m).norm();
    return y;
}

/// ||x||^2 (sum of squared entries).
template <typename T>
Var squared_norm(Tape<T>& tape, Var x) {
    Var y = tape.push(Op::SquaredNorm, 1, 1, tape.requires_grad(x));
    tape.set_inputs(y, {x});
    tape.mutable_vec(y)(0) = tape.value(x).squaredNorm();
    return y;
}

// ---- column-batched forms ----
//
// A D x n matrix holds one vector per memory chain in its columns, so a step
// over every chain records a handful of nodes instead of a handful per chain.

/// Y = A B
template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
    if (tape.cols(a) != tape.rows(b)) {
        throw DimensionError("matmul: inner dimensions differ");
    }
    Var y = tape.push(Op::MatMul, tape.rows(a), tape.cols(b), tape.requires_grad(a) || tape.requires_grad(b));
    tape.set_inputs(y, {a, b});
    tape.mutable_value(y).noalias() = tape.value(a) * tape.value(b);
    return y;
}

/// y_j = w . H[:, j], a vector with one entry per column.
template <typename T>
Var vecmat(Tape<T>& tape, Var w, Var h) {
    detail::require_vector_length(tape, w, tape.rows(h), "vecmat");
    Var y = tape.push(Op::VecMat, tape.cols(h), 1, tape.requires_grad(w) || tape.requires_grad(h));
    tape.set_inputs(y, {w, h});
    tape.mutable_vec(y).noalias() = tape.value(h).transpose() * tape.vec(w);
    return y;
}

/// Y = A + b 1^T (b added to every column).
template <typename T>
Var add_column(Tape<T>& tape, Var a, Var b) {
    detail::require_vector_length(tape, b, tape.rows(a), "add_column");
    Var y = tape.push(Op::AddColumn, tape.rows(a), tape.cols(a), tape.requires_grad(a) || tape.requires_grad(b));
    tape.set_inputs(y, {a, b});
    tape.mutable_value(y) = tape.value(a).colwise() + tape.vec(b);
    return y;
}

/// Y[:, j] = s_j A[:, j]
template <typename T>
Var scale_columns(Tape<T>& tape, Var a, Var s) {
    detail::require_vector_length(tape, s, tape.cols(a), "scale_columns");
    Var y = tape.push(Op::ScaleColumns, tape.rows(a), tape.cols(a),
                      tape.requires_grad(a) || tape.requires_grad(s));
    tape.set_inputs(y, {a, s});
    tape.mutable_value(y) = tape.value(a) * tape.vec(s).asDiagonal();
    return y;
}

/// Each column scaled to unit length. Throws DegenerateNormError when any
/// column norm is at or below kNormEpsilon.
template <typename T>
Var normalize_columns(Tape<T>& tape, Var a) {
    const auto x = tape.value(a);
    Vector<T> norms(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        norms(j) = x.col(j).norm();
        if (!(norms(j) > static_cast<T>(kNormEpsilon))) {
            throw DegenerateNormError("normalize_columns: column " + std::to_string(j) + " has norm " +
                                      std::to_string(norms(j)));
        }
    }
    Var y = tape.push(Op::NormalizeColumns, x.rows(), x.cols(), tape.requires_grad(a));
    tape.set_inputs(y, {a});
    tape.mutable_value(y) = tape.value(a) * norms.cwiseInverse().asDiagonal();
    return y;
}

template <typename T>
Var column(Tape<T>& tape, Var a, Eigen::Index j) {
    if (j < 0 || j >= tape.cols(a)) {
        throw DimensionError("column: index out of range");
    }
    Var y = tape.push(Op::Column, tape.rows(a), 1, tape.requires_grad(a));
    tape.set_inputs(y, {a});
    tape.set_label(y, j);
    tape.mutable_vec(y) = tape.value(a).col(j);
    return y;
}

/// [v_0 v_1 ...] from equal-length vectors.
template <typename T>
Var hstack(Tape<T>& tape, std::span<const Var> columns) {
    if (columns.empty()) {
        throw DimensionError("hstack: empty input");
    }
    const Eigen::Index rows = tape.length(columns.front());
    bool rg = false;
    for (Var v : columns) {
        detail::require_vector_length(tape, v, rows, "hstack");
        rg = rg || tape.requires_grad(v);
    }
    Var y = tape.push(Op::HStack, rows, static_cast<Eigen::Index>(columns.size()), rg);
    tape.set_list(y, columns);
    auto out = tape.mutable_value(y);
    for (std::size_t k = 0; k < columns.size(); ++k) {
        out.col(static_cast<Eigen::Index>(k)) = tape.vec(columns[k]);
    }
    return y;
}

}  // namespace dmu
