#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmu/dense_array.hpp"
#include "dmu/error.hpp"

namespace dmu {

/// Handle to a value recorded on a Tape.
struct Var {
    std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
    bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

/// Smallest norm l2_normalize accepts.
inline constexpr double kNormEpsilon = 1e-12;

enum class Op : std::uint8_t {
    Leaf,
    MatVec,
    Affine,
    Add,
    Sub,
    Hadamard,
    Scale,
    ScaleConst,
    OneMinus,
    Dot,
    Sigmoid,
    Tanh,
    Prelu,
    Softmax,
    L2Normalize,
    Concat,
    Stack,
    Element,
    WeightedSum,
    Sum,
    Mean,
    CrossEntropyLogits,
    FrobeniusNorm,
    SquaredNorm,
    // column-batched forms: one column per memory chain
    MatMul,
    VecMat,
    AddColumn,
    ScaleColumns,
    NormalizeColumns,
    Column,
    HStack,
};

/// Reverse-mode gradient tape.
///
/// Values live in one contiguous arena; every node stores an opcode and the
/// ids of its inputs, so recording allocates nothing beyond arena growth.
/// Parameters are leaves that read external storage and, when given a sink,
/// accumulate their gradient straight into it during backward().
///
/// A tape is single-threaded. Maps returned by value()/grad() are invalidated
/// by any further recording.
template <typename T>
class Tape {
public:
    using MatrixMap = Eigen::Map<Matrix<T>>;
    using ConstMatrixMap = Eigen::Map<const Matrix<T>>;
    using VectorMap = Eigen::Map<Vector<T>>;
    using ConstVectorMap = Eigen::Map<const Vector<T>>;

    /// With `record_gradients` false the tape only evaluates; backward() is unavailable.
    explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}

    bool recording() const noexcept { return recording_; }

    /// Forgets every node but keeps the arenas' capacity for reuse.
    void clear() noexcept {
        nodes_.clear();
        values_.clear();
        grads_.clear();
        links_.clear();
        seeded_.clear();
    }
    std::size_t size() const noexcept { return nodes_.size(); }

    Var constant(std::span<const T> values, Eigen::Index rows, Eigen::Index cols = 1) {
        if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
            throw DimensionError("constant: value count does not match shape");
        }
        Var v = push(Op::Leaf, rows, cols, false);
        std::copy(values.begin(), values.end(), values_.begin() + nodes_[v.id].offset);
        return v;
    }

    Var constant(const DenseArray<T>& a) {
        return constant(a.values(), static_cast<Eigen::Index>(a.rows()),
                        static_cast<Eigen::Index>(a.cols()));
    }

    template <typename Derived>
    Var constant(const Eigen::MatrixBase<Derived>& m) {
        Var v = push(Op::Leaf, m.rows(), m.cols(), false);
        mutable_value(v) = m;
        return v;
    }

    Var scalar_constant(T x) { return constant(std::span<const T>(&x, 1), 1, 1); }

    /// Leaf reading `value` in place. If `grad_sink` is non-null its contents
    /// receive += dLoss/dValue on backward(); it must match `value`'s shape
    /// and outlive the tape.
    Var parameter(const DenseArray<T>& value, DenseArray<T>* grad_sink) {
        if (grad_sink != nullptr && grad_sink->shape() != value.shape()) {
            throw DimensionError("parameter: gradient sink shape differs from value shape");
        }
        Node n;
        n.op = Op::Leaf;
        n.rows = static_cast<Eigen::Index>(value.rows());
        n.cols = static_cast<Eigen::Index>(value.cols());
        n.external = value.data();
        n.sink = recording_ ? grad_sink : nullptr;
        n.requires_grad = n.sink != nullptr;
        nodes_.push_back(n);
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    Eigen::Index rows(Var v) const { return node(v).rows; }
    Eigen::Index cols(Var v) const { return node(v).cols; }
    Eigen::Index length(Var v) const { return node(v).rows * node(v).cols; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }

    ConstMatrixMap value(Var v) const {
        const Node& n = node(v);
        return {data_of(n), n.rows, n.cols};
    }
    ConstVectorMap vec(Var v) const {
        const Node& n = node(v);
        return {data_of(n), n.rows * n.cols};
    }
    T scalar(Var v) const {
        const Node& n = node(v);
        if (n.rows * n.cols != 1) {
            throw DimensionError("scalar: value is not 1x1");
        }
        return *data_of(n);
    }

    /// Gradient of the last backward() with respect to an internal node.
    ConstVectorMap grad(Var v) const {
        const Node& n = node(v);
        if (n.external != nullptr) {
            throw ContractError("grad: parameter gradients are written to their sink");
        }
        if (grads_.size() != values_.size()) {
            throw ContractError("grad: backward() has not been run");
        }
        return {grads_.data() + n.offset, n.rows * n.cols};
    }

    /// Propagates d(loss)/d(node) to every node in reverse recording order.
    /// Parameter sinks are accumulated into, not overwritten.
    void backward(Var loss) {
        if (!recording_) {
            throw ContractError("backward: tape was created without gradient recording");
        }
        const Node& ln = node(loss);
        if (ln.rows * ln.cols != 1) {
            throw ContractError("backward: loss must be a scalar");
        }
        grads_.assign(values_.size(), T(0));
        if (!ln.requires_grad) {
            return;
        }
        seeded_.assign(nodes_.size(), 0);
        seeded_[loss.id] = 1;
        if (ln.external == nullptr) {
            grads_[ln.offset] = T(1);
        } else {
            *ln.sink->data() += T(1);
        }
        for (std::uint32_t i = loss.id + 1; i-- > 0;) {
            if (seeded_[i] && nodes_[i].requires_grad && nodes_[i].op != Op::Leaf) {
                propagate(i);
            }
        }
    }

    // ---- recording interface used by the operations below ----

    Var push(Op op, Eigen::Index rows, Eigen::Index cols, bool requires_grad) {
        Node n;
        n.op = op;
        n.rows = rows;
        n.cols = cols;
        n.offset = values_.size();
        n.requires_grad = recording_ && requires_grad;
        values_.resize(values_.size() + static_cast<std::size_t>(rows * cols), T(0));
        nodes_.push_back(n);
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    void set_inputs(Var out, std::initializer_list<Var> in) {
        std::size_t k = 0;
        for (Var v : in) {
            nodes_[out.id].in[k++] = v.id;
        }
    }

    void set_list(Var out, std::span<const Var> in) {
        nodes_[out.id].list_offset = static_cast<std::uint32_t>(links_.size());
        nodes_[out.id].list_size = static_cast<std::uint32_t>(in.size());
        for (Var v : in) {
            links_.push_back(v.id);
        }
    }

    void set_aux(Var out, T aux) { nodes_[out.id].aux = aux; }
    void set_label(Var out, std::int64_t label) { nodes_[out.id].label = label; }

    MatrixMap mutable_value(Var v) {
        Node& n = nodes_[v.id];
        return {values_.data() + n.offset, n.rows, n.cols};
    }
    VectorMap mutable_vec(Var v) {
        Node& n = nodes_[v.id];
        return {values_.data() + n.offset, n.rows * n.cols};
    }

private:
    struct Node {
        Op op = Op::Leaf;
        bool requires_grad = false;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        std::size_t offset = 0;
        const T* external = nullptr;
        DenseArray<T>* sink = nullptr;
        std::array<std::uint32_t, 3> in{};
        std::uint32_t list_offset = 0;
        std::uint32_t list_size = 0;
        T aux = T(0);
        std::int64_t label = 0;
    };

    const Node& node(Var v) const {
        if (!v.valid() || v.id >= nodes_.size()) {
            throw ContractError("tape: invalid variable handle");
        }
        return nodes_[v.id];
    }

    const T* data_of(const Node& n) const {
        return n.external != nullptr ? n.external : values_.data() + n.offset;
    }

    ConstMatrixMap val(std::uint32_t id) const {
        const Node& n = nodes_[id];
        return {data_of(n), n.rows, n.cols};
    }
    ConstVectorMap vval(std::uint32_t id) const {
        const Node& n = nodes_[id];
        return {data_of(n), n.rows * n.cols};
    }
    ConstVectorMap own_grad(std::uint32_t id) const {
        const Node& n = nodes_[id];
        return {grads_.data() + n.offset, n.rows * n.cols};
    }
    ConstMatrixMap own_grad_matrix(std::uint32_t id) const {
        const Node& n = nodes_[id];
        return {grads_.data() + n.offset, n.rows, n.cols};
    }

    bool wants(std::uint32_t id) const { return nodes_[id].requires_grad; }

    /// Target to accumulate the gradient of input `id` into; marks it reached.
    MatrixMap target(std::uint32_t id) {
        Node& n = nodes_[id];
        seeded_[id] = 1;
        if (n.external != nullptr) {
            return {n.sink->data(), n.rows, n.cols};
        }
        return {grads_.data() + n.offset, n.rows, n.cols};
    }
    VectorMap vtarget(std::uint32_t id) {
        auto m = target(id);
        return {m.data(), m.size()};
    }

    void propagate(std::uint32_t i) {
        const Node& n = nodes_[i];
        const auto g = own_grad(i);
        const auto y = vval(i);
        const std::uint32_t a = n.in[0];
        const std::uint32_t b = n.in[1];
        const std::uint32_t c = n.in[2];
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::MatVec:
            case Op::Affine: {
                if (wants(a)) {
                    target(a).noalias() += g * vval(b).transpose();
                }
                if (wants(b)) {
                    vtarget(b).noalias() += val(a).transpose() * g;
                }
                if (n.op == Op::Affine && wants(c)) {
                    vtarget(c) += g;
                }
                break;
            }
            case Op::Add:
                if (wants(a)) vtarget(a) += g;
                if (wants(b)) vtarget(b) += g;
                break;
            case Op::Sub:
                if (wants(a)) vtarget(a) += g;
                if (wants(b)) vtarget(b) -= g;
                break;
            case Op::Hadamard:
                if (wants(a)) vtarget(a) += g.cwiseProduct(vval(b));
                if (wants(b)) vtarget(b) += g.cwiseProduct(vval(a));
                break;
            case Op::Scale: {
                const T s = vval(b)(0);
                if (wants(a)) vtarget(a) += s * g;
                if (wants(b)) vtarget(b)(0) += g.dot(vval(a));
                break;
            }
            case Op::ScaleConst:
                if (wants(a)) vtarget(a) += n.aux * g;
                break;
            case Op::OneMinus:
                if (wants(a)) vtarget(a) -= g;
                break;
            case Op::Dot:
                if (wants(a)) vtarget(a) += g(0) * vval(b);
                if (wants(b)) vtarget(b) += g(0) * vval(a);
                break;
            case Op::Sigmoid:
                if (wants(a)) {
                    vtarget(a).array() += g.array() * y.array() * (T(1) - y.array());
                }
                break;
            case Op::Tanh:
                if (wants(a)) {
                    vtarget(a).array() += g.array() * (T(1) - y.array().square());
                }
                break;
            case Op::Prelu: {
                const auto x = vval(a);
                const T s = vval(b)(0);
                if (wants(a)) {
                    auto t = vtarget(a);
                    for (Eigen::Index k = 0; k < x.size(); ++k) {
                        t(k) += x(k) >= T(0) ? g(k) : s * g(k);
                    }
                }
                if (wants(b)) {
                    T acc = T(0);
                    for (Eigen::Index k = 0; k < x.size(); ++k) {
                        if (x(k) < T(0)) acc += g(k) * x(k);
                    }
                    vtarget(b)(0) += acc;
                }
                break;
            }
            case Op::Softmax:
                if (wants(a)) {
                    const T gy = g.dot(y);
                    vtarget(a).array() += y.array() * (g.array() - gy);
                }
                break;
            case Op::L2Normalize:
                if (wants(a)) {
                    const T gy = g.dot(y);
                    vtarget(a) += (g - gy * y) / n.aux;
                }
                break;
            case Op::Concat: {
                const Eigen::Index la = nodes_[a].rows * nodes_[a].cols;
                const Eigen::Index lb = nodes_[b].rows * nodes_[b].cols;
                if (wants(a)) vtarget(a) += g.head(la);
                if (wants(b)) vtarget(b) += g.tail(lb);
                break;
            }
            case Op::Stack:
                for (std::uint32_t k = 0; k < n.list_size; ++k) {
                    const std::uint32_t src = links_[n.list_offset + k];
                    if (wants(src)) vtarget(src)(0) += g(k);
                }
                break;
            case Op::Element:
                if (wants(a)) vtarget(a)(n.label) += g(0);
                break;
            case Op::WeightedSum: {
                // in[0] = weights; list = items.
                const auto p = vval(a);
                for (std::uint32_t k = 0; k < n.list_size; ++k) {
                    const std::uint32_t src = links_[n.list_offset + k];
                    if (wants(a)) vtarget(a)(k) += g.dot(vval(src));
                    if (wants(src)) vtarget(src) += p(k) * g;
                }
                break;
            }
            case Op::Sum:
                for (std::uint32_t k = 0; k < n.list_size; ++k) {
                    const std::uint32_t src = links_[n.list_offset + k];
                    if (wants(src)) vtarget(src) += g;
                }
                break;
            case Op::Mean: {
                const T w = g(0) / static_cast<T>(n.list_size);
                for (std::uint32_t k = 0; k < n.list_size; ++k) {
                    const std::uint32_t src = links_[n.list_offset + k];
                    if (wants(src)) vtarget(src)(0) += w;
                }
                break;
            }
            case Op::CrossEntropyLogits:
                if (wants(a)) {
                    const auto z = vval(a);
                    const T zmax = z.maxCoeff();
                    Vector<T> p = (z.array() - zmax).exp();
                    p /= p.sum();
                    p(n.label) -= T(1);
                    vtarget(a) += g(0) * p;
                }
                break;
            case Op::FrobeniusNorm:
                if (wants(a) && y(0) > T(0)) {
                    target(a) += (g(0) / y(0)) * val(a);
                }
                break;
            case Op::SquaredNorm:
                if (wants(a)) vtarget(a) += (T(2) * g(0)) * vval(a);
                break;
            case Op::MatMul: {
                const auto G = own_grad_matrix(i);
                if (wants(a)) target(a).noalias() += G * val(b).transpose();
                if (wants(b)) target(b).noalias() += val(a).transpose() * G;
                break;
            }
            case Op::VecMat:
                // y = H^T w with a = w, b = H
                if (wants(a)) vtarget(a).noalias() += val(b) * g;
                if (wants(b)) target(b).noalias() += vval(a) * g.transpose();
                break;
            case Op::AddColumn: {
                const auto G = own_grad_matrix(i);
                if (wants(a)) target(a) += G;
                if (wants(b)) vtarget(b) += G.rowwise().sum();
                break;
            }
            case Op::ScaleColumns: {
                const auto G = own_grad_matrix(i);
                if (wants(a)) target(a) += G * vval(b).asDiagonal();
                if (wants(b)) {
                    vtarget(b) += G.cwiseProduct(val(a)).colwise().sum().transpose();
                }
                break;
            }
            case Op::NormalizeColumns: {
                const auto G = own_grad_matrix(i);
                const auto Y = val(i);
                const auto X = val(a);
                if (wants(a)) {
                    auto t = target(a);
                    for (Eigen::Index j = 0; j < Y.cols(); ++j) {
                        const T gy = G.col(j).dot(Y.col(j));
                        t.col(j) += (G.col(j) - gy * Y.col(j)) / X.col(j).norm();
                    }
                }
                break;
            }
            case Op::Column:
                if (wants(a)) target(a).col(n.label) += g;
                break;
            case Op::HStack: {
                const auto G = own_grad_matrix(i);
                for (std::uint32_t k = 0; k < n.list_size; ++k) {
                    const std::uint32_t src = links_[n.list_offset + k];
                    if (wants(src)) vtarget(src) += G.col(k);
                }
                break;
            }
        }
    }

    bool recording_;
    std::vector<Node> nodes_;
    std::vector<T> values_;
    std::vector<T> grads_;
    std::vector<std::uint32_t> links_;
    std::vector<std::uint8_t> seeded_;
};

}  // namespace dmu
