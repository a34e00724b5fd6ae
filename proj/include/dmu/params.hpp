#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "dmu/dense_array.hpp"
#include "dmu/embedding.hpp"
#include "dmu/error.hpp"

namespace dmu {

enum class GateMode { Delayed, EntNet };

/// Which delay state the gate reads: this step's GRU output or the previous one.
enum class DelayInput { Current, Previous };

inline const char* to_string(GateMode m) { return m == GateMode::Delayed ? "delayed" : "entnet"; }
inline const char* to_string(DelayInput d) { return d == DelayInput::Current ? "current" : "previous"; }

inline GateMode parse_gate_mode(const std::string& s) {
    if (s == "delayed") return GateMode::Delayed;
    if (s == "entnet") return GateMode::EntNet;
    throw ConfigError("gate mode must be 'delayed' or 'entnet', got '" + s + "'");
}

inline DelayInput parse_delay_input(const std::string& s) {
    if (s == "current") return DelayInput::Current;
    if (s == "previous") return DelayInput::Previous;
    throw ConfigError("delay input must be 'current' or 'previous', got '" + s + "'");
}

struct ModelConfig {
    std::size_t embed_dim = 300;
    std::size_t n_chains = 6;
    std::size_t n_tied_keys = 2;
    std::size_t n_classes = 3;
    std::size_t gru_hidden = 300;
    GateMode gate_mode = GateMode::Delayed;
    DelayInput delay_input = DelayInput::Current;

    /// Convenience: a config whose GRU width follows embed_dim.
    static ModelConfig with(std::size_t dim, std::size_t chains, std::size_t tied,
                            GateMode mode = GateMode::Delayed) {
        ModelConfig c;
        c.embed_dim = dim;
        c.gru_hidden = dim;
        c.n_chains = chains;
        c.n_tied_keys = tied;
        c.gate_mode = mode;
        return c;
    }

    void validate() const {
        if (embed_dim == 0 || n_chains == 0 || n_classes == 0) {
            throw ConfigError("model dimensions must be positive");
        }
        if (n_tied_keys > n_chains) {
            throw ConfigError("n_tied_keys (" + std::to_string(n_tied_keys) +
                              ") exceeds n_chains (" + std::to_string(n_chains) + ")");
        }
        // v . d needs the delay state in the embedding space.
        if (gru_hidden != embed_dim) {
            throw ConfigError("gru_hidden must equal embed_dim");
        }
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Token whose embedding ties key j (0-based): "loc1", "loc2", ...
inline std::string tied_key_token(std::size_t j) { return "loc" + std::to_string(j + 1); }

template <typename T>
struct GruParams {
    DenseArray<T> W_z, U_z, b_z;
    DenseArray<T> W_r, U_r, b_r;
    DenseArray<T> W_c, U_c, b_c;

    template <typename Self, typename F>
    static void visit(Self& self, const std::string& prefix, F&& f) {
        f(prefix + "W_z", self.W_z, true);
        f(prefix + "U_z", self.U_z, true);
        f(prefix + "b_z", self.b_z, true);
        f(prefix + "W_r", self.W_r, true);
        f(prefix + "U_r", self.U_r, true);
        f(prefix + "b_r", self.b_r, true);
        f(prefix + "W_c", self.W_c, true);
        f(prefix + "U_c", self.U_c, true);
        f(prefix + "b_c", self.b_c, true);
    }
};

/// Per-direction weights of the chain update.
template <typename T>
struct DirectionParams {
    DenseArray<T> U, V, W;  // candidate memory
    DenseArray<T> v;        // delay term of the gate
    GruParams<T> gru;
    DenseArray<T> prelu_slope;

    template <typename Self, typename F>
    static void visit(Self& self, const std::string& prefix, F&& f) {
        f(prefix + "U", self.U, true);
        f(prefix + "V", self.V, true);
        f(prefix + "W", self.W, true);
        f(prefix + "v", self.v, true);
        GruParams<T>::visit(self.gru, prefix + "gru/", f);
        f(prefix + "prelu_slope", self.prelu_slope, true);
    }
};

template <typename T>
struct ModelParams {
    std::vector<DenseArray<T>> keys;  // first n_tied_keys are frozen
    std::size_t n_tied_keys = 0;
    DirectionParams<T> fwd, bwd;
    DenseArray<T> W_att;  // [D x 2D]
    DenseArray<T> H;      // [D x D]
    DenseArray<T> R;      // [classes x D]
    DenseArray<T> classifier_slope;

    /// Calls f(name, array, trainable) for every array in a fixed order.
    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        visit([&](const std::string&, const DenseArray<T>& a, bool) { n += a.size(); });
        return n;
    }

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out = ModelParams<U>::shaped_like(*this);
        std::vector<DenseArray<U>*> dst;
        out.visit([&](const std::string&, DenseArray<U>& a, bool) { dst.push_back(&a); });
        std::size_t k = 0;
        visit([&](const std::string&, const DenseArray<T>& a, bool) { *dst[k++] = a.template cast<U>(); });
        return out;
    }

    /// Zero-filled arrays with the same structure as `other`.
    template <typename U>
    static ModelParams shaped_like(const ModelParams<U>& other) {
        ModelParams p;
        p.n_tied_keys = other.n_tied_keys;
        p.keys.resize(other.keys.size());
        std::vector<DenseArray<T>*> dst;
        p.visit([&](const std::string&, DenseArray<T>& a, bool) { dst.push_back(&a); });
        std::size_t k = 0;
        other.visit([&](const std::string&, const DenseArray<U>& a, bool) {
            *dst[k++] = DenseArray<T>(a.shape());
        });
        return p;
    }

    friend bool operator==(const ModelParams& a, const ModelParams& b) {
        if (a.keys.size() != b.keys.size() || a.n_tied_keys != b.n_tied_keys) return false;
        std::vector<const DenseArray<T>*> lhs;
        a.visit([&](const std::string&, const DenseArray<T>& x, bool) { lhs.push_back(&x); });
        std::size_t k = 0;
        bool same = true;
        b.visit([&](const std::string&, const DenseArray<T>& x, bool) { same = same && *lhs[k++] == x; });
        return same;
    }

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        for (std::size_t j = 0; j < self.keys.size(); ++j) {
            f("keys/" + std::to_string(j), self.keys[j], j >= self.n_tied_keys);
        }
        DirectionParams<T>::visit(self.fwd, "fwd/", f);
        DirectionParams<T>::visit(self.bwd, "bwd/", f);
        f("W_att", self.W_att, true);
        f("H", self.H, true);
        f("R", self.R, true);
        f("classifier_slope", self.classifier_slope, true);
    }
};

/// Zero-filled parameter set for `config` (all shapes, no values).
template <typename T>
ModelParams<T> zero_params(const ModelConfig& config) {
    config.validate();
    const std::size_t D = config.embed_dim;
    const std::size_t Hd = config.gru_hidden;
    auto direction = [&] {
        DirectionParams<T> d;
        d.U = DenseArray<T>({D, D});
        d.V = DenseArray<T>({D, D});
        d.W = DenseArray<T>({D, D});
        d.v = DenseArray<T>({Hd});
        for (auto* pair : {&d.gru.W_z, &d.gru.W_r, &d.gru.W_c}) *pair = DenseArray<T>({Hd, D});
        for (auto* pair : {&d.gru.U_z, &d.gru.U_r, &d.gru.U_c}) *pair = DenseArray<T>({Hd, Hd});
        for (auto* pair : {&d.gru.b_z, &d.gru.b_r, &d.gru.b_c}) *pair = DenseArray<T>({Hd});
        d.prelu_slope = DenseArray<T>({1});
        return d;
    };
    ModelParams<T> p;
    p.n_tied_keys = config.n_tied_keys;
    p.keys.assign(config.n_chains, DenseArray<T>({D}));
    p.fwd = direction();
    p.bwd = direction();
    p.W_att = DenseArray<T>({D, 2 * D});
    p.H = DenseArray<T>({D, D});
    p.R = DenseArray<T>({config.n_classes, D});
    p.classifier_slope = DenseArray<T>({1});
    return p;
}

/// Default initialisation: matrices U(+-sqrt(6 / (fan_in + fan_out))), biases
/// 0, PReLU slopes 0.25, tied keys copied from the embedding table, free keys
/// drawn like matrices and then unit-normalised.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, const EmbeddingTable& table,
                           std::mt19937_64& rng) {
    if (table.dim() != config.embed_dim) {
        throw ConfigError("embedding dimension " + std::to_string(table.dim()) +
                          " differs from model dimension " + std::to_string(config.embed_dim));
    }
    ModelParams<T> p = zero_params<T>(config);
    auto glorot = [&](DenseArray<T>& a) {
        const double fan_out = static_cast<double>(a.rows());
        const double fan_in = static_cast<double>(a.rank() == 1 ? 1 : a.cols());
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (auto& x : a.values()) x = static_cast<T>(u(rng));
    };
    for (std::size_t j = 0; j < p.keys.size(); ++j) {
        if (j < config.n_tied_keys) {
            table.lookup_into<T>(tied_key_token(j), p.keys[j].values());
        } else {
            glorot(p.keys[j]);
            p.keys[j].vec().normalize();
        }
    }
    for (auto* d : {&p.fwd, &p.bwd}) {
        glorot(d->U);
        glorot(d->V);
        glorot(d->W);
        glorot(d->v);
        glorot(d->gru.W_z);
        glorot(d->gru.U_z);
        glorot(d->gru.W_r);
        glorot(d->gru.U_r);
        glorot(d->gru.W_c);
        glorot(d->gru.U_c);
        d->prelu_slope[0] = T(0.25);
    }
    glorot(p.W_att);
    glorot(p.H);
    glorot(p.R);
    p.classifier_slope[0] = T(0.25);
    return p;
}

}  // namespace dmu
