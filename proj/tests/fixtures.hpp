#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dmu/dmu.hpp"
#include "oracles.hpp"

namespace fixtures {

/// Table with `words` random entries of U(-1, 1), plus loc1..loc4.
inline dmu::EmbeddingTable random_table(std::size_t dim, std::size_t words, std::mt19937_64& rng) {
    dmu::EmbeddingTable table(dim);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(dim);
    auto add = [&](const std::string& tok) {
        for (auto& x : v) x = u(rng);
        table.insert(tok, v);
    };
    for (std::size_t k = 0; k < words; ++k) add("w" + std::to_string(k));
    for (int k = 1; k <= 4; ++k) add("loc" + std::to_string(k));
    for (const char* a : {"general", "price", "transit", "location", "safety"}) add(a);
    return table;
}

/// Model with init_params weights, then every trainable entry nudged by
/// U(-spread, spread) so biases and slopes are not at special values.
inline dmu::ModelParams<double> random_params(const dmu::ModelConfig& config,
                                              const dmu::EmbeddingTable& table, std::mt19937_64& rng,
                                              double spread = 0.3) {
    auto p = dmu::init_params<double>(config, table, rng);
    std::uniform_real_distribution<double> u(-spread, spread);
    p.visit([&](const std::string&, dmu::DenseArray<double>& a, bool trainable) {
        if (!trainable) return;
        for (auto& x : a.values()) x += u(rng);
    });
    return p;
}

inline dmu::EncodedInput<double> random_input(std::size_t dim, std::size_t m, std::mt19937_64& rng,
                                              double range = 1.0) {
    std::uniform_real_distribution<double> u(-range, range);
    dmu::Matrix<double> tokens(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = u(rng);
    dmu::EncodedInput<double> in;
    in.tokens = std::make_shared<const dmu::Matrix<double>>(std::move(tokens));
    in.target = dmu::Vector<double>(static_cast<Eigen::Index>(dim));
    in.aspect = dmu::Vector<double>(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < in.target.size(); ++i) {
        in.target[i] = u(rng);
        in.aspect[i] = u(rng);
    }
    in.gold = static_cast<dmu::Polarity>(std::uniform_int_distribution<int>(0, 2)(rng));
    return in;
}

inline std::vector<oracle::Vec> rows_of(const dmu::Matrix<double>& m) {
    std::vector<oracle::Vec> out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out.emplace_back(m.row(i).data(), m.row(i).data() + m.cols());
    }
    return out;
}

inline oracle::Vec to_vec(const dmu::Vector<double>& v) { return oracle::Vec(v.data(), v.data() + v.size()); }

/// Max relative error between tape gradients of the single-instance training
/// objective (cross-entropy + penalty) and central differences, over every
/// trainable coordinate.
inline double model_gradient_error(dmu::ModelParams<double>& params, const dmu::ModelConfig& config,
                                   const dmu::EncodedInput<double>& in, double lambda, bool squared,
                                   const dmu::DropoutMasks<double>* masks = nullptr) {
    const dmu::EncodedInput<double>* batch[] = {&in};
    std::vector<dmu::DropoutMasks<double>> mask_list;
    if (masks != nullptr) mask_list.push_back(*masks);
    auto grads = dmu::ModelParams<double>::shaped_like(params);
    dmu::batch_objective<double>(params, config, batch, mask_list, lambda, squared, &grads);
    std::vector<dmu::DenseArray<double>*> g;
    grads.visit([&](const std::string&, dmu::DenseArray<double>& a, bool) { g.push_back(&a); });
    double worst = 0;
    std::size_t k = 0;
    params.visit([&](const std::string&, dmu::DenseArray<double>& a, bool trainable) {
        const std::size_t idx = k++;
        if (!trainable) return;
        auto numeric = oracle::numeric_gradient(a.values(), [&] {
            return dmu::batch_objective<double>(params, config, batch, mask_list, lambda, squared, nullptr);
        });
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            worst = std::max(worst, oracle::relative_error((*g[idx])[i], numeric[i]));
        }
    });
    return worst;
}

}  // namespace fixtures
