#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "dmu/corpus.hpp"
#include "dmu/error.hpp"

namespace dmu {

/// Draws class-balanced batches: floor(batch_size / 3) indices per class,
/// sampled uniformly with replacement within each class. The batch_size % 3
/// leftover slots go to classes round-robin, continuing across batches, so
/// batch_size 128 yields (43, 43, 42), then (43, 42, 43), then (42, 43, 43).
class BalancedSampler {
public:
    BalancedSampler(std::span<const Instance> instances, std::size_t batch_size)
        : batch_size_(batch_size) {
        if (batch_size == 0) {
            throw ConfigError("batch size must be positive");
        }
        for (std::size_t i = 0; i < instances.size(); ++i) {
            by_class_[static_cast<std::size_t>(instances[i].gold)].push_back(i);
        }
        for (std::size_t c = 0; c < by_class_.size(); ++c) {
            if (by_class_[c].empty()) {
                throw ConfigError(std::string("balanced sampling: training data has no '") +
                                  to_string(static_cast<Polarity>(c)) + "' instances");
            }
        }
    }

    /// True when every class occurs, i.e. balanced sampling is defined.
    static bool supports(std::span<const Instance> instances) {
        std::array<bool, kNumClasses> seen{};
        for (const auto& inst : instances) seen[static_cast<std::size_t>(inst.gold)] = true;
        return seen[0] && seen[1] && seen[2];
    }

    /// Per-class counts of the next batch (does not advance the rotation).
    std::array<std::size_t, kNumClasses> next_counts() const {
        std::array<std::size_t, kNumClasses> counts;
        counts.fill(batch_size_ / kNumClasses);
        const std::size_t extra = batch_size_ % kNumClasses;
        for (std::size_t k = 0; k < extra; ++k) {
            ++counts[(rotation_ + k) % kNumClasses];
        }
        return counts;
    }

    /// Indices into the instance list, grouped by class (positive, negative, none).
    template <typename Rng>
    std::vector<std::size_t> next(Rng& rng) {
        const auto counts = next_counts();
        rotation_ = (rotation_ + batch_size_ % kNumClasses) % kNumClasses;
        std::vector<std::size_t> batch;
        batch.reserve(batch_size_);
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            std::uniform_int_distribution<std::size_t> pick(0, by_class_[c].size() - 1);
            for (std::size_t k = 0; k < counts[c]; ++k) {
                batch.push_back(by_class_[c][pick(rng)]);
            }
        }
        return batch;
    }

private:
    std::size_t batch_size_;
    std::size_t rotation_ = 0;
    std::array<std::vector<std::size_t>, kNumClasses> by_class_;
};

/// Uniform sampling with replacement, ignoring class. Used when a training
/// set lacks a class (balanced sampling is undefined there).
class UniformSampler {
public:
    UniformSampler(std::size_t n_instances, std::size_t batch_size)
        : n_(n_instances), batch_size_(batch_size) {
        if (n_instances == 0 || batch_size == 0) {
            throw ConfigError("uniform sampling needs instances and a positive batch size");
        }
    }

    template <typename Rng>
    std::vector<std::size_t> next(Rng& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, n_ - 1);
        std::vector<std::size_t> batch(batch_size_);
        for (auto& i : batch) i = pick(rng);
        return batch;
    }

private:
    std::size_t n_;
    std::size_t batch_size_;
};

}  // namespace dmu
