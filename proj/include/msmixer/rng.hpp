#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>

namespace msmixer {

/// Seeded generator shared by one training run. Draw order: initialization,
/// then per epoch the shuffle, then per batch the dropout masks.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 42) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    double normal(double mean, double stddev) {
        std::normal_distribution<double> dist(mean, stddev);
        return dist(engine_);
    }

    double uniform() {
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        return dist(engine_);
    }

    bool bernoulli(double p) {
        std::bernoulli_distribution dist(p);
        return dist(engine_);
    }

    template <class T>
    void shuffle(std::span<T> items) {
        std::shuffle(items.begin(), items.end(), engine_);
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace msmixer
