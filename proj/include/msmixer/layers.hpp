#pragma once

// Building blocks of the forecasters. Each forward function optionally fills a
// cache that the owning model hands back to its backward pass.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msmixer/ops.hpp"

namespace msmixer {

// ---------------------------------------------------------------------------
// Reversible instance normalization
// ---------------------------------------------------------------------------

/// Per-row window statistics from the latest normalize call. A denormalize consumes them.
template <class T>
struct RevinStats {
    std::vector<T> mean;
    std::vector<T> stdev;  // population std over the window
    T eps = T(1e-5);
    bool pending = false;
};

/// Affine scale with |gamma| clamped away from zero, used when dividing by it.
template <class T>
T guarded_scale(T gamma, T eps) {
    if (std::abs(gamma) >= eps) return gamma;
    return gamma < 0 ? -eps : eps;
}

/// Rows are channel-independent (row r is variate r % N); gamma/beta have N entries.
template <class T>
Tensor2D<T> revin_normalize(const Tensor2D<T>& x, std::span<const T> gamma, std::span<const T> beta, T eps,
                            RevinStats<T>& stats, Tensor2D<T>* unit = nullptr) {
    const std::size_t N = gamma.size();
    if (N == 0 || beta.size() != N || x.rows() % N != 0)
        throw ConfigError("revin_normalize: " + std::to_string(x.rows()) + " rows incompatible with " +
                          std::to_string(N) + " variates");
    const std::size_t L = x.cols();
    stats.mean.assign(x.rows(), T(0));
    stats.stdev.assign(x.rows(), T(0));
    stats.eps = eps;
    Tensor2D<T> out(x.rows(), L);
    if (unit) *unit = Tensor2D<T>(x.rows(), L);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        T mu = 0;
        for (T v : in) mu += v;
        mu /= static_cast<T>(L);
        T var = 0;
        for (T v : in) var += (v - mu) * (v - mu);
        const T sd = std::sqrt(var / static_cast<T>(L));
        stats.mean[r] = mu;
        stats.stdev[r] = sd;
        const T inv = T(1) / (sd + eps);
        const T g = gamma[r % N], b = beta[r % N];
        auto o = out.row(r);
        for (std::size_t t = 0; t < L; ++t) {
            const T u = (in[t] - mu) * inv;
            if (unit) (*unit)(r, t) = u;
            o[t] = u * g + b;
        }
    }
    stats.pending = true;
    return out;
}

template <class T>
Tensor2D<T> revin_denormalize(const Tensor2D<T>& z, std::span<const T> gamma, std::span<const T> beta,
                              RevinStats<T>& stats) {
    if (!stats.pending) throw UsageError("revin_denormalize: no pending statistics from a normalize call");
    if (stats.mean.size() != z.rows()) throw ConfigError("revin_denormalize: row count differs from cached stats");
    const std::size_t N = gamma.size();
    Tensor2D<T> out(z.rows(), z.cols());
    for (std::size_t r = 0; r < z.rows(); ++r) {
        const T g = guarded_scale(gamma[r % N], stats.eps), b = beta[r % N];
        const T scale = (stats.stdev[r] + stats.eps) / g;
        auto in = z.row(r);
        auto o = out.row(r);
        for (std::size_t h = 0; h < in.size(); ++h) o[h] = (in[h] - b) * scale + stats.mean[r];
    }
    stats.pending = false;
    return out;
}

// ---------------------------------------------------------------------------
// Scale branch: pooled input -> Linear -> GELU -> Dropout -> Linear
// ---------------------------------------------------------------------------

template <class T>
struct BranchWeights {
    const Tensor2D<T>& w1;  // [hidden x in]
    std::span<const T> b1;
    const Tensor2D<T>& w2;  // [horizon x hidden]
    std::span<const T> b2;
};

template <class T>
struct BranchCache {
    Tensor2D<T> pre;   // W1 x + b1
    Tensor2D<T> mask;  // dropout multipliers, empty in eval
    Tensor2D<T> act;   // post-dropout activation fed to W2
};

template <class T>
Tensor2D<T> branch_forward(const Tensor2D<T>& pooled, const BranchWeights<T>& w, double dropout_rate,
                           bool training, Rng& rng, BranchCache<T>* cache = nullptr) {
    if (pooled.cols() != w.w1.cols())
        throw ConfigError("branch_forward: input width " + std::to_string(pooled.cols()) + " but W1 is " +
                          w.w1.shape_str());
    Tensor2D<T> pre = linear_forward(pooled, w.w1, w.b1);
    auto dropped = dropout(gelu(pre), dropout_rate, training, rng);
    Tensor2D<T> out = linear_forward(dropped.output, w.w2, w.b2);
    if (cache) {
        cache->pre = std::move(pre);
        cache->mask = std::move(dropped.mask);
        cache->act = std::move(dropped.output);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax gate
// ---------------------------------------------------------------------------

template <class T>
Tensor2D<T> gate_merge(std::span<const Tensor2D<T>> outputs, std::span<const T> logits) {
    if (outputs.size() != logits.size() || outputs.empty())
        throw ConfigError("gate_merge: " + std::to_string(outputs.size()) + " branch outputs for " +
                          std::to_string(logits.size()) + " gate logits");
    const auto w = softmax(logits);
    Tensor2D<T> z(outputs[0].rows(), outputs[0].cols());
    for (std::size_t s = 0; s < outputs.size(); ++s) {
        if (!outputs[s].same_shape(z)) throw ConfigError("gate_merge: branch outputs differ in shape");
        axpy(w[s], outputs[s], z);
    }
    return z;
}

// ---------------------------------------------------------------------------
// DLinear shortcut: sigma(w) * (W_t trend + b_t) + (1 - sigma(w)) * (W_s seasonal + b_s)
// ---------------------------------------------------------------------------

template <class T>
struct ShortcutWeights {
    const Tensor2D<T>& trend_w;  // [horizon x lookback]
    std::span<const T> trend_b;
    const Tensor2D<T>& season_w;
    std::span<const T> season_b;
    T blend_logit;
};

template <class T>
struct ShortcutCache {
    Decomposition<T> parts;
    Tensor2D<T> trend_out;
    Tensor2D<T> season_out;
    T blend = T(0.5);
};

template <class T>
Tensor2D<T> shortcut_forward(const Tensor2D<T>& x, std::size_t kernel, const ShortcutWeights<T>& w,
                             ShortcutCache<T>* cache = nullptr) {
    if (x.cols() != w.trend_w.cols())
        throw ConfigError("shortcut_forward: input width " + std::to_string(x.cols()) + " but W_t is " +
                          w.trend_w.shape_str());
    auto parts = moving_average_decompose(x, kernel);
    Tensor2D<T> lt = linear_forward(parts.trend, w.trend_w, w.trend_b);
    Tensor2D<T> ls = linear_forward(parts.seasonal, w.season_w, w.season_b);
    const T blend = sigmoid(w.blend_logit);
    Tensor2D<T> out(lt.rows(), lt.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = blend * lt[i] + (T(1) - blend) * ls[i];
    if (cache) {
        cache->parts = std::move(parts);
        cache->trend_out = std::move(lt);
        cache->season_out = std::move(ls);
        cache->blend = blend;
    }
    return out;
}

}  // namespace msmixer
