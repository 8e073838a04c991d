#pragma once

// Forward kernels and their hand-derived reverse-mode counterparts for the
// fixed set of layers the forecasters use. All operate row-wise on
// channel-independent [rows x time] tensors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "msmixer/rng.hpp"
#include "msmixer/tensor.hpp"

namespace msmixer {

// ---------------------------------------------------------------------------
// Affine layer: y = x W^T + b
// ---------------------------------------------------------------------------

template <class T>
Tensor2D<T> linear_forward(const Tensor2D<T>& x, const Tensor2D<T>& weight,
                           std::type_identity_t<std::span<const T>> bias) {
    if (x.cols() != weight.cols())
        throw ConfigError("linear_forward: input width " + std::to_string(x.cols()) +
                          " does not match weight " + weight.shape_str());
    if (bias.size() != weight.rows())
        throw ConfigError("linear_forward: bias length " + std::to_string(bias.size()) +
                          " does not match weight " + weight.shape_str());
    Tensor2D<T> y;
    matmul_nt(x, weight, y);
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
    }
    return y;
}

/// Accumulates dW and db; writes dx when requested.
template <class T>
void linear_backward(const Tensor2D<T>& x, const Tensor2D<T>& weight, const Tensor2D<T>& dy,
                     Tensor2D<T>& dweight, std::type_identity_t<std::span<T>> dbias,
                     std::type_identity_t<Tensor2D<T>>* dx) {
    matmul_tn(dy, x, dweight, /*accumulate=*/true);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
        auto row = dy.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) dbias[j] += row[j];
    }
    if (dx) matmul_nn(dy, weight, *dx);
}

// ---------------------------------------------------------------------------
// GELU (exact erf form)
// ---------------------------------------------------------------------------

template <class T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
}

template <class T>
T gelu_derivative(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
    const T pdf = std::exp(T(-0.5) * x * x) * static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + x * pdf;
}

template <class T>
Tensor2D<T> gelu(const Tensor2D<T>& x) {
    Tensor2D<T> y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
    return y;
}

/// `pre` is the GELU input saved from the forward pass.
template <class T>
Tensor2D<T> gelu_backward(const Tensor2D<T>& pre, const Tensor2D<T>& dy) {
    Tensor2D<T> dx(pre.rows(), pre.cols());
    for (std::size_t i = 0; i < pre.size(); ++i) dx[i] = dy[i] * gelu_derivative(pre[i]);
    return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout
// ---------------------------------------------------------------------------

/// `mask` holds the per-element multiplier (0 or 1/(1-rate)); empty when the op was the identity.
template <class T>
struct DropoutResult {
    Tensor2D<T> output;
    Tensor2D<T> mask;
};

template <class T>
DropoutResult<T> dropout(const Tensor2D<T>& x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return {x, {}};
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    DropoutResult<T> res{Tensor2D<T>(x.rows(), x.cols()), Tensor2D<T>(x.rows(), x.cols())};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T m = rng.bernoulli(rate) ? T(0) : keep_scale;
        res.mask[i] = m;
        res.output[i] = x[i] * m;
    }
    return res;
}

template <class T>
Tensor2D<T> dropout_backward(const Tensor2D<T>& mask, const Tensor2D<T>& dy) {
    if (mask.empty()) return dy;
    Tensor2D<T> dx(dy.rows(), dy.cols());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
    return dx;
}

// ---------------------------------------------------------------------------
// Softmax / sigmoid
// ---------------------------------------------------------------------------

template <class T>
std::vector<T> softmax(std::span<const T> logits) {
    std::vector<T> out(logits.size());
    if (logits.empty()) return out;
    const T peak = *std::max_element(logits.begin(), logits.end());
    T total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        total += out[i];
    }
    for (auto& v : out) v /= total;
    return out;
}

template <class T>
std::vector<T> softmax(std::span<T> logits) {
    return softmax(std::span<const T>(logits));
}

template <class T>
std::vector<T> softmax(const std::vector<T>& logits) {
    return softmax(std::span<const T>(logits));
}

/// d(logits) given softmax output `w` and d(w).
template <class T>
std::vector<T> softmax_backward(std::span<const T> w, std::span<const T> dw) {
    T dot = 0;
    for (std::size_t i = 0; i < w.size(); ++i) dot += w[i] * dw[i];
    std::vector<T> dlogits(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) dlogits[i] = w[i] * (dw[i] - dot);
    return dlogits;
}

template <class T>
T sigmoid(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

// ---------------------------------------------------------------------------
// Non-overlapping average pooling along time
// ---------------------------------------------------------------------------

template <class T>
Tensor2D<T> avg_pool(const Tensor2D<T>& x, std::size_t factor) {
    if (factor == 0) throw ConfigError("avg_pool: factor must be >= 1");
    if (factor > x.cols())
        throw ConfigError("avg_pool: factor " + std::to_string(factor) + " exceeds length " +
                          std::to_string(x.cols()));
    if (factor == 1) return x;
    const std::size_t out_len = x.cols() / factor;
    const T inv = T(1) / static_cast<T>(factor);
    Tensor2D<T> y(x.rows(), out_len);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto out = y.row(r);
        for (std::size_t i = 0; i < out_len; ++i) {
            T acc = 0;
            for (std::size_t j = i * factor; j < (i + 1) * factor; ++j) acc += in[j];
            out[i] = acc * inv;
        }
    }
    return y;
}

/// Truncated tail columns (length not divisible by factor) receive zero gradient.
template <class T>
Tensor2D<T> avg_pool_backward(const Tensor2D<T>& dy, std::size_t factor, std::size_t in_len) {
    if (factor == 1) return dy;
    const T inv = T(1) / static_cast<T>(factor);
    Tensor2D<T> dx(dy.rows(), in_len);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
        auto g = dy.row(r);
        auto out = dx.row(r);
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = i * factor; j < (i + 1) * factor; ++j) out[j] = g[i] * inv;
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Moving-average trend / seasonal decomposition (replicate-edge padding)
// ---------------------------------------------------------------------------

inline void check_kernel(std::size_t kernel, std::size_t length) {
    if (kernel == 0 || kernel % 2 == 0)
        throw ConfigError("moving average: kernel must be odd, got " + std::to_string(kernel));
    if (kernel > length)
        throw ConfigError("moving average: kernel " + std::to_string(kernel) + " exceeds length " +
                          std::to_string(length));
}

template <class T>
Tensor2D<T> moving_average(const Tensor2D<T>& x, std::size_t kernel) {
    check_kernel(kernel, x.cols());
    const std::size_t len = x.cols();
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
    const T inv = T(1) / static_cast<T>(kernel);
    Tensor2D<T> trend(x.rows(), len);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto out = trend.row(r);
        auto at = [&](std::ptrdiff_t i) {
            return in[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(len) - 1))];
        };
        T window = 0;
        for (std::ptrdiff_t j = -half; j <= half; ++j) window += at(j);
        out[0] = window * inv;
        for (std::size_t i = 1; i < len; ++i) {
            const auto c = static_cast<std::ptrdiff_t>(i);
            window += at(c + half) - at(c - half - 1);
            out[i] = window * inv;
        }
    }
    return trend;
}

template <class T>
Tensor2D<T> moving_average_backward(const Tensor2D<T>& dtrend, std::size_t kernel) {
    const std::size_t len = dtrend.cols();
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
    const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(len) - 1;
    const T inv = T(1) / static_cast<T>(kernel);
    Tensor2D<T> dx(dtrend.rows(), len);
    for (std::size_t r = 0; r < dtrend.rows(); ++r) {
        auto g = dtrend.row(r);
        auto out = dx.row(r);
        for (std::ptrdiff_t i = 0; i <= last; ++i) {
            const T gi = g[static_cast<std::size_t>(i)] * inv;
            for (std::ptrdiff_t j = i - half; j <= i + half; ++j)
                out[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, last))] += gi;
        }
    }
    return dx;
}

template <class T>
struct Decomposition {
    Tensor2D<T> trend;
    Tensor2D<T> seasonal;
};

/// x = trend + seasonal elementwise.
template <class T>
Decomposition<T> moving_average_decompose(const Tensor2D<T>& x, std::size_t kernel) {
    Decomposition<T> d{moving_average(x, kernel), Tensor2D<T>(x.rows(), x.cols())};
    for (std::size_t i = 0; i < x.size(); ++i) d.seasonal[i] = x[i] - d.trend[i];
    return d;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

template <class T>
double mse_loss(const Tensor2D<T>& pred, const Tensor2D<T>& target) {
    if (!pred.same_shape(target))
        throw ConfigError("mse_loss: shape mismatch " + pred.shape_str() + " vs " + target.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

template <class T>
Tensor2D<T> mse_loss_grad(const Tensor2D<T>& pred, const Tensor2D<T>& target) {
    Tensor2D<T> g(pred.rows(), pred.cols());
    const T scale = static_cast<T>(2.0 / static_cast<double>(pred.size()));
    for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
    return g;
}

}  // namespace msmixer
