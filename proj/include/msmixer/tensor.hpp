#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace msmixer {

/// Invalid shapes, hyper-parameters or flags. Raised before any work is done.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// API called out of order (backward before forward, denormalize without stats, ...).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Dense row-major matrix. Every batch, weight and gradient in the library is one of these.
template <class T>
class Tensor2D {
public:
    using value_type = T;

    Tensor2D() = default;

    Tensor2D(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Tensor2D(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ConfigError("Tensor2D: data length " + std::to_string(data_.size()) +
                              " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    Tensor2D(std::initializer_list<std::initializer_list<T>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ConfigError("Tensor2D: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<T> flat() noexcept { return data_; }
    std::span<const T> flat() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    const std::vector<T>& values() const noexcept { return data_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor2D& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <class U>
    Tensor2D<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor2D<U>(rows_, cols_, std::move(out));
    }

    std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

namespace detail {

template <class T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<RowMajor<T>> as_eigen(Tensor2D<T>& t) {
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <class T>
Eigen::Map<const RowMajor<T>> as_eigen(const Tensor2D<T>& t) {
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace detail

// GEMM kernels. `accumulate` adds into `out` instead of overwriting it.

/// out[m x n] = a[m x k] * b[n x k]^T
template <class T>
void matmul_nt(const Tensor2D<T>& a, const Tensor2D<T>& b, Tensor2D<T>& out, bool accumulate = false) {
    detail::require(a.cols() == b.cols(), "matmul_nt: inner dims " + a.shape_str() + " vs " + b.shape_str());
    if (!accumulate || out.rows() != a.rows() || out.cols() != b.rows()) {
        if (accumulate) throw ConfigError("matmul_nt: accumulate target has wrong shape");
        out = Tensor2D<T>(a.rows(), b.rows());
    }
    auto o = detail::as_eigen(out);
    if (accumulate)
        o.noalias() += detail::as_eigen(a) * detail::as_eigen(b).transpose();
    else
        o.noalias() = detail::as_eigen(a) * detail::as_eigen(b).transpose();
}

/// out[m x n] = a[m x k] * b[k x n]
template <class T>
void matmul_nn(const Tensor2D<T>& a, const Tensor2D<T>& b, Tensor2D<T>& out, bool accumulate = false) {
    detail::require(a.cols() == b.rows(), "matmul_nn: inner dims " + a.shape_str() + " vs " + b.shape_str());
    if (!accumulate || out.rows() != a.rows() || out.cols() != b.cols()) {
        if (accumulate) throw ConfigError("matmul_nn: accumulate target has wrong shape");
        out = Tensor2D<T>(a.rows(), b.cols());
    }
    auto o = detail::as_eigen(out);
    if (accumulate)
        o.noalias() += detail::as_eigen(a) * detail::as_eigen(b);
    else
        o.noalias() = detail::as_eigen(a) * detail::as_eigen(b);
}

/// out[k x n] = a[m x k]^T * b[m x n]
template <class T>
void matmul_tn(const Tensor2D<T>& a, const Tensor2D<T>& b, Tensor2D<T>& out, bool accumulate = false) {
    detail::require(a.rows() == b.rows(), "matmul_tn: outer dims " + a.shape_str() + " vs " + b.shape_str());
    if (!accumulate || out.rows() != a.cols() || out.cols() != b.cols()) {
        if (accumulate) throw ConfigError("matmul_tn: accumulate target has wrong shape");
        out = Tensor2D<T>(a.cols(), b.cols());
    }
    auto o = detail::as_eigen(out);
    if (accumulate)
        o.noalias() += detail::as_eigen(a).transpose() * detail::as_eigen(b);
    else
        o.noalias() = detail::as_eigen(a).transpose() * detail::as_eigen(b);
}

/// y += alpha * x, same shapes.
template <class T>
void axpy(T alpha, const Tensor2D<T>& x, Tensor2D<T>& y) {
    detail::require(x.same_shape(y), "axpy: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace msmixer
