#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "msmixer/rng.hpp"
#include "msmixer/tensor.hpp"

namespace msmixer {

/// Stable handle into a ParamStore. Survives copies of the owning model.
struct ParamId {
    std::size_t index = 0;
};

template <class T>
struct Parameter {
    std::string name;
    Tensor2D<T> value;
    Tensor2D<T> grad;
};

/// Full copy of parameter values, used for best-epoch checkpoints.
template <class T>
using ParamSnapshot = std::vector<Tensor2D<T>>;

/// Named learnables with paired gradient buffers, in registration order.
template <class T>
class ParamStore {
public:
    ParamId add(const std::string& name, std::size_t rows, std::size_t cols, T fill = T{0}) {
        if (by_name_.count(name)) throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
        by_name_.emplace(name, entries_.size());
        entries_.push_back({name, Tensor2D<T>(rows, cols, fill), Tensor2D<T>(rows, cols)});
        return {entries_.size() - 1};
    }

    /// Registers a weight matrix drawn i.i.d. N(0, stddev) from `rng`, row-major order.
    ParamId add_normal(const std::string& name, std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
        ParamId id = add(name, rows, cols);
        for (auto& v : entries_[id.index].value.flat()) v = static_cast<T>(rng.normal(0.0, stddev));
        return id;
    }

    Tensor2D<T>& value(ParamId id) { return entries_[id.index].value; }
    const Tensor2D<T>& value(ParamId id) const { return entries_[id.index].value; }
    Tensor2D<T>& grad(ParamId id) { return entries_[id.index].grad; }
    const Tensor2D<T>& grad(ParamId id) const { return entries_[id.index].grad; }

    Parameter<T>& at(const std::string& name) {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
        return entries_[it->second];
    }
    const Parameter<T>& at(const std::string& name) const {
        return const_cast<ParamStore*>(this)->at(name);
    }
    bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

    std::vector<Parameter<T>>& entries() noexcept { return entries_; }
    const std::vector<Parameter<T>>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// Total number of scalar learnables.
    std::size_t count() const noexcept {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

    void zero_grad() {
        for (auto& e : entries_) e.grad.fill(T{0});
        has_gradients_ = false;
    }

    /// Set by a model's backward pass; cleared by zero_grad().
    void mark_gradients() noexcept { has_gradients_ = true; }
    bool has_gradients() const noexcept { return has_gradients_; }

    double grad_norm() const {
        double sq = 0.0;
        for (const auto& e : entries_)
            for (T g : e.grad.flat()) sq += static_cast<double>(g) * static_cast<double>(g);
        return std::sqrt(sq);
    }

    ParamSnapshot<T> snapshot() const {
        ParamSnapshot<T> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.value);
        return out;
    }

    void restore(const ParamSnapshot<T>& snap) {
        if (snap.size() != entries_.size()) throw UsageError("ParamStore: snapshot size mismatch");
        for (std::size_t i = 0; i < snap.size(); ++i) {
            if (!snap[i].same_shape(entries_[i].value))
                throw UsageError("ParamStore: snapshot shape mismatch for '" + entries_[i].name + "'");
            entries_[i].value = snap[i];
        }
    }

private:
    std::vector<Parameter<T>> entries_;
    std::unordered_map<std::string, std::size_t> by_name_;
    bool has_gradients_ = false;
};

}  // namespace msmixer
