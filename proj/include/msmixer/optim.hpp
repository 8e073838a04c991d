#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "msmixer/params.hpp"

namespace msmixer {

/// Rescales all gradients jointly so their global L2 norm is at most `max_norm`.
/// Returns the factor applied (1 when no clipping happened).
template <class T>
double clip_grad_norm(ParamStore<T>& params, double max_norm = 1.0) {
    const double norm = params.grad_norm();
    if (!(norm > max_norm)) return 1.0;
    const double scale = max_norm / norm;
    for (auto& p : params.entries())
        for (auto& g : p.grad.flat()) g = static_cast<T>(g * scale);
    return scale;
}

/// AdamW with bias correction and decoupled weight decay applied to every parameter.
template <class T>
class AdamW {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-4;
    };

    AdamW() = default;
    explicit AdamW(Options opts) : opts_(opts) {}

    void step(ParamStore<T>& params) {
        if (!params.has_gradients()) throw UsageError("AdamW::step called without gradients");
        auto& entries = params.entries();
        if (m_.empty()) {
            for (const auto& p : entries) {
                m_.emplace_back(p.value.size(), 0.0);
                v_.emplace_back(p.value.size(), 0.0);
            }
        }
        if (m_.size() != entries.size()) throw UsageError("AdamW: parameter set changed between steps");
        ++step_;
        const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
        const double decay = 1.0 - opts_.lr * opts_.weight_decay;
        for (std::size_t k = 0; k < entries.size(); ++k) {
            auto& value = entries[k].value;
            const auto& grad = entries[k].grad;
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < value.size(); ++i) {
                const double g = grad[i];
                m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
                v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                double theta = static_cast<double>(value[i]) * decay;
                theta -= opts_.lr * m_hat / (std::sqrt(v_hat) + opts_.eps);
                value[i] = static_cast<T>(theta);
            }
        }
    }

    double lr() const noexcept { return opts_.lr; }
    void set_lr(double lr) noexcept { opts_.lr = lr; }
    std::size_t step_count() const noexcept { return step_; }
    const Options& options() const noexcept { return opts_; }

private:
    Options opts_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t step_ = 0;
};

/// Multiplies the learning rate by `factor` once the monitored loss has failed
/// to strictly improve for more than `patience` consecutive epochs.
class PlateauScheduler {
public:
    explicit PlateauScheduler(double lr, double factor = 0.5, std::size_t patience = 2)
        : lr_(lr), factor_(factor), patience_(patience) {}

    double step(double loss) {
        if (loss < best_) {
            best_ = loss;
            bad_epochs_ = 0;
        } else if (++bad_epochs_ > patience_) {
            lr_ *= factor_;
            bad_epochs_ = 0;
        }
        return lr_;
    }

    double lr() const noexcept { return lr_; }
    double best() const noexcept { return best_; }
    std::size_t bad_epochs() const noexcept { return bad_epochs_; }

private:
    double lr_;
    double factor_;
    std::size_t patience_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs_ = 0;
};

enum class StopDecision { Continue, Stop };

/// Keeps a copy of the parameters from the epoch with the lowest loss.
template <class T>
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience = 4) : patience_(patience) {}

    StopDecision check(double val_loss, const ParamStore<T>& params) {
        ++epoch_;
        if (val_loss < best_) {
            best_ = val_loss;
            best_epoch_ = epoch_;
            bad_epochs_ = 0;
            best_params_ = params.snapshot();
            return StopDecision::Continue;
        }
        return ++bad_epochs_ >= patience_ ? StopDecision::Stop : StopDecision::Continue;
    }

    /// Writes the best checkpoint back; no-op if nothing was recorded.
    void restore_best(ParamStore<T>& params) const {
        if (best_params_) params.restore(*best_params_);
    }

    double best() const noexcept { return best_; }
    std::size_t best_epoch() const noexcept { return best_epoch_; }
    std::size_t bad_epochs() const noexcept { return bad_epochs_; }
    bool has_checkpoint() const noexcept { return best_params_.has_value(); }

private:
    std::size_t patience_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t best_epoch_ = 0;
    std::size_t bad_epochs_ = 0;
    std::size_t epoch_ = 0;
    std::optional<ParamSnapshot<T>> best_params_;
};

}  // namespace msmixer
