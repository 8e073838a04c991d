#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "msmixer/data.hpp"
#include "msmixer/models.hpp"
#include "msmixer/optim.hpp"

namespace msmixer {

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 15;
    std::size_t patience = 4;
    std::uint64_t seed = 42;
    double clip = 1.0;
    double lr_factor = 0.5;
    std::size_t lr_patience = 2;

    void validate() const {
        if (lr < 0 || weight_decay < 0 || batch_size == 0 || max_epochs == 0 || patience == 0 || clip <= 0)
            throw ConfigError("train config: batch, epochs, patience and clip must be positive; lr and wd >= 0");
    }
};

/// One line of the training trace.
struct TraceRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;  // rate used during this epoch
    double wall_seconds = 0.0;
};

inline std::string to_json_line(const TraceRecord& r) {
    std::ostringstream os;
    os.precision(10);
    os << "{\"epoch\":" << r.epoch << ",\"train_loss\":" << r.train_loss << ",\"val_loss\":" << r.val_loss
       << ",\"lr\":" << r.lr << ",\"wall_seconds\":" << r.wall_seconds << "}";
    return os.str();
}

struct TrainResult {
    std::vector<TraceRecord> trace;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
    std::size_t epochs_run = 0;
    bool stopped_early = false;
    double wall_seconds = 0.0;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t n_cells = 0;
};

/// Streams (prediction, target) pairs into cell-wise MSE / MAE.
class MetricAccumulator {
public:
    template <class T>
    void add(const Tensor2D<T>& pred, const Tensor2D<T>& target) {
        if (!pred.same_shape(target))
            throw ConfigError("metrics: shape mismatch " + pred.shape_str() + " vs " + target.shape_str());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
            sq_ += d * d;
            abs_ += std::abs(d);
        }
        n_ += pred.size();
    }

    Metrics result() const {
        if (n_ == 0) throw ConfigError("metrics: no cells accumulated");
        return {sq_ / static_cast<double>(n_), abs_ / static_cast<double>(n_), n_};
    }

private:
    double sq_ = 0.0;
    double abs_ = 0.0;
    std::size_t n_ = 0;
};

template <class T>
Metrics compute_metrics(const Tensor2D<T>& pred, const Tensor2D<T>& target) {
    MetricAccumulator acc;
    acc.add(pred, target);
    return acc.result();
}

/// Eval-mode metrics over every window of `which`, in z-scored units.
template <class T>
Metrics evaluate(const Forecaster<T>& model, const WindowedDataset& ds, Split which, std::size_t batch_size = 64) {
    if (ds.split.range(which).length() == 0)
        throw ConfigError(std::string("evaluate: empty ") + split_name(which) + " range");
    WindowSampler sampler(ds, which, batch_size);
    const auto order = sampler.epoch_order();
    MetricAccumulator acc;
    for (std::size_t b = 0; b < sampler.num_batches(); ++b) {
        auto batch = sampler.batch<T>(order, b);
        acc.add(model.predict(batch.inputs), batch.targets);
    }
    return acc.result();
}

/// The training loop: shuffled epochs of forward / MSE / backward / clip / AdamW,
/// then validation, plateau scheduling and early stopping. The best-validation
/// parameters are restored before returning.
template <class T>
TrainResult train(Forecaster<T>& model, const WindowedDataset& ds, const TrainConfig& cfg, Rng& rng,
                  const std::function<void(const TraceRecord&)>& on_epoch = {}) {
    cfg.validate();
    using Clock = std::chrono::steady_clock;
    const auto t_start = Clock::now();
    WindowSampler train_windows(ds, Split::Train, cfg.batch_size);
    // Fail fast if validation cannot hold a window.
    (void)window_starts(ds.split, Split::Val);

    auto& params = model.params();
    AdamW<T> opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    PlateauScheduler sched(cfg.lr, cfg.lr_factor, cfg.lr_patience);
    EarlyStopper<T> stopper(cfg.patience);
    TrainResult result;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t_epoch = Clock::now();
        const auto order = train_windows.epoch_order(&rng);
        double loss_sum = 0.0;
        std::size_t cells = 0;
        for (std::size_t b = 0; b < train_windows.num_batches(); ++b) {
            auto batch = train_windows.batch<T>(order, b);
            params.zero_grad();
            auto pred = model.forward(batch.inputs, true, rng);
            const double loss = mse_loss(pred, batch.targets);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "non-finite training loss at epoch " << epoch << ", batch " << b << " (lr=" << opt.lr() << ")";
                throw TrainingDiverged(msg.str());
            }
            model.backward(mse_loss_grad(pred, batch.targets));
            clip_grad_norm(params, cfg.clip);
            opt.step(params);
            loss_sum += loss * static_cast<double>(pred.size());
            cells += pred.size();
        }

        TraceRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(cells);
        rec.val_loss = evaluate(model, ds, Split::Val, cfg.batch_size).mse;
        rec.lr = opt.lr();
        rec.wall_seconds = std::chrono::duration<double>(Clock::now() - t_epoch).count();
        if (!std::isfinite(rec.val_loss)) {
            std::ostringstream msg;
            msg << "non-finite validation loss at epoch " << epoch << " (lr=" << opt.lr() << ")";
            throw TrainingDiverged(msg.str());
        }
        result.trace.push_back(rec);
        if (on_epoch) on_epoch(rec);

        opt.set_lr(sched.step(rec.val_loss));
        result.epochs_run = epoch;
        if (stopper.check(rec.val_loss, params) == StopDecision::Stop) {
            result.stopped_early = true;
            break;
        }
    }

    stopper.restore_best(params);
    result.best_epoch = stopper.best_epoch();
    result.best_val = stopper.best();
    result.wall_seconds = std::chrono::duration<double>(Clock::now() - t_start).count();
    return result;
}

struct Diagnostics {
    std::optional<std::vector<double>> gate_weights;
    std::vector<std::size_t> scales;
    std::optional<double> fusion_alpha;
    std::optional<double> trend_blend;
    std::size_t param_total = 0;
    std::size_t epochs_run = 0;
};

template <class T>
Diagnostics extract_diagnostics(const Forecaster<T>& model, std::size_t epochs_run = 0) {
    Diagnostics d;
    d.gate_weights = model.gate_weights();
    if (d.gate_weights) d.scales = model.config().scales;
    d.fusion_alpha = model.fusion_alpha();
    d.trend_blend = model.trend_blend();
    d.param_total = model.param_count();
    d.epochs_run = epochs_run;
    return d;
}

}  // namespace msmixer
