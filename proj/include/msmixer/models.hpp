#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msmixer/layers.hpp"
#include "msmixer/params.hpp"

namespace msmixer {

enum class ModelKind { MSMixer, DLinear, NLinear };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::MSMixer: return "msmixer";
        case ModelKind::DLinear: return "dlinear";
        case ModelKind::NLinear: return "nlinear";
    }
    return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "msmixer") return ModelKind::MSMixer;
    if (s == "dlinear") return ModelKind::DLinear;
    if (s == "nlinear") return ModelKind::NLinear;
    throw ConfigError("unknown model kind '" + s + "' (expected msmixer, dlinear or nlinear)");
}

struct ModelConfig {
    ModelKind kind = ModelKind::MSMixer;
    std::size_t lookback = 336;
    std::size_t horizon = 96;
    std::size_t hidden = 64;
    std::size_t n_vars = 7;
    std::size_t kernel = 25;
    std::vector<std::size_t> scales{1, 4, 16};
    double dropout = 0.1;
    /// false: the fusion scalar is dropped and the output is the multi-scale pathway alone.
    /// Shortcut weights are still constructed.
    bool use_shortcut = true;
    bool use_revin = true;
    double revin_eps = 1e-5;
    double init_std = 0.02;

    void validate() const {
        if (lookback == 0 || horizon == 0 || n_vars == 0)
            throw ConfigError("model config: lookback, horizon and n_vars must be positive");
        if (kind == ModelKind::NLinear) return;
        if (kernel % 2 == 0 || kernel > lookback)
            throw ConfigError("model config: kernel must be odd and <= lookback, got " + std::to_string(kernel));
        if (kind != ModelKind::MSMixer) return;
        if (hidden == 0) throw ConfigError("model config: hidden must be positive");
        if (scales.empty()) throw ConfigError("model config: at least one scale is required");
        if (std::set<std::size_t>(scales.begin(), scales.end()).size() != scales.size())
            throw ConfigError("model config: duplicate scales");
        for (auto s : scales)
            if (s == 0 || s > lookback || lookback % s != 0)
                throw ConfigError("model config: scale " + std::to_string(s) + " must divide lookback " +
                                  std::to_string(lookback));
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model config: dropout must lie in [0, 1)");
    }
};

struct ParamGroup {
    std::string label;
    std::size_t count = 0;
};

/// Parameter total from the closed-form budget, independent of any constructed model.
inline std::size_t closed_form_param_count(const ModelConfig& c) {
    const std::size_t T = c.lookback, H = c.horizon, d = c.hidden;
    const std::size_t projection = T * H + H;
    switch (c.kind) {
        case ModelKind::NLinear: return projection;
        case ModelKind::DLinear: return 2 * projection;
        case ModelKind::MSMixer: {
            std::size_t n = c.use_revin ? 2 * c.n_vars : 0;
            for (auto s : c.scales) n += d * (T / s) + d + H * d + H;
            n += c.scales.size() + 2 * projection + 1;
            if (c.use_shortcut) n += 1;
            return n;
        }
    }
    return 0;
}

/// Common surface of the three forecasters. Inputs and outputs use the
/// channel-independent layout: row b*N + n holds variate n of window b.
template <class T>
class Forecaster {
public:
    explicit Forecaster(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
    virtual ~Forecaster() = default;

    /// Records what backward() needs. Dropout draws from `rng` only in training mode.
    virtual Tensor2D<T> forward(const Tensor2D<T>& x, bool training, Rng& rng) = 0;
    /// Eval-mode forward without touching recorded state; safe to call concurrently.
    virtual Tensor2D<T> predict(const Tensor2D<T>& x) const = 0;
    /// Accumulates dLoss/dparam into the store given dLoss/dprediction.
    virtual void backward(const Tensor2D<T>& grad_output) = 0;
    virtual std::vector<ParamGroup> param_breakdown() const = 0;

    virtual std::optional<std::vector<double>> gate_weights() const { return std::nullopt; }
    virtual std::optional<double> fusion_alpha() const { return std::nullopt; }
    virtual std::optional<double> trend_blend() const { return std::nullopt; }

    const ModelConfig& config() const noexcept { return cfg_; }
    ParamStore<T>& params() noexcept { return params_; }
    const ParamStore<T>& params() const noexcept { return params_; }
    std::size_t param_count() const noexcept { return params_.count(); }

protected:
    void check_input(const Tensor2D<T>& x) const {
        if (x.cols() != cfg_.lookback)
            throw ConfigError("forecaster: input width " + std::to_string(x.cols()) + " != lookback " +
                              std::to_string(cfg_.lookback));
        if (x.rows() % cfg_.n_vars != 0)
            throw ConfigError("forecaster: " + std::to_string(x.rows()) + " rows not a multiple of n_vars " +
                              std::to_string(cfg_.n_vars));
    }

    std::span<const T> vec(ParamId id) const { return params_.value(id).flat(); }
    T scalar(ParamId id) const { return params_.value(id)[0]; }

    ModelConfig cfg_;
    ParamStore<T> params_;
};

// ---------------------------------------------------------------------------
// MSMixer
// ---------------------------------------------------------------------------

template <class T>
class MSMixer final : public Forecaster<T> {
    using Base = Forecaster<T>;
    using Base::cfg_;
    using Base::params_;
    using Base::scalar;
    using Base::vec;

public:
    /// Registration (and initialization draw) order: RevIN, branches by scale,
    /// gate, shortcut trend/season/blend, fusion.
    MSMixer(const ModelConfig& cfg, Rng& rng) : Base(cfg) {
        if (cfg_.kind != ModelKind::MSMixer) throw ConfigError("MSMixer: config kind must be msmixer");
        const std::size_t T_ = cfg_.lookback, H = cfg_.horizon, d = cfg_.hidden, N = cfg_.n_vars;
        const double sd = cfg_.init_std;
        if (cfg_.use_revin) {
            revin_gamma_ = params_.add("revin.gamma", 1, N, T(1));
            revin_beta_ = params_.add("revin.beta", 1, N);
        }
        for (auto s : cfg_.scales) {
            const std::string p = "branch" + std::to_string(s) + ".";
            Branch b{s, {}, {}, {}, {}};
            b.w1 = params_.add_normal(p + "w1", d, T_ / s, sd, rng);
            b.b1 = params_.add(p + "b1", 1, d);
            b.w2 = params_.add_normal(p + "w2", H, d, sd, rng);
            b.b2 = params_.add(p + "b2", 1, H);
            branches_.push_back(b);
        }
        gate_ = params_.add("gate.logits", 1, cfg_.scales.size());
        trend_w_ = params_.add_normal("shortcut.trend.w", H, T_, sd, rng);
        trend_b_ = params_.add("shortcut.trend.b", 1, H);
        season_w_ = params_.add_normal("shortcut.season.w", H, T_, sd, rng);
        season_b_ = params_.add("shortcut.season.b", 1, H);
        blend_ = params_.add("shortcut.blend", 1, 1);
        if (cfg_.use_shortcut) fusion_ = params_.add("fusion.alpha", 1, 1);
    }

    Tensor2D<T> forward(const Tensor2D<T>& x, bool training, Rng& rng) override {
        cache_ = Cache{};
        Tensor2D<T> y = run(x, training, rng, cache_);
        cache_.valid = true;
        return y;
    }

    Tensor2D<T> predict(const Tensor2D<T>& x) const override {
        Cache scratch;
        Rng unused(0);
        return run(x, false, unused, scratch);
    }

    void backward(const Tensor2D<T>& dy) override {
        if (!cache_.valid) throw UsageError("MSMixer::backward called before forward");
        Cache& c = cache_;
        if (!dy.same_shape(c.fused)) throw ConfigError("MSMixer::backward: gradient shape mismatch");
        const std::size_t N = cfg_.n_vars;

        // De-normalization.
        Tensor2D<T> dz = dy;
        if (cfg_.use_revin) {
            auto gamma = vec(*revin_gamma_), beta = vec(*revin_beta_);
            auto& dgamma = params_.grad(*revin_gamma_);
            auto& dbeta = params_.grad(*revin_beta_);
            const T eps = c.stats.eps;
            for (std::size_t r = 0; r < dy.rows(); ++r) {
                const std::size_t n = r % N;
                const T g = guarded_scale(gamma[n], eps);
                const T spread = c.stats.stdev[r] + eps;
                const T dz_scale = spread / g;
                T sum_dy = 0, sum_dy_shift = 0;
                for (std::size_t h = 0; h < dy.cols(); ++h) {
                    dz(r, h) = dy(r, h) * dz_scale;
                    sum_dy += dy(r, h);
                    sum_dy_shift += dy(r, h) * (c.fused(r, h) - beta[n]);
                }
                if (std::abs(gamma[n]) >= eps) dgamma[n] -= sum_dy_shift * spread / (g * g);
                dbeta[n] -= sum_dy * dz_scale;
            }
        }

        // Fusion.
        Tensor2D<T> dms = dz;
        Tensor2D<T> dlin;
        if (fusion_) {
            const T a = c.alpha;
            dlin = Tensor2D<T>(dz.rows(), dz.cols());
            T dalpha = 0;
            for (std::size_t i = 0; i < dz.size(); ++i) {
                dms[i] = a * dz[i];
                dlin[i] = (T(1) - a) * dz[i];
                dalpha += dz[i] * (c.zms[i] - c.zlin[i]);
            }
            params_.grad(*fusion_)[0] += dalpha * a * (T(1) - a);
        }

        Tensor2D<T> dxn;
        const bool need_dxn = cfg_.use_revin;
        if (need_dxn) dxn = Tensor2D<T>(c.xn.rows(), c.xn.cols());

        // Gate and branches.
        std::vector<T> dw(branches_.size(), T(0));
        for (std::size_t s = 0; s < branches_.size(); ++s) {
            const Branch& b = branches_[s];
            const auto& out = c.outs[s];
            Tensor2D<T> dout(dms.rows(), dms.cols());
            for (std::size_t i = 0; i < dms.size(); ++i) {
                dw[s] += dms[i] * out[i];
                dout[i] = c.weights[s] * dms[i];
            }
            const auto& bc = c.branch[s];
            Tensor2D<T> dact;
            linear_backward(bc.act, params_.value(b.w2), dout, params_.grad(b.w2), params_.grad(b.b2).flat(), &dact);
            Tensor2D<T> dpre = gelu_backward(bc.pre, dropout_backward(bc.mask, dact));
            Tensor2D<T> dpooled;
            linear_backward(c.pooled[s], params_.value(b.w1), dpre, params_.grad(b.w1), params_.grad(b.b1).flat(),
                            need_dxn ? &dpooled : nullptr);
            if (need_dxn) axpy(T(1), avg_pool_backward(dpooled, b.scale, cfg_.lookback), dxn);
        }
        const auto dlogits = softmax_backward<T>(c.weights, dw);
        auto& dgate = params_.grad(gate_);
        for (std::size_t s = 0; s < dlogits.size(); ++s) dgate[s] += dlogits[s];

        // Shortcut.
        if (fusion_) {
            const auto& sc = c.shortcut;
            const T w = sc.blend;
            Tensor2D<T> dlt(dlin.rows(), dlin.cols()), dls(dlin.rows(), dlin.cols());
            T dblend = 0;
            for (std::size_t i = 0; i < dlin.size(); ++i) {
                dlt[i] = w * dlin[i];
                dls[i] = (T(1) - w) * dlin[i];
                dblend += dlin[i] * (sc.trend_out[i] - sc.season_out[i]);
            }
            params_.grad(blend_)[0] += dblend * w * (T(1) - w);
            Tensor2D<T> dtrend, dseason;
            linear_backward(sc.parts.trend, params_.value(trend_w_), dlt, params_.grad(trend_w_),
                            params_.grad(trend_b_).flat(), need_dxn ? &dtrend : nullptr);
            linear_backward(sc.parts.seasonal, params_.value(season_w_), dls, params_.grad(season_w_),
                            params_.grad(season_b_).flat(), need_dxn ? &dseason : nullptr);
            if (need_dxn) {
                // seasonal = x - MA(x): dx = dseason + MA^T(dtrend - dseason)
                for (std::size_t i = 0; i < dtrend.size(); ++i) dtrend[i] -= dseason[i];
                axpy(T(1), dseason, dxn);
                axpy(T(1), moving_average_backward(dtrend, cfg_.kernel), dxn);
            }
        }

        // Normalization affine.
        if (need_dxn) {
            auto& dgamma = params_.grad(*revin_gamma_);
            auto& dbeta = params_.grad(*revin_beta_);
            for (std::size_t r = 0; r < dxn.rows(); ++r) {
                const std::size_t n = r % N;
                T sg = 0, sb = 0;
                for (std::size_t t = 0; t < dxn.cols(); ++t) {
                    sg += dxn(r, t) * c.unit(r, t);
                    sb += dxn(r, t);
                }
                dgamma[n] += sg;
                dbeta[n] += sb;
            }
        }
        params_.mark_gradients();
    }

    std::vector<ParamGroup> param_breakdown() const override {
        std::vector<ParamGroup> out;
        auto size = [&](ParamId id) { return params_.value(id).size(); };
        if (cfg_.use_revin) out.push_back({"RevIN", size(*revin_gamma_) + size(*revin_beta_)});
        for (const auto& b : branches_)
            out.push_back({"Branch s=" + std::to_string(b.scale), size(b.w1) + size(b.b1) + size(b.w2) + size(b.b2)});
        out.push_back({"Scale gate", size(gate_)});
        out.push_back({"DLinear trend", size(trend_w_) + size(trend_b_)});
        out.push_back({"DLinear season", size(season_w_) + size(season_b_)});
        out.push_back({"DLinear weight", size(blend_)});
        if (fusion_) out.push_back({"Fusion scalar", size(*fusion_)});
        return out;
    }

    std::optional<std::vector<double>> gate_weights() const override {
        auto w = softmax(vec(gate_));
        return std::vector<double>(w.begin(), w.end());
    }
    std::optional<double> fusion_alpha() const override {
        if (!fusion_) return std::nullopt;
        return static_cast<double>(sigmoid(scalar(*fusion_)));
    }
    std::optional<double> trend_blend() const override { return static_cast<double>(sigmoid(scalar(blend_))); }

private:
    struct Branch {
        std::size_t scale;
        ParamId w1, b1, w2, b2;
    };

    struct Cache {
        RevinStats<T> stats;
        Tensor2D<T> unit;  // (x - mean) / (std + eps)
        Tensor2D<T> xn;
        std::vector<Tensor2D<T>> pooled;
        std::vector<BranchCache<T>> branch;
        std::vector<Tensor2D<T>> outs;
        std::vector<T> weights;
        ShortcutCache<T> shortcut;
        Tensor2D<T> zms, zlin, fused;
        T alpha = T(1);
        bool valid = false;
    };

    Tensor2D<T> run(const Tensor2D<T>& x, bool training, Rng& rng, Cache& c) const {
        this->check_input(x);
        const T eps = static_cast<T>(cfg_.revin_eps);
        if (cfg_.use_revin)
            c.xn = revin_normalize(x, vec(*revin_gamma_), vec(*revin_beta_), eps, c.stats, &c.unit);
        else
            c.xn = x;

        c.pooled.resize(branches_.size());
        c.branch.resize(branches_.size());
        c.outs.resize(branches_.size());
        for (std::size_t s = 0; s < branches_.size(); ++s) {
            const Branch& b = branches_[s];
            c.pooled[s] = avg_pool(c.xn, b.scale);
            BranchWeights<T> w{params_.value(b.w1), vec(b.b1), params_.value(b.w2), vec(b.b2)};
            c.outs[s] = branch_forward(c.pooled[s], w, cfg_.dropout, training, rng, &c.branch[s]);
        }
        c.weights = softmax(vec(gate_));
        c.zms = gate_merge<T>(c.outs, vec(gate_));

        if (fusion_) {
            ShortcutWeights<T> w{params_.value(trend_w_), vec(trend_b_), params_.value(season_w_), vec(season_b_),
                                 scalar(blend_)};
            c.zlin = shortcut_forward(c.xn, cfg_.kernel, w, &c.shortcut);
            c.alpha = sigmoid(scalar(*fusion_));
            c.fused = Tensor2D<T>(c.zms.rows(), c.zms.cols());
            for (std::size_t i = 0; i < c.fused.size(); ++i)
                c.fused[i] = c.alpha * c.zms[i] + (T(1) - c.alpha) * c.zlin[i];
        } else {
            c.fused = c.zms;
        }

        if (!cfg_.use_revin) return c.fused;
        return revin_denormalize(c.fused, vec(*revin_gamma_), vec(*revin_beta_), c.stats);
    }

    std::optional<ParamId> revin_gamma_, revin_beta_;
    std::vector<Branch> branches_;
    ParamId gate_;
    ParamId trend_w_, trend_b_, season_w_, season_b_, blend_;
    std::optional<ParamId> fusion_;
    Cache cache_;
};

// ---------------------------------------------------------------------------
// DLinear baseline: trend and seasonal projections summed, no RevIN
// ---------------------------------------------------------------------------

template <class T>
class DLinear final : public Forecaster<T> {
    using Base = Forecaster<T>;
    using Base::cfg_;
    using Base::params_;
    using Base::vec;

public:
    DLinear(const ModelConfig& cfg, Rng& rng) : Base(cfg) {
        if (cfg_.kind != ModelKind::DLinear) throw ConfigError("DLinear: config kind must be dlinear");
        const std::size_t L = cfg_.lookback, H = cfg_.horizon;
        trend_w_ = params_.add_normal("trend.w", H, L, cfg_.init_std, rng);
        trend_b_ = params_.add("trend.b", 1, H);
        season_w_ = params_.add_normal("season.w", H, L, cfg_.init_std, rng);
        season_b_ = params_.add("season.b", 1, H);
    }

    Tensor2D<T> forward(const Tensor2D<T>& x, bool, Rng&) override {
        parts_ = moving_average_decompose(x, cfg_.kernel);
        valid_ = true;
        return combine(parts_);
    }

    Tensor2D<T> predict(const Tensor2D<T>& x) const override {
        this->check_input(x);
        return combine(moving_average_decompose(x, cfg_.kernel));
    }

    void backward(const Tensor2D<T>& dy) override {
        if (!valid_) throw UsageError("DLinear::backward called before forward");
        linear_backward(parts_.trend, params_.value(trend_w_), dy, params_.grad(trend_w_),
                        params_.grad(trend_b_).flat(), nullptr);
        linear_backward(parts_.seasonal, params_.value(season_w_), dy, params_.grad(season_w_),
                        params_.grad(season_b_).flat(), nullptr);
        params_.mark_gradients();
    }

    std::vector<ParamGroup> param_breakdown() const override {
        const auto& p = params_;
        return {{"Trend projection", p.value(trend_w_).size() + p.value(trend_b_).size()},
                {"Seasonal projection", p.value(season_w_).size() + p.value(season_b_).size()}};
    }

private:
    Tensor2D<T> combine(const Decomposition<T>& parts) const {
        this->check_input(parts.trend);
        Tensor2D<T> y = linear_forward(parts.trend, params_.value(trend_w_), vec(trend_b_));
        axpy(T(1), linear_forward(parts.seasonal, params_.value(season_w_), vec(season_b_)), y);
        return y;
    }

    ParamId trend_w_, trend_b_, season_w_, season_b_;
    Decomposition<T> parts_;
    bool valid_ = false;
};

// ---------------------------------------------------------------------------
// NLinear baseline: subtract last value, project, add it back
// ---------------------------------------------------------------------------

template <class T>
class NLinear final : public Forecaster<T> {
    using Base = Forecaster<T>;
    using Base::cfg_;
    using Base::params_;
    using Base::vec;

public:
    NLinear(const ModelConfig& cfg, Rng& rng) : Base(cfg) {
        if (cfg_.kind != ModelKind::NLinear) throw ConfigError("NLinear: config kind must be nlinear");
        weight_ = params_.add_normal("linear.w", cfg_.horizon, cfg_.lookback, cfg_.init_std, rng);
        bias_ = params_.add("linear.b", 1, cfg_.horizon);
    }

    Tensor2D<T> forward(const Tensor2D<T>& x, bool, Rng&) override {
        this->check_input(x);
        shifted_ = subtract_last(x);
        valid_ = true;
        return project(x, shifted_);
    }

    Tensor2D<T> predict(const Tensor2D<T>& x) const override {
        this->check_input(x);
        return project(x, subtract_last(x));
    }

    void backward(const Tensor2D<T>& dy) override {
        if (!valid_) throw UsageError("NLinear::backward called before forward");
        linear_backward(shifted_, params_.value(weight_), dy, params_.grad(weight_), params_.grad(bias_).flat(),
                        nullptr);
        params_.mark_gradients();
    }

    std::vector<ParamGroup> param_breakdown() const override {
        return {{"Projection", params_.value(weight_).size() + params_.value(bias_).size()}};
    }

private:
    static Tensor2D<T> subtract_last(const Tensor2D<T>& x) {
        Tensor2D<T> out(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const T last = x(r, x.cols() - 1);
            for (std::size_t t = 0; t < x.cols(); ++t) out(r, t) = x(r, t) - last;
        }
        return out;
    }

    Tensor2D<T> project(const Tensor2D<T>& x, const Tensor2D<T>& shifted) const {
        Tensor2D<T> y = linear_forward(shifted, params_.value(weight_), vec(bias_));
        for (std::size_t r = 0; r < y.rows(); ++r) {
            const T last = x(r, x.cols() - 1);
            for (auto& v : y.row(r)) v += last;
        }
        return y;
    }

    ParamId weight_, bias_;
    Tensor2D<T> shifted_;
    bool valid_ = false;
};

template <class T>
std::unique_ptr<Forecaster<T>> make_model(const ModelConfig& cfg, Rng& rng) {
    switch (cfg.kind) {
        case ModelKind::MSMixer: return std::make_unique<MSMixer<T>>(cfg, rng);
        case ModelKind::DLinear: return std::make_unique<DLinear<T>>(cfg, rng);
        case ModelKind::NLinear: return std::make_unique<NLinear<T>>(cfg, rng);
    }
    throw ConfigError("make_model: unknown kind");
}

}  // namespace msmixer
