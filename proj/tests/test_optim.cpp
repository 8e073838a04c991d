#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "msmixer/models.hpp"
#include "msmixer/optim.hpp"

using namespace msmixer;

namespace {

ParamStore<double> single(double value, double grad) {
    ParamStore<double> p;
    const auto id = p.add("theta", 1, 1, value);
    p.grad(id)[0] = grad;
    p.mark_gradients();
    return p;
}

// Straight-line AdamW for one scalar, used as an oracle over several steps.
struct ScalarAdamW {
    double lr, wd, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double m = 0, v = 0;
    int t = 0;
    double step(double theta, double g) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
        theta -= lr * wd * theta;
        return theta - lr * mh / (std::sqrt(vh) + eps);
    }
};

}  // namespace

TEST(ClipGradNorm, ThreeFourFive) {
    ParamStore<double> p;
    const auto id = p.add("g", 1, 2);
    p.grad(id)[0] = 3;
    p.grad(id)[1] = 4;
    EXPECT_DOUBLE_EQ(clip_grad_norm(p, 1.0), 0.2);
    EXPECT_DOUBLE_EQ(p.grad(id)[0], 0.6);
    EXPECT_DOUBLE_EQ(p.grad(id)[1], 0.8);
}

TEST(ClipGradNorm, UnderThresholdUntouched) {
    ParamStore<double> p;
    const auto id = p.add("g", 1, 2);
    p.grad(id)[0] = 0.3;
    p.grad(id)[1] = 0.4;
    EXPECT_EQ(clip_grad_norm(p, 1.0), 1.0);
    EXPECT_EQ(p.grad(id)[0], 0.3);
    EXPECT_EQ(p.grad(id)[1], 0.4);
}

TEST(ClipGradNorm, GlobalAcrossTensors) {
    ParamStore<double> p;
    const auto a = p.add("a", 1, 2), b = p.add("b", 1, 2);
    p.grad(a)[0] = 3;
    p.grad(b)[1] = 4;
    EXPECT_DOUBLE_EQ(clip_grad_norm(p, 1.0), 0.2);
    EXPECT_DOUBLE_EQ(p.grad(a)[0], 0.6);
    EXPECT_EQ(p.grad(a)[1], 0.0);
    EXPECT_DOUBLE_EQ(p.grad(b)[1], 0.8);
}

TEST(ClipGradNorm, NormBoundHoldsOnRandomGradients) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        ParamStore<double> p;
        for (int k = 0; k < 4; ++k) {
            const auto id = p.add("p" + std::to_string(k), 3, 5);
            for (auto& g : p.grad(id).flat()) g = rng.normal(0, 2.0);
        }
        clip_grad_norm(p, 1.0);
        EXPECT_LE(p.grad_norm(), 1.0 + 1e-9);
    }
}

TEST(AdamWStep, FirstStepHandValue) {
    auto p = single(1.0, 1.0);
    AdamW<double> opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
    opt.step(p);
    // m_hat = v_hat = 1 after bias correction.
    EXPECT_DOUBLE_EQ(p.entries()[0].value[0], 1.0 - 1e-3 / (1.0 + 1e-8));
    EXPECT_NEAR(p.entries()[0].value[0], 0.999, 1e-10);
    EXPECT_EQ(opt.step_count(), 1u);
}

TEST(AdamWStep, ZeroGradientNoDecayIsNoop) {
    auto p = single(0.75, 0.0);
    AdamW<double> opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
    opt.step(p);
    EXPECT_EQ(p.entries()[0].value[0], 0.75);
}

TEST(AdamWStep, ZeroGradientPureDecay) {
    auto p = single(0.75, 0.0);
    AdamW<double> opt({1e-3, 0.9, 0.999, 1e-8, 1e-4});
    opt.step(p);
    EXPECT_DOUBLE_EQ(p.entries()[0].value[0], 0.75 * (1.0 - 1e-3 * 1e-4));
}

TEST(AdamWStep, MatchesScalarOracleOverManySteps) {
    Rng rng(8);
    ParamStore<double> p;
    const auto id = p.add("theta", 1, 3, 0.5);
    AdamW<double> opt({2e-3, 0.9, 0.999, 1e-8, 1e-2});
    std::vector<ScalarAdamW> ref(3, ScalarAdamW{2e-3, 1e-2});
    std::vector<double> theta(3, 0.5);
    for (int step = 0; step < 25; ++step) {
        p.zero_grad();
        for (std::size_t i = 0; i < 3; ++i) p.grad(id)[i] = rng.normal(0, 1);
        p.mark_gradients();
        for (std::size_t i = 0; i < 3; ++i) theta[i] = ref[i].step(theta[i], p.grad(id)[i]);
        opt.step(p);
        for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p.value(id)[i], theta[i], 1e-14);
    }
}

TEST(AdamWStep, StepWithoutGradientIsUsageError) {
    ParamStore<double> p;
    p.add("theta", 1, 1, 1.0);
    AdamW<double> opt;
    EXPECT_THROW(opt.step(p), UsageError);
    p.mark_gradients();
    EXPECT_NO_THROW(opt.step(p));
    p.zero_grad();
    EXPECT_THROW(opt.step(p), UsageError);
}

TEST(AdamWStep, DecreasesConvexQuadratic) {
    // f(theta) = sum_i c_i (theta_i - t_i)^2
    const std::vector<double> c{1.0, 4.0, 0.25}, target{0.3, -0.7, 2.0};
    ParamStore<double> p;
    const auto id = p.add("theta", 1, 3);
    auto f = [&] {
        double s = 0;
        for (std::size_t i = 0; i < 3; ++i) s += c[i] * std::pow(p.value(id)[i] - target[i], 2);
        return s;
    };
    AdamW<double> opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
    const double start = f();
    double prev = start;
    for (int step = 0; step < 100; ++step) {
        p.zero_grad();
        for (std::size_t i = 0; i < 3; ++i) p.grad(id)[i] = 2 * c[i] * (p.value(id)[i] - target[i]);
        p.mark_gradients();
        opt.step(p);
        EXPECT_LE(f(), prev + 1e-15);
        prev = f();
    }
    EXPECT_LT(prev, start);
}

TEST(AdamWStep, GateStaysOnSimplexAfterSteps) {
    ModelConfig cfg;
    cfg.lookback = 16;
    cfg.horizon = 4;
    cfg.hidden = 3;
    cfg.n_vars = 2;
    cfg.scales = {1, 4, 16};
    cfg.kernel = 5;
    Rng rng(3);
    MSMixer<double> m(cfg, rng);
    AdamW<double> opt({5e-2, 0.9, 0.999, 1e-8, 1e-4});
    Tensor2D<double> x(4, 16), y(4, 4);
    for (auto& v : x.flat()) v = rng.normal(0, 1);
    for (auto& v : y.flat()) v = rng.normal(0, 1);
    for (int step = 0; step < 30; ++step) {
        m.params().zero_grad();
        const auto pred = m.forward(x, true, rng);
        m.backward(mse_loss_grad(pred, y));
        clip_grad_norm(m.params(), 1.0);
        opt.step(m.params());
        const auto w = *m.gate_weights();
        double sum = 0;
        for (double v : w) {
            EXPECT_GT(v, 0.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Plateau, MonotoneImprovementKeepsLr) {
    PlateauScheduler s(1e-3);
    for (double l : {1.0, 0.9, 0.8}) EXPECT_EQ(s.step(l), 1e-3);
}

TEST(Plateau, HalvesAfterThirdNonImprovingEpoch) {
    PlateauScheduler s(1e-3);
    EXPECT_EQ(s.step(1.0), 1e-3);
    EXPECT_EQ(s.step(1.0), 1e-3);
    EXPECT_EQ(s.step(1.0), 1e-3);
    EXPECT_EQ(s.step(1.0), 5e-4);
    EXPECT_EQ(s.bad_epochs(), 0u);
}

TEST(Plateau, NoRestorationAfterHalving) {
    PlateauScheduler s(1e-3);
    for (double l : {1.0, 1.0, 1.0, 1.0}) s.step(l);
    EXPECT_EQ(s.step(0.5), 5e-4);
    EXPECT_EQ(s.step(0.4), 5e-4);
}

TEST(Plateau, SequenceIsNonIncreasingByExactHalves) {
    PlateauScheduler s(1e-3);
    Rng rng(2);
    double prev = 1e-3;
    for (int e = 0; e < 60; ++e) {
        const double lr = s.step(1.0 + rng.uniform());
        EXPECT_TRUE(lr == prev || lr == prev * 0.5);
        prev = lr;
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(EarlyStop, StrictlyDecreasingNeverStops) {
    ParamStore<double> p;
    const auto id = p.add("w", 1, 1);
    EarlyStopper<double> es(4);
    for (int e = 1; e <= 15; ++e) {
        p.value(id)[0] = e;
        EXPECT_EQ(es.check(1.0 / e, p), StopDecision::Continue);
    }
    EXPECT_EQ(es.best_epoch(), 15u);
}

TEST(EarlyStop, FourBadEpochsStopAtFiveAndRestoreFirst) {
    ParamStore<double> p;
    const auto id = p.add("w", 1, 1);
    EarlyStopper<double> es(4);
    const std::vector<double> losses{1.0, 1.0, 1.2, 1.0, 3.0};
    for (std::size_t e = 0; e < losses.size(); ++e) {
        p.value(id)[0] = static_cast<double>(e + 1);
        const auto d = es.check(losses[e], p);
        EXPECT_EQ(d, e + 1 == losses.size() ? StopDecision::Stop : StopDecision::Continue) << "epoch " << e + 1;
    }
    EXPECT_EQ(es.best_epoch(), 1u);
    es.restore_best(p);
    EXPECT_EQ(p.value(id)[0], 1.0);
}

TEST(EarlyStop, TieIsNotImprovement) {
    ParamStore<double> p;
    p.add("w", 1, 1);
    EarlyStopper<double> es(4);
    es.check(0.5, p);
    es.check(0.5, p);
    EXPECT_EQ(es.bad_epochs(), 1u);
    EXPECT_EQ(es.best_epoch(), 1u);
}
