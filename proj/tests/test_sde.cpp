#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mmmc/restriction.hpp"
#include "mmmc/sde.hpp"

using namespace mmmc;

namespace {

ModelSpec constant_drift(double c, double b) {
    ModelSpec m;
    m.drift = [c](double, std::span<const double>, std::span<double> out) { out[0] = c; };
    m.diffusion = [b](double, std::span<const double>, std::span<double> out) { out[0] = b; };
    return m;
}

double sample_var(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

} // namespace

TEST(EmStep, ZeroDynamicsKeepsState) {
    const auto m = constant_drift(0.0, 0.0);
    const std::vector<double> y{1.5}, dw{0.7};
    EXPECT_EQ(em_step(m, 0.0, y, dw, 0.1)[0], 1.5);
}

TEST(EmStep, LinearHandArithmetic) {
    LinearModel m{constant_profile(-1.0), constant_profile(1.0), constant_profile(1.0)};
    const std::vector<double> y{0.0}, dw{0.2};
    EXPECT_NEAR(em_step(m, 0.0, y, dw, 0.1)[0], 0.3, 1e-15);
}

TEST(EmStep, FeneAtOriginOnlyNoise) {
    FeneParams p;
    p.kappa = scalar_kappa(constant_profile(2.0));
    p.we = 4.0;
    FeneModel m(p);
    const std::vector<double> y{0.0}, dw{0.3};
    EXPECT_DOUBLE_EQ(em_step(m, 0.0, y, dw, 0.1)[0], 0.3 / 2.0);
}

TEST(EmStep, RejectsBadArguments) {
    LinearModel m;
    const std::vector<double> y{0.0}, dw{0.2}, two{0.0, 0.0};
    EXPECT_THROW((void)em_step(m, 0.0, y, dw, 0.0), InvalidArgument);
    EXPECT_THROW((void)em_step(m, 0.0, two, dw, 0.1), InvalidArgument);
}

TEST(FeneBound, ValueAndLimit) {
    EXPECT_NEAR(fene_bound(49.0, 2e-4), 7.0 * std::sqrt(1.0 - std::sqrt(2e-4)), 1e-13);
    EXPECT_NEAR(fene_bound(49.0, 2e-4), 6.95033, 5e-6);
    EXPECT_NEAR(fene_bound(49.0, 1e-16), 7.0, 1e-6);
    EXPECT_EQ(fene_bound_squared(49.0, 0.0), 49.0);
    EXPECT_THROW((void)fene_force_factor(49.0, 49.0), StepError);
}

TEST(FeneStepAr, RedrawsNearTheBoundAndRespectsIt) {
    // A strong extensional flow pushes a state at 6.9 outward.
    FeneParams p;
    p.kappa = scalar_kappa(constant_profile(40.0));
    FeneModel m(p);
    const double dt = 2e-4;
    const std::vector<double> y{6.9};
    std::uint32_t total = 0;
    for (std::uint64_t path = 0; path < 50; ++path) {
        const auto [x, redraws] = fene_step_ar(m, 0.0, y, 5, path, 0, dt);
        EXPECT_LT(std::abs(x[0]), fene_bound(49.0, dt));
        total += redraws;
        const auto again = fene_step_ar(m, 0.0, y, 5, path, 0, dt);
        EXPECT_EQ(again.first, x);
        EXPECT_EQ(again.second, redraws);
    }
    EXPECT_GT(total, 0u);
}

TEST(FeneStepAr, RetryCapRaisesStepErrorWithPath) {
    FeneParams p;
    p.kappa = scalar_kappa(constant_profile(1e4));
    FeneModel m(p);
    Ensemble e;
    e.states = {0.1, 1.2};
    EXPECT_THROW((void)fene_step_ar(m, 0.0, std::vector<double>{50.0}, 1, 0, 0, 2e-4), StepError);
    try {
        (void)evolve_ensemble(m, e, 1, 0.5, NoObserver{}, nullptr, 3);
        FAIL() << "expected StepError";
    } catch (const StepError& err) {
        ASSERT_TRUE(err.path().has_value());
        EXPECT_LT(*err.path(), 2u);
    }
}

TEST(EvolveEnsemble, ConstantDriftShiftsEveryState) {
    const auto m = constant_drift(3.0, 0.0);
    Ensemble e;
    e.states = {0.0, 1.0, -2.0};
    const auto out = evolve_ensemble(m, e, 1, 0.25);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(out.states[j], e.states[j] + 0.75);
    EXPECT_DOUBLE_EQ(out.time, 0.25);
    EXPECT_EQ(out.lineage.step, 1u);
}

TEST(EvolveEnsemble, LinearMeanMatchesClosedForm) {
    LinearModel m;
    const auto init = sample_standard_normal(100000, 11);
    const double dt = 0.01;
    const auto out = evolve_ensemble(m, init, 100, dt);
    double mean = 0.0;
    for (double x : out.states) mean += x;
    mean /= static_cast<double>(out.size());
    const double se = std::sqrt(sample_var(out.states) / static_cast<double>(out.size()));
    EXPECT_NEAR(mean, 1.0 - std::exp(-1.0), 3.0 * se);
}

TEST(EvolveEnsemble, DeterministicAndPathDecoupled) {
    FeneParams p;
    p.kappa = scalar_kappa(periodic_flow_profile());
    FeneModel m(p);
    const auto init = sample_fene_equilibrium(p, 64, 3);
    const auto a = evolve_ensemble(m, init, 25, 2e-4);
    const auto b = evolve_ensemble(m, init, 25, 2e-4);
    EXPECT_EQ(a, b);

    // The second half evolved on its own lands on the same states.
    Ensemble half = init;
    half.states.assign(init.states.begin() + 32, init.states.end());
    half.lineage.first_path = 32;
    const auto h = evolve_ensemble(m, half, 25, 2e-4);
    for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(h.states[j], a.states[32 + j]);
}

TEST(EvolveEnsemble, ObserverSeesEveryInnerStep) {
    LinearModel m;
    const auto init = sample_standard_normal(10, 1);
    std::vector<double> times;
    Ensemble last;
    const auto out = evolve_ensemble(m, init, 4, 0.5, [&](std::size_t, const Ensemble& e) {
        times.push_back(e.time);
        last = e;
    });
    EXPECT_EQ(times, (std::vector<double>{0.5, 1.0, 1.5, 2.0}));
    EXPECT_EQ(last, out);
}

TEST(EvolveEnsemble, ReplayRecordsTheLastStep) {
    FeneParams p;
    p.kappa = scalar_kappa(constant_profile(2.0));
    FeneModel m(p);
    const auto init = sample_fene_equilibrium(p, 20, 9);
    BurstReplay replay;
    const auto out = evolve_ensemble(m, init, 3, 2e-4, NoObserver{}, &replay);
    const auto prev = evolve_ensemble(m, init, 2, 2e-4);
    EXPECT_EQ(replay.before_last, prev);
    // A replayed step differs from the original but stays admissible.
    std::vector<double> redo(1);
    replay_last_step(m, replay, 4, redo);
    EXPECT_NE(redo[0], out.states[4]);
    EXPECT_TRUE(m.admissible(redo, 2e-4));
}

TEST(FeneEquilibrium, SupportAndMoments) {
    FeneParams p;
    const std::size_t J = 100000;
    const auto e = sample_fene_equilibrium(p, J, 2024);
    double m1 = 0.0, m2 = 0.0, m4 = 0.0;
    for (double x : e.states) {
        ASSERT_LT(std::abs(x), 7.0);
        m1 += x;
        m2 += x * x;
        m4 += x * x * x * x;
    }
    m1 /= J;
    m2 /= J;
    m4 /= J;
    // Beta-integral identity: E x^2 = gamma / (gamma + 3).
    EXPECT_NEAR(m2, 49.0 / 52.0, 3.0 * std::sqrt((m4 - m2 * m2) / J));
    EXPECT_NEAR(m1, 0.0, 3.0 * std::sqrt(m2 / J));
}

TEST(FeneEquilibrium, QuadratureOracleForFourthMoment) {
    // E x^4 by midpoint quadrature of (1 - x^2/gamma)^{gamma/2}.
    const double g = 49.0, a = 7.0;
    const int n = 200000;
    double z = 0.0, q4 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = -a + (i + 0.5) * 2.0 * a / n;
        const double w = std::pow(1.0 - x * x / g, g / 2.0);
        z += w;
        q4 += w * x * x * x * x;
    }
    const double oracle = q4 / z;
    const auto e = sample_fene_equilibrium(FeneParams{}, 100000, 77);
    double m4 = 0.0, m8 = 0.0;
    for (double x : e.states) {
        m4 += std::pow(x, 4);
        m8 += std::pow(x, 8);
    }
    m4 /= 1e5;
    m8 /= 1e5;
    EXPECT_NEAR(m4, oracle, 3.0 * std::sqrt((m8 - m4 * m4) / 1e5));
}

TEST(SampleStandardNormal, ReproducibleAndStandard) {
    const auto a = sample_standard_normal(50000, 4);
    EXPECT_EQ(a, sample_standard_normal(50000, 4));
    double m = 0.0;
    for (double x : a.states) m += x;
    m /= 50000.0;
    EXPECT_NEAR(m, 0.0, 4.0 / std::sqrt(50000.0));
    EXPECT_NEAR(sample_var(a.states), 1.0, 0.03);
}

TEST(ModelSpec, MatchesConcreteFeneModel) {
    FeneParams p;
    p.kappa = scalar_kappa(periodic_flow_profile());
    FeneModel m(p);
    const auto spec = m.to_spec();
    const auto init = sample_fene_equilibrium(p, 40, 6);
    EXPECT_EQ(evolve_ensemble(m, init, 10, 2e-4), evolve_ensemble(spec, init, 10, 2e-4));
}
