#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "mmmc/analysis.hpp"
#include "mmmc/orchestrator.hpp"

using namespace mmmc;

namespace {

AccelerationScheme scheme(double dtm, double dt, std::size_t K, MomentSpec spec, bool adaptive = false) {
    AccelerationScheme s;
    s.spec = spec;
    s.extrap.dt = dt;
    s.extrap.K = K;
    s.policy.dt = dt;
    s.policy.K = K;
    s.policy.dt_macro = dtm;
    s.policy.dt_max = std::max(dtm, s.policy.dt_max);
    s.policy.adaptive = adaptive;
    return s;
}

double second_moment(const Ensemble& e) {
    double s = 0.0;
    for (double x : e.states) s += x * x;
    return s / static_cast<double>(e.size());
}

} // namespace

TEST(StepPolicy, ShrinkAndGrowArithmetic) {
    StepPolicy p;
    p.dt = 2e-4;
    p.K = 1;
    p.shrink = 0.2;
    p.grow = 1.2;
    p.dt_max = 8e-3;
    EXPECT_EQ(p.after_failure(1e-2), 2e-3);
    EXPECT_EQ(p.after_success(7e-3), 8e-3);
    EXPECT_EQ(p.after_failure(5e-4), 2e-4);
    EXPECT_DOUBLE_EQ(p.after_success(1e-3), 1.2e-3);
    p.adaptive = false;
    EXPECT_EQ(p.after_success(1e-3), 1e-3);
}

TEST(StepPolicy, Validation) {
    StepPolicy p;
    p.dt_macro = 1e-4;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = StepPolicy{};
    p.shrink = 1.5;
    EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(Integrator, IdentityLimitLinear) {
    LinearModel m;
    const auto init = sample_standard_normal(200, 5);
    const auto s = scheme(2e-4, 2e-4, 1, {MomentKind::centralized, 2, true});
    const auto rec = accelerate(m, init, s, second_moment, 0.1);
    const auto ref = evolve_ensemble(m, init, 500, 2e-4);
    EXPECT_EQ(rec.final_state.states, ref.states);
    EXPECT_EQ(rec.rows.size(), 501u);
    EXPECT_EQ(rec.micro_steps, 500u);
    EXPECT_NEAR(rec.speedup(), 1.0, 1e-12);
}

TEST(Integrator, IdentityLimitFeneWithBurst) {
    FeneParams p;
    p.kappa = scalar_kappa(periodic_flow_profile());
    FeneModel m(p);
    const auto init = sample_fene_equilibrium(p, 100, 8);
    const auto s = scheme(6e-4, 2e-4, 3, {MomentKind::even_centralized, 3, false});
    const auto rec = accelerate(m, init, s, [&](const Ensemble& e) { return stress_kramers(e, p); }, 0.06);
    const auto ref = evolve_ensemble(m, init, 300, 2e-4);
    EXPECT_EQ(rec.final_state.states, ref.states);
}

TEST(Integrator, EndEqualsStartGivesOnlyInitialRow) {
    LinearModel m;
    const auto init = sample_standard_normal(50, 1);
    const auto rec = accelerate(m, init, scheme(1e-3, 2e-4, 1, {}), second_moment, 0.0);
    ASSERT_EQ(rec.rows.size(), 1u);
    EXPECT_EQ(rec.rows[0].time, 0.0);
    EXPECT_EQ(rec.final_state, init);
}

TEST(Integrator, LinearSecondMomentTracksMomentOde) {
    LinearModel m;
    const auto init = sample_standard_normal(1000, 31);
    const auto rec = accelerate(m, init, scheme(1e-3, 2e-4, 1, {MomentKind::centralized, 2, true}), second_moment, 1.0);
    const auto exact = moment_ode_closed_form(-1.0, 1.0, 1.0, 0.0, 1.0, 1.0);
    const auto& fin = rec.final_state;
    double m4 = 0.0;
    for (double x : fin.states) m4 += std::pow(x, 4);
    m4 /= static_cast<double>(fin.size());
    const double m2 = second_moment(fin);
    const double se = std::sqrt((m4 - m2 * m2) / static_cast<double>(fin.size()));
    EXPECT_NEAR(rec.rows.back().qoi, exact.second_moment(), 4.0 * se);
    EXPECT_NEAR(rec.rows.back().time, 1.0, 0.0);
    EXPECT_NEAR(rec.speedup(), 5.0, 1e-6);
    for (const auto& r : rec.rows) EXPECT_TRUE(r.match_ok);
}

TEST(Integrator, TruncatesTheFinalStep) {
    LinearModel m;
    const auto init = sample_standard_normal(100, 2);
    const auto rec = accelerate(m, init, scheme(1e-3, 2e-4, 1, {MomentKind::centralized, 2, true}), second_moment,
                                0.0047);
    EXPECT_EQ(rec.rows.back().time, 0.0047);
    EXPECT_NEAR(rec.rows.back().dt_macro, 7e-4, 1e-15);
    for (std::size_t i = 1; i < rec.rows.size(); ++i) EXPECT_GT(rec.rows[i].time, rec.rows[i - 1].time);
}

TEST(Integrator, RejectedStepShrinksAndRetries) {
    // Fast variance decay: a long projective step extrapolates the variance
    // below zero, which matching cannot reach.
    LinearModel m{constant_profile(-50.0), constant_profile(0.0), constant_profile(0.0)};
    const auto init = sample_standard_normal(200, 4);
    auto s = scheme(2e-2, 1e-3, 1, {MomentKind::centralized, 2, true}, true);
    s.policy.dt_max = 2e-2;
    MicroMacroIntegrator<LinearModel> integ(m, s, second_moment);
    TrajectoryRecord rec;
    const auto out = integ.step(init, 1.0, rec);
    ASSERT_EQ(rec.rows.size(), 1u);
    EXPECT_EQ(rec.rows[0].rejections, 1u);
    EXPECT_NEAR(rec.rows[0].dt_macro, 4e-3, 1e-15);
    EXPECT_NEAR(out.time, 4e-3, 1e-15);
    EXPECT_NEAR(integ.policy().dt_macro, 4.8e-3, 1e-15);
}

TEST(Integrator, MultistepWarmsUpMicroscopically) {
    LinearModel m;
    const auto init = sample_standard_normal(300, 6);
    auto s = scheme(1e-3, 2e-4, 1, {MomentKind::centralized, 2, true});
    s.extrap.method = ExtrapMethod::multistep;
    s.extrap.order = 2;
    const auto rec = accelerate(m, init, s, second_moment, 1e-2);
    ASSERT_EQ(rec.rows.size(), 11u);
    // Two warm-up steps are pure microscopic; the rest extrapolate and match.
    EXPECT_EQ(rec.rows[1].match_iters, 0u);
    EXPECT_EQ(rec.rows[2].match_iters, 0u);
    for (std::size_t i = 3; i < rec.rows.size(); ++i) EXPECT_GT(rec.rows[i].match_iters, 0u) << i;
    EXPECT_EQ(rec.micro_steps, 2u * 5u + 8u);
}

TEST(Integrator, MultistepProjectiveWarmup) {
    LinearModel m;
    const auto init = sample_standard_normal(300, 6);
    auto s = scheme(1e-3, 2e-4, 1, {MomentKind::centralized, 2, true});
    s.extrap.method = ExtrapMethod::multistep;
    s.warmup = WarmupMode::projective;
    const auto rec = accelerate(m, init, s, second_moment, 5e-3);
    EXPECT_EQ(rec.micro_steps, 5u);
    EXPECT_EQ(rec.warmup, "projective");
}

TEST(Integrator, RecordsInnerSamples) {
    LinearModel m;
    const auto init = sample_standard_normal(40, 6);
    const auto rec = accelerate(m, init, scheme(1e-3, 2e-4, 2, {MomentKind::centralized, 2, true}), second_moment,
                                3e-3, true);
    EXPECT_EQ(rec.inner.size(), 6u);
}

TEST(TrajectoryCsv, HeaderAndRows) {
    LinearModel m;
    const auto init = sample_standard_normal(40, 6);
    const auto rec = accelerate(m, init, scheme(1e-3, 2e-4, 1, {MomentKind::centralized, 2, true}), second_moment,
                                2e-3);
    std::ostringstream os;
    write_trajectory_csv(os, rec, {{"config_hash", "abc"}});
    const std::string s = os.str();
    EXPECT_NE(s.find("# config_hash=abc\n# seed=6\n"), std::string::npos);
    EXPECT_NE(s.find("# moments=centralized;L=2;U1=mean;U2=c2\n"), std::string::npos);
    EXPECT_NE(s.find("time,U_1,U_2,qoi,dt_macro,match_iters,match_residual,rejections,match_ok,match_failure,"
                     "lambda_1,lambda_2\n"),
              std::string::npos);
    std::size_t lines = 0;
    for (char c : s) lines += c == '\n';
    EXPECT_EQ(lines, 6u + 1u + rec.rows.size());
}
