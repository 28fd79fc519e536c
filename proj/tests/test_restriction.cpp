#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mmmc/restriction.hpp"

using namespace mmmc;

namespace {

Ensemble make(std::vector<double> x) {
    Ensemble e;
    e.states = std::move(x);
    return e;
}

MomentSpec spec(MomentKind k, std::size_t L, bool mean = true) { return {k, L, mean}; }

} // namespace

TEST(Restrict, StandardHandArithmetic) {
    const auto u = restrict(make({1, 2, 3}), spec(MomentKind::standard, 2));
    ASSERT_EQ(u.values.size(), 2u);
    EXPECT_DOUBLE_EQ(u.values[0], 2.0);
    EXPECT_DOUBLE_EQ(u.values[1], 14.0 / 3.0);
}

TEST(Restrict, CentralizedHandArithmetic) {
    const auto u = restrict(make({1, 2, 3}), spec(MomentKind::centralized, 2));
    EXPECT_DOUBLE_EQ(u.values[0], 2.0);
    EXPECT_DOUBLE_EQ(u.values[1], 2.0 / 3.0);
}

TEST(Restrict, SymmetricEnsembleHasNoOddCentralMoments) {
    const auto u = restrict(make({-1.5, 1.5}), spec(MomentKind::centralized, 7));
    for (std::size_t l = 2; l < 7; l += 2) EXPECT_EQ(u.values[l], 0.0) << "order " << l + 1;
}

TEST(Restrict, EvenCentralizedLayout) {
    const auto e = make({0.0, 1.0, 2.0, 5.0});
    const auto with = restrict(e, spec(MomentKind::even_centralized, 3, true));
    const auto without = restrict(e, spec(MomentKind::even_centralized, 3, false));
    // mean 2, deviations (-2,-1,0,3)
    EXPECT_DOUBLE_EQ(with.values[0], 2.0);
    EXPECT_DOUBLE_EQ(with.values[1], 14.0 / 4.0);
    EXPECT_DOUBLE_EQ(with.values[2], (16.0 + 1.0 + 81.0) / 4.0);
    EXPECT_DOUBLE_EQ(without.values[0], 14.0 / 4.0);
    EXPECT_DOUBLE_EQ(without.values[2], (64.0 + 1.0 + 729.0) / 4.0);
    EXPECT_EQ(spec(MomentKind::even_centralized, 3, false).describe(), "U1=c2;U2=c4;U3=c6");
    EXPECT_EQ(spec(MomentKind::centralized, 3).describe(), "U1=mean;U2=c2;U3=c3");
    EXPECT_EQ(spec(MomentKind::standard, 2).describe(), "U1=mean;U2=m2");
}

TEST(Restrict, ShiftMovesMeanOnly) {
    const auto e = make({0.3, -1.2, 2.5, 0.9, -0.4});
    Ensemble shifted = e;
    for (double& x : shifted.states) x += 0.25;
    const auto a = restrict(e, spec(MomentKind::centralized, 5));
    const auto b = restrict(shifted, spec(MomentKind::centralized, 5));
    EXPECT_NEAR(b.values[0], a.values[0] + 0.25, 1e-15);
    for (std::size_t l = 1; l < 5; ++l) EXPECT_NEAR(b.values[l], a.values[l], 1e-13);
}

TEST(Restrict, RejectsDegenerateInput) {
    EXPECT_THROW((void)restrict(make({}), spec(MomentKind::standard, 1)), InvalidArgument);
    EXPECT_THROW((void)restrict(make({1.0}), spec(MomentKind::centralized, 2)), InvalidArgument);
    Ensemble two_d;
    two_d.dim = 2;
    two_d.states = {1, 2};
    EXPECT_THROW((void)restrict(two_d, spec(MomentKind::standard, 1)), InvalidArgument);
    EXPECT_THROW((void)spec(MomentKind::standard, 0).variables(), InvalidArgument);
}

TEST(ObservableMean, Examples) {
    const auto id = [](std::span<const double> x) { return std::vector<double>{x[0]}; };
    const auto sq = [](std::span<const double> x) { return std::vector<double>{x[0] * x[0]}; };
    const auto c = [](std::span<const double>) { return std::vector<double>{4.5, -1.0}; };
    EXPECT_DOUBLE_EQ(observable_mean(make({1, 2, 3}), id)[0], 2.0);
    EXPECT_DOUBLE_EQ(observable_mean(make({-1, 0, 1}), sq)[0], 2.0 / 3.0);
    const auto v = observable_mean(make({7, -3, 0.1}), c);
    EXPECT_DOUBLE_EQ(v[0], 4.5);
    EXPECT_DOUBLE_EQ(v[1], -1.0);
}

TEST(StressKramers, Examples) {
    FeneParams p;
    EXPECT_DOUBLE_EQ(stress_kramers(make({0.0, 0.0, 0.0}), p), -1.0);
    EXPECT_NEAR(stress_kramers(make({1.0, -1.0}), p), 1.0 / 48.0, 1e-15);
    const double s1 = stress_kramers(make({0.5, -2.0, 3.0}), p);
    p.epsilon = 2.0;
    EXPECT_DOUBLE_EQ(stress_kramers(make({0.5, -2.0, 3.0}), p), 2.0 * s1);
}

TEST(StressKramers, TensorReducesToScalarIn1D) {
    FeneParams p;
    const auto e = make({0.5, -2.0, 3.0, 6.0});
    EXPECT_DOUBLE_EQ(stress_kramers_tensor(e, p)[0], stress_kramers(e, p));
    Ensemble two;
    two.dim = 2;
    two.states = {1.0, 0.0, 0.0, 1.0};
    const auto t = stress_kramers_tensor(two, p);
    // Each state contributes x x^T / (1 - 1/49) and there are two of them.
    EXPECT_NEAR(t[0], 0.5 * 49.0 / 48.0 - 1.0, 1e-15);
    EXPECT_NEAR(t[1], 0.0, 1e-15);
    EXPECT_NEAR(t[3], 0.5 * 49.0 / 48.0 - 1.0, 1e-15);
}

TEST(MomentKind, StringRoundTrip) {
    for (auto k : {MomentKind::standard, MomentKind::centralized, MomentKind::even_centralized})
        EXPECT_EQ(moment_kind_from_string(to_string(k)), k);
    EXPECT_THROW((void)moment_kind_from_string("cubic"), InvalidArgument);
}

TEST(MacroDistance, MaxNorm) {
    MacroState a{{1.0, 2.0, 3.0}, spec(MomentKind::standard, 3), 0.0};
    MacroState b{{1.5, 1.0, 3.25}, spec(MomentKind::standard, 3), 0.0};
    EXPECT_DOUBLE_EQ(macro_distance(a, b), 1.0);
}
