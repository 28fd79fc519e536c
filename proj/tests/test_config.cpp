#include <gtest/gtest.h>

#include <sstream>

#include "mmmc/config.hpp"

using namespace mmmc;

TEST(Config, DefaultsCarryTheReferenceValues) {
    const ExperimentConfig c;
    EXPECT_EQ(c.dt, 2e-4);
    EXPECT_EQ(c.gamma, 49.0);
    EXPECT_EQ(c.we, 1.0);
    EXPECT_EQ(c.epsilon, 1.0);
    EXPECT_EQ(c.shrink, 0.2);
    EXPECT_EQ(c.grow, 1.2);
    EXPECT_EQ(c.dt_max, 8e-3);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, EmittedSnapshotRoundTrips) {
    ExperimentConfig c;
    c.model = ModelKind::linear;
    c.initial = InitialKind::normal;
    c.qoi = QoiKind::second_moment;
    c.a1.text = "constant(-0.3)";
    c.b.text = "0.5";
    c.moments = MomentKind::centralized;
    c.include_mean = true;
    c.method = ExtrapMethod::multistep;
    c.order = 2;
    c.dt0 = 4e-3;
    c.seed = 123456789012345ull;
    c.dt_values = {2e-4, 1e-3, 0.04};
    c.L_values = {3, 5};
    c.out_dir = "some dir";
    c.T = 1.0 / 3.0;
    const std::string text = emit_config(c);
    const auto back = parse_config_string(text);
    EXPECT_EQ(back, c);
    EXPECT_EQ(emit_config(back), text);
    EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, ParsesSectionsCommentsAndProfiles) {
    const auto c = parse_config_string(R"(
# a comment
[model]
type = linear
a1 = constant(-2)   # inline comment
kappa = periodic
[numerics]
J = 500
seed = 9
[experiment]
initial = normal
qoi = mean
)");
    EXPECT_EQ(c.model, ModelKind::linear);
    EXPECT_EQ(c.a1.make()(0.7), -2.0);
    EXPECT_EQ(c.J, 500u);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_NEAR(c.kappa.make()(0.5), 2.0 * 2.1, 1e-15);
    EXPECT_FALSE(c.kappa.constant_value().has_value());
}

TEST(Config, ErrorsReportLineAndKey) {
    try {
        (void)parse_config_string("[numerics]\nJ = 10\ndt = fast\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_EQ(e.key(), "numerics.dt");
    }
    try {
        (void)parse_config_string("[macro]\n\nbogus = 1\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_EQ(e.key(), "macro.bogus");
    }
    EXPECT_THROW((void)parse_config_string("[nowhere]\n"), ConfigError);
    EXPECT_THROW((void)parse_config_string("J = 3\n"), ConfigError);
    EXPECT_THROW((void)parse_config_string("[macro]\nmethod = spline\n"), ConfigError);
    EXPECT_THROW((void)parse_config_string("[model]\nkappa = constant(x)\n"), ConfigError);
}

TEST(Config, SemanticValidation) {
    EXPECT_THROW((void)parse_config_string("[policy]\ndt0 = 1e-5\n"), ConfigError);
    EXPECT_THROW((void)parse_config_string("[model]\ntype = linear\n"), ConfigError); // stress QoI needs FENE
    EXPECT_THROW((void)parse_config_string("[numerics]\nT = -1\n"), ConfigError);
    EXPECT_THROW((void)parse_config_string("[macro]\nmethod = multistep\n[policy]\ndt0 = 3.3e-4\n"), ConfigError);
}

TEST(Config, HashIgnoresOutputLocationAndWorkers) {
    ExperimentConfig a, b;
    b.out_dir = "/elsewhere";
    b.workers = 8;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seed = 2;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, SchemeReflectsSettings) {
    ExperimentConfig c;
    c.K = 3;
    c.dt0 = 2e-3;
    const auto s = c.scheme();
    EXPECT_EQ(s.policy.K, 3u);
    EXPECT_EQ(s.extrap.K, 3u);
    EXPECT_EQ(s.policy.dt_macro, 2e-3);
    EXPECT_EQ(s.spec.kind, MomentKind::even_centralized);
    EXPECT_FALSE(s.spec.include_mean);
}

TEST(Fnv, ReferenceVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}
