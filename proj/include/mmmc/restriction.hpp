#pragma once

// Moment specifications, the restriction operator, and quantities of interest.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmmc/error.hpp"
#include "mmmc/reduce.hpp"
#include "mmmc/sde.hpp"

namespace mmmc {

enum class MomentKind { standard, centralized, even_centralized };

[[nodiscard]] inline std::string to_string(MomentKind k) {
    switch (k) {
    case MomentKind::standard: return "standard";
    case MomentKind::centralized: return "centralized";
    case MomentKind::even_centralized: return "even-centralized";
    }
    return "?";
}

[[nodiscard]] inline MomentKind moment_kind_from_string(const std::string& s) {
    if (s == "standard") return MomentKind::standard;
    if (s == "centralized") return MomentKind::centralized;
    if (s == "even-centralized") return MomentKind::even_centralized;
    throw InvalidArgument("unknown moment kind '" + s + "'");
}

/// One macroscopic variable: (1/J) sum (y - centre)^power, where the centre is
/// the ensemble mean if `centered` and 0 otherwise.
struct MomentVariable {
    unsigned power = 1;
    bool centered = false;
    friend bool operator==(const MomentVariable&, const MomentVariable&) = default;
};

/// Which L moments make up the macroscopic state.
///
/// standard:          orders 1..L about 0
/// centralized:       mean, then central orders 2..L
/// even-centralized:  [mean,] central orders 2, 4, 6, ...; L counts every
///                    variable, the mean included when `include_mean` is set
struct MomentSpec {
    MomentKind kind = MomentKind::centralized;
    std::size_t L = 2;
    bool include_mean = true;

    void validate() const {
        if (L < 1) throw InvalidArgument("moment spec: L must be at least 1");
    }

    [[nodiscard]] std::vector<MomentVariable> variables() const {
        validate();
        std::vector<MomentVariable> v;
        v.reserve(L);
        switch (kind) {
        case MomentKind::standard:
            for (unsigned l = 1; l <= L; ++l) v.push_back({l, false});
            break;
        case MomentKind::centralized:
            v.push_back({1, false});
            for (unsigned l = 2; l <= L; ++l) v.push_back({l, true});
            break;
        case MomentKind::even_centralized: {
            if (include_mean) v.push_back({1, false});
            for (unsigned p = 2; v.size() < L; p += 2) v.push_back({p, true});
            break;
        }
        }
        return v;
    }

    /// True if the mean is needed as a centre but is not itself a variable.
    [[nodiscard]] bool has_hidden_mean() const { return kind == MomentKind::even_centralized && !include_mean; }

    /// Index map written into output metadata, e.g. "U1=mean;U2=c2;U3=c4".
    [[nodiscard]] std::string describe() const {
        std::string s;
        const auto vars = variables();
        for (std::size_t i = 0; i < vars.size(); ++i) {
            if (i) s += ';';
            s += "U" + std::to_string(i + 1) + '=';
            if (!vars[i].centered && vars[i].power == 1) s += "mean";
            else s += (vars[i].centered ? "c" : "m") + std::to_string(vars[i].power);
        }
        return s;
    }

    friend bool operator==(const MomentSpec&, const MomentSpec&) = default;
};

struct MacroState {
    std::vector<double> values;
    MomentSpec spec;
    double time = 0.0;
};

namespace detail {

inline void require_scalar_nonempty(const Ensemble& ens, const char* who) {
    if (ens.empty()) throw InvalidArgument(std::string(who) + ": empty ensemble");
    if (ens.dim != 1) throw InvalidArgument(std::string(who) + ": moments are defined for 1-D ensembles only");
}

/// Empirical mean with the fixed-order reduction.
[[nodiscard]] inline double ensemble_mean(std::span<const double> y) {
    return pairwise_sum(y) / static_cast<double>(y.size());
}

/// (1/J) sum (y_j - c_k)^{p_k} for each variable k, with c_k = centre for
/// centered variables. Shared by restriction and matching so that restricting
/// an ensemble and evaluating a matching constraint on it agree bit for bit.
[[nodiscard]] inline std::vector<double> moment_values(std::span<const double> y,
                                                       std::span<const MomentVariable> vars, double centre) {
    const std::size_t width = vars.size();
    auto sums = pairwise_sums(y.size(), width, [&](std::size_t j, double* acc) {
        for (std::size_t k = 0; k < width; ++k) {
            const double e = vars[k].centered ? y[j] - centre : y[j];
            double p = e;
            for (unsigned q = 1; q < vars[k].power; ++q) p *= e;
            acc[k] += p;
        }
    });
    const double J = static_cast<double>(y.size());
    for (double& s : sums) s /= J;
    return sums;
}

} // namespace detail

/// Restriction: empirical moments of a 1-D ensemble.
[[nodiscard]] inline MacroState restrict(const Ensemble& ens, const MomentSpec& spec) {
    detail::require_scalar_nonempty(ens, "restrict");
    const auto vars = spec.variables();
    const bool any_centered = std::any_of(vars.begin(), vars.end(), [](const auto& v) { return v.centered; });
    if (any_centered && ens.size() < 2) throw InvalidArgument("restrict: centralized moments need J >= 2");
    const double centre = any_centered ? detail::ensemble_mean(ens.states) : 0.0;
    return {detail::moment_values(ens.states, vars, centre), spec, ens.time};
}

/// Empirical mean of an arbitrary vector observable.
[[nodiscard]] inline std::vector<double> observable_mean(
    const Ensemble& ens, const std::function<std::vector<double>(std::span<const double>)>& f) {
    if (ens.empty()) throw InvalidArgument("observable_mean: empty ensemble");
    const std::size_t J = ens.size();
    const std::size_t width = f(ens.state(0)).size();
    auto sums = pairwise_sums(J, width, [&](std::size_t j, double* acc) {
        const auto v = f(ens.state(j));
        if (v.size() != width) throw InvalidArgument("observable_mean: observable changed length");
        for (std::size_t q = 0; q < width; ++q) acc[q] += v[q];
    });
    for (double& s : sums) s /= static_cast<double>(J);
    return sums;
}

/// Kramers stress (eps/We) (E[X F(X)] - 1) for a 1-D ensemble.
[[nodiscard]] inline double stress_kramers(const Ensemble& ens, const FeneParams& params) {
    detail::require_scalar_nonempty(ens, "stress_kramers");
    const double gamma = params.gamma;
    const double xf = pairwise_sums(ens.size(), 1, [&](std::size_t j, double* acc) {
                          const double x = ens.states[j];
                          acc[0] += x * x * fene_force_factor(x * x, gamma);
                      })[0] /
                      static_cast<double>(ens.size());
    return params.epsilon / params.we * (xf - 1.0);
}

/// Kramers stress tensor (eps/We) (E[X (x) F(X)] - Id), d x d row-major.
[[nodiscard]] inline std::vector<double> stress_kramers_tensor(const Ensemble& ens, const FeneParams& params) {
    if (ens.empty()) throw InvalidArgument("stress_kramers_tensor: empty ensemble");
    const std::size_t d = ens.dim;
    auto sums = pairwise_sums(ens.size(), d * d, [&](std::size_t j, double* acc) {
        const auto x = ens.state(j);
        double n2 = 0.0;
        for (double v : x) n2 += v * v;
        const double f = fene_force_factor(n2, params.gamma);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) acc[a * d + b] += x[a] * x[b] * f;
    });
    const double scale = params.epsilon / params.we;
    for (std::size_t i = 0; i < d * d; ++i)
        sums[i] = scale * (sums[i] / static_cast<double>(ens.size()) - (i % (d + 1) == 0 ? 1.0 : 0.0));
    return sums;
}

/// Max-norm distance between two macro states of the same spec.
[[nodiscard]] inline double macro_distance(const MacroState& a, const MacroState& b) {
    if (a.values.size() != b.values.size()) throw InvalidArgument("macro_distance: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

} // namespace mmmc
