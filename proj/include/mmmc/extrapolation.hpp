#pragma once

// Extrapolation of macroscopic states: coarse projective (from the restrictions
// of the current burst), its chord variant, and multistep state extrapolation
// (from the endpoints of previous bursts).

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmmc/error.hpp"
#include "mmmc/restriction.hpp"

namespace mmmc {

enum class ExtrapMethod { projective, projective_chord, multistep };

[[nodiscard]] inline std::string to_string(ExtrapMethod m) {
    switch (m) {
    case ExtrapMethod::projective: return "projective";
    case ExtrapMethod::projective_chord: return "projective-chord";
    case ExtrapMethod::multistep: return "multistep";
    }
    return "?";
}

[[nodiscard]] inline ExtrapMethod extrap_method_from_string(const std::string& s) {
    if (s == "projective") return ExtrapMethod::projective;
    if (s == "projective-chord") return ExtrapMethod::projective_chord;
    if (s == "multistep") return ExtrapMethod::multistep;
    throw InvalidArgument("unknown extrapolation method '" + s + "'");
}

struct ExtrapConfig {
    ExtrapMethod method = ExtrapMethod::projective;
    std::size_t order = 1;     ///< p_e
    std::size_t chord_lag = 0; ///< K_1, chord variant only
    std::size_t K = 1;
    double dt = 2e-4;          ///< inner step

    void validate() const {
        if (order < 1) throw InvalidArgument("extrapolation: order must be at least 1");
        if (K < 1) throw InvalidArgument("extrapolation: K must be at least 1");
        if (!(dt > 0.0)) throw InvalidArgument("extrapolation: inner step must be positive");
        if (method == ExtrapMethod::projective && order > K)
            throw InvalidArgument("extrapolation: projective order must not exceed K");
        if (method == ExtrapMethod::projective_chord && chord_lag >= K)
            throw InvalidArgument("extrapolation: chord lag K1 must be below K");
    }
};

/// Gap factors below this magnitude are treated as exactly zero.
inline constexpr double kAlphaSnap = 1e-9;

/// alpha = dt_macro / dt - K; throws if dt_macro < K dt.
[[nodiscard]] inline double extrapolation_alpha(double dt_macro, double dt, std::size_t K) {
    double alpha = dt_macro / dt - static_cast<double>(K);
    if (std::abs(alpha) <= kAlphaSnap) alpha = 0.0;
    if (alpha < 0.0) throw InvalidArgument("extrapolation: macro step below K inner steps");
    return alpha;
}

/// Lagrange coefficient l_s(alpha) = prod_{m != s} (alpha + m) / (s! (p-s)! (-1)^s),
/// the extrapolation weight of the value s unit steps back.
[[nodiscard]] inline double lagrange_coeff(std::size_t s, double alpha, std::size_t p) {
    if (s > p) throw InvalidArgument("lagrange_coeff: index above order");
    double num = 1.0;
    for (std::size_t m = 0; m <= p; ++m)
        if (m != s) num *= alpha + static_cast<double>(m);
    double den = 1.0;
    for (std::size_t m = 2; m <= s; ++m) den *= static_cast<double>(m);
    for (std::size_t m = 2; m <= p - s; ++m) den *= static_cast<double>(m);
    return (s % 2 == 0 ? num : -num) / den;
}

[[nodiscard]] inline std::vector<double> lagrange_coeffs(double alpha, std::size_t p) {
    std::vector<double> c(p + 1);
    for (std::size_t s = 0; s <= p; ++s) c[s] = lagrange_coeff(s, alpha, p);
    return c;
}

namespace detail {

inline void check_history(std::span<const MacroState> hist, std::size_t need, const char* who) {
    if (hist.size() < need) throw InvalidArgument(std::string(who) + ": insufficient history");
    const auto& spec = hist.back().spec;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        if (!(hist[i].spec == spec) || hist[i].values.size() != hist.back().values.size())
            throw InvalidArgument(std::string(who) + ": history mixes moment specs");
        if (i > 0 && !(hist[i].time > hist[i - 1].time))
            throw InvalidArgument(std::string(who) + ": history times must increase");
    }
}

/// sum_s w[s] * hist[last - lags[s]]
[[nodiscard]] inline MacroState combine(std::span<const MacroState> hist, std::span<const double> w,
                                        std::span<const std::size_t> lags, double time) {
    const MacroState& last = hist.back();
    MacroState out{std::vector<double>(last.values.size(), 0.0), last.spec, time};
    for (std::size_t s = 0; s < w.size(); ++s) {
        const MacroState& u = hist[hist.size() - 1 - lags[s]];
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += w[s] * u.values[i];
    }
    return out;
}

} // namespace detail

/// Projective extrapolation from the burst restrictions U^{n,0..K} (oldest
/// first; at least the last p_e + 1, or K - K_1 + 1 for the chord variant).
/// Result time is the latest restriction time plus alpha dt.
[[nodiscard]] inline MacroState projective_extrapolate(std::span<const MacroState> hist, double dt_macro,
                                                       const ExtrapConfig& cfg) {
    cfg.validate();
    const double alpha = extrapolation_alpha(dt_macro, cfg.dt, cfg.K);
    const double time = hist.empty() ? 0.0 : hist.back().time + alpha * cfg.dt;
    if (cfg.method == ExtrapMethod::projective_chord) {
        const std::size_t gap = cfg.K - cfg.chord_lag;
        detail::check_history(hist, gap + 1, "projective_extrapolate");
        const double r = alpha / static_cast<double>(gap);
        const std::vector<double> w{1.0 + r, -r};
        const std::vector<std::size_t> lags{0, gap};
        return detail::combine(hist, w, lags, time);
    }
    if (cfg.method != ExtrapMethod::projective) throw InvalidArgument("projective_extrapolate: wrong method");
    detail::check_history(hist, cfg.order + 1, "projective_extrapolate");
    if (alpha == 0.0) {
        MacroState out = hist.back();
        return out;
    }
    const auto w = lagrange_coeffs(alpha, cfg.order);
    std::vector<std::size_t> lags(cfg.order + 1);
    for (std::size_t s = 0; s <= cfg.order; ++s) lags[s] = s;
    return detail::combine(hist, w, lags, time);
}

/// beta = alpha / (alpha + K), the fraction of the macro step left after the burst.
[[nodiscard]] inline double multistep_beta(double alpha, std::size_t K) {
    return alpha / (alpha + static_cast<double>(K));
}

/// Multistep extrapolation from burst endpoints U^{n-p_e,K}..U^{n,K} (oldest
/// first, equidistant in time): sum_s l_s(beta) U^{n-s,K}.
[[nodiscard]] inline MacroState multistep_extrapolate(std::span<const MacroState> endpoints, double alpha,
                                                      std::size_t K, std::size_t order) {
    if (order < 1) throw InvalidArgument("multistep_extrapolate: order must be at least 1");
    if (alpha < 0.0) throw InvalidArgument("multistep_extrapolate: alpha must be nonnegative");
    detail::check_history(endpoints, order + 1, "multistep_extrapolate");
    const double beta = multistep_beta(alpha, K);
    const std::size_t n = endpoints.size();
    const double spacing = endpoints[n - 1].time - endpoints[n - 2].time;
    const double time = endpoints.back().time + beta * spacing;
    if (beta == 0.0) {
        MacroState out = endpoints.back();
        return out;
    }
    const auto w = lagrange_coeffs(beta, order);
    std::vector<std::size_t> lags(order + 1);
    for (std::size_t s = 0; s <= order; ++s) lags[s] = s;
    return detail::combine(endpoints, w, lags, time);
}

struct CharacteristicRoots {
    std::vector<std::complex<double>> roots;
    bool zero_stable = false;
};

inline constexpr double kRootModulusTol = 1e-10;
inline constexpr double kRootSeparationTol = 1e-8;

/// Roots of P(xi) = xi^{p+1} - sum_s l_s(beta) xi^{p-s}, the characteristic
/// polynomial of the multistep recursion, from the companion matrix.
/// Zero-stable: all |xi| <= 1 (+1e-10) and unimodular roots pairwise apart.
[[nodiscard]] inline CharacteristicRoots characteristic_roots(double beta, std::size_t order) {
    if (order < 1) throw InvalidArgument("characteristic_roots: order must be at least 1");
    const std::size_t n = order + 1;
    const auto l = lagrange_coeffs(beta, order);
    // xi^n = sum_s l_s xi^{n-1-s}; companion matrix in upper-Hessenberg form.
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < n; ++s) c(0, static_cast<Eigen::Index>(s)) = l[s];
    for (std::size_t i = 1; i < n; ++i) c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    const Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(c, false).eigenvalues();

    CharacteristicRoots out;
    out.roots.assign(ev.data(), ev.data() + ev.size());
    out.zero_stable = true;
    std::vector<std::complex<double>> unimodular;
    for (const auto& z : out.roots) {
        const double m = std::abs(z);
        if (m > 1.0 + kRootModulusTol) out.zero_stable = false;
        else if (m >= 1.0 - kRootModulusTol) unimodular.push_back(z);
    }
    for (std::size_t i = 0; i < unimodular.size(); ++i)
        for (std::size_t k = i + 1; k < unimodular.size(); ++k)
            if (std::abs(unimodular[i] - unimodular[k]) <= kRootSeparationTol) out.zero_stable = false;
    return out;
}

} // namespace mmmc
