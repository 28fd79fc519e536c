#pragma once

// Matching: minimal-perturbation projection of an ensemble onto prescribed
// moments. The perturbation directions are the constraint gradients at the
// input ensemble; the L multipliers come from a damped Newton iteration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmmc/error.hpp"
#include "mmmc/reduce.hpp"
#include "mmmc/restriction.hpp"
#include "mmmc/sde.hpp"

namespace mmmc {

struct MatchConfig {
    double tol = 1e-9;
    unsigned max_iter = 50;
    double jacobian_cond_cap = 1e14;
    unsigned fene_retry_cap = 20;
    unsigned max_halvings = 20;

    void validate() const {
        if (!(tol > 0.0)) throw InvalidArgument("matching: tol must be positive");
        if (max_iter < 1) throw InvalidArgument("matching: max_iter must be at least 1");
        if (!(jacobian_cond_cap > 1.0)) throw InvalidArgument("matching: jacobian_cond_cap must exceed 1");
    }
};

enum class MatchFailure { none, newton_diverged, singular_jacobian, fene_inadmissible };

[[nodiscard]] inline std::string to_string(MatchFailure f) {
    switch (f) {
    case MatchFailure::none: return "none";
    case MatchFailure::newton_diverged: return "newton-diverged";
    case MatchFailure::singular_jacobian: return "singular-jacobian";
    case MatchFailure::fene_inadmissible: return "fene-inadmissible";
    }
    return "?";
}

struct MatchOutcome {
    MatchFailure failure = MatchFailure::none;
    Ensemble ensemble;           ///< matched ensemble (meaningful only on success)
    unsigned iterations = 0;
    double residual = 0.0;       ///< max-norm of the scaled residual
    std::vector<double> lambda;  ///< multipliers of the spec's L constraints
    unsigned fene_redraws = 0;   ///< paths re-evolved by match_fene

    [[nodiscard]] bool ok() const noexcept { return failure == MatchFailure::none; }
};

/// The nonlinear system of the matching problem for one (ensemble, target)
/// pair, in the scaled multipliers mu = lambda / J:
///
///   y'_j(mu) = y_j + sum_k mu_k d_k(y_j),    d_k(y) = p_k (y - c_k)^{p_k - 1}
///   r_l(mu)  = [ (1/J) sum_j (y'_j - c_l)^{p_l} - target_l ] / s_l
///
/// c_k is the frozen centre (target mean, or input mean when the mean is not
/// a variable) for centered variables and 0 otherwise; s_l = |target_l|, or 1
/// when the target is below 1e-12 in magnitude.
class MatchSystem {
public:
    MatchSystem(const Ensemble& ens, const MacroState& target) : y_(ens.states) {
        detail::require_scalar_nonempty(ens, "match");
        const MomentSpec& spec = target.spec;
        vars_ = spec.variables();
        if (target.values.size() != vars_.size()) throw InvalidArgument("match: target size does not match its spec");
        targets_ = target.values;
        n_spec_ = vars_.size();
        const bool any_centered = std::any_of(vars_.begin(), vars_.end(), [](const auto& v) { return v.centered; });
        if (spec.has_hidden_mean()) {
            // The mean is pinned at its input value so the frozen centre stays meaningful.
            centre_ = detail::ensemble_mean(y_);
            vars_.insert(vars_.begin(), MomentVariable{1, false});
            targets_.insert(targets_.begin(), centre_);
            offset_ = 1;
        } else if (any_centered) {
            centre_ = targets_[0]; // centralized kinds with a mean carry it first
        }
        if (y_.size() < vars_.size()) throw InvalidArgument("match: need J >= L");
        scale_.resize(vars_.size());
        for (std::size_t l = 0; l < vars_.size(); ++l)
            scale_[l] = std::abs(targets_[l]) >= 1e-12 ? std::abs(targets_[l]) : 1.0;
    }

    [[nodiscard]] std::size_t size() const noexcept { return vars_.size(); }
    [[nodiscard]] std::size_t spec_size() const noexcept { return n_spec_; }
    [[nodiscard]] std::size_t spec_offset() const noexcept { return offset_; }
    [[nodiscard]] double centre() const noexcept { return centre_; }
    [[nodiscard]] std::span<const MomentVariable> variables() const noexcept { return vars_; }

    /// Perturbation direction d_k at state y.
    [[nodiscard]] double direction(std::size_t k, double y) const {
        const auto& v = vars_[k];
        const double e = v.centered ? y - centre_ : y;
        double p = 1.0;
        for (unsigned q = 0; q + 1 < v.power; ++q) p *= e;
        return static_cast<double>(v.power) * p;
    }

    /// Matched states y'(mu).
    [[nodiscard]] std::vector<double> apply(std::span<const double> mu) const {
        std::vector<double> out(y_.size());
        for (std::size_t j = 0; j < y_.size(); ++j) out[j] = displaced(j, mu);
        return out;
    }

    /// Scaled residual at mu; mu = 0 evaluates on the input states directly
    /// so that a target equal to the input's restriction yields exactly 0.
    [[nodiscard]] std::vector<double> residual(std::span<const double> mu) const {
        const bool zero = std::all_of(mu.begin(), mu.end(), [](double m) { return m == 0.0; });
        const std::vector<double> vals = zero ? detail::moment_values(y_, vars_, centre_)
                                              : detail::moment_values(apply(mu), vars_, centre_);
        std::vector<double> r(vals.size());
        for (std::size_t l = 0; l < vals.size(); ++l) r[l] = (vals[l] - targets_[l]) / scale_[l];
        return r;
    }

    /// Jacobian of the scaled residual in mu: (1/J) sum_j p_l (y'_j - c_l)^{p_l-1} d_k(y_j) / s_l.
    [[nodiscard]] Eigen::MatrixXd jacobian(std::span<const double> mu) const {
        const std::size_t n = vars_.size();
        std::vector<double> d(n);
        auto sums = pairwise_sums(y_.size(), n * n, [&](std::size_t j, double* acc) {
            const double yp = displaced(j, mu);
            for (std::size_t k = 0; k < n; ++k) d[k] = direction(k, y_[j]);
            for (std::size_t l = 0; l < n; ++l) {
                const double g = direction(l, yp);
                for (std::size_t k = 0; k < n; ++k) acc[l * n + k] += g * d[k];
            }
        });
        Eigen::MatrixXd jac(n, n);
        const double J = static_cast<double>(y_.size());
        for (std::size_t l = 0; l < n; ++l)
            for (std::size_t k = 0; k < n; ++k) jac(l, k) = sums[l * n + k] / J / scale_[l];
        return jac;
    }

    /// Same as jacobian() without the residual scaling (the Gram matrix at mu = 0).
    [[nodiscard]] Eigen::MatrixXd unscaled_jacobian(std::span<const double> mu) const {
        Eigen::MatrixXd jac = jacobian(mu);
        for (std::size_t l = 0; l < vars_.size(); ++l) jac.row(l) *= scale_[l];
        return jac;
    }

private:
    [[nodiscard]] double displaced(std::size_t j, std::span<const double> mu) const {
        double y = y_[j];
        for (std::size_t k = 0; k < mu.size(); ++k) y += mu[k] * direction(k, y_[j]);
        return y;
    }

    std::vector<double> y_;
    std::vector<MomentVariable> vars_;
    std::vector<double> targets_;
    std::vector<double> scale_;
    double centre_ = 0.0;
    std::size_t n_spec_ = 0;
    std::size_t offset_ = 0;
};

namespace detail {

[[nodiscard]] inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/// 2-norm condition number after scaling rows and columns to unit max-norm.
[[nodiscard]] inline double equilibrated_condition(Eigen::MatrixXd a) {
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
        const double s = a.col(k).cwiseAbs().maxCoeff();
        if (s > 0.0) a.col(k) /= s;
    }
    for (Eigen::Index l = 0; l < a.rows(); ++l) {
        const double s = a.row(l).cwiseAbs().maxCoeff();
        if (s > 0.0) a.row(l) /= s;
    }
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues();
    const double smin = sv(sv.size() - 1);
    if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
    return sv(0) / smin;
}

} // namespace detail

/// Projects `ens` onto `target` (Newton with step halving on the multipliers).
[[nodiscard]] inline MatchOutcome match_ensemble(const Ensemble& ens, const MacroState& target,
                                                 const MatchConfig& cfg = {}) {
    cfg.validate();
    const MatchSystem sys(ens, target);
    const std::size_t n = sys.size();
    MatchOutcome out;
    out.lambda.assign(sys.spec_size(), 0.0);

    std::vector<double> mu(n, 0.0);
    std::vector<double> r = sys.residual(mu);
    double rnorm = detail::max_abs(r);
    out.residual = rnorm;
    if (rnorm <= cfg.tol) {
        out.ensemble = ens;
        return out;
    }

    std::vector<double> trial(n);
    for (unsigned it = 1; it <= cfg.max_iter; ++it) {
        const Eigen::MatrixXd jac = sys.jacobian(mu);
        if (!jac.allFinite() || detail::equilibrated_condition(jac) > cfg.jacobian_cond_cap) {
            out.failure = MatchFailure::singular_jacobian;
            out.iterations = it - 1;
            return out;
        }
        // Column equilibration keeps QR accurate when the moment orders differ widely.
        Eigen::VectorXd colscale(n);
        Eigen::MatrixXd a = jac;
        for (std::size_t k = 0; k < n; ++k) {
            const double s = a.col(static_cast<Eigen::Index>(k)).cwiseAbs().maxCoeff();
            colscale(static_cast<Eigen::Index>(k)) = s > 0.0 ? s : 1.0;
            a.col(static_cast<Eigen::Index>(k)) /= colscale(static_cast<Eigen::Index>(k));
        }
        const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(n));
        const Eigen::VectorXd delta = a.colPivHouseholderQr().solve(rhs).cwiseQuotient(colscale);
        if (!delta.allFinite()) {
            out.failure = MatchFailure::singular_jacobian;
            out.iterations = it - 1;
            return out;
        }

        double step = 1.0;
        bool improved = false;
        std::vector<double> rtrial;
        for (unsigned h = 0; h <= cfg.max_halvings; ++h, step *= 0.5) {
            for (std::size_t k = 0; k < n; ++k) trial[k] = mu[k] + step * delta(static_cast<Eigen::Index>(k));
            rtrial = sys.residual(trial);
            const double tn = detail::max_abs(rtrial);
            if (std::isfinite(tn) && tn < rnorm) {
                improved = true;
                rnorm = tn;
                break;
            }
        }
        out.iterations = it;
        if (!improved) {
            out.failure = MatchFailure::newton_diverged;
            out.residual = rnorm;
            return out;
        }
        mu = trial;
        r = std::move(rtrial);
        out.residual = rnorm;
        if (rnorm <= cfg.tol) {
            out.ensemble = ens;
            out.ensemble.states = sys.apply(mu);
            out.ensemble.time = target.time;
            const double J = static_cast<double>(ens.size());
            for (std::size_t l = 0; l < sys.spec_size(); ++l) out.lambda[l] = mu[l + sys.spec_offset()] * J;
            return out;
        }
    }
    out.failure = MatchFailure::newton_diverged;
    return out;
}

// ---------------------------------------------------------------------------
// Solvability

struct HankelResult {
    double determinant = 0.0;
    bool locally_unique = false;
};

/// Hankel criterion for local uniqueness of the multipliers.
///
/// `moments` holds orders 1..2L-2: raw moments about 0 for standard, central
/// moments (mean first, then orders 2..) for centralized. Standard uses
/// det(U_{i+k-2}), i,k = 1..L with U_0 = 1; centralized uses
/// det(M_{i+k-2} - M_{i-1} M_{k-1}), i,k = 2..L with M_0 = 1, M_1 = 0.
[[nodiscard]] inline HankelResult hankel_solvability(std::span<const double> moments, std::size_t L,
                                                     MomentKind kind) {
    if (L < 1) throw InvalidArgument("hankel_solvability: L must be at least 1");
    if (L >= 2 && moments.size() < 2 * L - 2)
        throw InvalidArgument("hankel_solvability: need moments up to order 2L-2");
    auto raw = [&](std::size_t q) -> double {
        if (q == 0) return 1.0;
        if (kind != MomentKind::standard && q == 1) return 0.0;
        return moments[q - 1];
    };
    Eigen::MatrixXd h;
    if (kind == MomentKind::standard) {
        h.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t k = 0; k < L; ++k) h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = raw(i + k);
    } else {
        if (L == 1) return {1.0, true};
        const std::size_t n = L - 1;
        h.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 2; i <= L; ++i)
            for (std::size_t k = 2; k <= L; ++k)
                h(static_cast<Eigen::Index>(i - 2), static_cast<Eigen::Index>(k - 2)) =
                    raw(i + k - 2) - raw(i - 1) * raw(k - 1);
    }
    const double det = h.determinant();
    const double scale = std::pow(h.cwiseAbs().maxCoeff(), static_cast<double>(h.rows()));
    return {det, std::abs(det) > 1e-12 * scale};
}

/// Hankel criterion from a macro state (requires L <= 2 for want of higher
/// moments) or, more usefully, from the ensemble the state was restricted from.
[[nodiscard]] inline HankelResult hankel_solvability(const MacroState& state) {
    const std::size_t L = state.values.size();
    if (state.spec.kind == MomentKind::even_centralized)
        throw InvalidArgument("hankel_solvability: defined for standard or centralized moments");
    return hankel_solvability(state.values, L, state.spec.kind);
}

[[nodiscard]] inline HankelResult hankel_solvability(const Ensemble& ens, const MomentSpec& spec) {
    if (spec.kind == MomentKind::even_centralized)
        throw InvalidArgument("hankel_solvability: defined for standard or centralized moments");
    MomentSpec wide = spec;
    wide.L = std::max<std::size_t>(2 * spec.L - 2, 1);
    return hankel_solvability(restrict(ens, wide).values, spec.L, spec.kind);
}

// ---------------------------------------------------------------------------
// Gaussian closed form

struct AffineMap {
    double scale = 1.0;
    double offset = 0.0;
    [[nodiscard]] double operator()(double z) const noexcept { return scale * z + offset; }
};

/// z -> sqrt(sigma*^2 / sigma^2) (z - mu) + mu*, the positive-scale branch.
[[nodiscard]] inline AffineMap match_normal_closed_form(double mu, double sigma2, double target_mu,
                                                        double target_sigma2) {
    if (!(sigma2 > 0.0) || !(target_sigma2 > 0.0))
        throw InvalidArgument("match_normal_closed_form: variances must be positive");
    const double s = std::sqrt(target_sigma2 / sigma2);
    return {s, target_mu - s * mu};
}

// ---------------------------------------------------------------------------
// FENE: matching combined with accept-reject of the last inner step

/// Matches a FENE ensemble produced by the last step recorded in `replay`.
/// Paths whose matched state leaves the admissible region have their last
/// inner step redrawn and the matching is retried.
template <SdeModel M>
[[nodiscard]] MatchOutcome match_fene(Ensemble ens, const MacroState& target, const M& model, BurstReplay replay,
                                      const MatchConfig& cfg = {}) {
    cfg.validate();
    if (replay.before_last.size() != ens.size()) throw InvalidArgument("match_fene: replay context size mismatch");
    std::vector<unsigned> retries(ens.size(), 0);
    unsigned redraws = 0;
    for (;;) {
        MatchOutcome out = match_ensemble(ens, target, cfg);
        out.fene_redraws = redraws;
        if (!out.ok()) return out;
        std::vector<std::size_t> bad;
        for (std::size_t j = 0; j < ens.size(); ++j)
            if (!model.admissible(out.ensemble.state(j), replay.dt)) bad.push_back(j);
        if (bad.empty()) return out;
        for (std::size_t j : bad) {
            if (++retries[j] > cfg.fene_retry_cap) {
                out.failure = MatchFailure::fene_inadmissible;
                return out;
            }
            replay_last_step(model, replay, j, ens.state(j));
            ++redraws;
        }
    }
}

} // namespace mmmc
