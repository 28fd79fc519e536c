#pragma once

// Validation instruments: two-sample KS test, the moment ODE of the scalar
// linear SDE, the statistical-error predictor for the linear test equation,
// order fits, replicate statistics and histograms.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "mmmc/error.hpp"
#include "mmmc/extrapolation.hpp"
#include "mmmc/rng.hpp"
#include "mmmc/sde.hpp"

namespace mmmc {

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
};

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2),
/// switching to the theta-function form for small lambda where that series
/// converges slowly. Both truncated at 100 terms.
[[nodiscard]] inline double kolmogorov_q(double lambda) {
    if (!(lambda > 0.0)) return 1.0;
    double q = 0.0;
    if (lambda < 1.18) {
        const double y = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda));
        double s = 0.0;
        for (int k = 1; k <= 100; ++k) {
            const double odd = 2.0 * k - 1.0;
            const double term = std::pow(y, odd * odd);
            s += term;
            if (term == 0.0) break;
        }
        q = 1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s;
    } else {
        for (int k = 1; k <= 100; ++k) {
            const double term = std::exp(-2.0 * k * k * lambda * lambda);
            q += (k % 2 == 1 ? 2.0 : -2.0) * term;
            if (term == 0.0) break;
        }
    }
    return std::clamp(q, 0.0, 1.0);
}

/// Two-sample KS test: D = sup |F_a - F_b|, p = Q(sqrt(n_e) D), n_e = n_a n_b / (n_a + n_b).
[[nodiscard]] inline KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw InvalidArgument("ks_two_sample: both samples must be nonempty");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double na = static_cast<double>(x.size());
    const double nb = static_cast<double>(y.size());
    std::size_t i = 0, k = 0;
    double d = 0.0;
    while (i < x.size() && k < y.size()) {
        const double v = std::min(x[i], y[k]);
        while (i < x.size() && x[i] == v) ++i;
        while (k < y.size() && y[k] == v) ++k;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(k) / nb));
    }
    const double ne = na * nb / (na + nb);
    return {d, kolmogorov_q(std::sqrt(ne) * d), x.size(), y.size()};
}

// ---------------------------------------------------------------------------
// Moment ODE of dX = (a1 X + a2) dt + b dW: U1 the mean, U2 the variance.
//   dU1/dt = a1 U1 + a2,   dU2/dt = 2 a1 U2 + b^2

struct MomentOdePoint {
    double t;
    double mean;
    double variance;
    [[nodiscard]] double second_moment() const noexcept { return variance + mean * mean; }
};

/// (e^{c t} - 1) / c, continuous at c = 0.
[[nodiscard]] inline double expm1_ratio(double c, double t) {
    return c == 0.0 ? t : std::expm1(c * t) / c;
}

/// Closed form for constant coefficients, from (mean0, var0) at t = 0.
[[nodiscard]] inline MomentOdePoint moment_ode_closed_form(double a1, double a2, double b, double mean0, double var0,
                                                           double t) {
    const double m = std::exp(a1 * t) * mean0 + a2 * expm1_ratio(a1, t);
    const double v = std::exp(2.0 * a1 * t) * var0 + b * b * expm1_ratio(2.0 * a1, t);
    return {t, m, v};
}

/// Numerical solution at the (increasing) times of `grid`, starting from
/// (mean0, var0) at grid[0], with an adaptive Dormand-Prince integrator.
[[nodiscard]] inline std::vector<MomentOdePoint> moment_ode_reference(const TimeProfile& a1, const TimeProfile& a2,
                                                                      const TimeProfile& b, double mean0, double var0,
                                                                      std::span<const double> grid,
                                                                      double tol = 1e-12) {
    if (var0 < 0.0) throw InvalidArgument("moment_ode_reference: initial variance must be nonnegative");
    if (grid.empty()) return {};
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] >= grid[i - 1])) throw InvalidArgument("moment_ode_reference: grid must be nondecreasing");
    namespace ode = boost::numeric::odeint;
    using State = std::array<double, 2>;
    auto rhs = [&](const State& u, State& du, double t) {
        const double a = a1(t);
        const double bb = b(t);
        du[0] = a * u[0] + a2(t);
        du[1] = 2.0 * a * u[1] + bb * bb;
    };
    State u{mean0, var0};
    std::vector<MomentOdePoint> out;
    out.reserve(grid.size());
    std::vector<double> times(grid.begin(), grid.end());
    auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<State>());
    const double h0 = grid.size() > 1 && grid.back() > grid.front() ? (grid.back() - grid.front()) * 1e-3 : 1e-3;
    ode::integrate_times(stepper, rhs, u, times.begin(), times.end(), h0,
                         [&](const State& s, double t) { out.push_back({t, s[0], s[1]}); });
    return out;
}

// ---------------------------------------------------------------------------
// Statistical error of the extrapolated empirical mean for dX = a X dt + b dW
// under Euler-Maruyama, R(z) = 1 + z and Var S = b^2 dt.

enum class VarianceMode { accelerated, full_micro };

struct VariancePrediction {
    double a = -1.0;
    double b = 1.0;
    double dt = 0.1;
    std::size_t J = 100;
    std::size_t K = 1;
    std::size_t order = 1;  ///< p_e
    double alpha = 0.0;
    double var0 = 1.0;      ///< Var Y^{n,0}
    VarianceMode mode = VarianceMode::accelerated;
    std::size_t J_full = 0; ///< ensemble size of the full microscopic run (0: use J)
};

/// Accelerated:
///   (1/J) [ R_E^2 var0 + b^2 dt sum_{i<K} R^{2i} (sum_{s<=min(p_e,K-1-i)} l_s(alpha))^2 ],
///   R_E = sum_s l_s(alpha) R^{K-s}.
/// Full microscopic over alpha + K inner steps (alpha integral):
///   (1/J~) [ R^{2(alpha+K)} var0 + b^2 dt sum_{i<alpha+K} R^{2i} ].
[[nodiscard]] inline double predict_variance_projective(const VariancePrediction& p) {
    if (p.J == 0 || p.K == 0 || p.order == 0) throw InvalidArgument("predict_variance: J, K and order must be positive");
    if (p.alpha < 0.0) throw InvalidArgument("predict_variance: alpha must be nonnegative");
    const double R = 1.0 + p.a * p.dt;
    const double var_s = p.b * p.b * p.dt;
    if (p.mode == VarianceMode::full_micro) {
        const double steps = std::round(p.alpha) + static_cast<double>(p.K);
        if (std::abs(p.alpha - std::round(p.alpha)) > 1e-12)
            throw InvalidArgument("predict_variance: full-micro mode needs an integral alpha");
        const double Jt = static_cast<double>(p.J_full ? p.J_full : p.J);
        double sum = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(steps); ++i) sum += std::pow(R, 2.0 * static_cast<double>(i));
        return (std::pow(R, 2.0 * steps) * p.var0 + var_s * sum) / Jt;
    }
    if (p.order > p.K) throw InvalidArgument("predict_variance: order must not exceed K");
    const auto l = lagrange_coeffs(p.alpha, p.order);
    double re = 0.0;
    for (std::size_t s = 0; s <= p.order; ++s) re += l[s] * std::pow(R, static_cast<double>(p.K - s));
    double noise = 0.0;
    for (std::size_t i = 0; i < p.K; ++i) {
        double ls = 0.0;
        for (std::size_t s = 0; s <= std::min(p.order, p.K - 1 - i); ++s) ls += l[s];
        noise += std::pow(R, 2.0 * static_cast<double>(i)) * ls * ls;
    }
    return (re * re * p.var0 + var_s * noise) / static_cast<double>(p.J);
}

// ---------------------------------------------------------------------------
// Order fits

/// Least-squares slope of log(error) against log(step).
[[nodiscard]] inline double estimate_order(std::span<const std::pair<double, double>> pairs) {
    if (pairs.size() < 2) throw InvalidArgument("estimate_order: need at least two points");
    double sx = 0.0, sy = 0.0;
    for (const auto& [h, e] : pairs) {
        if (!(h > 0.0) || !(e > 0.0)) throw InvalidArgument("estimate_order: entries must be positive");
        sx += std::log(h);
        sy += std::log(e);
    }
    const double n = static_cast<double>(pairs.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [h, e] : pairs) {
        const double dx = std::log(h) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(e) - my);
    }
    if (sxx == 0.0) throw InvalidArgument("estimate_order: step sizes must differ");
    return sxy / sxx;
}

/// Least-squares slope of y against x.
[[nodiscard]] inline double linear_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("linear_slope: need matching series of length >= 2");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw InvalidArgument("linear_slope: x values must differ");
    return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Replicates

using TimeSeries = std::vector<std::pair<double, double>>; ///< (time, value)

struct ReplicateStats {
    std::vector<double> time;
    std::vector<double> mean;
    std::vector<double> stddev; ///< sample standard deviation (R - 1 normalization)
    std::size_t replicates = 0;
};

struct ReplicateOptions {
    std::size_t replicates = 2;
    std::size_t workers = 1;
    std::optional<double> record_dt; ///< common grid spacing when replicate grids differ
    bool same_seed = false;          ///< every replicate uses the base seed (diagnostics)
};

/// Linear interpolation of a time series at t (clamped to its range).
[[nodiscard]] inline double interpolate(const TimeSeries& s, double t) {
    if (s.empty()) throw InvalidArgument("interpolate: empty series");
    if (t <= s.front().first) return s.front().second;
    if (t >= s.back().first) return s.back().second;
    const auto it = std::lower_bound(s.begin(), s.end(), t, [](const auto& p, double v) { return p.first < v; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (t - lo.first) / (hi.first - lo.first);
    return lo.second + w * (hi.second - lo.second);
}

/// Runs `run(seed, r)` for r = 0..R-1 with seeds derive_seed(base_seed, r),
/// on `workers` threads, and returns per-time mean and sample standard
/// deviation. Results do not depend on the number of workers.
[[nodiscard]] inline ReplicateStats replicate_stats(const std::function<TimeSeries(std::uint64_t, std::size_t)>& run,
                                                    std::uint64_t base_seed, const ReplicateOptions& opt) {
    const std::size_t R = opt.replicates;
    if (R < 2) throw InvalidArgument("replicate_stats: need at least two replicates");
    std::vector<TimeSeries> series(R);
    std::vector<std::exception_ptr> errors(R);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r; (r = next.fetch_add(1)) < R;) {
            try {
                series[r] = run(opt.same_seed ? base_seed : derive_seed(base_seed, r), r);
            } catch (...) {
                errors[r] = std::current_exception();
            }
        }
    };
    const std::size_t nw = std::max<std::size_t>(1, std::min(opt.workers, R));
    if (nw == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(worker);
    }
    for (std::size_t r = 0; r < R; ++r) {
        if (!errors[r]) continue;
        try {
            std::rethrow_exception(errors[r]);
        } catch (const std::exception& e) {
            throw Error("replicate " + std::to_string(r) + ": " + e.what());
        }
    }

    bool same_grid = true;
    for (std::size_t r = 1; r < R && same_grid; ++r) {
        if (series[r].size() != series[0].size()) same_grid = false;
        for (std::size_t i = 0; same_grid && i < series[0].size(); ++i)
            if (std::abs(series[r][i].first - series[0][i].first) > 1e-12 * std::max(1.0, std::abs(series[0][i].first)))
                same_grid = false;
    }
    ReplicateStats out;
    out.replicates = R;
    if (same_grid) {
        for (const auto& p : series[0]) out.time.push_back(p.first);
    } else {
        if (!opt.record_dt || !(*opt.record_dt > 0.0))
            throw InvalidArgument("replicate_stats: replicate time grids differ; a record spacing is required");
        double t0 = -INFINITY, t1 = INFINITY;
        for (const auto& s : series) {
            if (s.empty()) throw Error("replicate_stats: a replicate returned no samples");
            t0 = std::max(t0, s.front().first);
            t1 = std::min(t1, s.back().first);
        }
        const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / *opt.record_dt + 1e-9));
        for (std::size_t i = 0; i <= n; ++i) out.time.push_back(t0 + static_cast<double>(i) * *opt.record_dt);
    }
    const std::size_t nt = out.time.size();
    out.mean.assign(nt, 0.0);
    out.stddev.assign(nt, 0.0);
    std::vector<double> vals(R);
    for (std::size_t i = 0; i < nt; ++i) {
        for (std::size_t r = 0; r < R; ++r) vals[r] = same_grid ? series[r][i].second : interpolate(series[r], out.time[i]);
        double m = 0.0;
        for (double v : vals) m += v;
        m /= static_cast<double>(R);
        double ss = 0.0;
        for (double v : vals) ss += (v - m) * (v - m);
        out.mean[i] = m;
        out.stddev[i] = std::sqrt(ss / static_cast<double>(R - 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Histograms

struct Histogram {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<double> density;
    [[nodiscard]] double width() const { return (hi - lo) / static_cast<double>(density.size()); }
    [[nodiscard]] double centre(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * width(); }
};

/// Density estimate: count / (n * bin width) on `bins` equal bins of [lo, hi);
/// the value hi itself falls in the last bin, values outside are dropped.
[[nodiscard]] inline Histogram empirical_histogram(std::span<const double> values, std::size_t bins, double lo,
                                                   double hi) {
    if (bins < 1) throw InvalidArgument("empirical_histogram: need at least one bin");
    if (!(hi > lo)) throw InvalidArgument("empirical_histogram: degenerate range");
    Histogram h{lo, hi, std::vector<double>(bins, 0.0)};
    if (values.empty()) return h;
    const double w = h.width();
    for (double v : values) {
        if (v < lo || v > hi) continue;
        auto i = static_cast<std::size_t>((v - lo) / w);
        if (i >= bins) i = bins - 1;
        h.density[i] += 1.0;
    }
    for (double& d : h.density) d /= static_cast<double>(values.size()) * w;
    return h;
}

} // namespace mmmc
