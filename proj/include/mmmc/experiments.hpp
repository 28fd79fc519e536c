#pragma once

// Config-driven runs and the matching / extrapolation sweeps.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mmmc/analysis.hpp"
#include "mmmc/config.hpp"
#include "mmmc/extrapolation.hpp"
#include "mmmc/matching.hpp"
#include "mmmc/orchestrator.hpp"
#include "mmmc/restriction.hpp"
#include "mmmc/sde.hpp"

namespace mmmc {

/// Calls f(model) with the concrete model the config describes.
template <class F>
decltype(auto) with_model(const ExperimentConfig& cfg, F&& f) {
    if (cfg.model == ModelKind::fene) {
        const FeneModel model(cfg.fene_params());
        return f(model);
    }
    const LinearModel model = cfg.linear_model();
    return f(model);
}

[[nodiscard]] inline Ensemble initial_ensemble(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.initial == InitialKind::fene_equilibrium) return sample_fene_equilibrium(cfg.fene_params(), cfg.J, seed, cfg.t0);
    return sample_standard_normal(cfg.J, seed, 1, cfg.t0);
}

[[nodiscard]] inline QoiFn make_qoi(const ExperimentConfig& cfg) {
    switch (cfg.qoi) {
    case QoiKind::mean:
        return [](const Ensemble& e) { return detail::ensemble_mean(e.states); };
    case QoiKind::second_moment:
        return [](const Ensemble& e) {
            return restrict(e, MomentSpec{MomentKind::standard, 2, true}).values[1];
        };
    case QoiKind::stress: {
        const FeneParams p = cfg.fene_params();
        return [p](const Ensemble& e) { return stress_kramers(e, p); };
    }
    }
    throw InvalidArgument("unknown quantity of interest");
}

/// One accelerated trajectory from t0 to T as the config describes.
[[nodiscard]] inline TrajectoryRecord run_simulation(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TrajectoryRecord rec = with_model(cfg, [&](const auto& model) {
        return accelerate(model, initial_ensemble(cfg, seed), cfg.scheme(), make_qoi(cfg), cfg.T, cfg.record_inner);
    });
    rec.config_snapshot = emit_config(cfg);
    return rec;
}

[[nodiscard]] inline TrajectoryRecord run_simulation(const ExperimentConfig& cfg) { return run_simulation(cfg, cfg.seed); }

/// Purely microscopic run with the same seed, recording QoI after every inner step.
[[nodiscard]] inline TimeSeries micro_reference(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const QoiFn qoi = make_qoi(cfg);
    TimeSeries out;
    with_model(cfg, [&](const auto& model) {
        Ensemble e = initial_ensemble(cfg, seed);
        out.emplace_back(e.time, qoi(e));
        const auto n = static_cast<std::size_t>(std::llround((cfg.T - cfg.t0) / cfg.dt));
        if (n > 0)
            (void)evolve_ensemble(model, std::move(e), n, cfg.dt,
                                  [&](std::size_t, const Ensemble& s) { out.emplace_back(s.time, qoi(s)); });
        return 0;
    });
    return out;
}

/// QoI series of an accelerated run: macro-step rows and, when recorded, inner samples, by time.
[[nodiscard]] inline TimeSeries qoi_series(const TrajectoryRecord& rec) {
    TimeSeries s;
    for (const auto& r : rec.rows) s.emplace_back(r.time, r.qoi);
    for (const auto& i : rec.inner) s.emplace_back(i.time, i.qoi);
    std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return s;
}

/// Number of inner steps of size dt covering [from, to].
[[nodiscard]] inline std::size_t steps_between(double from, double to, double dt) {
    const double r = (to - from) / dt;
    if (r < -1e-9) throw InvalidArgument("steps_between: end precedes start");
    return static_cast<std::size_t>(std::llround(std::max(r, 0.0)));
}

// ---------------------------------------------------------------------------
// Matching onto later moments, as a function of L

struct LSweepRow {
    std::size_t L;
    double ks_statistic;
    double ks_p;
    bool match_ok;
    std::string failure;
    unsigned iterations;
    double residual;
};

struct MomentErrorRow {
    std::size_t L;
    std::size_t index; ///< l: the l-th even central moment, c_{2l}
    double relative_error;
};

struct LSweepResult {
    std::vector<LSweepRow> rows;
    std::vector<MomentErrorRow> moment_errors;
    Histogram prior, reference;
    std::vector<std::pair<std::size_t, Histogram>> matched;
    Ensemble prior_ensemble, reference_ensemble;
};

/// Simulates to t_minus (prior) and t_star (reference), then for each L in
/// cfg.L_values matches the prior onto the reference's first L even central
/// moments and compares the result with the reference (KS test, relative
/// errors of the even central moments, histograms of |x|).
[[nodiscard]] inline LSweepResult lsweep(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (!(cfg.t_star >= cfg.t_minus && cfg.t_minus >= cfg.t0)) throw ConfigError("need t0 <= t_minus <= t_star");
    LSweepResult res;
    with_model(cfg, [&](const auto& model) {
        Ensemble e = initial_ensemble(cfg, seed);
        const std::size_t n1 = steps_between(cfg.t0, cfg.t_minus, cfg.dt);
        const std::size_t n2 = steps_between(cfg.t_minus, cfg.t_star, cfg.dt);
        if (n1 > 0) e = evolve_ensemble(model, std::move(e), n1, cfg.dt);
        res.prior_ensemble = e;
        res.reference_ensemble = n2 > 0 ? evolve_ensemble(model, std::move(e), n2, cfg.dt) : e;
        return 0;
    });
    const Ensemble& prior = res.prior_ensemble;
    const Ensemble& ref = res.reference_ensemble;
    const double top = cfg.model == ModelKind::fene ? std::sqrt(cfg.gamma) : 0.0;
    auto abs_values = [](const Ensemble& en) {
        std::vector<double> a(en.states.size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::abs(en.states[i]);
        return a;
    };
    double hist_hi = top;
    if (hist_hi <= 0.0)
        for (double v : abs_values(ref)) hist_hi = std::max(hist_hi, v);
    res.prior = empirical_histogram(abs_values(prior), cfg.histogram_bins, 0.0, hist_hi);
    res.reference = empirical_histogram(abs_values(ref), cfg.histogram_bins, 0.0, hist_hi);

    const MomentSpec err_spec{MomentKind::even_centralized, cfg.moment_error_orders, false};
    const auto ref_moments = restrict(ref, err_spec).values;
    const MatchConfig mcfg = cfg.scheme().match;
    for (std::size_t L : cfg.L_values) {
        const MomentSpec spec{MomentKind::even_centralized, L, cfg.include_mean};
        const MacroState target = restrict(ref, spec);
        const MatchOutcome mo = match_ensemble(prior, target, mcfg);
        LSweepRow row{L, 0.0, 0.0, mo.ok(), to_string(mo.failure), mo.iterations, mo.residual};
        if (mo.ok()) {
            const KsResult ks = ks_two_sample(mo.ensemble.states, ref.states);
            row.ks_statistic = ks.statistic;
            row.ks_p = ks.p_value;
            const auto m = restrict(mo.ensemble, err_spec).values;
            for (std::size_t l = 0; l < m.size(); ++l)
                res.moment_errors.push_back({L, l + 1, (m[l] - ref_moments[l]) / ref_moments[l]});
            res.matched.emplace_back(L, empirical_histogram(abs_values(mo.ensemble), cfg.histogram_bins, 0.0, hist_hi));
        }
        res.rows.push_back(row);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Stress error of matched (and extrapolated) ensembles as a function of dt

struct DtSweepRow {
    std::size_t L;
    double dt_macro;
    double relative_error; ///< mean over replicates of |tau_hat - tau_ref| / |tau_ref|
    std::size_t failures;
};

namespace detail {

/// Restrictions (even central, L_max variables) and stress after every inner
/// step on [t_minus - lead, t_star], plus the ensembles at t_minus and, when
/// K > 0, at t_minus + K dt with the replay context of that last step.
struct ReferenceWindow {
    double t_begin = 0.0;
    std::vector<MacroState> U;     ///< index i at t_begin + i dt
    std::vector<double> stress;
    Ensemble prior;                ///< at t_minus
    Ensemble after_burst;          ///< at t_minus + K dt
    BurstReplay replay;
    std::size_t minus_index = 0;   ///< index of t_minus in U
};

template <SdeModel M>
ReferenceWindow reference_window(const M& model, const ExperimentConfig& cfg, std::uint64_t seed, double lead,
                                 std::size_t L_max, std::size_t K) {
    const FeneParams fp = cfg.fene_params();
    const MomentSpec spec{MomentKind::even_centralized, L_max, cfg.include_mean};
    ReferenceWindow w;
    Ensemble e = initial_ensemble(cfg, seed);
    const double begin = std::max(cfg.t0, cfg.t_minus - lead);
    const std::size_t n0 = steps_between(cfg.t0, begin, cfg.dt);
    if (n0 > 0) e = evolve_ensemble(model, std::move(e), n0, cfg.dt);
    w.t_begin = e.time;
    auto note = [&](const Ensemble& s) {
        w.U.push_back(restrict(s, spec));
        w.stress.push_back(stress_kramers(s, fp));
    };
    note(e);
    const std::size_t n1 = steps_between(begin, cfg.t_minus, cfg.dt);
    if (n1 > 0) e = evolve_ensemble(model, std::move(e), n1, cfg.dt, [&](std::size_t, const Ensemble& s) { note(s); });
    w.minus_index = w.U.size() - 1;
    w.prior = e;
    const std::size_t n2 = steps_between(cfg.t_minus, cfg.t_star, cfg.dt);
    if (K > 0) {
        if (n2 < K) throw ConfigError("t_star must lie at least K inner steps after t_minus");
        e = evolve_ensemble(model, std::move(e), K, cfg.dt, [&](std::size_t, const Ensemble& s) { note(s); }, &w.replay);
        w.after_burst = e;
    }
    if (n2 > K) e = evolve_ensemble(model, std::move(e), n2 - K, cfg.dt, [&](std::size_t, const Ensemble& s) { note(s); });
    return w;
}

inline MacroState truncate_state(const MacroState& s, std::size_t L) {
    MacroState out = s;
    out.spec.L = L;
    out.values.resize(L);
    return out;
}

} // namespace detail

/// Matching error: match the t_minus ensemble onto the reference moments at
/// t_minus + dt_macro and compare stresses (no extrapolation).
[[nodiscard]] inline std::vector<DtSweepRow> match_dt_sweep(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (cfg.model != ModelKind::fene) throw ConfigError("match-sweep needs the fene model");
    std::size_t L_max = 1;
    for (std::size_t L : cfg.L_values) L_max = std::max(L_max, L);
    const FeneParams fp = cfg.fene_params();
    const FeneModel model(fp);
    const auto w = detail::reference_window(model, cfg, seed, 0.0, L_max, 0);
    std::vector<DtSweepRow> rows;
    const MatchConfig mcfg = cfg.scheme().match;
    for (std::size_t L : cfg.L_values) {
        for (double dtm : cfg.dt_values) {
            const std::size_t idx = w.minus_index + steps_between(0.0, dtm, cfg.dt);
            if (idx >= w.U.size()) throw ConfigError("dt value beyond t_star", 0, "experiment.dt_values");
            const MatchOutcome mo = match_ensemble(w.prior, detail::truncate_state(w.U[idx], L), mcfg);
            DtSweepRow row{L, dtm, 0.0, 0};
            if (mo.ok()) row.relative_error = std::abs(stress_kramers(mo.ensemble, fp) - w.stress[idx]) / std::abs(w.stress[idx]);
            else row.failures = 1;
            rows.push_back(row);
        }
    }
    return rows;
}

/// Local error of one accelerated step: a burst of K steps from t_minus,
/// extrapolation (config method and order) to t_minus + dt_macro, matching
/// of the burst end, and comparison of the stress with the reference.
[[nodiscard]] inline std::vector<DtSweepRow> extrap_dt_sweep(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (cfg.model != ModelKind::fene) throw ConfigError("extrap-sweep needs the fene model");
    std::size_t L_max = 1;
    for (std::size_t L : cfg.L_values) L_max = std::max(L_max, L);
    double lead = 0.0;
    if (cfg.method == ExtrapMethod::multistep)
        for (double d : cfg.dt_values) lead = std::max(lead, static_cast<double>(cfg.order) * d);
    const FeneParams fp = cfg.fene_params();
    const FeneModel model(fp);
    const auto w = detail::reference_window(model, cfg, seed, lead, L_max, cfg.K);
    const std::size_t burst_end = w.minus_index + cfg.K;
    std::vector<DtSweepRow> rows;
    const AccelerationScheme scheme = cfg.scheme();
    for (std::size_t L : cfg.L_values) {
        for (double dtm : cfg.dt_values) {
            const std::size_t m = steps_between(0.0, dtm, cfg.dt);
            const std::size_t idx = w.minus_index + m;
            if (idx >= w.U.size()) throw ConfigError("dt value beyond t_star", 0, "experiment.dt_values");
            const double alpha = extrapolation_alpha(dtm, cfg.dt, cfg.K);
            MacroState target;
            if (cfg.method == ExtrapMethod::multistep) {
                std::vector<MacroState> ends;
                for (std::size_t s = cfg.order + 1; s-- > 0;) {
                    if (s * m > burst_end) throw ConfigError("not enough history before t_minus for multistep");
                    ends.push_back(detail::truncate_state(w.U[burst_end - s * m], L));
                }
                target = multistep_extrapolate(ends, alpha, cfg.K, cfg.order);
            } else {
                std::vector<MacroState> burst;
                for (std::size_t k = 0; k <= cfg.K; ++k) burst.push_back(detail::truncate_state(w.U[w.minus_index + k], L));
                target = projective_extrapolate(burst, dtm, scheme.extrap);
            }
            DtSweepRow row{L, dtm, 0.0, 0};
            const MatchOutcome mo = match_fene(w.after_burst, target, model, w.replay, scheme.match);
            if (mo.ok()) row.relative_error = std::abs(stress_kramers(mo.ensemble, fp) - w.stress[idx]) / std::abs(w.stress[idx]);
            else row.failures = 1;
            rows.push_back(row);
        }
    }
    return rows;
}

/// Averages a per-seed sweep over cfg.replicates seeds derived from cfg.seed.
[[nodiscard]] inline std::vector<DtSweepRow> averaged_sweep(
    const ExperimentConfig& cfg, const std::function<std::vector<DtSweepRow>(const ExperimentConfig&, std::uint64_t)>& sweep) {
    std::vector<std::vector<DtSweepRow>> all(cfg.replicates);
    std::vector<std::exception_ptr> errors(cfg.replicates);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r; (r = next.fetch_add(1)) < cfg.replicates;) {
            try {
                all[r] = sweep(cfg, derive_seed(cfg.seed, r));
            } catch (...) {
                errors[r] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const std::size_t nw = std::max<std::size_t>(1, std::min(cfg.workers, cfg.replicates));
        if (nw == 1) worker();
        else
            for (std::size_t i = 0; i < nw; ++i) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<DtSweepRow> out = all.front();
    for (auto& row : out) {
        row.relative_error = 0.0;
        row.failures = 0;
    }
    for (const auto& rows : all) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i].relative_error += rows[i].relative_error;
            out[i].failures += rows[i].failures;
        }
    }
    for (auto& row : out) {
        const std::size_t ok = cfg.replicates - row.failures;
        row.relative_error = ok ? row.relative_error / static_cast<double>(ok) : NAN;
    }
    return out;
}

} // namespace mmmc
