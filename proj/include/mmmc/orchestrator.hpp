#pragma once

// The micro/macro acceleration loop: a burst of K inner steps, restriction,
// extrapolation of the macroscopic state, and matching of the ensemble onto it,
// with adaptive control of the macroscopic step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mmmc/csv.hpp"
#include "mmmc/error.hpp"
#include "mmmc/extrapolation.hpp"
#include "mmmc/matching.hpp"
#include "mmmc/restriction.hpp"
#include "mmmc/sde.hpp"

namespace mmmc {

/// Macroscopic step controller: shrink on matching failure, grow on success.
struct StepPolicy {
    double dt_macro = 1e-3;
    double dt_max = 8e-3;
    double shrink = 0.2; ///< alpha_under
    double grow = 1.2;   ///< alpha_over
    std::size_t K = 1;
    double dt = 2e-4;
    bool adaptive = true;

    [[nodiscard]] double floor() const noexcept { return static_cast<double>(K) * dt; }

    /// Step to retry with after a rejected step of size `current`.
    [[nodiscard]] double after_failure(double current) const noexcept { return std::max(shrink * current, floor()); }

    /// Step to propose after an accepted step of size `current`.
    [[nodiscard]] double after_success(double current) const noexcept {
        return adaptive ? std::min(grow * current, dt_max) : current;
    }

    void validate() const {
        if (K < 1) throw InvalidArgument("policy: K must be at least 1");
        if (!(dt > 0.0)) throw InvalidArgument("policy: inner step must be positive");
        if (!(shrink > 0.0 && shrink < 1.0)) throw InvalidArgument("policy: shrink factor must lie in (0,1)");
        if (!(grow > 1.0)) throw InvalidArgument("policy: grow factor must exceed 1");
        const double tol = 1e-12 * floor();
        if (dt_macro < floor() - tol) throw InvalidArgument("policy: initial macro step below K inner steps");
        if (dt_max < floor() - tol) throw InvalidArgument("policy: maximal macro step below K inner steps");
        if (dt_macro > dt_max * (1.0 + 1e-12)) throw InvalidArgument("policy: initial macro step above maximum");
    }
};

enum class WarmupMode { micro, projective };

struct AccelerationScheme {
    ExtrapConfig extrap;
    MomentSpec spec;
    MatchConfig match;
    StepPolicy policy;
    WarmupMode warmup = WarmupMode::micro; ///< multistep starting procedure

    void validate() const {
        spec.validate();
        match.validate();
        policy.validate();
        extrap.validate();
        if (extrap.K != policy.K || extrap.dt != policy.dt)
            throw InvalidArgument("scheme: extrapolation and policy disagree on K or the inner step");
        if (extrap.method == ExtrapMethod::multistep) {
            const double m = policy.dt_macro / policy.dt;
            if (std::abs(m - std::round(m)) > 1e-9 * m)
                throw InvalidArgument("scheme: multistep needs a macro step that is a multiple of the inner step");
            if (warmup == WarmupMode::projective && extrap.order > extrap.K)
                throw InvalidArgument("scheme: projective warm-up needs order <= K");
        }
    }
};

using QoiFn = std::function<double(const Ensemble&)>;

struct TrajectoryRow {
    double time = 0.0;
    std::vector<double> U;
    double qoi = 0.0;
    double dt_macro = 0.0;
    unsigned match_iters = 0;
    double match_residual = 0.0;
    unsigned rejections = 0;
    bool match_ok = true;
    MatchFailure failure = MatchFailure::none;
    std::vector<double> lambda;
};

struct InnerSample {
    double time;
    double qoi;
};

struct TrajectoryRecord {
    MomentSpec spec;
    std::uint64_t seed = 0;
    std::string config_snapshot;
    std::string warmup;
    std::vector<TrajectoryRow> rows;
    std::vector<InnerSample> inner;
    std::uint64_t micro_steps = 0;
    double micro_time = 0.0;   ///< total simulated microscopic time
    double max_abs_state = 0.0;
    Ensemble final_state;

    /// Simulated time span over microscopically simulated time.
    [[nodiscard]] double speedup() const {
        if (rows.empty() || micro_time <= 0.0) return 1.0;
        return (rows.back().time - rows.front().time) / micro_time;
    }
};

/// Micro/macro integrator for one model and scheme. Holds the step policy and,
/// for multistep extrapolation, the history of burst endpoints.
template <SdeModel M>
class MicroMacroIntegrator {
public:
    MicroMacroIntegrator(const M& model, AccelerationScheme scheme, QoiFn qoi)
        : model_(&model), scheme_(std::move(scheme)), qoi_(std::move(qoi)) {
        scheme_.validate();
        if (!qoi_) throw InvalidArgument("integrator: quantity of interest missing");
    }

    [[nodiscard]] const StepPolicy& policy() const noexcept { return scheme_.policy; }
    [[nodiscard]] const AccelerationScheme& scheme() const noexcept { return scheme_; }

    /// Whether inner-step QoI samples are appended to the record.
    void record_inner(bool on) noexcept { record_inner_ = on; }

    /// One macroscopic step from `ens`, not past `t_end`. Appends one row
    /// (and inner samples) to `rec`; returns the new ensemble.
    Ensemble step(const Ensemble& ens, double t_end, TrajectoryRecord& rec) {
        const auto& pol = scheme_.policy;
        const double t0 = ens.time;
        const double remaining = t_end - t0;
        if (!(remaining > 0.0)) throw InvalidArgument("integrator: step requested at or past the end time");
        TrajectoryRow row;

        if (remaining <= pol.floor() * (1.0 + 1e-9)) {
            // Too little time left for a burst plus extrapolation.
            Ensemble out = micro_segment(ens, remaining, rec);
            row.dt_macro = remaining;
            endpoints_.clear();
            finish_row(out, row, rec);
            return out;
        }

        double dtm = std::min(pol.dt_macro, remaining);
        const bool truncated = dtm < pol.dt_macro;

        std::vector<MacroState> burst;
        burst.reserve(pol.K + 1);
        burst.push_back(restrict(ens, scheme_.spec));
        BurstReplay replay;
        const Ensemble yK = evolve_ensemble(
            *model_, ens, pol.K, pol.dt,
            [&](std::size_t, const Ensemble& e) {
                burst.push_back(restrict(e, scheme_.spec));
                note_inner(e, rec);
            },
            model_->has_admissibility() ? &replay : nullptr);
        rec.micro_steps += pol.K;
        rec.micro_time += static_cast<double>(pol.K) * pol.dt;

        std::optional<Ensemble> result;
        for (;;) {
            const double alpha = extrapolation_alpha(dtm, pol.dt, pol.K);
            if (alpha == 0.0) {
                result = yK;
                break;
            }
            std::optional<MacroState> target;
            if (scheme_.extrap.method == ExtrapMethod::multistep) {
                if (multistep_ready(dtm)) {
                    std::vector<MacroState> ends(endpoints_.end() - static_cast<std::ptrdiff_t>(scheme_.extrap.order),
                                                 endpoints_.end());
                    ends.push_back(burst.back());
                    target = multistep_extrapolate(ends, alpha, pol.K, scheme_.extrap.order);
                } else if (scheme_.warmup == WarmupMode::micro) {
                    result = micro_segment(yK, dtm - pol.floor(), rec);
                    break;
                } else {
                    ExtrapConfig pc = scheme_.extrap;
                    pc.method = ExtrapMethod::projective;
                    target = projective_extrapolate(burst, dtm, pc);
                }
            } else {
                target = projective_extrapolate(burst, dtm, scheme_.extrap);
            }
            target->time = t0 + dtm;

            MatchOutcome mo = model_->has_admissibility()
                                  ? match_fene(yK, *target, *model_, replay, scheme_.match)
                                  : match_ensemble(yK, *target, scheme_.match);
            row.match_iters += mo.iterations;
            row.match_residual = mo.residual;
            row.failure = mo.failure;
            row.lambda = mo.lambda;
            if (mo.ok()) {
                row.match_ok = true;
                result = std::move(mo.ensemble);
                result->time = t0 + dtm;
                break;
            }
            ++row.rejections;
            double next = pol.after_failure(dtm);
            if (scheme_.extrap.method == ExtrapMethod::multistep)
                next = std::max(std::floor(next / pol.dt + 1e-9) * pol.dt, pol.floor());
            dtm = std::min(next, dtm);
        }

        if (scheme_.extrap.method == ExtrapMethod::multistep) {
            if (!multistep_same(dtm, endpoints_dt_)) endpoints_.clear();
            endpoints_.push_back(burst.back());
            endpoints_dt_ = dtm;
            while (endpoints_.size() > scheme_.extrap.order) endpoints_.pop_front();
        }
        if (!truncated || row.rejections > 0) scheme_.policy.dt_macro = pol.after_success(dtm);
        row.dt_macro = dtm;
        row.match_ok = true;
        row.failure = MatchFailure::none;
        finish_row(*result, row, rec);
        return std::move(*result);
    }

    /// Runs from ens.time to t_end. The first row is the initial state.
    TrajectoryRecord run(Ensemble ens, double t_end) {
        TrajectoryRecord rec;
        rec.spec = scheme_.spec;
        rec.seed = ens.lineage.base_seed;
        rec.warmup = scheme_.warmup == WarmupMode::micro ? "micro" : "projective";
        TrajectoryRow first;
        first.time = ens.time;
        first.dt_macro = 0.0;
        finish_row(ens, first, rec);
        const double eps = 1e-9 * scheme_.policy.dt;
        while (t_end - ens.time > eps) ens = step(ens, t_end, rec);
        if (!rec.rows.empty() && std::abs(ens.time - t_end) <= eps) {
            ens.time = t_end;
            rec.rows.back().time = t_end;
        }
        rec.final_state = std::move(ens);
        return rec;
    }

private:
    [[nodiscard]] bool multistep_ready(double dtm) const {
        return endpoints_.size() >= scheme_.extrap.order && multistep_same(dtm, endpoints_dt_);
    }
    [[nodiscard]] static bool multistep_same(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(a, b); }

    void note_inner(const Ensemble& e, TrajectoryRecord& rec) {
        if (record_inner_) rec.inner.push_back({e.time, qoi_(e)});
    }

    /// Pure microscopic simulation over `duration`, in inner steps of dt when
    /// the duration is a whole number of them and slightly shorter otherwise.
    Ensemble micro_segment(const Ensemble& ens, double duration, TrajectoryRecord& rec) {
        const double dt = scheme_.policy.dt;
        const double ratio = duration / dt;
        std::size_t m = static_cast<std::size_t>(std::llround(ratio));
        double h = dt;
        if (std::abs(ratio - static_cast<double>(m)) > 1e-6 || m == 0) {
            m = static_cast<std::size_t>(std::ceil(ratio - 1e-6));
            m = std::max<std::size_t>(m, 1);
            h = duration / static_cast<double>(m);
        }
        Ensemble out = evolve_ensemble(*model_, ens, m, h, [&](std::size_t, const Ensemble& e) { note_inner(e, rec); });
        rec.micro_steps += m;
        rec.micro_time += static_cast<double>(m) * h;
        return out;
    }

    void finish_row(const Ensemble& e, TrajectoryRow& row, TrajectoryRecord& rec) {
        row.time = e.time;
        row.U = restrict(e, scheme_.spec).values;
        row.qoi = qoi_(e);
        if (row.lambda.empty()) row.lambda.assign(scheme_.spec.L, 0.0);
        for (double x : e.states) rec.max_abs_state = std::max(rec.max_abs_state, std::abs(x));
        rec.rows.push_back(std::move(row));
    }

    const M* model_;
    AccelerationScheme scheme_;
    QoiFn qoi_;
    bool record_inner_ = false;
    std::deque<MacroState> endpoints_;
    double endpoints_dt_ = 0.0;
};

/// Convenience wrapper: integrate `init` to `t_end` with `scheme`.
template <SdeModel M>
[[nodiscard]] TrajectoryRecord accelerate(const M& model, Ensemble init, const AccelerationScheme& scheme, QoiFn qoi,
                                          double t_end, bool record_inner = false) {
    MicroMacroIntegrator<M> integrator(model, scheme, std::move(qoi));
    integrator.record_inner(record_inner);
    return integrator.run(std::move(init), t_end);
}

/// Trajectory CSV: '#' metadata lines, then columns time, U_1..U_L, qoi,
/// dt_macro, match_iters, match_residual, rejections, match_ok, match_failure,
/// lambda_1..lambda_L.
inline void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& rec,
                                 const std::vector<std::pair<std::string, std::string>>& metadata = {}) {
    CsvWriter w(out);
    for (const auto& [k, v] : metadata) w.comment(k, v);
    w.comment("seed", std::to_string(rec.seed));
    w.comment("moments", to_string(rec.spec.kind) + ";L=" + std::to_string(rec.spec.L) + ";" + rec.spec.describe());
    w.comment("norm", "max");
    w.comment("warmup", rec.warmup);
    w.comment("micro_steps", std::to_string(rec.micro_steps));
    std::vector<std::string> head{"time"};
    for (std::size_t l = 1; l <= rec.spec.L; ++l) head.push_back("U_" + std::to_string(l));
    for (const char* c : {"qoi", "dt_macro", "match_iters", "match_residual", "rejections", "match_ok", "match_failure"})
        head.emplace_back(c);
    for (std::size_t l = 1; l <= rec.spec.L; ++l) head.push_back("lambda_" + std::to_string(l));
    w.header(head);
    for (const auto& r : rec.rows) {
        std::vector<std::string> f{format_double(r.time)};
        for (double u : r.U) f.push_back(format_double(u));
        f.push_back(format_double(r.qoi));
        f.push_back(format_double(r.dt_macro));
        f.push_back(std::to_string(r.match_iters));
        f.push_back(format_double(r.match_residual));
        f.push_back(std::to_string(r.rejections));
        f.push_back(r.match_ok ? "1" : "0");
        f.push_back(to_string(r.failure));
        for (double l : r.lambda) f.push_back(format_double(l));
        w.row_strings(f);
    }
}

} // namespace mmmc
