#pragma once

// SDE models and explicit Euler-Maruyama propagation of particle ensembles.
//
// A model exposes a per-time "frame" so that time-dependent coefficients
// (velocity gradients, drift profiles) are evaluated once per step instead of
// once per path.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "mmmc/error.hpp"
#include "mmmc/rng.hpp"

namespace mmmc {

using TimeProfile = std::function<double(double)>;

[[nodiscard]] inline TimeProfile constant_profile(double c) {
    return [c](double) { return c; };
}

/// Everything needed to regenerate each Brownian increment of an ensemble.
struct SeedLineage {
    std::uint64_t base_seed = 0;
    std::uint64_t first_path = 0; ///< global index of states[0]
    std::uint64_t step = 0;       ///< number of inner steps taken so far

    friend bool operator==(const SeedLineage&, const SeedLineage&) = default;
};

/// J particle states of dimension d at a common time, stored row-major.
struct Ensemble {
    std::size_t dim = 1;
    double time = 0.0;
    std::vector<double> states;
    SeedLineage lineage;

    [[nodiscard]] std::size_t size() const noexcept { return dim == 0 ? 0 : states.size() / dim; }
    [[nodiscard]] bool empty() const noexcept { return states.empty(); }
    [[nodiscard]] std::span<const double> state(std::size_t j) const { return {states.data() + j * dim, dim}; }
    [[nodiscard]] std::span<double> state(std::size_t j) { return {states.data() + j * dim, dim}; }
    [[nodiscard]] std::uint64_t path_id(std::size_t j) const noexcept { return lineage.first_path + j; }

    friend bool operator==(const Ensemble&, const Ensemble&) = default;
};

// ---------------------------------------------------------------------------
// Model concept

template <class F>
concept ModelFrame = requires(const F& f, std::span<const double> x, std::span<double> out) {
    f.drift(x, out);
    f.diffusion(x, out);
};

template <class M>
concept SdeModel = requires(const M& m, double t, std::span<const double> x, double dt) {
    { m.dimension() } -> std::convertible_to<std::size_t>;
    { m.wiener_dimension() } -> std::convertible_to<std::size_t>;
    { m.frame(t) } -> ModelFrame;
    { m.has_admissibility() } -> std::convertible_to<bool>;
    { m.admissible(x, dt) } -> std::convertible_to<bool>;
};

/// Type-erased model: drift a(t,x), diffusion b(t,x) (d x m, row-major) and
/// an optional admissibility predicate (x, dt) -> bool.
struct ModelSpec {
    std::size_t dim = 1;
    std::size_t wiener_dim = 1;
    std::function<void(double, std::span<const double>, std::span<double>)> drift;
    std::function<void(double, std::span<const double>, std::span<double>)> diffusion;
    std::function<bool(std::span<const double>, double)> admissible_fn;

    struct Frame {
        const ModelSpec* spec;
        double t;
        void drift(std::span<const double> x, std::span<double> out) const { spec->drift(t, x, out); }
        void diffusion(std::span<const double> x, std::span<double> out) const { spec->diffusion(t, x, out); }
    };

    [[nodiscard]] std::size_t dimension() const noexcept { return dim; }
    [[nodiscard]] std::size_t wiener_dimension() const noexcept { return wiener_dim; }
    [[nodiscard]] Frame frame(double t) const { return {this, t}; }
    [[nodiscard]] bool has_admissibility() const noexcept { return static_cast<bool>(admissible_fn); }
    [[nodiscard]] bool admissible(std::span<const double> x, double dt) const {
        return !admissible_fn || admissible_fn(x, dt);
    }
};

/// Scalar linear SDE dX = (a1(t) X + a2(t)) dt + b(t) dW.
struct LinearModel {
    TimeProfile a1 = constant_profile(-1.0);
    TimeProfile a2 = constant_profile(1.0);
    TimeProfile b = constant_profile(1.0);

    struct Frame {
        double a1, a2, b;
        void drift(std::span<const double> x, std::span<double> out) const { out[0] = a1 * x[0] + a2; }
        void diffusion(std::span<const double>, std::span<double> out) const { out[0] = b; }
    };

    [[nodiscard]] static constexpr std::size_t dimension() noexcept { return 1; }
    [[nodiscard]] static constexpr std::size_t wiener_dimension() noexcept { return 1; }
    [[nodiscard]] Frame frame(double t) const { return {a1(t), a2(t), b(t)}; }
    [[nodiscard]] static constexpr bool has_admissibility() noexcept { return false; }
    [[nodiscard]] static constexpr bool admissible(std::span<const double>, double) noexcept { return true; }
};

// ---------------------------------------------------------------------------
// FENE dumbbells

/// Velocity gradient kappa(t), written into a d x d row-major matrix.
using KappaFn = std::function<void(double, std::span<double>)>;

/// Isotropic kappa(t) = c(t) * Id; the 1-D case is a plain scalar profile.
[[nodiscard]] inline KappaFn scalar_kappa(TimeProfile c) {
    return [c = std::move(c)](double t, std::span<double> out) {
        const double v = c(t);
        const std::size_t d = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(out.size()))));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (i % (d + 1) == 0) ? v : 0.0;
    };
}

/// kappa(t) = 2 (1.1 + sin(pi t)), the periodic flow of the long-run experiments.
[[nodiscard]] inline TimeProfile periodic_flow_profile() {
    return [](double t) { return 2.0 * (1.1 + std::sin(std::numbers::pi * t)); };
}

struct FeneParams {
    double gamma = 49.0;   ///< maximal extension parameter; |X|^2 < gamma
    double we = 1.0;       ///< Weissenberg number
    double epsilon = 1.0;  ///< polymer / total viscosity ratio
    KappaFn kappa = scalar_kappa(constant_profile(0.0));

    void validate() const {
        if (!(gamma > 0.0)) throw InvalidArgument("FENE gamma must be positive");
        if (!(we > 0.0)) throw InvalidArgument("FENE Weissenberg number must be positive");
    }
};

/// Squared accept-reject bound (1 - sqrt(dt)) * gamma for inner step dt.
[[nodiscard]] inline double fene_bound_squared(double gamma, double dt) {
    return (1.0 - std::sqrt(dt)) * gamma;
}

[[nodiscard]] inline double fene_bound(double gamma, double dt) {
    return std::sqrt(fene_bound_squared(gamma, dt));
}

/// FENE spring force factor 1 / (1 - |x|^2/gamma); throws outside the domain.
[[nodiscard]] inline double fene_force_factor(double norm2, double gamma) {
    const double denom = 1.0 - norm2 / gamma;
    if (!(denom > 0.0)) throw StepError("FENE force evaluated at |x|^2 >= gamma");
    return 1.0 / denom;
}

/// dX = [kappa(t) X - F(X)/(2 We)] dt + We^{-1/2} dW with F(X) = X / (1 - |X|^2/gamma).
class FeneModel {
public:
    explicit FeneModel(FeneParams params, std::size_t dim = 1) : params_(std::move(params)), dim_(dim) {
        params_.validate();
        if (dim_ == 0) throw InvalidArgument("FENE dimension must be positive");
    }

    class Frame {
    public:
        Frame(const FeneModel& m, double t) : gamma_(m.params_.gamma), we_(m.params_.we), kappa_(m.dim_ * m.dim_) {
            m.params_.kappa(t, kappa_);
            sigma_ = 1.0 / std::sqrt(we_);
        }
        void drift(std::span<const double> x, std::span<double> out) const {
            const std::size_t d = x.size();
            double norm2 = 0.0;
            for (double v : x) norm2 += v * v;
            const double spring = fene_force_factor(norm2, gamma_) / (2.0 * we_);
            for (std::size_t i = 0; i < d; ++i) {
                double kx = 0.0;
                for (std::size_t k = 0; k < d; ++k) kx += kappa_[i * d + k] * x[k];
                out[i] = kx - spring * x[i];
            }
        }
        void diffusion(std::span<const double> x, std::span<double> out) const {
            const std::size_t d = x.size();
            for (std::size_t i = 0; i < d * d; ++i) out[i] = (i % (d + 1) == 0) ? sigma_ : 0.0;
        }

    private:
        double gamma_, we_, sigma_ = 1.0;
        std::vector<double> kappa_;
    };

    [[nodiscard]] std::size_t dimension() const noexcept { return dim_; }
    [[nodiscard]] std::size_t wiener_dimension() const noexcept { return dim_; }
    [[nodiscard]] Frame frame(double t) const { return Frame(*this, t); }
    [[nodiscard]] static constexpr bool has_admissibility() noexcept { return true; }
    [[nodiscard]] bool admissible(std::span<const double> x, double dt) const {
        double norm2 = 0.0;
        for (double v : x) norm2 += v * v;
        return norm2 < fene_bound_squared(params_.gamma, dt);
    }
    [[nodiscard]] const FeneParams& params() const noexcept { return params_; }

    /// Type-erased equivalent, for callers that want a ModelSpec.
    [[nodiscard]] ModelSpec to_spec() const {
        auto self = std::make_shared<FeneModel>(*this);
        ModelSpec s;
        s.dim = dim_;
        s.wiener_dim = dim_;
        s.drift = [self](double t, std::span<const double> x, std::span<double> out) { self->frame(t).drift(x, out); };
        s.diffusion = [self](double t, std::span<const double> x, std::span<double> out) {
            self->frame(t).diffusion(x, out);
        };
        s.admissible_fn = [self](std::span<const double> x, double dt) { return self->admissible(x, dt); };
        return s;
    }

private:
    FeneParams params_;
    std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Stepping

inline constexpr std::uint32_t kDefaultRetryCap = 10'000;

namespace detail {

struct StepScratch {
    std::vector<double> drift, diffusion, dw;
    StepScratch(std::size_t d, std::size_t m) : drift(d), diffusion(d * m), dw(m) {}
};

template <ModelFrame F>
void em_apply(const F& frame, std::span<const double> y, std::span<const double> dw, double dt,
              std::span<double> out, StepScratch& s) {
    const std::size_t d = y.size();
    const std::size_t m = dw.size();
    frame.drift(y, s.drift);
    frame.diffusion(y, s.diffusion);
    for (std::size_t i = 0; i < d; ++i) {
        double noise = 0.0;
        for (std::size_t k = 0; k < m; ++k) noise += s.diffusion[i * m + k] * dw[k];
        out[i] = y[i] + s.drift[i] * dt + noise;
    }
}

inline void draw_increments(PathStream& stream, double dt, std::span<double> dw) {
    boost::random::normal_distribution<double> normal;
    const double scale = std::sqrt(dt);
    for (double& w : dw) w = scale * normal(stream);
}

} // namespace detail

/// One Euler-Maruyama step y + a(t,y) dt + b(t,y) dw. Deterministic in its inputs.
template <SdeModel M>
[[nodiscard]] std::vector<double> em_step(const M& model, double t, std::span<const double> y,
                                          std::span<const double> dw, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("em_step: dt must be positive");
    if (y.size() != model.dimension() || dw.size() != model.wiener_dimension())
        throw InvalidArgument("em_step: state or increment has the wrong dimension");
    detail::StepScratch scratch(model.dimension(), model.wiener_dimension());
    std::vector<double> out(y.size());
    detail::em_apply(model.frame(t), y, dw, dt, out, scratch);
    return out;
}

/// Result of advancing one path by one inner step.
struct PathStepResult {
    std::uint32_t next_attempt; ///< first unused attempt index of this (path, step) cell
    std::uint32_t redraws;      ///< rejected trial moves
};

/// Advances one path one step, redrawing the whole increment until the model's
/// admissibility predicate accepts (at most `retry_cap` draws).
template <SdeModel M, ModelFrame F>
PathStepResult advance_path(const M& model, const F& frame, std::span<const double> y, std::span<double> out,
                            std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint32_t first_attempt,
                            double dt, detail::StepScratch& scratch, std::uint32_t retry_cap = kDefaultRetryCap) {
    std::uint32_t attempt = first_attempt;
    for (std::uint32_t tries = 0; tries < retry_cap; ++tries, ++attempt) {
        PathStream stream(seed, path, step, attempt);
        detail::draw_increments(stream, dt, scratch.dw);
        detail::em_apply(frame, y, scratch.dw, dt, out, scratch);
        if (!model.has_admissibility() || model.admissible(out, dt)) return {attempt + 1, tries};
    }
    throw StepError("accept-reject retry cap exceeded; inner step too large", static_cast<std::size_t>(path));
}

/// Accept-reject FENE step for a single state, drawing from the (seed, path,
/// step) cell. Returns the accepted state and the number of redraws.
inline std::pair<std::vector<double>, std::uint32_t> fene_step_ar(const FeneModel& model, double t,
                                                                  std::span<const double> y, std::uint64_t seed,
                                                                  std::uint64_t path, std::uint64_t step, double dt,
                                                                  std::uint32_t retry_cap = kDefaultRetryCap) {
    if (!(dt > 0.0)) throw InvalidArgument("fene_step_ar: dt must be positive");
    if (!model.admissible(y, dt)) throw StepError("fene_step_ar: input state is not admissible");
    detail::StepScratch scratch(model.dimension(), model.wiener_dimension());
    std::vector<double> out(y.size());
    const auto r = advance_path(model, model.frame(t), y, out, seed, path, step, 0, dt, scratch, retry_cap);
    return {std::move(out), r.redraws};
}

/// State of a burst needed to replay its final inner step path by path.
struct BurstReplay {
    Ensemble before_last;                   ///< Y^{n,K-1}
    std::vector<std::uint32_t> next_attempt; ///< per path, first unused attempt of the last step
    double dt = 0.0;
};

struct NoObserver {
    void operator()(std::size_t, const Ensemble&) const noexcept {}
};

/// Applies K inner steps to every path. `observer(k, ensemble)` sees each
/// intermediate ensemble Y^{n,k}, k = 1..K. If `replay` is non-null it receives
/// what is needed to redo the last step.
template <SdeModel M, class Observer = NoObserver>
Ensemble evolve_ensemble(const M& model, Ensemble ens, std::size_t K, double dt, Observer&& observer = {},
                         BurstReplay* replay = nullptr, std::uint32_t retry_cap = kDefaultRetryCap) {
    if (K < 1) throw InvalidArgument("evolve_ensemble: K must be at least 1");
    if (!(dt > 0.0)) throw InvalidArgument("evolve_ensemble: dt must be positive");
    if (ens.dim != model.dimension()) throw InvalidArgument("evolve_ensemble: ensemble dimension mismatch");
    const std::size_t J = ens.size();
    const std::size_t d = ens.dim;
    detail::StepScratch scratch(d, model.wiener_dimension());
    std::vector<double> next(ens.states.size());
    for (std::size_t k = 1; k <= K; ++k) {
        const bool last = (k == K);
        if (last && replay) {
            replay->before_last = ens;
            replay->next_attempt.assign(J, 0);
            replay->dt = dt;
        }
        const auto frame = model.frame(ens.time);
        for (std::size_t j = 0; j < J; ++j) {
            std::span<const double> y = ens.state(j);
            std::span<double> out(next.data() + j * d, d);
            PathStepResult r{};
            try {
                r = advance_path(model, frame, y, out, ens.lineage.base_seed, ens.path_id(j), ens.lineage.step, 0, dt,
                                 scratch, retry_cap);
            } catch (const StepError& e) {
                throw StepError(std::string("evolve_ensemble: ") + e.what(), j);
            }
            if (last && replay) replay->next_attempt[j] = r.next_attempt;
        }
        ens.states.swap(next);
        ens.time += dt;
        ens.lineage.step += 1;
        observer(k, std::as_const(ens));
    }
    return ens;
}

/// Redoes the final step of a burst for path j with fresh attempts; writes the
/// new state into `target`.
template <SdeModel M>
void replay_last_step(const M& model, BurstReplay& replay, std::size_t j, std::span<double> target,
                      std::uint32_t retry_cap = kDefaultRetryCap) {
    const Ensemble& prev = replay.before_last;
    detail::StepScratch scratch(prev.dim, model.wiener_dimension());
    const auto r = advance_path(model, model.frame(prev.time), prev.state(j), target, prev.lineage.base_seed,
                                prev.path_id(j), prev.lineage.step, replay.next_attempt[j], replay.dt, scratch,
                                retry_cap);
    replay.next_attempt[j] = r.next_attempt;
}

// ---------------------------------------------------------------------------
// Initial conditions

/// J i.i.d. standard normal states (dimension d), drawn from the `initial` stream.
[[nodiscard]] inline Ensemble sample_standard_normal(std::size_t J, std::uint64_t seed, std::size_t d = 1,
                                                     double t0 = 0.0) {
    Ensemble ens;
    ens.dim = d;
    ens.time = t0;
    ens.lineage.base_seed = seed;
    ens.states.resize(J * d);
    boost::random::normal_distribution<double> normal;
    for (std::size_t j = 0; j < J; ++j) {
        PathStream stream(seed, j, 0, 0, StreamTag::initial);
        for (std::size_t i = 0; i < d; ++i) ens.states[j * d + i] = normal(stream);
    }
    return ens;
}

/// J i.i.d. samples of the 1-D FENE stationary density for kappa = 0,
/// phi(x) ~ (1 - x^2/gamma)^{gamma/2} on (-sqrt(gamma), sqrt(gamma)), by
/// rejection against the uniform envelope (the density peaks at x = 0).
[[nodiscard]] inline Ensemble sample_fene_equilibrium(const FeneParams& params, std::size_t J, std::uint64_t seed,
                                                      double t0 = 0.0) {
    params.validate();
    const double gamma = params.gamma;
    const double half_width = std::sqrt(gamma);
    Ensemble ens;
    ens.dim = 1;
    ens.time = t0;
    ens.lineage.base_seed = seed;
    ens.states.resize(J);
    for (std::size_t j = 0; j < J; ++j) {
        PathStream stream(seed, j, 0, 0, StreamTag::initial);
        for (;;) {
            const double x = half_width * (2.0 * stream.uniform01() - 1.0);
            const double u = stream.uniform01();
            const double base = 1.0 - x * x / gamma;
            if (base > 0.0 && u < std::pow(base, 0.5 * gamma)) {
                ens.states[j] = x;
                break;
            }
        }
    }
    return ens;
}

} // namespace mmmc
