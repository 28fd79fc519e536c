#pragma once

// Experiment configuration: a sectioned key = value text format.
//
//   # comment
//   [numerics]
//   dt = 2e-4
//
// Every key has a default; unknown sections or keys are errors. emit() writes
// the canonical snapshot, which parse() reads back to an identical config.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "mmmc/csv.hpp"
#include "mmmc/error.hpp"
#include "mmmc/extrapolation.hpp"
#include "mmmc/matching.hpp"
#include "mmmc/orchestrator.hpp"
#include "mmmc/restriction.hpp"
#include "mmmc/sde.hpp"

namespace mmmc {

/// Parse failure with its location.
class ConfigError : public InvalidArgument {
public:
    ConfigError(const std::string& msg, std::size_t line = 0, std::string key = {})
        : InvalidArgument(format(msg, line, key)), line_(line), key_(std::move(key)) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] const std::string& key() const noexcept { return key_; }

private:
    static std::string format(const std::string& msg, std::size_t line, const std::string& key) {
        std::string s = "config";
        if (line) s += " line " + std::to_string(line);
        if (!key.empty()) s += " key '" + key + "'";
        return s + ": " + msg;
    }
    std::size_t line_;
    std::string key_;
};

/// A named scalar time profile: "constant(c)", "periodic", or a bare number.
struct ProfileSpec {
    std::string text = "constant(0)";

    [[nodiscard]] TimeProfile make() const {
        const std::string s = trimmed();
        if (s == "periodic") return periodic_flow_profile();
        if (s.rfind("constant(", 0) == 0 && s.back() == ')')
            return constant_profile(parse_double(trim(s.substr(9, s.size() - 10))));
        return constant_profile(parse_double(s));
    }

    /// Value of a constant profile, if it is one.
    [[nodiscard]] std::optional<double> constant_value() const {
        const std::string s = trimmed();
        if (s == "periodic") return std::nullopt;
        return make()(0.0);
    }

    void validate() const { (void)make(); }

    static std::string trim(std::string_view v) {
        const auto b = v.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) return {};
        const auto e = v.find_last_not_of(" \t\r");
        return std::string(v.substr(b, e - b + 1));
    }
    friend bool operator==(const ProfileSpec&, const ProfileSpec&) = default;

private:
    [[nodiscard]] std::string trimmed() const { return trim(text); }
};

enum class ModelKind { linear, fene };
enum class InitialKind { normal, fene_equilibrium };
enum class QoiKind { mean, second_moment, stress };

struct ExperimentConfig {
    // [model]
    ModelKind model = ModelKind::fene;
    ProfileSpec a1{"constant(-1)"}, a2{"constant(1)"}, b{"constant(1)"};
    double gamma = 49.0;
    double we = 1.0;
    double epsilon = 1.0;
    ProfileSpec kappa{"periodic"};
    // [numerics]
    double dt = 2e-4;
    std::size_t K = 1;
    std::size_t J = 1000;
    double t0 = 0.0;
    double T = 1.0;
    std::uint64_t seed = 1;
    // [macro]
    MomentKind moments = MomentKind::even_centralized;
    std::size_t L = 3;
    bool include_mean = false;
    ExtrapMethod method = ExtrapMethod::projective;
    std::size_t order = 1;
    std::size_t chord_lag = 0;
    WarmupMode warmup = WarmupMode::micro;
    // [policy]
    double dt0 = 1e-3;
    double dt_max = 8e-3;
    double shrink = 0.2;
    double grow = 1.2;
    bool adaptive = true;
    // [matching]
    double tol = 1e-9;
    unsigned max_iter = 50;
    double cond_cap = 1e14;
    unsigned fene_retry_cap = 20;
    // [output]
    std::string out_dir = ".";
    std::string trajectory = "trajectory.csv";
    bool record_inner = false;
    double record_dt = 0.0;
    // [replicate]
    std::size_t replicates = 2;
    std::size_t workers = 1;
    // [experiment]
    InitialKind initial = InitialKind::fene_equilibrium;
    QoiKind qoi = QoiKind::stress;
    double t_minus = 1.0;
    double t_star = 1.15;
    std::vector<std::size_t> L_values{2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<double> dt_values{};
    std::size_t histogram_bins = 70;
    std::size_t moment_error_orders = 12;

    [[nodiscard]] MomentSpec moment_spec() const { return {moments, L, include_mean}; }

    [[nodiscard]] FeneParams fene_params() const {
        FeneParams p;
        p.gamma = gamma;
        p.we = we;
        p.epsilon = epsilon;
        p.kappa = scalar_kappa(kappa.make());
        return p;
    }

    [[nodiscard]] LinearModel linear_model() const { return {a1.make(), a2.make(), b.make()}; }

    [[nodiscard]] AccelerationScheme scheme() const {
        AccelerationScheme s;
        s.spec = moment_spec();
        s.extrap = {method, order, chord_lag, K, dt};
        s.match = {tol, max_iter, cond_cap, fene_retry_cap};
        s.policy = {dt0, dt_max, shrink, grow, K, dt, adaptive};
        s.warmup = warmup;
        return s;
    }

    void validate() const {
        auto fail = [](const std::string& key, const std::string& msg) { throw ConfigError(msg, 0, key); };
        if (!(dt > 0.0)) fail("numerics.dt", "must be positive");
        if (K < 1) fail("numerics.K", "must be at least 1");
        if (J < 2) fail("numerics.J", "must be at least 2");
        if (!(T >= t0)) fail("numerics.T", "must not precede t0");
        if (L < 1) fail("macro.L", "must be at least 1");
        if (replicates < 1) fail("replicate.R", "must be at least 1");
        if (model == ModelKind::fene) {
            if (!(gamma > 0.0)) fail("model.gamma", "must be positive");
            if (!(we > 0.0)) fail("model.we", "must be positive");
        }
        if (initial == InitialKind::fene_equilibrium && model != ModelKind::fene)
            fail("experiment.initial", "fene-equilibrium needs the fene model");
        if (qoi == QoiKind::stress && model != ModelKind::fene) fail("experiment.qoi", "stress needs the fene model");
        for (const auto* p : {&a1, &a2, &b, &kappa}) {
            try {
                p->validate();
            } catch (const InvalidArgument& e) {
                fail("model", std::string("bad profile: ") + e.what());
            }
        }
        try {
            scheme().validate();
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

template <class E>
struct EnumNames {
    std::vector<std::pair<E, std::string>> names;
    [[nodiscard]] std::string to(E e) const {
        for (const auto& [k, v] : names)
            if (k == e) return v;
        return "?";
    }
    [[nodiscard]] E from(const std::string& s) const {
        for (const auto& [k, v] : names)
            if (v == s) return k;
        std::string opts;
        for (const auto& [k, v] : names) opts += (opts.empty() ? "" : "|") + v;
        throw InvalidArgument("expected one of " + opts + ", got '" + s + "'");
    }
};

inline const EnumNames<ModelKind> kModelNames{{{ModelKind::linear, "linear"}, {ModelKind::fene, "fene"}}};
inline const EnumNames<InitialKind> kInitialNames{
    {{InitialKind::normal, "normal"}, {InitialKind::fene_equilibrium, "fene-equilibrium"}}};
inline const EnumNames<QoiKind> kQoiNames{
    {{QoiKind::mean, "mean"}, {QoiKind::second_moment, "second-moment"}, {QoiKind::stress, "stress"}}};
inline const EnumNames<MomentKind> kMomentNames{{{MomentKind::standard, "standard"},
                                                 {MomentKind::centralized, "centralized"},
                                                 {MomentKind::even_centralized, "even-centralized"}}};
inline const EnumNames<ExtrapMethod> kMethodNames{{{ExtrapMethod::projective, "projective"},
                                                   {ExtrapMethod::projective_chord, "projective-chord"},
                                                   {ExtrapMethod::multistep, "multistep"}}};
inline const EnumNames<WarmupMode> kWarmupNames{{{WarmupMode::micro, "micro"}, {WarmupMode::projective, "projective"}}};

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw InvalidArgument("expected a boolean, got '" + s + "'");
}

inline std::uint64_t parse_uint(const std::string& s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw InvalidArgument("expected a nonnegative integer, got '" + s + "'");
    return v;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& s, F&& one) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = ProfileSpec::trim(item);
        if (!item.empty()) out.push_back(static_cast<T>(one(item)));
    }
    return out;
}

/// Binds each (section.key) to a reader and a writer on one config object.
struct KeyBinding {
    std::string name; ///< "section.key"
    std::function<void(ExperimentConfig&, const std::string&)> read;
    std::function<std::string(const ExperimentConfig&)> write;
};

template <class T>
KeyBinding num(std::string name, T ExperimentConfig::*m) {
    if constexpr (std::is_floating_point_v<T>) {
        return {std::move(name), [m](ExperimentConfig& c, const std::string& v) { c.*m = parse_double(v); },
                [m](const ExperimentConfig& c) { return format_double(c.*m); }};
    } else {
        return {std::move(name), [m](ExperimentConfig& c, const std::string& v) { c.*m = static_cast<T>(parse_uint(v)); },
                [m](const ExperimentConfig& c) { return std::to_string(c.*m); }};
    }
}

inline KeyBinding flag(std::string name, bool ExperimentConfig::*m) {
    return {std::move(name), [m](ExperimentConfig& c, const std::string& v) { c.*m = parse_bool(v); },
            [m](const ExperimentConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

inline KeyBinding text(std::string name, std::string ExperimentConfig::*m) {
    return {std::move(name), [m](ExperimentConfig& c, const std::string& v) { c.*m = v; },
            [m](const ExperimentConfig& c) { return c.*m; }};
}

inline KeyBinding profile(std::string name, ProfileSpec ExperimentConfig::*m) {
    return {std::move(name),
            [m](ExperimentConfig& c, const std::string& v) {
                ProfileSpec p{v};
                p.validate();
                c.*m = p;
            },
            [m](const ExperimentConfig& c) { return ProfileSpec::trim((c.*m).text); }};
}

template <class E>
KeyBinding choice(std::string name, E ExperimentConfig::*m, const EnumNames<E>& names) {
    return {std::move(name), [m, &names](ExperimentConfig& c, const std::string& v) { c.*m = names.from(v); },
            [m, &names](const ExperimentConfig& c) { return names.to(c.*m); }};
}

inline const std::vector<KeyBinding>& bindings() {
    static const std::vector<KeyBinding> b = [] {
        using C = ExperimentConfig;
        std::vector<KeyBinding> v;
        v.push_back(choice("model.type", &C::model, kModelNames));
        v.push_back(profile("model.a1", &C::a1));
        v.push_back(profile("model.a2", &C::a2));
        v.push_back(profile("model.b", &C::b));
        v.push_back(num("model.gamma", &C::gamma));
        v.push_back(num("model.we", &C::we));
        v.push_back(num("model.epsilon", &C::epsilon));
        v.push_back(profile("model.kappa", &C::kappa));
        v.push_back(num("numerics.dt", &C::dt));
        v.push_back(num("numerics.K", &C::K));
        v.push_back(num("numerics.J", &C::J));
        v.push_back(num("numerics.t0", &C::t0));
        v.push_back(num("numerics.T", &C::T));
        v.push_back(num("numerics.seed", &C::seed));
        v.push_back(choice("macro.moments", &C::moments, kMomentNames));
        v.push_back(num("macro.L", &C::L));
        v.push_back(flag("macro.include_mean", &C::include_mean));
        v.push_back(choice("macro.method", &C::method, kMethodNames));
        v.push_back(num("macro.order", &C::order));
        v.push_back(num("macro.K1", &C::chord_lag));
        v.push_back(choice("macro.warmup", &C::warmup, kWarmupNames));
        v.push_back(num("policy.dt0", &C::dt0));
        v.push_back(num("policy.dt_max", &C::dt_max));
        v.push_back(num("policy.alpha_under", &C::shrink));
        v.push_back(num("policy.alpha_over", &C::grow));
        v.push_back(flag("policy.adaptive", &C::adaptive));
        v.push_back(num("matching.tol", &C::tol));
        v.push_back(num("matching.max_iter", &C::max_iter));
        v.push_back(num("matching.cond_cap", &C::cond_cap));
        v.push_back(num("matching.fene_retry_cap", &C::fene_retry_cap));
        v.push_back(text("output.dir", &C::out_dir));
        v.push_back(text("output.trajectory", &C::trajectory));
        v.push_back(flag("output.record_inner", &C::record_inner));
        v.push_back(num("output.record_dt", &C::record_dt));
        v.push_back(num("replicate.R", &C::replicates));
        v.push_back(num("replicate.workers", &C::workers));
        v.push_back(choice("experiment.initial", &C::initial, kInitialNames));
        v.push_back(choice("experiment.qoi", &C::qoi, kQoiNames));
        v.push_back(num("experiment.t_minus", &C::t_minus));
        v.push_back(num("experiment.t_star", &C::t_star));
        v.push_back({"experiment.L_values",
                     [](C& c, const std::string& s) {
                         c.L_values = parse_list<std::size_t>(s, [](const std::string& x) { return parse_uint(x); });
                     },
                     [](const C& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.L_values.size(); ++i)
                             s += (i ? ", " : "") + std::to_string(c.L_values[i]);
                         return s;
                     }});
        v.push_back({"experiment.dt_values",
                     [](C& c, const std::string& s) {
                         c.dt_values = parse_list<double>(s, [](const std::string& x) { return parse_double(x); });
                     },
                     [](const C& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.dt_values.size(); ++i)
                             s += (i ? ", " : "") + format_double(c.dt_values[i]);
                         return s;
                     }});
        v.push_back(num("experiment.histogram_bins", &C::histogram_bins));
        v.push_back(num("experiment.moment_error_orders", &C::moment_error_orders));
        return v;
    }();
    return b;
}

} // namespace detail

/// Parses config text; `origin` names the source in error messages.
[[nodiscard]] inline ExperimentConfig parse_config(std::istream& in, bool validate = true) {
    ExperimentConfig cfg;
    std::map<std::string, const detail::KeyBinding*> table;
    std::map<std::string, bool> sections;
    for (const auto& b : detail::bindings()) {
        table[b.name] = &b;
        sections[b.name.substr(0, b.name.find('.'))] = true;
    }
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = ProfileSpec::trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("unterminated section header", lineno);
            section = ProfileSpec::trim(s.substr(1, s.size() - 2));
            if (!sections.count(section)) throw ConfigError("unknown section [" + section + "]", lineno);
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", lineno);
        const std::string key = ProfileSpec::trim(s.substr(0, eq));
        std::string value = ProfileSpec::trim(s.substr(eq + 1));
        if (const auto hash = value.find(" #"); hash != std::string::npos) value = ProfileSpec::trim(value.substr(0, hash));
        if (section.empty()) throw ConfigError("key outside of any section", lineno, key);
        const std::string full = section + "." + key;
        const auto it = table.find(full);
        if (it == table.end()) throw ConfigError("unknown key", lineno, full);
        try {
            it->second->read(cfg, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what(), lineno, full);
        }
    }
    if (validate) cfg.validate();
    return cfg;
}

[[nodiscard]] inline ExperimentConfig parse_config_string(const std::string& text, bool validate = true) {
    std::istringstream in(text);
    return parse_config(in, validate);
}

[[nodiscard]] inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

/// Canonical snapshot: every key, in a fixed order, one section block each.
[[nodiscard]] inline std::string emit_config(const ExperimentConfig& cfg) {
    std::string out, section;
    for (const auto& b : detail::bindings()) {
        const auto dot = b.name.find('.');
        const std::string sec = b.name.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out += '\n';
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += b.name.substr(dot + 1) + " = " + b.write(cfg) + "\n";
    }
    return out;
}

/// FNV-1a, 64 bit.
[[nodiscard]] constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Hash of the canonical snapshot. The output directory and worker count do
/// not change results and are left out, so moving or parallelizing a run keeps
/// its files byte-identical.
[[nodiscard]] inline std::string config_hash(const ExperimentConfig& cfg) {
    static constexpr char kHex[] = "0123456789abcdef";
    ExperimentConfig canon = cfg;
    canon.out_dir = ".";
    canon.workers = 1;
    std::uint64_t h = fnv1a64(emit_config(canon));
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    return s;
}

} // namespace mmmc
