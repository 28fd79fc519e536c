// mmmc: command-line front end for the micro/macro acceleration library.
//
//   mmmc run          --config FILE [--seed N] [--out DIR]
//   mmmc replicate    --config FILE [--replicates R] [--workers W]
//   mmmc match-sweep  --config FILE [--part L|dt|all]
//   mmmc extrap-sweep --config FILE
//   mmmc stability    --pe P --beta B [--beta B ...]
//   mmmc ks           SAMPLE_A SAMPLE_B
//
// Failures print one line "error: kind=<config|numerical|usage> ..." to stderr
// and exit with 1 (config/usage) or 2 (numerical).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmmc/mmmc.hpp"

namespace {

using namespace mmmc;
namespace fs = std::filesystem;

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> replicates;
    std::optional<std::size_t> workers;
};

ExperimentConfig load(const Globals& g) {
    ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (g.out) cfg.out_dir = *g.out;
    if (g.replicates) cfg.replicates = *g.replicates;
    if (g.workers) cfg.workers = *g.workers;
    cfg.validate();
    return cfg;
}

std::ofstream output(const ExperimentConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.out_dir);
    return open_output((fs::path(cfg.out_dir) / name).string());
}

void stamp(CsvWriter& w, const ExperimentConfig& cfg) {
    w.comment("config_hash", config_hash(cfg));
    w.comment("seed", std::to_string(cfg.seed));
}

int cmd_run(const Globals& g) {
    const ExperimentConfig cfg = load(g);
    const TrajectoryRecord rec = run_simulation(cfg);
    auto f = output(cfg, cfg.trajectory);
    write_trajectory_csv(f, rec, {{"config_hash", config_hash(cfg)}});
    {
        auto snap = output(cfg, cfg.trajectory + ".ini");
        snap << emit_config(cfg);
    }
    std::cout << "wrote " << (fs::path(cfg.out_dir) / cfg.trajectory).string() << " (" << rec.rows.size()
              << " rows, speed-up " << format_double(rec.speedup()) << ")\n";
    return 0;
}

int cmd_replicate(const Globals& g) {
    const ExperimentConfig cfg = load(g);
    ReplicateOptions opt;
    opt.replicates = cfg.replicates;
    opt.workers = cfg.workers;
    if (cfg.record_dt > 0.0) opt.record_dt = cfg.record_dt;
    const ReplicateStats st = replicate_stats(
        [&](std::uint64_t seed, std::size_t) { return qoi_series(run_simulation(cfg, seed)); }, cfg.seed, opt);
    auto f = output(cfg, "replicates.csv");
    CsvWriter w(f);
    stamp(w, cfg);
    w.comment("replicates", std::to_string(st.replicates));
    w.header(std::vector<std::string>{"time", "mean", "std"});
    for (std::size_t i = 0; i < st.time.size(); ++i) w.row(std::vector<double>{st.time[i], st.mean[i], st.stddev[i]});
    std::cout << "wrote replicates.csv (" << st.time.size() << " times, R=" << st.replicates << ")\n";
    return 0;
}

void write_dt_rows(std::ofstream& f, const ExperimentConfig& cfg, const std::vector<DtSweepRow>& rows) {
    CsvWriter w(f);
    stamp(w, cfg);
    w.comment("replicates", std::to_string(cfg.replicates));
    w.header(std::vector<std::string>{"L", "dt_macro", "relative_error", "failures"});
    for (const auto& r : rows)
        w.row_strings(std::vector<std::string>{std::to_string(r.L), format_double(r.dt_macro),
                                               format_double(r.relative_error), std::to_string(r.failures)});
}

int cmd_match_sweep(const Globals& g, const std::string& part) {
    const ExperimentConfig cfg = load(g);
    if (part == "L" || part == "all") {
        const LSweepResult res = lsweep(cfg, cfg.seed);
        {
            auto f = output(cfg, "ks.csv");
            CsvWriter w(f);
            stamp(w, cfg);
            w.header(std::vector<std::string>{"L", "D", "p", "match_ok", "failure", "iterations", "residual"});
            for (const auto& r : res.rows)
                w.row_strings(std::vector<std::string>{std::to_string(r.L), format_double(r.ks_statistic),
                                                       format_double(r.ks_p), r.match_ok ? "1" : "0", r.failure,
                                                       std::to_string(r.iterations), format_double(r.residual)});
        }
        {
            auto f = output(cfg, "moment_errors.csv");
            CsvWriter w(f);
            stamp(w, cfg);
            w.header(std::vector<std::string>{"L", "moment_index", "relative_error"});
            for (const auto& r : res.moment_errors)
                w.row_strings(std::vector<std::string>{std::to_string(r.L), std::to_string(r.index),
                                                       format_double(r.relative_error)});
        }
        {
            auto f = output(cfg, "histograms.csv");
            CsvWriter w(f);
            stamp(w, cfg);
            std::vector<std::string> head{"abs_x", "prior", "reference"};
            for (const auto& [L, h] : res.matched) head.push_back("matched_L" + std::to_string(L));
            w.header(head);
            for (std::size_t i = 0; i < res.prior.density.size(); ++i) {
                std::vector<double> row{res.prior.centre(i), res.prior.density[i], res.reference.density[i]};
                for (const auto& [L, h] : res.matched) row.push_back(h.density[i]);
                w.row(row);
            }
        }
        for (const auto& r : res.rows)
            std::cout << "L=" << r.L << " D=" << format_double(r.ks_statistic) << " p=" << format_double(r.ks_p)
                      << (r.match_ok ? "" : " (matching failed: " + r.failure + ")") << "\n";
    }
    if ((part == "dt" || part == "all") && !cfg.dt_values.empty()) {
        const auto rows = averaged_sweep(cfg, match_dt_sweep);
        auto f = output(cfg, "match_dt.csv");
        write_dt_rows(f, cfg, rows);
        std::cout << "wrote match_dt.csv (" << rows.size() << " rows)\n";
    }
    return 0;
}

int cmd_extrap_sweep(const Globals& g) {
    const ExperimentConfig cfg = load(g);
    if (cfg.dt_values.empty()) throw ConfigError("experiment.dt_values must list macro steps", 0, "experiment.dt_values");
    const auto rows = averaged_sweep(cfg, extrap_dt_sweep);
    auto f = output(cfg, "extrap_dt.csv");
    write_dt_rows(f, cfg, rows);
    std::cout << "wrote extrap_dt.csv (" << rows.size() << " rows)\n";
    return 0;
}

/// Twelve significant digits, for the human-readable root listing.
std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

int cmd_stability(const Globals& g, std::size_t pe, const std::vector<double>& betas) {
    std::optional<ExperimentConfig> cfg;
    if (g.out) {
        cfg.emplace();
        cfg->out_dir = *g.out;
    }
    std::vector<std::vector<std::string>> table;
    for (double beta : betas) {
        const auto r = characteristic_roots(beta, pe);
        std::cout << "p_e=" << pe << " beta=" << format_double(beta) << " roots:";
        for (const auto& z : r.roots) {
            std::cout << ' ' << short_number(z.real());
            if (std::abs(z.imag()) > 1e-12) std::cout << (z.imag() > 0 ? "+" : "") << short_number(z.imag()) << 'i';
            table.push_back({std::to_string(pe), format_double(beta), format_double(z.real()), format_double(z.imag()),
                             format_double(std::abs(z)), r.zero_stable ? "stable" : "unstable"});
        }
        std::cout << " verdict=" << (r.zero_stable ? "stable" : "unstable") << "\n";
    }
    if (cfg) {
        auto f = output(*cfg, "stability.csv");
        CsvWriter w(f);
        w.header(std::vector<std::string>{"p_e", "beta", "re", "im", "modulus", "verdict"});
        for (const auto& row : table) w.row_strings(row);
    }
    return 0;
}

int cmd_ks(const Globals& g, const std::string& a, const std::string& b) {
    const auto x = read_sample_file(a);
    const auto y = read_sample_file(b);
    const KsResult r = ks_two_sample(x, y);
    std::cout << "D=" << format_double(r.statistic) << " p=" << format_double(r.p_value) << " n_a=" << r.n_a
              << " n_b=" << r.n_b << "\n";
    if (g.out) {
        ExperimentConfig cfg;
        cfg.out_dir = *g.out;
        auto f = output(cfg, "ks_test.csv");
        CsvWriter w(f);
        w.header(std::vector<std::string>{"D", "p", "n_a", "n_b"});
        w.row_strings(std::vector<std::string>{format_double(r.statistic), format_double(r.p_value),
                                               std::to_string(r.n_a), std::to_string(r.n_b)});
    }
    return 0;
}

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Micro/macro acceleration of Monte Carlo SDE simulation"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t replicates = 0, workers = 0;
    auto add_globals = [&](CLI::App* sub) {
        sub->add_option("--config", g.config_path, "Experiment config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Override the base seed");
        sub->add_option("--out", out, "Output directory");
        sub->add_option("--replicates", replicates, "Number of replicates")->check(CLI::PositiveNumber);
        sub->add_option("--workers", workers, "Worker threads for replicates")->check(CLI::PositiveNumber);
    };

    auto* run = app.add_subcommand("run", "Single trajectory -> trajectory CSV");
    auto* rep = app.add_subcommand("replicate", "R independent runs -> mean/std CSV");
    auto* msw = app.add_subcommand("match-sweep", "Matching error vs L and vs macro step");
    auto* esw = app.add_subcommand("extrap-sweep", "Local error of one accelerated step vs macro step");
    auto* stab = app.add_subcommand("stability", "Roots of the multistep characteristic polynomial");
    auto* ks = app.add_subcommand("ks", "Two-sample Kolmogorov-Smirnov test of two sample files");
    for (auto* s : {run, rep, msw, esw, stab, ks}) add_globals(s);

    std::string part = "all";
    msw->add_option("--part", part, "L, dt or all")->check(CLI::IsMember({"L", "dt", "all"}));
    std::size_t pe = 1;
    std::vector<double> betas;
    stab->add_option("--pe", pe, "Extrapolation order p_e")->required()->check(CLI::PositiveNumber);
    stab->add_option("--beta", betas, "beta in [0,1); repeatable")->required();
    std::string file_a, file_b;
    ks->add_option("sample_a", file_a, "First sample file")->required()->check(CLI::ExistingFile);
    ks->add_option("sample_b", file_b, "Second sample file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: kind=usage message=\"" << one_line(e.what()) << "\"\n";
        return 1;
    }
    for (auto* s : {run, rep, msw, esw, stab, ks}) {
        if (s->count("--seed")) g.seed = seed;
        if (s->count("--out")) g.out = out;
        if (s->count("--replicates")) g.replicates = replicates;
        if (s->count("--workers")) g.workers = workers;
    }

    std::uint64_t repro_seed = g.seed.value_or(0);
    try {
        if (!g.seed && !g.config_path.empty()) repro_seed = load_config(g.config_path).seed;
        if (*run) return cmd_run(g);
        if (*rep) return cmd_replicate(g);
        if (*msw) return cmd_match_sweep(g, part);
        if (*esw) return cmd_extrap_sweep(g);
        if (*stab) return cmd_stability(g, pe, betas);
        if (*ks) return cmd_ks(g, file_a, file_b);
    } catch (const ConfigError& e) {
        std::cerr << "error: kind=config line=" << e.line() << " key=\"" << e.key() << "\" message=\""
                  << one_line(e.what()) << "\"\n";
        return 1;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: kind=config message=\"" << one_line(e.what()) << "\"\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: kind=numerical seed=" << repro_seed << " message=\"" << one_line(e.what()) << "\"\n";
        return 2;
    }
    return 1;
}
