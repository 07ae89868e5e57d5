// loopsim command-line runner: simulate / sweep / power / analyze /
// estimate-tau-tilde. Exit status 0 on success, 1 on configuration or
// validation errors, 2 on runtime errors.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "loopsim/loopsim.hpp"

namespace fs = std::filesystem;
using namespace loopsim;

namespace {

constexpr std::uint64_t kAutocorrStreamTag = 0x6175746f636f7272ULL;   // "autocorr"
constexpr std::uint64_t kSweepQmArmBit = 0x8000000000000000ULL;

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::uint64_t> trials_override;
    std::string out_dir;
    std::string formats;
    unsigned threads = 1;
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool config_required = true) {
    auto* c = cmd->add_option("--config", opt.config_path, "path to the config file");
    if (config_required) c->required();
    cmd->add_option("--seed", opt.seed_override, "override master_seed from the config");
    cmd->add_option("--trials", opt.trials_override, "override trials from the config");
    cmd->add_option("--out", opt.out_dir, "output directory (default: config/env/.)");
    cmd->add_option("--format", opt.formats, "comma list of output formats: csv,json");
    cmd->add_option("--threads", opt.threads, "worker threads (affects speed only)");
}

SimulationConfig load_with_overrides(const CommonOptions& opt) {
    SimulationConfig cfg = load_config(opt.config_path);
    if (opt.seed_override) cfg.master_seed = *opt.seed_override;
    if (opt.trials_override) cfg.trials = *opt.trials_override;
    if (!opt.out_dir.empty()) cfg.output.directory = opt.out_dir;
    if (!opt.formats.empty()) {
        cfg.output.csv = opt.formats.find("csv") != std::string::npos;
        cfg.output.json = opt.formats.find("json") != std::string::npos;
    }
    for (const auto& w : cfg.validate()) {
        std::cerr << "warning: " << w << '\n';
    }
    return cfg;
}

// Diagnostic autocorrelation of a repeated-measurement series at the config's
// effective correlation time (zero in qm mode). Returns the curve and, when a
// decay is resolvable, the fitted decay time.
struct AutocorrDiagnostic {
    std::vector<double> corr;
    double timestep = 0.0;
    std::optional<DecayFit> fit;
    double effective_tau = 0.0;
};

AutocorrDiagnostic autocorr_diagnostic(const SimulationConfig& cfg, PhysicsModel model) {
    AutocorrDiagnostic diag;
    diag.timestep = loop_traversal_time(cfg.geometry);
    diag.effective_tau = model == PhysicsModel::sdhv ? cfg.effective_tau() : 0.0;

    const std::size_t n_samples = 20000;
    const double pass_prob = cfg.geometry.derive_pass_probs
                                 ? born_probability(cfg.initial_state.build(),
                                                    eigendecompose(cfg.observable_a.build()), 0)
                                 : cfg.geometry.pass_prob_a;
    RandomStream rng = RandomStream::for_stream(cfg.master_seed, kAutocorrStreamTag);
    auto outcomes = repeated_measurement_outcomes(pass_prob, diag.timestep, diag.effective_tau,
                                                  n_samples, cfg.hidden_components, rng);
    // Remove the population mean 2p-1 rather than the sample mean: a frozen
    // series is constant, and subtracting its own mean would null it out.
    const double mean = 2.0 * pass_prob - 1.0;
    for (double& v : outcomes) {
        v -= mean;
    }
    const std::size_t max_lag = std::min<std::size_t>(
        n_samples / 4, std::max<std::size_t>(
                           20, diag.effective_tau > 0.0
                                   ? static_cast<std::size_t>(5.0 * diag.effective_tau /
                                                              diag.timestep)
                                   : 20));
    diag.corr = autocorrelation_estimate({std::move(outcomes), diag.timestep}, max_lag);
    try {
        diag.fit = fit_decay_time(diag.corr, diag.timestep);
    } catch (const NoDecaySignalError&) {
        // tau consistent with zero: the quantum-mechanics answer.
    }
    return diag;
}

void emit_model_outputs(const SimulationConfig& cfg, PhysicsModel model,
                        const TrialEnsemble& ensemble, const TrialEnsemble* qm_reference) {
    const fs::path dir = cfg.output.resolved_directory();
    const std::string tag = to_string(model);

    AnalysisSummary summary = summarize_ensemble(ensemble, tag);
    const AutocorrDiagnostic diag = autocorr_diagnostic(cfg, model);
    if (diag.fit) {
        summary.decay_fit = diag.fit;
        summary.decay_fit_tau_truth = diag.effective_tau;
    }
    if (qm_reference != nullptr) {
        summary.ks_vs_qm = compare_distributions(*qm_reference, ensemble);
    }

    if (cfg.output.csv) {
        write_ensemble_csv(dir / ("ensemble_" + tag + ".csv"), ensemble, cfg, model);
        write_histogram_csv(dir / ("histogram_" + tag + ".csv"), ensemble, cfg);
        write_autocorrelation_csv(dir / ("autocorr_" + tag + ".csv"), diag.corr, diag.timestep,
                                  cfg);
    }
    if (cfg.output.json) {
        write_summary_json(dir / ("summary_" + tag + ".json"), summary_to_json(summary, &cfg));
    }
    std::cout << "wrote " << tag << " outputs (" << ensemble.records.size() << " trials) to "
              << dir.string() << '\n';
}

int cmd_simulate(const CommonOptions& opt) {
    const SimulationConfig cfg = load_with_overrides(opt);
    if (cfg.model == ModelChoice::both) {
        const TrialEnsemble qm = run_campaign(cfg, PhysicsModel::qm, cfg.trials,
                                              cfg.master_seed, opt.threads);
        const TrialEnsemble sdhv = run_campaign(cfg, PhysicsModel::sdhv, cfg.trials,
                                                cfg.master_seed, opt.threads);
        emit_model_outputs(cfg, PhysicsModel::qm, qm, nullptr);
        emit_model_outputs(cfg, PhysicsModel::sdhv, sdhv, &qm);
    } else {
        const PhysicsModel model =
            cfg.model == ModelChoice::qm ? PhysicsModel::qm : PhysicsModel::sdhv;
        const TrialEnsemble ensemble =
            run_campaign(cfg, model, cfg.trials, cfg.master_seed, opt.threads);
        emit_model_outputs(cfg, model, ensemble, nullptr);
    }
    return 0;
}

int cmd_analyze(const std::string& input, const std::string& out_dir) {
    const StoredEnsemble stored = read_ensemble_csv(input);
    AnalysisSummary summary = summarize_ensemble(stored.ensemble, stored.model);
    const Json j = summary_to_json(summary);
    std::cout << j.dump(2) << '\n';
    if (!out_dir.empty()) {
        write_summary_json(fs::path(out_dir) / "analysis_summary.json", j);
    }
    return 0;
}

int cmd_sweep(const CommonOptions& opt, const std::string& parameter, const std::string& values,
              const std::string& log_range, std::uint64_t trials_per_point) {
    const SimulationConfig base = load_with_overrides(opt);

    SweepSpec spec;
    spec.parameter_path = parameter;
    spec.trials_per_point = trials_per_point > 0 ? trials_per_point : base.trials;
    if (!values.empty()) {
        std::size_t pos = 0;
        while (pos != std::string::npos) {
            const auto comma = values.find(',', pos);
            spec.values.push_back(detail::parse_double_or_throw(
                detail::trim(values.substr(pos, comma - pos)), "--values"));
            pos = comma == std::string::npos ? comma : comma + 1;
        }
    } else if (!log_range.empty()) {
        const auto c1 = log_range.find(':');
        const auto c2 = log_range.find(':', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw ConfigError("--log-range must be lo:hi:npoints");
        }
        const double lo = detail::parse_double_or_throw(log_range.substr(0, c1), "--log-range");
        const double hi =
            detail::parse_double_or_throw(log_range.substr(c1 + 1, c2 - c1 - 1), "--log-range");
        const auto n = detail::parse_u64_or_throw(log_range.substr(c2 + 1), "--log-range");
        spec.values = log_spaced(lo, hi, static_cast<std::size_t>(n));
    } else {
        throw ConfigError("sweep needs --values or --log-range");
    }
    if (spec.values.empty()) {
        throw ConfigError("sweep needs at least one value");
    }

    const PhysicsModel model =
        base.model == ModelChoice::qm ? PhysicsModel::qm : PhysicsModel::sdhv;

    std::string out = "# loopsim sweep v1\n";
    out += "# base_config_fingerprint = " + fingerprint_hex(base.fingerprint()) + '\n';
    out += "# master_seed = " + std::to_string(base.master_seed) + '\n';
    out += "parameter,value,trials,mean_exit_time_s,mean_exit_time_stderr_s,mean_exit_loops,"
           "tau_hat_s,ks_vs_qm_p\n";

    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        SimulationConfig point = base;
        apply_sweep_value(point, spec.parameter_path, spec.values[i]);
        point.validate();

        const std::uint64_t point_seed = derive_stream_seed(base.master_seed, i);
        const TrialEnsemble ensemble =
            run_campaign(point, model, spec.trials_per_point, point_seed, opt.threads);
        const TrialEnsemble qm_arm =
            run_campaign(point, PhysicsModel::qm, spec.trials_per_point,
                         derive_stream_seed(base.master_seed, i | kSweepQmArmBit), opt.threads);

        const ExitTimeStats stats = mean_exit_time(ensemble);
        const TestResult ks = compare_distributions(qm_arm, ensemble);
        const AutocorrDiagnostic diag = autocorr_diagnostic(point, model);
        const double tau_hat = diag.fit ? diag.fit->tau_hat : 0.0;

        out += spec.parameter_path + ',' + detail::format_double(spec.values[i]) + ',' +
               std::to_string(spec.trials_per_point) + ',' +
               detail::format_double(stats.mean_seconds) + ',' +
               detail::format_double(stats.stderr_seconds) + ',' +
               detail::format_double(stats.mean_loops) + ',' +
               detail::format_double(tau_hat) + ',' + detail::format_double(ks.p_value) + '\n';
        std::cout << spec.parameter_path << " = " << spec.values[i]
                  << ": mean_exit_loops = " << stats.mean_loops << ", ks_vs_qm_p = " << ks.p_value
                  << '\n';
    }

    const fs::path dir = base.output.resolved_directory();
    atomic_write(dir / "sweep.csv", out);
    std::cout << "wrote " << (dir / "sweep.csv").string() << '\n';
    return 0;
}

int cmd_power(const CommonOptions& opt, double alpha_alt, double significance,
              double power_target, const std::string& grid_text, int replicates) {
    const SimulationConfig base = load_with_overrides(opt);

    std::vector<std::uint64_t> grid;
    std::size_t pos = 0;
    while (pos != std::string::npos) {
        const auto comma = grid_text.find(',', pos);
        grid.push_back(detail::parse_u64_or_throw(
            detail::trim(grid_text.substr(pos, comma - pos)), "--grid"));
        pos = comma == std::string::npos ? comma : comma + 1;
    }

    const PowerResult result = power_analysis(base, alpha_alt, significance, power_target, grid,
                                              replicates, opt.threads);
    Json j;
    j["alpha_alt"] = alpha_alt;
    j["significance"] = significance;
    j["power_target"] = power_target;
    j["replicates"] = replicates;
    j["achievable"] = result.achievable;
    if (result.achievable) {
        j["required_trials_per_arm"] = result.required_trials;
    } else {
        j["required_trials_per_arm"] = nullptr;
        j["max_grid_power"] = result.max_power;
    }
    Json curve = Json::array();
    for (const auto& pt : result.curve) {
        curve.push_back({{"trials_per_arm", pt.trials_per_arm}, {"power", pt.power}});
    }
    j["curve"] = std::move(curve);
    std::cout << j.dump(2) << '\n';
    if (!opt.out_dir.empty() || !base.output.directory.empty()) {
        write_summary_json(fs::path(base.output.resolved_directory()) / "power.json", j);
    }
    return 0;
}

int cmd_estimate_tau_tilde(double band_gap_ev, double temperature_k, double atoms,
                           double recomb_ns) {
    DetectorSpec spec;
    spec.band_gap_ev = band_gap_ev;
    spec.temperature_k = temperature_k;
    spec.atom_count = atoms;
    spec.recombination_time_s = recomb_ns * 1e-9;
    std::cout << "tau_tilde_s = " << detail::format_double(noise_timescale(spec)) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo simulator for the looped consecutive-measurement experiment"};
    app.require_subcommand(1);

    CommonOptions sim_opt;
    auto* simulate = app.add_subcommand("simulate", "run a campaign and write ensemble + summary");
    add_common(simulate, sim_opt);

    CommonOptions sweep_opt;
    std::string sweep_param, sweep_values, sweep_log_range;
    std::uint64_t sweep_trials = 0;
    auto* sweep = app.add_subcommand("sweep", "iterate one parameter, one CSV row per point");
    add_common(sweep, sweep_opt);
    sweep->add_option("--param", sweep_param, "parameter path, e.g. sdhv.alpha")->required();
    sweep->add_option("--values", sweep_values, "comma-separated explicit values");
    sweep->add_option("--log-range", sweep_log_range, "lo:hi:npoints, log-spaced");
    sweep->add_option("--trials-per-point", sweep_trials, "trials per sweep point");

    CommonOptions power_opt;
    double alpha_alt = 1.0, significance = 0.05, power_target = 0.9;
    std::string grid_text = "50,100,200,400";
    int replicates = 200;
    auto* power = app.add_subcommand("power", "required trial count for qm/sdhv discrimination");
    add_common(power, power_opt);
    power->add_option("--alpha-alt", alpha_alt, "alternative-hypothesis alpha");
    power->add_option("--significance", significance, "test significance level");
    power->add_option("--power-target", power_target, "target rejection probability");
    power->add_option("--grid", grid_text, "comma-separated candidate trial counts");
    power->add_option("--replicates", replicates, "Monte Carlo replicates per grid point");

    std::string analyze_input, analyze_out;
    auto* analyze = app.add_subcommand("analyze", "recompute statistics from an ensemble CSV");
    analyze->add_option("--input", analyze_input, "stored ensemble CSV")->required();
    analyze->add_option("--out", analyze_out, "directory for analysis_summary.json");

    double tt_gap = 1.0, tt_temp = 300.0, tt_atoms = 1e15, tt_recomb_ns = 1.0;
    auto* tau_tilde =
        app.add_subcommand("estimate-tau-tilde", "thermal noise timescale for a detector");
    tau_tilde->add_option("--band-gap-ev", tt_gap, "band gap in eV")->required();
    tau_tilde->add_option("--temperature-k", tt_temp, "temperature in kelvin")->required();
    tau_tilde->add_option("--atoms", tt_atoms, "atom count N")->required();
    tau_tilde->add_option("--recomb-ns", tt_recomb_ns, "recombination time in ns")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim_opt);
        if (sweep->parsed()) {
            return cmd_sweep(sweep_opt, sweep_param, sweep_values, sweep_log_range, sweep_trials);
        }
        if (power->parsed()) {
            return cmd_power(power_opt, alpha_alt, significance, power_target, grid_text,
                             replicates);
        }
        if (analyze->parsed()) return cmd_analyze(analyze_input, analyze_out);
        if (tau_tilde->parsed()) {
            return cmd_estimate_tau_tilde(tt_gap, tt_temp, tt_atoms, tt_recomb_ns);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
