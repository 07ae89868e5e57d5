#pragma once

// File emission and ingestion. Ensembles persist as CSV with a commented
// header carrying the config fingerprint, seed and the full resolved config;
// summaries persist as JSON. All writes are atomic (temp file + rename) and
// all floating-point output uses shortest round-trip formatting, so identical
// (config, seed) runs produce byte-identical files.

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "loopsim/config.hpp"
#include "loopsim/loop.hpp"
#include "loopsim/stats.hpp"

namespace loopsim {

using Json = nlohmann::ordered_json;

inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw IoError("write failed for '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        throw IoError("rename '" + tmp.string() + "' -> '" + path.string() +
                      "' failed: " + ec.message());
    }
}

inline std::string fingerprint_hex(std::uint64_t fp) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(fp));
    return buf;
}

namespace detail {

inline std::string config_header_comment(const SimulationConfig& cfg, PhysicsModel model,
                                         std::uint64_t n_trials, std::uint64_t master_seed) {
    std::string h;
    h += "# loopsim ensemble v1\n";
    h += "# config_fingerprint = " + fingerprint_hex(cfg.fingerprint()) + '\n';
    h += "# master_seed = " + std::to_string(master_seed) + '\n';
    h += "# model = " + std::string(to_string(model)) + '\n';
    h += "# n_trials = " + std::to_string(n_trials) + '\n';
    std::istringstream lines(cfg.canonical_physics_text());
    std::string line;
    while (std::getline(lines, line)) {
        h += "# " + line + '\n';
    }
    return h;
}

inline ExitPoint exit_point_from_string(std::string_view s) {
    if (s == "detector_A") return ExitPoint::detector_a;
    if (s == "detector_B") return ExitPoint::detector_b;
    if (s == "one_way_mirror") return ExitPoint::one_way_mirror;
    if (s == "max_loops_reached") return ExitPoint::max_loops_reached;
    throw IoError("unknown exit point '" + std::string(s) + "'");
}

inline PhysicsModel model_from_string(std::string_view s) {
    if (s == "qm") return PhysicsModel::qm;
    if (s == "sdhv") return PhysicsModel::sdhv;
    throw IoError("unknown model '" + std::string(s) + "'");
}

}  // namespace detail

inline void write_ensemble_csv(const std::filesystem::path& path, const TrialEnsemble& ensemble,
                               const SimulationConfig& cfg, PhysicsModel model) {
    std::string out = detail::config_header_comment(cfg, model, ensemble.records.size(),
                                                    ensemble.master_seed);
    out += "trial_index,m,exit_point,exit_time_s,model\n";
    for (std::size_t i = 0; i < ensemble.records.size(); ++i) {
        const auto& r = ensemble.records[i];
        out += std::to_string(i);
        out += ',';
        out += std::to_string(r.exit_loop_count);
        out += ',';
        out += to_string(r.exit_point);
        out += ',';
        out += detail::format_double(r.exit_time);
        out += ',';
        out += to_string(r.model);
        out += '\n';
    }
    atomic_write(path, out);
}

struct StoredEnsemble {
    TrialEnsemble ensemble;
    std::string model = "qm";
    std::vector<std::string> header;   // the commented config echo, verbatim
};

inline StoredEnsemble read_ensemble_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open ensemble file '" + path.string() + "'");
    }
    StoredEnsemble stored;
    std::string line;
    bool saw_columns = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            stored.header.push_back(line);
            const auto parse_field = [&](std::string_view key) -> std::optional<std::string> {
                const std::string prefix = "# " + std::string(key) + " = ";
                if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
                return std::nullopt;
            };
            if (auto v = parse_field("config_fingerprint")) {
                stored.ensemble.config_fingerprint =
                    std::strtoull(v->c_str(), nullptr, 16);
            } else if (auto s = parse_field("master_seed")) {
                stored.ensemble.master_seed = std::strtoull(s->c_str(), nullptr, 10);
            } else if (auto m = parse_field("model")) {
                stored.model = *m;
            }
            continue;
        }
        if (!saw_columns) {
            if (line != "trial_index,m,exit_point,exit_time_s,model") {
                throw IoError(path.string() + ":" + std::to_string(line_no) +
                              ": unexpected column header '" + line + "'");
            }
            saw_columns = true;
            continue;
        }
        std::array<std::string, 5> fields;
        std::size_t start = 0;
        for (std::size_t f = 0; f < 5; ++f) {
            const auto comma = line.find(',', start);
            if (f < 4 && comma == std::string::npos) {
                throw IoError(path.string() + ":" + std::to_string(line_no) +
                              ": expected 5 comma-separated fields");
            }
            fields[f] = line.substr(start, comma - start);
            start = comma == std::string::npos ? line.size() : comma + 1;
        }
        TrialRecord rec;
        rec.exit_loop_count = std::strtoull(fields[1].c_str(), nullptr, 10);
        rec.exit_point = detail::exit_point_from_string(fields[2]);
        rec.exit_time =
            detail::parse_double_or_throw(fields[3], path.string() + " exit_time_s");
        rec.model = detail::model_from_string(fields[4]);
        stored.ensemble.records.push_back(rec);
    }
    if (!saw_columns) {
        throw IoError(path.string() + ": missing column header line");
    }
    return stored;
}

// ---------------------------------------------------------------------------
// Summary assembly
// ---------------------------------------------------------------------------

struct AnalysisSummary {
    std::string model;
    std::uint64_t n_trials = 0;
    std::uint64_t master_seed = 0;
    std::uint64_t config_fingerprint = 0;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> histogram;
    std::optional<ExitTimeStats> exit_stats;     // absent when all censored
    std::optional<DecayFit> decay_fit;
    std::optional<double> decay_fit_tau_truth;   // effective tau used to generate the series
    std::optional<TestResult> ks_vs_qm;
    std::vector<std::string> warnings;
};

inline AnalysisSummary summarize_ensemble(const TrialEnsemble& ensemble, std::string model) {
    AnalysisSummary s;
    s.model = std::move(model);
    s.n_trials = ensemble.records.size();
    s.master_seed = ensemble.master_seed;
    s.config_fingerprint = ensemble.config_fingerprint;
    if (!ensemble.records.empty()) {
        s.histogram = exit_histogram(ensemble);
        try {
            s.exit_stats = mean_exit_time(ensemble);
            if (s.exit_stats->censoring_warning) {
                s.warnings.push_back(
                    "more than 1% of trials hit max_loops; exit-time mean treats them "
                    "as censored");
            }
        } catch (const AllCensoredError&) {
            s.warnings.push_back("all trials censored at max_loops; no exit-time mean");
        }
    }
    return s;
}

inline Json summary_to_json(const AnalysisSummary& s, const SimulationConfig* cfg = nullptr) {
    Json j;
    j["model"] = s.model;
    j["n_trials"] = s.n_trials;
    j["master_seed"] = s.master_seed;
    j["config_fingerprint"] = fingerprint_hex(s.config_fingerprint);
    Json hist = Json::array();
    for (const auto& [m, count] : s.histogram) {
        hist.push_back(Json::array({m, count}));
    }
    j["exit_histogram"] = std::move(hist);
    if (s.exit_stats) {
        j["mean_exit_time"] = {{"seconds", s.exit_stats->mean_seconds},
                               {"stderr_seconds", s.exit_stats->stderr_seconds},
                               {"mean_loops", s.exit_stats->mean_loops},
                               {"samples", s.exit_stats->samples},
                               {"censored", s.exit_stats->censored}};
    } else {
        j["mean_exit_time"] = nullptr;
    }
    if (s.decay_fit) {
        j["decay_fit"] = {{"tau_hat_s", s.decay_fit->tau_hat},
                          {"tau_stderr_s", s.decay_fit->tau_stderr},
                          {"lags_used", s.decay_fit->lags_used},
                          {"goodness", s.decay_fit->goodness}};
        if (s.decay_fit_tau_truth) {
            j["decay_fit"]["effective_tau_s"] = *s.decay_fit_tau_truth;
        }
    } else {
        j["decay_fit"] = nullptr;
    }
    if (s.ks_vs_qm) {
        j["ks_vs_qm"] = {{"statistic", s.ks_vs_qm->statistic},
                         {"p_value", s.ks_vs_qm->p_value},
                         {"test", s.ks_vs_qm->test_name}};
    } else {
        j["ks_vs_qm"] = nullptr;
    }
    j["warnings"] = s.warnings;
    if (cfg != nullptr) {
        Json echo = Json::object();
        std::istringstream lines(cfg->canonical_physics_text());
        std::string line;
        while (std::getline(lines, line)) {
            const auto eq = line.find(" = ");
            echo[line.substr(0, eq)] = line.substr(eq + 3);
        }
        j["config"] = std::move(echo);
    }
    return j;
}

inline void write_summary_json(const std::filesystem::path& path, const Json& j) {
    atomic_write(path, j.dump(2) + "\n");
}

inline void write_histogram_csv(const std::filesystem::path& path, const TrialEnsemble& ensemble,
                                const SimulationConfig& cfg) {
    std::string out = "# config_fingerprint = " + fingerprint_hex(cfg.fingerprint()) + '\n';
    out += "# master_seed = " + std::to_string(ensemble.master_seed) + '\n';
    out += "m,count\n";
    for (const auto& [m, count] : exit_histogram(ensemble)) {
        out += std::to_string(m) + ',' + std::to_string(count) + '\n';
    }
    atomic_write(path, out);
}

inline void write_autocorrelation_csv(const std::filesystem::path& path,
                                      const std::vector<double>& corr, double timestep,
                                      const SimulationConfig& cfg) {
    std::string out = "# config_fingerprint = " + fingerprint_hex(cfg.fingerprint()) + '\n';
    out += "lag_seconds,corr\n";
    for (std::size_t k = 0; k < corr.size(); ++k) {
        out += detail::format_double(static_cast<double>(k) * timestep) + ',' +
               detail::format_double(corr[k]) + '\n';
    }
    atomic_write(path, out);
}

}  // namespace loopsim
