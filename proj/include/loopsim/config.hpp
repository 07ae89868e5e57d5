#pragma once

// Simulation configuration: a flat, sectioned key = value document with
// strict unknown-key rejection, full validation, and a physics fingerprint
// that stamps every output file. The exact key list is documented in the
// README and enforced here.

#include <algorithm>
#include <array>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "loopsim/errors.hpp"
#include "loopsim/hidden_variables.hpp"
#include "loopsim/loop.hpp"
#include "loopsim/quantum.hpp"

namespace loopsim {

enum class ModelChoice { qm, sdhv, both };

inline const char* to_string(ModelChoice m) {
    switch (m) {
        case ModelChoice::qm: return "qm";
        case ModelChoice::sdhv: return "sdhv";
        case ModelChoice::both: return "both";
    }
    return "?";
}

inline const char* to_string(RoughnessMode m) {
    return m == RoughnessMode::literal ? "literal" : "product";
}

namespace detail {

// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

inline double parse_double_or_throw(std::string_view text, const std::string& context) {
    std::string s(text);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty() || errno == ERANGE) {
        throw ConfigError(context + ": cannot parse number from '" + s + "'");
    }
    return v;
}

inline std::uint64_t parse_u64_or_throw(std::string_view text, const std::string& context) {
    // Accepts plain integers and scientific notation like 1e6.
    const double v = parse_double_or_throw(text, context);
    if (!(v >= 0.0) || v != std::floor(v) || v > 9.007199254740992e15) {
        throw ConfigError(context + ": expected a non-negative integer, got '" +
                          std::string(text) + "'");
    }
    return static_cast<std::uint64_t>(v);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

// Parses a "re,im" pair.
inline Complex parse_complex_pair(std::string_view s, const std::string& context) {
    const auto comma = s.find(',');
    if (comma == std::string_view::npos) {
        throw ConfigError(context + ": expected 're,im', got '" + std::string(s) + "'");
    }
    return Complex{parse_double_or_throw(trim(s.substr(0, comma)), context),
                   parse_double_or_throw(trim(s.substr(comma + 1)), context)};
}

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// An observable given either as an explicit 2x2 complex matrix (row-major
// "re,im" pairs) or as a Bloch direction triple meaning n.sigma.
struct ObservableSpec {
    std::optional<std::array<double, 3>> bloch;
    std::optional<std::array<Complex, 4>> matrix;

    Observable build() const {
        if (matrix) {
            return Observable::from_matrix(*matrix);
        }
        if (bloch) {
            return Observable::bloch((*bloch)[0], (*bloch)[1], (*bloch)[2]);
        }
        throw ConfigError("observable spec has neither 'bloch' nor 'matrix'");
    }

    std::string canonical() const {
        std::string out;
        if (matrix) {
            out = "matrix";
            for (const auto& c : *matrix) {
                out += ' ' + detail::format_double(c.real()) + ',' +
                       detail::format_double(c.imag());
            }
        } else if (bloch) {
            out = "bloch";
            for (double v : *bloch) {
                out += ' ' + detail::format_double(v);
            }
        }
        return out;
    }
};

struct StateSpec {
    std::array<Complex, 2> amplitudes{Complex{1.0 / std::numbers::sqrt2, 0.0},
                                      Complex{1.0 / std::numbers::sqrt2, 0.0}};

    QubitState build() const { return QubitState::normalized(amplitudes[0], amplitudes[1]); }

    std::string canonical() const {
        std::string out;
        for (const auto& c : amplitudes) {
            if (!out.empty()) out += ' ';
            out += detail::format_double(c.real()) + ',' + detail::format_double(c.imag());
        }
        return out;
    }
};

struct OutputSpec {
    std::string directory;   // empty: LOOPSIM_OUT_DIR env var, else "."
    bool csv = true;
    bool json = true;

    std::string resolved_directory() const {
        if (!directory.empty()) return directory;
        if (const char* env = std::getenv("LOOPSIM_OUT_DIR"); env && *env) return env;
        return ".";
    }
};

struct SimulationConfig {
    ModelChoice model = ModelChoice::qm;
    LoopGeometry geometry;
    std::array<DetectorSpec, 2> detectors{};
    ObservableSpec observable_a{std::array<double, 3>{0, 0, 1}, std::nullopt};   // sigma_z
    ObservableSpec observable_b{std::array<double, 3>{1, 0, 0}, std::nullopt};   // sigma_x
    StateSpec initial_state;
    double alpha = 1.0;
    std::optional<double> tilde_tau_override;   // seconds; both detectors when set
    std::size_t hidden_components = 1;
    RoughnessSpec roughness_base;   // environment scale; dislocation lives in geometry
    RoughnessMode roughness_mode = RoughnessMode::literal;
    std::uint64_t trials = 10000;
    std::uint64_t master_seed = 0;
    std::uint64_t max_loops = 1'000'000;
    double commutator_threshold = kDefaultCommutatorThreshold;
    bool record_history = false;
    OutputSpec output;

    double tilde_tau(DetectorId det) const {
        if (tilde_tau_override) {
            return *tilde_tau_override;
        }
        return noise_timescale(detectors[det == DetectorId::a ? 0 : 1]);
    }

    SdhvParams sdhv_params(DetectorId det) const { return SdhvParams{alpha, tilde_tau(det)}; }

    // The fastest-drifting detector environment dominates the decay, so the
    // experiment-level correlation time is the minimum over detectors.
    double effective_tau() const {
        return std::min(sdhv_params(DetectorId::a).tau(), sdhv_params(DetectorId::b).tau());
    }

    RoughnessSpec roughness() const {
        RoughnessSpec r = roughness_base;
        r.dislocation_per_loop = geometry.dislocation_per_loop;
        return r;
    }

    // Validates every invariant; throws ConfigError naming the failed one.
    // Returns non-fatal warnings (e.g. degenerate observables).
    std::vector<std::string> validate() const;

    // Canonical physics text: every physics-relevant field in a fixed order,
    // doubles in shortest round-trip form. Output paths, thread counts and
    // the seed are deliberately excluded; the seed is echoed separately.
    std::string canonical_physics_text() const;

    std::uint64_t fingerprint() const { return detail::fnv1a64(canonical_physics_text()); }
};

inline std::vector<std::string> SimulationConfig::validate() const {
    std::vector<std::string> warnings;
    try {
        geometry.validate();
        detectors[0].validate();
        detectors[1].validate();
        roughness().validate();
        // Detector exponents must be representable even when tilde_tau is
        // overridden; the detector's own parameters have to make sense.
        noise_timescale(detectors[0]);
        noise_timescale(detectors[1]);
        if (std::isnan(alpha) || alpha < 0.0) {
            throw NegativeAlphaError("sdhv.alpha must be >= 0");
        }
        if (tilde_tau_override && !(*tilde_tau_override > 0.0)) {
            throw DomainError("sdhv.tilde_tau_s override must be > 0");
        }
        if (hidden_components < 1) {
            throw DomainError("sdhv.hidden_components must be >= 1");
        }
        if (max_loops < 1) {
            throw DomainError("max_loops must be >= 1");
        }
        if (std::isnan(commutator_threshold)) {
            throw DomainError("commutator_threshold must be a number");
        }

        // A negative threshold disables the non-commutation gate (the only
        // way to run with a degenerate observable, which commutes with
        // everything and otherwise could never pass it).
        const Observable obs_a = observable_a.build();
        const Observable obs_b = observable_b.build();
        const double comm = commutator_norm(obs_a, obs_b);
        if (!(comm > commutator_threshold)) {
            throw ConfigError("observables commute: commutator norm " +
                              detail::format_double(comm) + " is not above threshold " +
                              detail::format_double(commutator_threshold));
        }
        const EigenSystem eig_a = eigendecompose(obs_a);
        const EigenSystem eig_b = eigendecompose(obs_b);
        if (eig_a.degenerate || eig_b.degenerate) {
            warnings.push_back(
                "degenerate observable: both outcomes share one eigenvalue, the "
                "non-commuting loop experiment loses its meaning");
        }

        const QubitState state = initial_state.build();
        if (geometry.derive_pass_probs) {
            // The derived chain visits only two distinct probabilities: the
            // first encounter with A and the A<->B alternation afterwards.
            const double first = born_probability(state, eig_a, 0);
            const double alternating = born_probability(eig_a.eigenvectors[0], eig_b, 0);
            for (double q : {first, alternating}) {
                if (!(q > 0.0) || !(q < 1.0)) {
                    throw ConfigError(
                        "derived pass probability " + detail::format_double(q) +
                        ": probability out of range (0,1); choose a different initial "
                        "state or observables");
                }
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return warnings;
}

inline std::string SimulationConfig::canonical_physics_text() const {
    using detail::format_double;
    std::string t;
    const auto add = [&](const std::string& key, const std::string& value) {
        t += key + " = " + value + '\n';
    };
    add("model", to_string(model));
    add("trials", std::to_string(trials));
    add("max_loops", std::to_string(max_loops));
    add("commutator_threshold", format_double(commutator_threshold));
    add("geometry.mirror_transmission", format_double(geometry.mirror_transmission));
    add("geometry.pass_prob_a",
        geometry.derive_pass_probs ? "derived" : format_double(geometry.pass_prob_a));
    add("geometry.pass_prob_b",
        geometry.derive_pass_probs ? "derived" : format_double(geometry.pass_prob_b));
    add("geometry.loop_length_m", format_double(geometry.loop_length));
    add("geometry.particle_speed_mps", format_double(geometry.particle_speed));
    add("geometry.dislocation_per_loop_m", format_double(geometry.dislocation_per_loop));
    for (int i = 0; i < 2; ++i) {
        const std::string prefix = i == 0 ? "detector_a." : "detector_b.";
        add(prefix + "band_gap_ev", format_double(detectors[i].band_gap_ev));
        add(prefix + "temperature_k", format_double(detectors[i].temperature_k));
        add(prefix + "atom_count", format_double(detectors[i].atom_count));
        add(prefix + "recombination_time_s", format_double(detectors[i].recombination_time_s));
    }
    add("observable_a", observable_a.canonical());
    add("observable_b", observable_b.canonical());
    add("initial_state.amplitudes", initial_state.canonical());
    add("sdhv.alpha", format_double(alpha));
    add("sdhv.tilde_tau_s",
        tilde_tau_override ? format_double(*tilde_tau_override) : std::string("auto"));
    add("sdhv.hidden_components", std::to_string(hidden_components));
    add("roughness.environment_scale_m", format_double(roughness_base.environment_scale));
    add("roughness.mode", to_string(roughness_mode));
    return t;
}

namespace detail {

struct ConfigParser {
    SimulationConfig cfg;
    std::map<std::string, int> seen;   // full key -> first line

    void fail(int line, const std::string& msg) {
        throw ConfigError("config line " + std::to_string(line) + ": " + msg);
    }

    void assign(const std::string& section, const std::string& key, std::string_view value,
                int line) {
        const std::string full = section.empty() ? key : section + '.' + key;
        if (auto [it, inserted] = seen.emplace(full, line); !inserted) {
            fail(line, "duplicate key '" + full + "' (first set on line " +
                           std::to_string(it->second) + ")");
        }
        const std::string ctx = "key '" + full + "'";
        const auto num = [&] { return parse_double_or_throw(value, ctx); };
        const auto u64 = [&] { return parse_u64_or_throw(value, ctx); };

        if (full == "model") {
            if (value == "qm") cfg.model = ModelChoice::qm;
            else if (value == "sdhv") cfg.model = ModelChoice::sdhv;
            else if (value == "both") cfg.model = ModelChoice::both;
            else fail(line, "model must be qm, sdhv or both");
        } else if (full == "trials") {
            cfg.trials = u64();
        } else if (full == "master_seed") {
            cfg.master_seed = u64();
        } else if (full == "max_loops") {
            cfg.max_loops = u64();
        } else if (full == "commutator_threshold") {
            cfg.commutator_threshold = num();
        } else if (full == "record_history") {
            if (value == "true") cfg.record_history = true;
            else if (value == "false") cfg.record_history = false;
            else fail(line, "record_history must be true or false");
        } else if (full == "geometry.mirror_transmission") {
            cfg.geometry.mirror_transmission = num();
        } else if (full == "geometry.pass_prob_a" || full == "geometry.pass_prob_b") {
            double& slot = full.back() == 'a' ? cfg.geometry.pass_prob_a
                                              : cfg.geometry.pass_prob_b;
            if (value == "derived") {
                cfg.geometry.derive_pass_probs = true;
                derived_flags += full.back();
            } else {
                slot = num();
                direct_flags += full.back();
            }
        } else if (full == "geometry.loop_length_m") {
            cfg.geometry.loop_length = num();
        } else if (full == "geometry.particle_speed_mps") {
            cfg.geometry.particle_speed = num();
        } else if (full == "geometry.dislocation_per_loop_m") {
            cfg.geometry.dislocation_per_loop = num();
        } else if (full.starts_with("detector_a.") || full.starts_with("detector_b.")) {
            DetectorSpec& det = cfg.detectors[full[9] == 'a' ? 0 : 1];
            const std::string field = full.substr(11);
            if (field == "band_gap_ev") det.band_gap_ev = num();
            else if (field == "temperature_k") det.temperature_k = num();
            else if (field == "atom_count") det.atom_count = num();
            else if (field == "recombination_time_s") det.recombination_time_s = num();
            else fail(line, "unknown key '" + full + "'");
        } else if (full == "observable_a.bloch" || full == "observable_b.bloch") {
            ObservableSpec& spec = full[11] == 'a' ? cfg.observable_a : cfg.observable_b;
            const auto parts = split_on_commas(value, line, 3);
            spec = ObservableSpec{};
            spec.bloch = {parse_double_or_throw(parts[0], ctx),
                          parse_double_or_throw(parts[1], ctx),
                          parse_double_or_throw(parts[2], ctx)};
        } else if (full == "observable_a.matrix" || full == "observable_b.matrix") {
            ObservableSpec& spec = full[11] == 'a' ? cfg.observable_a : cfg.observable_b;
            const auto pairs = split_whitespace(value);
            if (pairs.size() != 4) {
                fail(line, "matrix needs 4 're,im' pairs (row-major), got " +
                               std::to_string(pairs.size()));
            }
            spec = ObservableSpec{};
            spec.matrix = {parse_complex_pair(pairs[0], ctx), parse_complex_pair(pairs[1], ctx),
                           parse_complex_pair(pairs[2], ctx), parse_complex_pair(pairs[3], ctx)};
        } else if (full == "initial_state.amplitudes") {
            const auto pairs = split_whitespace(value);
            if (pairs.size() != 2) {
                fail(line, "amplitudes needs 2 're,im' pairs, got " +
                               std::to_string(pairs.size()));
            }
            cfg.initial_state.amplitudes = {parse_complex_pair(pairs[0], ctx),
                                            parse_complex_pair(pairs[1], ctx)};
        } else if (full == "sdhv.alpha") {
            cfg.alpha = num();
        } else if (full == "sdhv.tilde_tau_s") {
            cfg.tilde_tau_override = num();
        } else if (full == "sdhv.hidden_components") {
            cfg.hidden_components = static_cast<std::size_t>(u64());
        } else if (full == "roughness.environment_scale_m") {
            cfg.roughness_base.environment_scale = num();
        } else if (full == "roughness.mode") {
            if (value == "literal") cfg.roughness_mode = RoughnessMode::literal;
            else if (value == "product") cfg.roughness_mode = RoughnessMode::product;
            else fail(line, "roughness.mode must be literal or product");
        } else if (full == "output.directory") {
            cfg.output.directory = std::string(value);
        } else if (full == "output.formats") {
            cfg.output.csv = cfg.output.json = false;
            std::string v(value);
            std::size_t pos = 0;
            while (pos != std::string::npos) {
                const auto comma = v.find(',', pos);
                const std::string fmt(trim(v.substr(pos, comma - pos)));
                if (fmt == "csv") cfg.output.csv = true;
                else if (fmt == "json") cfg.output.json = true;
                else fail(line, "output format must be csv or json, got '" + fmt + "'");
                pos = comma == std::string::npos ? comma : comma + 1;
            }
        } else {
            fail(line, "unknown key '" + full + "'");
        }
    }

    std::vector<std::string> split_on_commas(std::string_view value, int line,
                                             std::size_t expected) {
        std::vector<std::string> out;
        std::size_t pos = 0;
        const std::string v(value);
        while (pos != std::string::npos) {
            const auto comma = v.find(',', pos);
            out.emplace_back(trim(v.substr(pos, comma - pos)));
            pos = comma == std::string::npos ? comma : comma + 1;
        }
        if (out.size() != expected) {
            fail(line, "expected " + std::to_string(expected) + " comma-separated values");
        }
        return out;
    }

    void finish(int /*lines*/) {
        if (!derived_flags.empty() && !direct_flags.empty()) {
            throw ConfigError(
                "pass_prob_a and pass_prob_b must both be numeric or both 'derived'");
        }
    }

    std::string derived_flags;
    std::string direct_flags;
};

}  // namespace detail

// Parses a config document. Defaults are pre-filled so a minimal document
// (e.g. just model/trials/master_seed) is valid; unknown keys are hard errors.
inline SimulationConfig parse_config(std::string_view text) {
    detail::ConfigParser parser;
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = detail::trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                parser.fail(line_no, "malformed section header '" + std::string(line) + "'");
            }
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            parser.fail(line_no, "expected 'key = value', got '" + std::string(line) + "'");
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string_view value = detail::trim(line.substr(eq + 1));
        if (key.empty()) {
            parser.fail(line_no, "empty key");
        }
        parser.assign(section, key, value, line_no);
    }
    parser.finish(line_no);
    return parser.cfg;
}

inline SimulationConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------

struct SweepSpec {
    std::string parameter_path;       // e.g. sdhv.alpha, detectors.0.atom_count
    std::vector<double> values;
    std::uint64_t trials_per_point = 0;   // 0: use config trials
};

inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0) || !(hi > lo) || n < 2) {
        throw DomainError("log_spaced requires 0 < lo < hi and n >= 2");
    }
    std::vector<double> out(n);
    const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(std::log(lo) + step * static_cast<double>(i));
    }
    out.front() = lo;
    out.back() = hi;
    return out;
}

namespace detail {

inline const std::map<std::string, std::function<void(SimulationConfig&, double)>>&
sweep_parameter_registry() {
    static const std::map<std::string, std::function<void(SimulationConfig&, double)>> registry =
        [] {
            std::map<std::string, std::function<void(SimulationConfig&, double)>> r;
            r["sdhv.alpha"] = [](SimulationConfig& c, double v) { c.alpha = v; };
            r["sdhv.tilde_tau_s"] = [](SimulationConfig& c, double v) {
                c.tilde_tau_override = v;
            };
            r["geometry.mirror_transmission"] = [](SimulationConfig& c, double v) {
                c.geometry.mirror_transmission = v;
            };
            r["geometry.pass_prob_a"] = [](SimulationConfig& c, double v) {
                c.geometry.pass_prob_a = v;
            };
            r["geometry.pass_prob_b"] = [](SimulationConfig& c, double v) {
                c.geometry.pass_prob_b = v;
            };
            r["geometry.loop_length_m"] = [](SimulationConfig& c, double v) {
                c.geometry.loop_length = v;
            };
            r["geometry.particle_speed_mps"] = [](SimulationConfig& c, double v) {
                c.geometry.particle_speed = v;
            };
            r["geometry.dislocation_per_loop_m"] = [](SimulationConfig& c, double v) {
                c.geometry.dislocation_per_loop = v;
            };
            r["roughness.environment_scale_m"] = [](SimulationConfig& c, double v) {
                c.roughness_base.environment_scale = v;
            };
            r["max_loops"] = [](SimulationConfig& c, double v) {
                c.max_loops = static_cast<std::uint64_t>(v);
            };
            for (int i = 0; i < 2; ++i) {
                const std::string p = "detectors." + std::to_string(i) + '.';
                r[p + "band_gap_ev"] = [i](SimulationConfig& c, double v) {
                    c.detectors[i].band_gap_ev = v;
                };
                r[p + "temperature_k"] = [i](SimulationConfig& c, double v) {
                    c.detectors[i].temperature_k = v;
                };
                r[p + "atom_count"] = [i](SimulationConfig& c, double v) {
                    c.detectors[i].atom_count = v;
                };
                r[p + "recombination_time_s"] = [i](SimulationConfig& c, double v) {
                    c.detectors[i].recombination_time_s = v;
                };
            }
            return r;
        }();
    return registry;
}

}  // namespace detail

inline std::vector<std::string> sweepable_parameters() {
    std::vector<std::string> out;
    for (const auto& [k, _] : detail::sweep_parameter_registry()) out.push_back(k);
    return out;
}

// Applies one sweep value; throws ConfigError if the path does not resolve.
inline void apply_sweep_value(SimulationConfig& cfg, const std::string& parameter_path,
                              double value) {
    const auto& registry = detail::sweep_parameter_registry();
    const auto it = registry.find(parameter_path);
    if (it == registry.end()) {
        std::string known;
        for (const auto& [k, _] : registry) {
            known += known.empty() ? k : ", " + k;
        }
        throw ConfigError("sweep parameter '" + parameter_path +
                          "' does not resolve; known parameters: " + known);
    }
    it->second(cfg, value);
}

}  // namespace loopsim
