#pragma once

// The super-deterministic side of the simulator: per-detector hidden
// variables, thermal noise timescale, Poisson refresh dynamics and the
// analytic correlation curves the Monte Carlo is checked against.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "loopsim/errors.hpp"
#include "loopsim/random.hpp"

namespace loopsim {

inline constexpr double kBoltzmannEvPerK = 8.617333262e-5;

// Exponent above which exp(dE/kT) * tau_r / N no longer fits in a double for
// any sane tau_r/N; reported as an error rather than silently saturating.
inline constexpr double kNoiseExponentLimit = 700.0;

// Physical parameters of one detector's environment.
struct DetectorSpec {
    double band_gap_ev = 1.0;
    double temperature_k = 300.0;
    double atom_count = 1e15;
    double recombination_time_s = 1e-9;

    void validate() const {
        if (!(band_gap_ev > 0.0) || !std::isfinite(band_gap_ev)) {
            throw DomainError("detector band gap must be positive and finite");
        }
        if (!(temperature_k > 0.0) || !std::isfinite(temperature_k)) {
            throw DomainError("detector temperature must be positive and finite");
        }
        if (!(atom_count > 0.0) || !std::isfinite(atom_count)) {
            throw DomainError("detector atom count must be positive and finite");
        }
        if (!(recombination_time_s > 0.0) || !std::isfinite(recombination_time_s)) {
            throw DomainError("detector recombination time must be positive and finite");
        }
    }
};

// Expected time for the detector's N-atom environment to undergo one thermal
// change: exp(dE / (k_B T)) * tau_r / N.
inline double noise_timescale(const DetectorSpec& spec) {
    spec.validate();
    const double exponent = spec.band_gap_ev / (kBoltzmannEvPerK * spec.temperature_k);
    if (!(exponent <= kNoiseExponentLimit)) {
        throw OverflowError("noise timescale exponent " + std::to_string(exponent) +
                            " exceeds " + std::to_string(kNoiseExponentLimit));
    }
    return std::exp(exponent) * spec.recombination_time_s / spec.atom_count;
}

// tau = alpha * tau_tilde. alpha = 0 is the plain-quantum-mechanics limit;
// alpha = +inf is the never-refresh sentinel.
inline double correlation_time(double alpha, double tilde_tau) {
    if (std::isnan(alpha) || alpha < 0.0) {
        throw NegativeAlphaError("alpha must be >= 0");
    }
    if (tilde_tau < 0.0) {
        throw DomainError("tilde_tau must be >= 0");
    }
    if (alpha == 0.0) {
        return 0.0;
    }
    return alpha * tilde_tau;
}

struct SdhvParams {
    double alpha = 0.0;
    double tilde_tau = 0.0;

    double tau() const { return correlation_time(alpha, tilde_tau); }
};

// Mirror-roughness contribution: dislocation per loop against the scale on
// which the environment's degrees of freedom live.
struct RoughnessSpec {
    double dislocation_per_loop = 0.0;   // meters, >= 0
    double environment_scale = 1e-10;    // meters, > 0

    void validate() const {
        if (!(dislocation_per_loop >= 0.0) || !std::isfinite(dislocation_per_loop)) {
            throw DomainError("dislocation per loop must be >= 0 and finite");
        }
        if (!(environment_scale > 0.0) || !std::isfinite(environment_scale)) {
            throw DomainError("environment scale must be positive and finite");
        }
    }

    // Per-loop probability that the particle's return offset effectively
    // refreshes the hidden variables: 1 - exp(-dz/z_N).
    double per_loop_refresh_probability() const {
        validate();
        return -std::expm1(-dislocation_per_loop / environment_scale);
    }
};

enum class RoughnessMode {
    literal,   // sum of the two decay channels, clamped to [0,1]
    product,   // product of the two decay channels
};

// exp(-kappa/tau), with the limits pinned: 1 at kappa = 0 (even for tau = 0)
// and 0 for tau = 0, kappa > 0.
inline double analytic_autocorrelation(double kappa, double tau) {
    if (!(kappa >= 0.0)) {
        throw DomainError("kappa must be >= 0");
    }
    if (tau < 0.0) {
        throw DomainError("tau must be >= 0");
    }
    if (kappa == 0.0) {
        return 1.0;
    }
    if (tau == 0.0) {
        return 0.0;
    }
    return std::exp(-kappa / tau);
}

// Autocorrelation including the roughness channel. literal mode evaluates
// exp(-kappa/(alpha*tau_tilde)) + exp(-m*dz/z_N) and clamps to [0,1];
// product mode multiplies the two factors instead.
inline double roughness_correlation(double kappa, std::uint64_t m, const SdhvParams& params,
                                    const RoughnessSpec& rough,
                                    RoughnessMode mode = RoughnessMode::literal) {
    rough.validate();
    const double decay = analytic_autocorrelation(kappa, params.tau());
    const double surface =
        std::exp(-static_cast<double>(m) * rough.dislocation_per_loop / rough.environment_scale);
    if (mode == RoughnessMode::product) {
        return decay * surface;
    }
    const double sum = decay + surface;
    return sum > 1.0 ? 1.0 : (sum < 0.0 ? 0.0 : sum);
}

// The minimal deterministic outcome rule: pass iff lambda < pass_probability.
// Uniform lambda reproduces Born statistics; frozen lambda repeats outcomes.
inline bool deterministic_outcome(double lambda_value, double pass_probability) {
    if (!(lambda_value >= 0.0) || !(lambda_value < 1.0)) {
        throw DomainError("lambda must lie in [0,1)");
    }
    if (!(pass_probability >= 0.0) || !(pass_probability <= 1.0)) {
        throw DomainError("pass probability must lie in [0,1]");
    }
    return lambda_value < pass_probability;
}

// Hidden variables of one detector. The outcome rule reads the leading
// component; additional components are carried so their refresh statistics
// can be inspected, but the physical atom count enters only through
// tau_tilde.
struct HiddenState {
    std::vector<double> components;
    std::vector<double> last_refresh;

    static HiddenState draw(std::size_t n_components, double t, RandomStream& rng) {
        HiddenState hv;
        hv.components.resize(n_components);
        hv.last_refresh.assign(n_components, t);
        for (auto& c : hv.components) {
            c = rng.uniform();
        }
        return hv;
    }

    double effective_lambda() const { return components.front(); }

    void force_refresh(double t, RandomStream& rng) {
        for (std::size_t i = 0; i < components.size(); ++i) {
            components[i] = rng.uniform();
            last_refresh[i] = t;
        }
    }
};

// Poisson refresh over [from_t, to_t]: each component independently gets a
// fresh uniform draw with probability 1 - exp(-dt/tau). Evaluated lazily at
// measurement times; statistically equivalent to simulating the individual
// refresh events.
inline HiddenState evolve_hidden_state(HiddenState hv, double from_t, double to_t, double tau,
                                       RandomStream& rng) {
    if (to_t < from_t) {
        throw DomainError("evolve_hidden_state: negative time interval");
    }
    if (tau < 0.0) {
        throw DomainError("evolve_hidden_state: tau must be >= 0");
    }
    const double dt = to_t - from_t;
    double refresh_prob;
    if (tau == 0.0) {
        refresh_prob = 1.0;
    } else if (std::isinf(tau)) {
        refresh_prob = 0.0;
    } else {
        refresh_prob = -std::expm1(-dt / tau);
    }
    if (refresh_prob > 0.0) {
        for (std::size_t i = 0; i < hv.components.size(); ++i) {
            if (rng.bernoulli(refresh_prob)) {
                hv.components[i] = rng.uniform();
                hv.last_refresh[i] = to_t;
            }
        }
    }
    return hv;
}

// Repeatedly measure a frozen prepared state at a fixed cadence and return the
// +-1 outcome sequence. This is the time series whose autocorrelation decays
// as exp(-kappa/tau); it backs the decay-time recovery tests and the sweep
// diagnostics.
inline std::vector<double> repeated_measurement_outcomes(double pass_probability, double timestep,
                                                         double tau, std::size_t n_samples,
                                                         std::size_t n_components,
                                                         RandomStream& rng) {
    if (!(pass_probability >= 0.0) || !(pass_probability <= 1.0)) {
        throw DomainError("pass probability must lie in [0,1]");
    }
    if (!(timestep > 0.0)) {
        throw DomainError("timestep must be positive");
    }
    std::vector<double> outcomes;
    outcomes.reserve(n_samples);
    HiddenState hv = HiddenState::draw(n_components, 0.0, rng);
    double t = 0.0;
    for (std::size_t k = 0; k < n_samples; ++k) {
        if (k > 0) {
            hv = evolve_hidden_state(std::move(hv), t, t + timestep, tau, rng);
            t += timestep;
        }
        outcomes.push_back(deterministic_outcome(hv.effective_lambda(), pass_probability) ? 1.0
                                                                                          : -1.0);
    }
    return outcomes;
}

}  // namespace loopsim
