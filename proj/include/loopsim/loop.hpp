#pragma once

// Event-driven simulation of the loop apparatus: one-way mirror, detectors A
// and B, back mirror. One trial follows a single particle that has already
// entered the loop until it exits (or hits the loop cap).
//
// Convention used throughout: pass_prob_a / pass_prob_b are the probabilities
// of the measurement outcomes the particle needs in order to CONTINUE in the
// loop. With that convention the closed forms read
//
//   qm:    P(in the loop after the m-th reflection) = (1-p)^m pa^(m+1) pb^m
//   sdhv:  P(back at the mirror after m reflections) = (1-p)^m pa pb
//
// which reproduce the usual quoted values at the symmetric point
// pa = pb = 1/2. Note the two formulas track slightly different checkpoints
// (just past detector A vs. a completed circuit); the matching empirical
// counters are a_passages() and mirror_returns() below.

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "loopsim/errors.hpp"
#include "loopsim/hidden_variables.hpp"
#include "loopsim/quantum.hpp"
#include "loopsim/random.hpp"

namespace loopsim {

enum class PhysicsModel { qm, sdhv };

enum class ExitPoint { detector_a, detector_b, one_way_mirror, max_loops_reached };

enum class DetectorId { a, b };

inline const char* to_string(PhysicsModel m) { return m == PhysicsModel::qm ? "qm" : "sdhv"; }

inline const char* to_string(ExitPoint e) {
    switch (e) {
        case ExitPoint::detector_a: return "detector_A";
        case ExitPoint::detector_b: return "detector_B";
        case ExitPoint::one_way_mirror: return "one_way_mirror";
        case ExitPoint::max_loops_reached: return "max_loops_reached";
    }
    return "?";
}

// Positions of the elements along one circuit, as fractions of the loop
// traversal time (mirror at 0 and 1, back mirror at 3/4).
inline constexpr double kFractionDetectorA = 0.25;
inline constexpr double kFractionDetectorB = 0.50;

struct LoopGeometry {
    double mirror_transmission = 0.01;   // p, per mirror encounter
    double pass_prob_a = 0.5;            // continue probability at detector A
    double pass_prob_b = 0.5;            // continue probability at detector B
    bool derive_pass_probs = false;      // recompute pass probs from the observables
    double loop_length = 1e-3;           // meters
    double particle_speed = 299792458.0; // m/s
    double dislocation_per_loop = 0.0;   // meters, feeds the roughness channel

    void validate() const {
        if (!(mirror_transmission > 0.0) || !(mirror_transmission < 1.0)) {
            throw DomainError("mirror transmission must lie in (0,1)");
        }
        if (!derive_pass_probs) {
            if (!(pass_prob_a > 0.0) || !(pass_prob_a < 1.0)) {
                throw DomainError("pass_prob_a must lie in (0,1)");
            }
            if (!(pass_prob_b > 0.0) || !(pass_prob_b < 1.0)) {
                throw DomainError("pass_prob_b must lie in (0,1)");
            }
        }
        if (!(loop_length > 0.0) || !std::isfinite(loop_length)) {
            throw DomainError("loop length must be positive and finite");
        }
        if (!(particle_speed > 0.0) || !std::isfinite(particle_speed)) {
            throw DomainError("particle speed must be positive and finite");
        }
        if (!(dislocation_per_loop >= 0.0) || !std::isfinite(dislocation_per_loop)) {
            throw DomainError("dislocation per loop must be >= 0 and finite");
        }
    }
};

inline double loop_traversal_time(const LoopGeometry& geom) {
    geom.validate();
    return geom.loop_length / geom.particle_speed;
}

struct TrialRecord {
    std::uint64_t exit_loop_count = 0;  // completed circuits at exit
    ExitPoint exit_point = ExitPoint::detector_a;
    double exit_time = 0.0;             // seconds since entering the loop
    PhysicsModel model = PhysicsModel::qm;
    std::optional<std::vector<std::pair<DetectorId, bool>>> outcome_history;

    bool censored() const { return exit_point == ExitPoint::max_loops_reached; }
};

struct TrialEnsemble {
    std::vector<TrialRecord> records;
    std::uint64_t config_fingerprint = 0;
    std::uint64_t master_seed = 0;
};

// Closed-form survival "just past detector A after the m-th reflection":
// the particle has passed A m+1 times, B m times and been reflected m times.
inline double survival_probability_qm(std::uint64_t m, double p, double pass_a, double pass_b) {
    const double dm = static_cast<double>(m);
    return std::pow(1.0 - p, dm) * std::pow(pass_a, dm + 1.0) * std::pow(pass_b, dm);
}

// Closed-form survival "back at the one-way mirror after m reflections" in
// the frozen-hidden-variable regime: only the first circuit's detector
// outcomes are random, afterwards they repeat. Valid while trial durations
// stay well below tau.
inline double survival_probability_sdhv(std::uint64_t m, double p, double pass_a, double pass_b) {
    return std::pow(1.0 - p, static_cast<double>(m)) * pass_a * pass_b;
}

// How many times a recorded trial passed detector A.
inline std::uint64_t a_passages(const TrialRecord& r) {
    switch (r.exit_point) {
        case ExitPoint::detector_a: return r.exit_loop_count;
        case ExitPoint::detector_b: return r.exit_loop_count + 1;
        case ExitPoint::one_way_mirror: return r.exit_loop_count;
        case ExitPoint::max_loops_reached: return r.exit_loop_count;
    }
    return 0;
}

// How many times a recorded trial returned to the one-way mirror.
inline std::uint64_t mirror_returns(const TrialRecord& r) {
    switch (r.exit_point) {
        case ExitPoint::detector_a: return r.exit_loop_count;
        case ExitPoint::detector_b: return r.exit_loop_count;
        case ExitPoint::one_way_mirror: return r.exit_loop_count;
        case ExitPoint::max_loops_reached: return r.exit_loop_count;
    }
    return 0;
}

// Empirical counterparts of the two closed forms.
inline bool survived_qm_checkpoint(const TrialRecord& r, std::uint64_t m) {
    return a_passages(r) >= m + 1;
}

inline bool survived_sdhv_checkpoint(const TrialRecord& r, std::uint64_t m) {
    return mirror_returns(r) >= m + 1;
}

// All physics inputs of one trial, shared read-only across trials.
struct TrialContext {
    LoopGeometry geometry;
    PhysicsModel model = PhysicsModel::qm;
    SdhvParams sdhv_a;                  // per-detector correlation time
    SdhvParams sdhv_b;
    RoughnessSpec roughness;
    QubitState initial_state;
    EigenSystem eigen_a;
    EigenSystem eigen_b;
    std::uint64_t max_loops = 1'000'000;
    std::size_t n_hidden_components = 1;
    bool record_history = false;
};

namespace detail {

// Supplies the pass probability for the next encounter. Fixed mode returns
// the configured values; derived mode tracks the collapsing quantum state,
// where "pass" selects outcome index 0 (the larger eigenvalue).
class PassProbabilityChain {
   public:
    PassProbabilityChain(const TrialContext& ctx)
        : ctx_(ctx), state_(ctx.initial_state) {}

    double next(DetectorId det) const {
        if (!ctx_.geometry.derive_pass_probs) {
            return det == DetectorId::a ? ctx_.geometry.pass_prob_a : ctx_.geometry.pass_prob_b;
        }
        return born_probability(state_, eigen(det), 0);
    }

    void on_pass(DetectorId det) {
        if (ctx_.geometry.derive_pass_probs) {
            state_ = collapse(state_, eigen(det), 0);
        }
    }

   private:
    const EigenSystem& eigen(DetectorId det) const {
        return det == DetectorId::a ? ctx_.eigen_a : ctx_.eigen_b;
    }

    const TrialContext& ctx_;
    QubitState state_;
};

}  // namespace detail

// Simulate one particle through the loop. Per circuit the order of events is
// detector A, detector B, back mirror, one-way mirror; the particle is
// assumed to have already entered (entry through the one-way mirror is
// conditioned on). MaxLoopsExceeded is a recorded outcome, not a failure.
inline TrialRecord run_trial(const TrialContext& ctx, RandomStream& rng) {
    const double traversal = loop_traversal_time(ctx.geometry);
    const bool sdhv = ctx.model == PhysicsModel::sdhv;

    TrialRecord rec;
    rec.model = ctx.model;
    if (ctx.record_history) {
        rec.outcome_history.emplace();
    }

    detail::PassProbabilityChain chain(ctx);

    HiddenState hv_a, hv_b;
    double hv_a_time = 0.0, hv_b_time = 0.0;
    const double roughness_refresh =
        sdhv ? ctx.roughness.per_loop_refresh_probability() : 0.0;
    if (sdhv) {
        hv_a = HiddenState::draw(ctx.n_hidden_components, 0.0, rng);
        hv_b = HiddenState::draw(ctx.n_hidden_components, 0.0, rng);
    }

    const auto measure = [&](DetectorId det, double t) {
        const double pass_prob = chain.next(det);
        bool pass;
        if (sdhv) {
            HiddenState& hv = det == DetectorId::a ? hv_a : hv_b;
            double& hv_time = det == DetectorId::a ? hv_a_time : hv_b_time;
            const double tau = det == DetectorId::a ? ctx.sdhv_a.tau() : ctx.sdhv_b.tau();
            hv = evolve_hidden_state(std::move(hv), hv_time, t, tau, rng);
            hv_time = t;
            pass = deterministic_outcome(hv.effective_lambda(), pass_prob);
        } else {
            pass = rng.bernoulli(pass_prob);
        }
        if (rec.outcome_history) {
            rec.outcome_history->emplace_back(det, pass);
        }
        if (pass) {
            chain.on_pass(det);
        }
        return pass;
    };

    for (std::uint64_t k = 0; k < ctx.max_loops; ++k) {
        const double loop_start = static_cast<double>(k) * traversal;

        // Mirror roughness: imperfect reflection displaces the particle
        // relative to the environment, which acts as an extra hidden-variable
        // refresh at the start of every circuit after the first.
        if (sdhv && k > 0 && roughness_refresh > 0.0 && rng.bernoulli(roughness_refresh)) {
            hv_a.force_refresh(loop_start, rng);
            hv_b.force_refresh(loop_start, rng);
        }

        const double t_a = loop_start + kFractionDetectorA * traversal;
        if (!measure(DetectorId::a, t_a)) {
            rec.exit_loop_count = k;
            rec.exit_point = ExitPoint::detector_a;
            rec.exit_time = t_a;
            return rec;
        }

        const double t_b = loop_start + kFractionDetectorB * traversal;
        if (!measure(DetectorId::b, t_b)) {
            rec.exit_loop_count = k;
            rec.exit_point = ExitPoint::detector_b;
            rec.exit_time = t_b;
            return rec;
        }

        // Back mirror (no interaction), then the one-way mirror.
        if (rng.bernoulli(ctx.geometry.mirror_transmission)) {
            rec.exit_loop_count = k + 1;
            rec.exit_point = ExitPoint::one_way_mirror;
            rec.exit_time = static_cast<double>(k + 1) * traversal;
            return rec;
        }
    }

    rec.exit_loop_count = ctx.max_loops;
    rec.exit_point = ExitPoint::max_loops_reached;
    rec.exit_time = static_cast<double>(ctx.max_loops) * traversal;
    return rec;
}

}  // namespace loopsim
