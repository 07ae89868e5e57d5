#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "loopsim/campaign.hpp"
#include "loopsim/config.hpp"
#include "loopsim/loop.hpp"
#include "loopsim/stats.hpp"

using namespace loopsim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SimulationConfig base_config() {
    SimulationConfig cfg;
    cfg.geometry.mirror_transmission = 0.01;
    cfg.geometry.pass_prob_a = 0.5;
    cfg.geometry.pass_prob_b = 0.5;
    cfg.master_seed = 20240901;
    return cfg;
}

// Frozen regime: correlation time 1000x longer than the longest possible
// trial.
void freeze(SimulationConfig& cfg) {
    cfg.tilde_tau_override =
        loop_traversal_time(cfg.geometry) * static_cast<double>(cfg.max_loops);
    cfg.alpha = 1000.0;
}

double empirical_survival(const TrialEnsemble& ens, std::uint64_t m, bool sdhv_checkpoint) {
    std::uint64_t alive = 0;
    for (const auto& r : ens.records) {
        const bool ok = sdhv_checkpoint ? survived_sdhv_checkpoint(r, m)
                                        : survived_qm_checkpoint(r, m);
        if (ok) ++alive;
    }
    return static_cast<double>(alive) / static_cast<double>(ens.records.size());
}

void check_survival(const TrialEnsemble& ens, std::uint64_t max_m, bool sdhv, double p,
                    double pa, double pb) {
    const double n = static_cast<double>(ens.records.size());
    for (std::uint64_t m = 0; m <= max_m; ++m) {
        const double expected = sdhv ? survival_probability_sdhv(m, p, pa, pb)
                                     : survival_probability_qm(m, p, pa, pb);
        const double freq = empirical_survival(ens, m, sdhv);
        const double sigma = std::sqrt(expected * (1.0 - expected) / n);
        INFO("m=" << m << " expected=" << expected << " freq=" << freq);
        REQUIRE_THAT(freq, WithinAbs(expected, 3.0 * sigma + 1e-12));
    }
}

}  // namespace

TEST_CASE("loop_traversal_time", "[loop]") {
    LoopGeometry geom;
    geom.loop_length = 1e-3;
    geom.particle_speed = 3e8;
    const double t = loop_traversal_time(geom);
    REQUIRE_THAT(t, WithinRel(3.3333333333333333e-12, 1e-12));
    REQUIRE(t < 1e-11);   // mm-scale device is comfortably below 10 ps

    geom.loop_length = 100.0;
    geom.particle_speed = 299792458.0;
    REQUIRE_THAT(loop_traversal_time(geom), WithinRel(3.3356409519815205e-7, 1e-12));

    geom.loop_length = 0.0;
    REQUIRE_THROWS_AS(loop_traversal_time(geom), DomainError);
}

TEST_CASE("closed-form survival values", "[loop]") {
    REQUIRE_THAT(survival_probability_qm(0, 0.01, 0.5, 0.5), WithinAbs(0.5, 1e-15));
    REQUIRE_THAT(survival_probability_qm(1, 0.01, 0.5, 0.5), WithinAbs(0.12375, 1e-15));
    REQUIRE_THAT(survival_probability_qm(2, 0.01, 0.5, 0.5), WithinAbs(0.030628125, 1e-15));

    REQUIRE_THAT(survival_probability_sdhv(0, 0.01, 0.5, 0.5), WithinAbs(0.25, 1e-15));
    REQUIRE_THAT(survival_probability_sdhv(1, 0.01, 0.5, 0.5), WithinAbs(0.2475, 1e-15));
}

TEST_CASE("frozen-regime survival dominates the qm curve and grows with m", "[loop]") {
    // Delayed exit: the sdhv/qm survival ratio increases monotonically in m.
    double prev_ratio = 0.0;
    for (std::uint64_t m = 1; m <= 12; ++m) {
        const double ratio = survival_probability_sdhv(m, 0.01, 0.5, 0.5) /
                             survival_probability_qm(m, 0.01, 0.5, 0.5);
        REQUIRE(ratio >= 1.0);
        REQUIRE(ratio > prev_ratio);
        prev_ratio = ratio;
    }
}

TEST_CASE("checkpoint counters from recorded exits", "[loop]") {
    const auto record = [](std::uint64_t m, ExitPoint where) {
        TrialRecord r;
        r.exit_loop_count = m;
        r.exit_point = where;
        return r;
    };

    // Deflected at A during circuit 2: passed A twice, two mirror returns.
    const TrialRecord at_a = record(2, ExitPoint::detector_a);
    REQUIRE(a_passages(at_a) == 2);
    REQUIRE(mirror_returns(at_a) == 2);
    REQUIRE(survived_qm_checkpoint(at_a, 1));
    REQUIRE_FALSE(survived_qm_checkpoint(at_a, 2));
    REQUIRE(survived_sdhv_checkpoint(at_a, 1));
    REQUIRE_FALSE(survived_sdhv_checkpoint(at_a, 2));

    // Deflected at B during circuit 2: one extra A passage.
    const TrialRecord at_b = record(2, ExitPoint::detector_b);
    REQUIRE(a_passages(at_b) == 3);
    REQUIRE(mirror_returns(at_b) == 2);
    REQUIRE(survived_qm_checkpoint(at_b, 2));
    REQUIRE_FALSE(survived_sdhv_checkpoint(at_b, 2));

    // Escaped through the mirror at the end of circuit 2 (m records completed
    // circuits, so m = 3): three passages each way.
    const TrialRecord out = record(3, ExitPoint::one_way_mirror);
    REQUIRE(a_passages(out) == 3);
    REQUIRE(mirror_returns(out) == 3);
    REQUIRE(survived_qm_checkpoint(out, 2));
    REQUIRE(survived_sdhv_checkpoint(out, 2));
    REQUIRE_FALSE(survived_sdhv_checkpoint(out, 3));

    // Censored trials survived everything they ran through.
    const TrialRecord capped = record(5, ExitPoint::max_loops_reached);
    REQUIRE(survived_qm_checkpoint(capped, 4));
    REQUIRE(survived_sdhv_checkpoint(capped, 4));
}

TEST_CASE("qm Monte Carlo matches the closed form", "[loop][montecarlo]") {
    SimulationConfig cfg = base_config();
    const auto ens = run_campaign(cfg, PhysicsModel::qm, 200'000, cfg.master_seed);
    check_survival(ens, 8, false, 0.01, 0.5, 0.5);
}

TEST_CASE("qm Monte Carlo matches the closed form off the symmetric point",
          "[loop][montecarlo]") {
    SimulationConfig cfg = base_config();
    cfg.geometry.pass_prob_a = 0.3;
    cfg.geometry.pass_prob_b = 0.7;
    const auto ens = run_campaign(cfg, PhysicsModel::qm, 200'000, 555);
    check_survival(ens, 6, false, 0.01, 0.3, 0.7);
}

TEST_CASE("frozen sdhv Monte Carlo matches the closed form", "[loop][montecarlo]") {
    SimulationConfig cfg = base_config();
    freeze(cfg);
    const auto ens = run_campaign(cfg, PhysicsModel::sdhv, 200'000, cfg.master_seed);
    check_survival(ens, 8, true, 0.01, 0.5, 0.5);
}

TEST_CASE("frozen sdhv Monte Carlo, asymmetric pass probabilities", "[loop][montecarlo]") {
    SimulationConfig cfg = base_config();
    cfg.geometry.pass_prob_a = 0.3;
    cfg.geometry.pass_prob_b = 0.7;
    freeze(cfg);
    const auto ens = run_campaign(cfg, PhysicsModel::sdhv, 200'000, 556);
    check_survival(ens, 6, true, 0.01, 0.3, 0.7);
}

TEST_CASE("sdhv with alpha = 0 is statistically identical to qm", "[loop][montecarlo]") {
    SimulationConfig cfg = base_config();
    cfg.alpha = 0.0;
    for (std::uint64_t seed : {11ULL, 22ULL, 33ULL}) {
        const auto qm = run_campaign(cfg, PhysicsModel::qm, 50'000, seed);
        const auto sdhv = run_campaign(cfg, PhysicsModel::sdhv, 50'000, seed + 1000);
        const auto result = compare_distributions(qm, sdhv);
        INFO("seed=" << seed << " p=" << result.p_value);
        REQUIRE(result.p_value > 0.01);
    }
}

TEST_CASE("exit accounting and time consistency", "[loop]") {
    SimulationConfig cfg = base_config();
    freeze(cfg);
    const std::uint64_t n = 20'000;
    const auto ens = run_campaign(cfg, PhysicsModel::sdhv, n, 7);
    const double traversal = loop_traversal_time(cfg.geometry);

    std::uint64_t total = 0;
    for (const auto& [m, count] : exit_histogram(ens)) {
        (void)m;
        total += count;
    }
    REQUIRE(total == n);

    for (const auto& r : ens.records) {
        const double frac =
            r.exit_time / traversal - static_cast<double>(r.exit_loop_count);
        REQUIRE(frac >= -1e-9);
        REQUIRE(frac < 1.0);
        if (r.exit_point == ExitPoint::one_way_mirror) {
            REQUIRE(r.exit_loop_count >= 1);
        }
    }
}

TEST_CASE("max_loops censoring is recorded, not an error", "[loop]") {
    SimulationConfig cfg = base_config();
    freeze(cfg);
    cfg.max_loops = 3;
    const auto ens = run_campaign(cfg, PhysicsModel::sdhv, 5'000, 3);
    std::uint64_t censored = 0;
    for (const auto& r : ens.records) {
        if (r.censored()) {
            ++censored;
            REQUIRE(r.exit_loop_count == 3);
        }
    }
    // Roughly pa*pb*(1-p)^3 of all trials survive three loops.
    REQUIRE(censored > 1000);
    REQUIRE(censored < 1500);
}

TEST_CASE("campaigns are deterministic and thread-count independent", "[loop]") {
    SimulationConfig cfg = base_config();
    const auto a = run_campaign(cfg, PhysicsModel::qm, 5'000, 42, 1);
    const auto b = run_campaign(cfg, PhysicsModel::qm, 5'000, 42, 1);
    const auto c = run_campaign(cfg, PhysicsModel::qm, 5'000, 42, 4);
    const auto d = run_campaign(cfg, PhysicsModel::qm, 5'000, 42, 8);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        REQUIRE(a.records[i].exit_loop_count == b.records[i].exit_loop_count);
        REQUIRE(a.records[i].exit_point == b.records[i].exit_point);
        REQUIRE(a.records[i].exit_time == b.records[i].exit_time);
        REQUIRE(a.records[i].exit_loop_count == c.records[i].exit_loop_count);
        REQUIRE(a.records[i].exit_time == c.records[i].exit_time);
        REQUIRE(a.records[i].exit_loop_count == d.records[i].exit_loop_count);
        REQUIRE(a.records[i].exit_time == d.records[i].exit_time);
    }
}

TEST_CASE("different seeds differ record-wise but agree statistically", "[loop][montecarlo]") {
    SimulationConfig cfg = base_config();
    const auto a = run_campaign(cfg, PhysicsModel::qm, 50'000, 1);
    const auto b = run_campaign(cfg, PhysicsModel::qm, 50'000, 2);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.records.size() && !any_diff; ++i) {
        any_diff = a.records[i].exit_loop_count != b.records[i].exit_loop_count ||
                   a.records[i].exit_point != b.records[i].exit_point;
    }
    REQUIRE(any_diff);
    REQUIRE(compare_distributions(a, b).p_value > 0.001);
}

TEST_CASE("empty campaign", "[loop]") {
    SimulationConfig cfg = base_config();
    const auto ens = run_campaign(cfg, PhysicsModel::qm, 0, 42);
    REQUIRE(ens.records.empty());
}

TEST_CASE("mean exit loop count is non-decreasing in alpha", "[loop][montecarlo]") {
    SimulationConfig cfg = base_config();
    // tau_tilde ten traversal times, so the alpha grid spans sub-loop to
    // beyond-trial correlation times.
    cfg.tilde_tau_override = 10.0 * loop_traversal_time(cfg.geometry);
    double prev = -1.0;
    for (double alpha : {0.0, 0.1, 1.0, 10.0}) {
        cfg.alpha = alpha;
        const auto ens = run_campaign(cfg, PhysicsModel::sdhv, 100'000, 1234);
        const double mean = mean_exit_time(ens).mean_loops;
        INFO("alpha=" << alpha << " mean_loops=" << mean);
        REQUIRE(mean > prev - 0.02);   // statistical tolerance
        prev = mean;
    }
}

TEST_CASE("derived pass probabilities agree with the equivalent direct config",
          "[loop][montecarlo]") {
    // (1,1)/sqrt(2) against sigma_z/sigma_x: every encounter passes with 1/2,
    // exactly the direct default.
    SimulationConfig derived = base_config();
    derived.geometry.derive_pass_probs = true;
    const auto ens_derived = run_campaign(derived, PhysicsModel::qm, 50'000, 31);
    SimulationConfig direct = base_config();
    const auto ens_direct = run_campaign(direct, PhysicsModel::qm, 50'000, 32);
    REQUIRE(compare_distributions(ens_derived, ens_direct).p_value > 0.01);
}

TEST_CASE("roughness accelerates decorrelation in the frozen regime", "[loop][montecarlo]") {
    SimulationConfig cfg = base_config();
    freeze(cfg);
    const auto frozen = run_campaign(cfg, PhysicsModel::sdhv, 100'000, 9);
    // Dislocation of one environment scale per loop: strong per-loop refresh.
    cfg.geometry.dislocation_per_loop = 1e-10;
    cfg.roughness_base.environment_scale = 1e-10;
    const auto rough = run_campaign(cfg, PhysicsModel::sdhv, 100'000, 9);
    // Refreshing hidden variables each loop pushes the statistics back toward
    // qm: shorter mean dwell time than the perfectly frozen run.
    REQUIRE(mean_exit_time(rough).mean_loops < mean_exit_time(frozen).mean_loops);
    const auto qm = run_campaign(cfg, PhysicsModel::qm, 100'000, 10);
    REQUIRE(mean_exit_time(rough).mean_loops >
            0.9 * mean_exit_time(qm).mean_loops);
}

TEST_CASE("outcome history records the per-detector outcomes", "[loop]") {
    SimulationConfig cfg = base_config();
    cfg.record_history = true;
    const auto ens = run_campaign(cfg, PhysicsModel::qm, 100, 77);
    for (const auto& r : ens.records) {
        REQUIRE(r.outcome_history.has_value());
        REQUIRE(!r.outcome_history->empty());
        // The last recorded outcome is the failing one unless the particle
        // left through the mirror.
        const auto& [det, passed] = r.outcome_history->back();
        if (r.exit_point == ExitPoint::detector_a) {
            REQUIRE(det == DetectorId::a);
            REQUIRE_FALSE(passed);
        } else if (r.exit_point == ExitPoint::detector_b) {
            REQUIRE(det == DetectorId::b);
            REQUIRE_FALSE(passed);
        } else {
            REQUIRE(passed);
        }
    }
}
