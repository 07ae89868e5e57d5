#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "loopsim/hidden_variables.hpp"
#include "loopsim/random.hpp"

using namespace loopsim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("noise_timescale reproduces the worked detector examples", "[hidden_variables]") {
    // 0.5 eV, 300 K, 1 ns, 1e20 atoms: about 2.5e-21 s (order 1e-20 s).
    const double t1 = noise_timescale({0.5, 300.0, 1e20, 1e-9});
    REQUIRE_THAT(t1, WithinRel(2.5097491107976857e-21, 1e-9));
    REQUIRE(t1 >= 1e-21);
    REQUIRE(t1 <= 1e-20);

    // 1 eV, 300 K, 1 ns, 1e15 atoms: about 6.3e-8 s (quoted as ~1e-6 s).
    const double t2 = noise_timescale({1.0, 300.0, 1e15, 1e-9});
    REQUIRE_THAT(t2, WithinRel(6.298840599149774e-8, 1e-9));
    REQUIRE(t2 >= 1e-8);
    REQUIRE(t2 <= 1e-6);
}

TEST_CASE("noise_timescale limits and errors", "[hidden_variables]") {
    // dE -> 0 collapses to tau_r / N.
    const double t = noise_timescale({1e-12, 300.0, 1e10, 2e-9});
    REQUIRE_THAT(t, WithinRel(2e-19, 1e-6));

    // Exponent beyond double range is an error, not a silent saturation.
    REQUIRE_THROWS_AS(noise_timescale({1.0, 0.01, 1e15, 1e-9}), OverflowError);
    REQUIRE_THROWS_AS(noise_timescale({-1.0, 300.0, 1e15, 1e-9}), DomainError);
    REQUIRE_THROWS_AS(noise_timescale({1.0, 300.0, 0.0, 1e-9}), DomainError);
}

TEST_CASE("noise_timescale monotonicity", "[hidden_variables]") {
    const DetectorSpec base{1.0, 300.0, 1e15, 1e-9};
    const double t0 = noise_timescale(base);
    REQUIRE(noise_timescale({1.1, 300.0, 1e15, 1e-9}) > t0);       // increasing in dE
    REQUIRE(noise_timescale({1.0, 330.0, 1e15, 1e-9}) < t0);       // decreasing in T
    REQUIRE(noise_timescale({1.0, 300.0, 2e15, 1e-9}) < t0);       // decreasing in N
    REQUIRE_THAT(noise_timescale({1.0, 300.0, 1e15, 2e-9}),        // linear in tau_r
                 WithinRel(2.0 * t0, 1e-12));
}

TEST_CASE("correlation_time", "[hidden_variables]") {
    REQUIRE(correlation_time(0.0, 123.0) == 0.0);
    REQUIRE_THAT(correlation_time(1.0, 6.3e-8), WithinRel(6.3e-8, 1e-15));
    REQUIRE_THAT(correlation_time(2.5, 1e-6), WithinRel(2.5e-6, 1e-15));
    REQUIRE(std::isinf(correlation_time(std::numeric_limits<double>::infinity(), 1.0)));
    REQUIRE_THROWS_AS(correlation_time(-0.1, 1.0), NegativeAlphaError);
}

TEST_CASE("analytic_autocorrelation limits", "[hidden_variables]") {
    REQUIRE(analytic_autocorrelation(0.0, 5.0) == 1.0);
    REQUIRE(analytic_autocorrelation(0.0, 0.0) == 1.0);
    REQUIRE(analytic_autocorrelation(1e-9, 0.0) == 0.0);
    REQUIRE_THAT(analytic_autocorrelation(5.0, 5.0), WithinAbs(0.36787944117144233, 1e-15));
    REQUIRE_THROWS_AS(analytic_autocorrelation(-1.0, 1.0), DomainError);
}

TEST_CASE("roughness_correlation in both modes", "[hidden_variables]") {
    const SdhvParams params{1.0, 1e-6};
    const RoughnessSpec no_roughness{0.0, 1e-10};
    // Zero dislocation: the literal sum saturates at 1, the product mode
    // reduces to the plain exponential.
    REQUIRE(roughness_correlation(1e-6, 5, params, no_roughness, RoughnessMode::literal) == 1.0);
    REQUIRE_THAT(roughness_correlation(1e-6, 5, params, no_roughness, RoughnessMode::product),
                 WithinAbs(0.36787944117144233, 1e-15));

    // Unit decay constants in both channels: e^-1 * e^-1 in product mode.
    const RoughnessSpec unit{1e-10, 1e-9};   // dz/z_N = 0.1, m = 10 gives exponent 1
    REQUIRE_THAT(roughness_correlation(1e-6, 10, params, unit, RoughnessMode::product),
                 WithinAbs(0.1353352832366127, 1e-12));
    REQUIRE_THAT(roughness_correlation(1e-6, 10, params, unit, RoughnessMode::literal),
                 WithinAbs(2.0 * 0.36787944117144233, 1e-12));

    // Large arguments never leave [0,1] in literal mode.
    for (double kappa : {0.0, 1e-9, 1e-6, 1e-3}) {
        for (std::uint64_t m : {0ULL, 1ULL, 100ULL}) {
            const double c = roughness_correlation(kappa, m, params, unit);
            REQUIRE(c >= 0.0);
            REQUIRE(c <= 1.0);
        }
    }
}

TEST_CASE("deterministic_outcome threshold rule", "[hidden_variables]") {
    REQUIRE(deterministic_outcome(0.3, 0.5));
    REQUIRE_FALSE(deterministic_outcome(0.5, 0.5));   // boundary is strict
    REQUIRE(deterministic_outcome(0.0, 1e-9));
    REQUIRE_THROWS_AS(deterministic_outcome(1.0, 0.5), DomainError);
    REQUIRE_THROWS_AS(deterministic_outcome(-0.1, 0.5), DomainError);
    REQUIRE_THROWS_AS(deterministic_outcome(0.3, 1.5), DomainError);
}

TEST_CASE("uniform lambda reproduces Born statistics", "[hidden_variables][montecarlo]") {
    RandomStream rng(4242);
    const double p = 0.37;
    const std::size_t n = 1'000'000;
    std::size_t passes = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (deterministic_outcome(rng.uniform(), p)) ++passes;
    }
    const double freq = static_cast<double>(passes) / static_cast<double>(n);
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    REQUIRE_THAT(freq, WithinAbs(p, 3.0 * sigma));
}

TEST_CASE("evolve_hidden_state edge cases", "[hidden_variables]") {
    RandomStream rng(1);
    HiddenState hv = HiddenState::draw(4, 0.0, rng);
    const auto before = hv.components;

    // dt = 0 never refreshes.
    hv = evolve_hidden_state(std::move(hv), 0.0, 0.0, 1.0, rng);
    REQUIRE(hv.components == before);

    // tau = inf never refreshes.
    hv = evolve_hidden_state(std::move(hv), 0.0, 100.0,
                             std::numeric_limits<double>::infinity(), rng);
    REQUIRE(hv.components == before);

    // tau = 0 always refreshes and advances the timestamps.
    hv = evolve_hidden_state(std::move(hv), 0.0, 1.0, 0.0, rng);
    REQUIRE(hv.components != before);
    for (double t : hv.last_refresh) {
        REQUIRE(t == 1.0);
    }

    REQUIRE_THROWS_AS(evolve_hidden_state(std::move(hv), 1.0, 0.5, 1.0, rng), DomainError);
}

TEST_CASE("refresh fraction over dt = tau matches 1 - 1/e", "[hidden_variables][montecarlo]") {
    RandomStream rng(77);
    const std::size_t n = 1'000'000;
    HiddenState hv = HiddenState::draw(n, 0.0, rng);
    hv = evolve_hidden_state(std::move(hv), 0.0, 2.5, 2.5, rng);
    std::size_t refreshed = 0;
    for (double t : hv.last_refresh) {
        if (t > 0.0) ++refreshed;
    }
    const double expected = 0.6321205588285577;
    const double freq = static_cast<double>(refreshed) / static_cast<double>(n);
    const double sigma = std::sqrt(expected * (1.0 - expected) / static_cast<double>(n));
    REQUIRE_THAT(freq, WithinAbs(expected, 3.0 * sigma));
}

TEST_CASE("frozen hidden variables repeat outcomes exactly", "[hidden_variables]") {
    RandomStream rng(5);
    HiddenState hv = HiddenState::draw(1, 0.0, rng);
    const bool first = deterministic_outcome(hv.effective_lambda(), 0.42);
    for (int i = 0; i < 50; ++i) {
        // No refresh events between identical measurements.
        hv = evolve_hidden_state(std::move(hv), 0.0, 0.0, 1.0, rng);
        REQUIRE(deterministic_outcome(hv.effective_lambda(), 0.42) == first);
    }
}

TEST_CASE("repeated measurements decorrelate on the expected timescale",
          "[hidden_variables][montecarlo]") {
    RandomStream rng(99);
    const double tau = 10.0;
    const auto outcomes = repeated_measurement_outcomes(0.5, 1.0, tau, 200'000, 1, rng);
    // Lag-1 product average estimates exp(-1/tau).
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < outcomes.size(); ++i) {
        acc += outcomes[i] * outcomes[i + 1];
    }
    const double lag1 = acc / static_cast<double>(outcomes.size() - 1);
    REQUIRE_THAT(lag1, WithinAbs(std::exp(-1.0 / tau), 0.01));
}
