#pragma once

// Campaign orchestration: n independent trials with per-trial random streams
// derived from (master seed, trial index). Output is a pure function of
// (config, model, seed, n); the thread count only changes wall time.

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

#include "loopsim/config.hpp"
#include "loopsim/loop.hpp"
#include "loopsim/random.hpp"

namespace loopsim {

inline TrialContext make_trial_context(const SimulationConfig& cfg, PhysicsModel model) {
    TrialContext ctx;
    ctx.geometry = cfg.geometry;
    ctx.model = model;
    ctx.sdhv_a = cfg.sdhv_params(DetectorId::a);
    ctx.sdhv_b = cfg.sdhv_params(DetectorId::b);
    ctx.roughness = cfg.roughness();
    ctx.initial_state = cfg.initial_state.build();
    ctx.eigen_a = eigendecompose(cfg.observable_a.build());
    ctx.eigen_b = eigendecompose(cfg.observable_b.build());
    ctx.max_loops = cfg.max_loops;
    ctx.n_hidden_components = cfg.hidden_components;
    ctx.record_history = cfg.record_history;
    return ctx;
}

inline TrialEnsemble run_campaign(const SimulationConfig& cfg, PhysicsModel model,
                                  std::uint64_t n_trials, std::uint64_t master_seed,
                                  unsigned n_threads = 1) {
    cfg.validate();
    const TrialContext ctx = make_trial_context(cfg, model);

    TrialEnsemble ensemble;
    ensemble.config_fingerprint = cfg.fingerprint();
    ensemble.master_seed = master_seed;
    ensemble.records.resize(n_trials);

    const auto worker = [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t i = begin; i < end; ++i) {
            RandomStream rng = RandomStream::for_stream(master_seed, i);
            ensemble.records[i] = run_trial(ctx, rng);
        }
    };

    if (n_threads <= 1 || n_trials < 2 * n_threads) {
        worker(0, n_trials);
        return ensemble;
    }

    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    const std::uint64_t chunk = (n_trials + n_threads - 1) / n_threads;
    for (unsigned t = 0; t < n_threads; ++t) {
        const std::uint64_t begin = static_cast<std::uint64_t>(t) * chunk;
        const std::uint64_t end = std::min(n_trials, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
    return ensemble;
}

// Convenience overload using the config's own model (which must not be
// "both"), trial count and seed.
inline TrialEnsemble run_campaign(const SimulationConfig& cfg, unsigned n_threads = 1) {
    if (cfg.model == ModelChoice::both) {
        throw ConfigError("run_campaign needs a single model; run qm and sdhv separately");
    }
    const PhysicsModel model =
        cfg.model == ModelChoice::qm ? PhysicsModel::qm : PhysicsModel::sdhv;
    return run_campaign(cfg, model, cfg.trials, cfg.master_seed, n_threads);
}

}  // namespace loopsim
