#pragma once

// Monte Carlo power analysis: how many trials per arm are needed before the
// KS comparison reliably separates the sdhv alternative from plain quantum
// mechanics. The physics is held fixed; only the trial count varies.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "loopsim/campaign.hpp"
#include "loopsim/config.hpp"
#include "loopsim/stats.hpp"

namespace loopsim {

struct PowerPoint {
    std::uint64_t trials_per_arm = 0;
    double power = 0.0;
};

struct PowerResult {
    bool achievable = false;
    std::uint64_t required_trials = 0;   // smallest grid n meeting the target
    double max_power = 0.0;              // power at the largest grid point
    std::vector<PowerPoint> curve;
};

// For each candidate n, estimates over `replicates` paired simulations the
// probability that compare_distributions rejects at `significance` when one
// arm is qm and the other is sdhv with alpha = alpha_alt.
inline PowerResult power_analysis(const SimulationConfig& base, double alpha_alt,
                                  double significance, double power_target,
                                  const std::vector<std::uint64_t>& trial_grid,
                                  int replicates = 200, unsigned n_threads = 1) {
    if (!(significance > 0.0) || !(significance < power_target) || !(power_target < 1.0)) {
        throw DomainError("need 0 < significance < power_target < 1");
    }
    if (trial_grid.empty()) {
        throw DomainError("trial grid must not be empty");
    }
    for (auto n : trial_grid) {
        if (n == 0) {
            throw DomainError("trial grid entries must be positive");
        }
    }
    if (replicates < 1) {
        throw DomainError("replicates must be >= 1");
    }

    SimulationConfig qm_cfg = base;
    qm_cfg.model = ModelChoice::qm;
    SimulationConfig alt_cfg = base;
    alt_cfg.model = ModelChoice::sdhv;
    alt_cfg.alpha = alpha_alt;
    qm_cfg.validate();
    alt_cfg.validate();

    std::vector<std::uint64_t> grid = trial_grid;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    PowerResult result;
    result.curve.reserve(grid.size());
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const std::uint64_t n = grid[gi];
        int rejections = 0;
        for (int r = 0; r < replicates; ++r) {
            // Every (grid point, replicate, arm) triple gets its own stream.
            const std::uint64_t base_index =
                (static_cast<std::uint64_t>(gi) << 32) ^ (static_cast<std::uint64_t>(r) << 1);
            const std::uint64_t seed_qm =
                derive_stream_seed(base.master_seed, base_index);
            const std::uint64_t seed_alt =
                derive_stream_seed(base.master_seed, base_index + 1);
            const TrialEnsemble arm_qm =
                run_campaign(qm_cfg, PhysicsModel::qm, n, seed_qm, n_threads);
            const TrialEnsemble arm_alt =
                run_campaign(alt_cfg, PhysicsModel::sdhv, n, seed_alt, n_threads);
            if (compare_distributions(arm_qm, arm_alt).p_value < significance) {
                ++rejections;
            }
        }
        const double power = static_cast<double>(rejections) / static_cast<double>(replicates);
        result.curve.push_back({n, power});
        if (!result.achievable && power >= power_target) {
            result.achievable = true;
            result.required_trials = n;
        }
    }
    result.max_power = result.curve.back().power;
    return result;
}

}  // namespace loopsim
