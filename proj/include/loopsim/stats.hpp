#pragma once

// Estimators and tests: outcome-series autocorrelation, exponential decay-time
// fitting, exit-time summaries and a two-sample Kolmogorov-Smirnov test on
// exit loop counts.
//
// The KS test has two code paths. For small samples the p-value is computed
// exactly by conditioning on the pooled sample: the number of label
// assignments whose running ECDF difference stays strictly below the observed
// statistic is counted with a lattice DP (tie blocks collapse to single
// steps, which is the conservative right-continuous treatment of discrete
// data). Large samples use the usual asymptotic Kolmogorov distribution with
// the small-sample correction factor; on discrete data that is conservative
// as well.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loopsim/errors.hpp"
#include "loopsim/loop.hpp"

namespace loopsim {

inline constexpr double kDefaultCorrelationFloor = 0.05;
// Largest pooled sample for which the exact permutation p-value is used.
inline constexpr std::size_t kExactKsPooledLimit = 2000;

struct OutcomeSeries {
    std::vector<double> values;   // typically +-1 outcomes, mean-removed
    double timestep = 1.0;        // seconds between entries
};

inline void remove_mean(std::vector<double>& values) {
    if (values.empty()) return;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    for (double& v : values) v -= mean;
}

// Normalized sample autocorrelation. Lag 0 is exactly 1; lag k is
//   sum_t x_t x_{t+k} / sqrt(sum_head x^2 * sum_tail x^2)
// over the overlapping windows, which keeps every value in [-1,1].
inline std::vector<double> autocorrelation_estimate(const OutcomeSeries& series,
                                                    std::size_t max_lag) {
    const std::size_t n = series.values.size();
    if (n < 2 || n <= max_lag) {
        throw SeriesTooShortError("series of length " + std::to_string(n) +
                                  " cannot support max_lag " + std::to_string(max_lag));
    }
    const auto& x = series.values;

    // Prefix sums of squares for the window normalizers.
    std::vector<double> sq_prefix(n + 1, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        sq_prefix[t + 1] = sq_prefix[t] + x[t] * x[t];
    }
    if (!(sq_prefix[n] > 0.0)) {
        throw DomainError("degenerate (all-zero) series has no autocorrelation");
    }

    std::vector<double> corr(max_lag + 1, 0.0);
    corr[0] = 1.0;
    for (std::size_t k = 1; k <= max_lag; ++k) {
        double cross = 0.0;
        for (std::size_t t = 0; t + k < n; ++t) {
            cross += x[t] * x[t + k];
        }
        const double head = sq_prefix[n - k];
        const double tail = sq_prefix[n] - sq_prefix[k];
        const double denom = std::sqrt(head * tail);
        corr[k] = denom > 0.0 ? cross / denom : 0.0;
    }
    return corr;
}

struct DecayFit {
    double tau_hat = 0.0;      // seconds
    double tau_stderr = 0.0;   // seconds
    std::size_t lags_used = 0;
    double goodness = 0.0;     // weighted R^2 of the log-linear fit
};

// Weighted least squares on log(corr_k) vs. lag time, restricted to lags with
// corr above `floor` so the log never sees noise-dominated values. Weights
// corr^2 are the delta-method variance stabilizers for the log transform.
// Throws NoDecaySignalError when fewer than two lags clear the floor or the
// fitted slope is non-negative; both mean tau is consistent with zero.
inline DecayFit fit_decay_time(const std::vector<double>& corr, double timestep,
                               double floor = kDefaultCorrelationFloor) {
    if (!(timestep > 0.0)) {
        throw DomainError("timestep must be positive");
    }
    std::vector<double> t, y, w;
    for (std::size_t k = 0; k < corr.size(); ++k) {
        if (corr[k] > floor) {
            t.push_back(static_cast<double>(k) * timestep);
            y.push_back(std::log(corr[k]));
            w.push_back(corr[k] * corr[k]);
        }
    }
    const std::size_t m = t.size();
    if (m < 2) {
        throw NoDecaySignalError("fewer than 2 lags above the correlation floor");
    }

    double sw = 0, swt = 0, swy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        sw += w[i];
        swt += w[i] * t[i];
        swy += w[i] * y[i];
    }
    const double tbar = swt / sw;
    const double ybar = swy / sw;
    double stt = 0, sty = 0;
    for (std::size_t i = 0; i < m; ++i) {
        stt += w[i] * (t[i] - tbar) * (t[i] - tbar);
        sty += w[i] * (t[i] - tbar) * (y[i] - ybar);
    }
    if (!(stt > 0.0)) {
        throw NoDecaySignalError("degenerate lag spacing in decay fit");
    }
    const double slope = sty / stt;
    if (!(slope < 0.0)) {
        throw NoDecaySignalError("non-decaying correlation sequence");
    }

    double ss_res = 0, ss_tot = 0;
    const double intercept = ybar - slope * tbar;
    for (std::size_t i = 0; i < m; ++i) {
        const double e = y[i] - (intercept + slope * t[i]);
        ss_res += w[i] * e * e;
        ss_tot += w[i] * (y[i] - ybar) * (y[i] - ybar);
    }

    DecayFit fit;
    fit.tau_hat = -1.0 / slope;
    fit.lags_used = m;
    if (m > 2) {
        const double sigma2 = ss_res / static_cast<double>(m - 2);
        const double slope_se = std::sqrt(sigma2 / stt);
        fit.tau_stderr = slope_se / (slope * slope);
    }
    fit.goodness = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
    return fit;
}

struct ExitTimeStats {
    double mean_seconds = 0.0;
    double stderr_seconds = 0.0;
    double mean_loops = 0.0;
    std::uint64_t samples = 0;
    std::uint64_t censored = 0;
    // Set when more than 1% of the ensemble hit the loop cap; the exit-time
    // estimator assumes every particle eventually leaves.
    bool censoring_warning = false;
};

inline ExitTimeStats mean_exit_time(const TrialEnsemble& ensemble) {
    if (ensemble.records.empty()) {
        throw EmptyEnsembleError("mean_exit_time on an empty ensemble");
    }
    ExitTimeStats stats;
    double sum = 0.0, loops = 0.0;
    for (const auto& r : ensemble.records) {
        if (r.censored()) {
            ++stats.censored;
            continue;
        }
        ++stats.samples;
        sum += r.exit_time;
        loops += static_cast<double>(r.exit_loop_count);
    }
    if (stats.samples == 0) {
        throw AllCensoredError("every record in the ensemble is censored");
    }
    const double n = static_cast<double>(stats.samples);
    stats.mean_seconds = sum / n;
    stats.mean_loops = loops / n;
    if (stats.samples > 1) {
        double ss = 0.0;
        for (const auto& r : ensemble.records) {
            if (r.censored()) continue;
            const double d = r.exit_time - stats.mean_seconds;
            ss += d * d;
        }
        stats.stderr_seconds = std::sqrt(ss / (n - 1.0) / n);
    }
    stats.censoring_warning =
        stats.censored * 100 > ensemble.records.size();
    return stats;
}

inline std::vector<std::pair<std::uint64_t, std::uint64_t>> exit_histogram(
    const TrialEnsemble& ensemble) {
    std::map<std::uint64_t, std::uint64_t> counts;
    for (const auto& r : ensemble.records) {
        ++counts[r.exit_loop_count];
    }
    return {counts.begin(), counts.end()};
}

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::string test_name;
};

namespace detail {

struct TieBlock {
    std::uint64_t value;
    std::size_t count_a = 0;
    std::size_t count_b = 0;
};

inline std::vector<TieBlock> pooled_tie_blocks(const std::vector<std::uint64_t>& a,
                                               const std::vector<std::uint64_t>& b) {
    std::map<std::uint64_t, TieBlock> blocks;
    for (auto v : a) {
        auto& blk = blocks.try_emplace(v, TieBlock{v}).first->second;
        ++blk.count_a;
    }
    for (auto v : b) {
        auto& blk = blocks.try_emplace(v, TieBlock{v}).first->second;
        ++blk.count_b;
    }
    std::vector<TieBlock> out;
    out.reserve(blocks.size());
    for (auto& [_, blk] : blocks) out.push_back(blk);
    return out;
}

// Integer-lattice KS distance: max over tie-block boundaries of
// |i*n2 - j*n1| where (i, j) are the running sample counts. Dividing by
// n1*n2 gives the usual sup-norm ECDF distance, but staying in integers
// makes the exact-path comparison free of floating-point edge cases.
inline std::uint64_t ks_integer_distance(const std::vector<TieBlock>& blocks, std::size_t n1,
                                         std::size_t n2) {
    std::uint64_t best = 0;
    std::uint64_t i = 0, j = 0;
    for (const auto& blk : blocks) {
        i += blk.count_a;
        j += blk.count_b;
        const std::uint64_t lhs = i * n2;
        const std::uint64_t rhs = j * n1;
        best = std::max(best, lhs > rhs ? lhs - rhs : rhs - lhs);
    }
    return best;
}

// Exact conditional p-value: over all C(n1+n2, n1) label assignments of the
// pooled sample, the fraction whose KS distance reaches d_int. DP over
// (tie block, #labels from sample 1 so far). Binomial rows are normalized by
// their peak (big tie blocks have C(c, c/2) far beyond double range) and the
// state vector is rescaled per block; the running scale is tracked in logs.
inline double ks_exact_pvalue(const std::vector<TieBlock>& blocks, std::size_t n1, std::size_t n2,
                              std::uint64_t d_int) {
    if (d_int == 0) {
        return 1.0;
    }
    const std::size_t total = n1 + n2;

    std::vector<double> dp(n1 + 1, 0.0);
    dp[0] = 1.0;
    double log_scale = 0.0;
    std::size_t used = 0;

    std::vector<double> next(n1 + 1, 0.0);
    std::vector<double> row;
    for (const auto& blk : blocks) {
        const std::size_t c = blk.count_a + blk.count_b;

        // row[y] = C(c, y) / C(c, floor(c/2)); entries that underflow to zero
        // are irrelevant to the result at double precision.
        row.assign(c + 1, 0.0);
        double log_choose = 0.0;
        const double log_peak = std::lgamma(static_cast<double>(c) + 1.0) -
                                std::lgamma(static_cast<double>(c / 2) + 1.0) -
                                std::lgamma(static_cast<double>(c - c / 2) + 1.0);
        for (std::size_t y = 0; y <= c; ++y) {
            if (y > 0) {
                log_choose += std::log(static_cast<double>(c - y + 1) / static_cast<double>(y));
            }
            row[y] = std::exp(log_choose - log_peak);
        }

        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t x = 0; x <= std::min(used, n1); ++x) {
            if (dp[x] == 0.0) continue;
            for (std::size_t y = 0; y <= c && x + y <= n1; ++y) {
                next[x + y] += dp[x] * row[y];
            }
        }
        used += c;
        log_scale += log_peak;
        // Survival band: paths must stay strictly below d_int at every block
        // boundary to count toward P(D < d_obs).
        double maxval = 0.0;
        for (std::size_t x = 0; x <= n1; ++x) {
            if (next[x] == 0.0) continue;
            if (x > used) {
                next[x] = 0.0;
                continue;
            }
            const std::uint64_t lhs = static_cast<std::uint64_t>(x) * n2;
            const std::uint64_t rhs = static_cast<std::uint64_t>(used - x) * n1;
            const std::uint64_t dist = lhs > rhs ? lhs - rhs : rhs - lhs;
            if (dist >= d_int) {
                next[x] = 0.0;
            }
            maxval = std::max(maxval, next[x]);
        }
        if (maxval == 0.0) {
            return 1.0;  // no path avoids the band: P(D >= d_obs) = 1
        }
        for (std::size_t x = 0; x <= n1; ++x) {
            next[x] /= maxval;
        }
        log_scale += std::log(maxval);
        dp.swap(next);
    }

    // Only paths assigning exactly n1 first-sample labels are valid labelings.
    const double inside = dp[n1];
    if (inside == 0.0) {
        return 1.0;
    }
    // log C(total, n1)
    const double log_total = std::lgamma(static_cast<double>(total) + 1.0) -
                             std::lgamma(static_cast<double>(n1) + 1.0) -
                             std::lgamma(static_cast<double>(n2) + 1.0);
    const double log_inside = std::log(inside) + log_scale;
    const double p_less = std::exp(log_inside - log_total);
    return std::clamp(1.0 - p_less, 0.0, 1.0);
}

// Kolmogorov asymptotic tail Q(lambda) = 2 sum (-1)^(j-1) exp(-2 j^2 lambda^2)
// with the Stephens finite-sample correction applied to lambda.
inline double ks_asymptotic_pvalue(double d, std::size_t n1, std::size_t n2) {
    const double ne = static_cast<double>(n1) * static_cast<double>(n2) /
                      static_cast<double>(n1 + n2);
    const double sqrt_ne = std::sqrt(ne);
    const double lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    if (lambda < 1e-3) {
        return 1.0;
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-16 * std::abs(sum) || term < 1e-300) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace detail

// Two-sample KS test on arbitrary integer-valued samples.
inline TestResult ks_test_counts(const std::vector<std::uint64_t>& a,
                                 const std::vector<std::uint64_t>& b) {
    if (a.empty() || b.empty()) {
        throw EmptyEnsembleError("KS test requires two non-empty samples");
    }
    const std::size_t n1 = a.size();
    const std::size_t n2 = b.size();
    const auto blocks = detail::pooled_tie_blocks(a, b);
    const std::uint64_t d_int = detail::ks_integer_distance(blocks, n1, n2);
    const double d = static_cast<double>(d_int) /
                     (static_cast<double>(n1) * static_cast<double>(n2));

    TestResult result;
    result.statistic = d;
    if (n1 + n2 <= kExactKsPooledLimit) {
        result.p_value = detail::ks_exact_pvalue(blocks, n1, n2, d_int);
        result.test_name = "ks_two_sample_exact";
    } else {
        result.p_value = detail::ks_asymptotic_pvalue(d, n1, n2);
        result.test_name = "ks_two_sample_asymptotic";
    }
    return result;
}

// KS comparison of two ensembles' exit loop counts.
inline TestResult compare_distributions(const TrialEnsemble& a, const TrialEnsemble& b) {
    if (a.records.empty() || b.records.empty()) {
        throw EmptyEnsembleError("compare_distributions requires two non-empty ensembles");
    }
    std::vector<std::uint64_t> xa, xb;
    xa.reserve(a.records.size());
    xb.reserve(b.records.size());
    for (const auto& r : a.records) xa.push_back(r.exit_loop_count);
    for (const auto& r : b.records) xb.push_back(r.exit_loop_count);
    return ks_test_counts(xa, xb);
}

}  // namespace loopsim
