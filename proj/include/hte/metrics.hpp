#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hte/common.hpp"

namespace hte::metrics {

// ============================================================================
// Per-observation, across-replication performance measures. All moment
// divisors are population (1/R) as displayed in the definitions, which makes
// rmse^2 = sd^2 + bias^2 exact per observation.
// ============================================================================

// Jarque-Bera rejection thresholds (chi-squared with 2 df).
inline constexpr double kJbCritical5 = 5.991;
inline constexpr double kJbCritical1 = 9.210;

struct PredictionPanel {
    std::vector<double> truth;  // length m: true CATE on the validation set
    Matrix preds;               // R x m: one row per replication

    std::size_t n_reps() const { return preds.rows(); }
    std::size_t n_obs() const { return preds.cols(); }

    void validate() const {
        if (truth.size() != n_obs()) throw InvalidInput("PredictionPanel: truth length mismatch");
        if (!preds.all_finite() || !all_finite(truth))
            throw InvalidInput("PredictionPanel: non-finite value");
    }
};

struct PerObsMetrics {
    std::vector<double> rmse;
    std::vector<double> abs_bias;
    std::vector<double> bias;  // signed, truth minus prediction
    std::vector<double> sd;
    std::vector<double> skew;
    std::vector<double> kurt;
    std::vector<double> jb;
    std::vector<std::uint8_t> degenerate;  // zero variance across replications
    int n_reps = 0;
};

PerObsMetrics per_obs_metrics(const PredictionPanel& panel);

// (R/6)(S^2 + (K-3)^2/4); 0 with the flag set for zero-variance samples.
double jarque_bera(std::span<const double> sample, bool* degenerate = nullptr);

struct MetricsSummary {
    double rmse_mean = 0.0;
    double abs_bias_mean = 0.0;
    double bias_mean = 0.0;
    double sd_mean = 0.0;
    double skew_mean = 0.0;
    double kurt_mean = 0.0;
    double jb_mean = 0.0;
    double jb_reject_share = 0.0;        // share with JB above the 5% critical value
    std::optional<double> corr;          // empty when truth (or every rep) is constant
    std::optional<double> varr;          // empty when truth is constant
    double se_rmse = 0.0;
    int n_replications = 0;
    int n_observations = 0;
    int degenerate_cells = 0;
};

MetricsSummary aggregate(const PerObsMetrics& rows, const PredictionPanel& panel);

}  // namespace hte::metrics
