#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hte/base_learner.hpp"
#include "hte/common.hpp"
#include "hte/dgp.hpp"
#include "hte/learners.hpp"
#include "hte/metrics.hpp"
#include "hte/splitting.hpp"

namespace hte::driver {

// ============================================================================
// Monte Carlo experiment orchestration: deterministic seed tree, replication
// scheduling, result aggregation and persistence.
// ============================================================================

struct ForestOverrides {
    int trees = 1000;
    int min_leaf = 5;
    int mtry = 0;  // 0 = ceil(sqrt(p))
};

struct ExperimentConfig {
    // Synthetic design id 1..6, or semi-synthetic when data_path is set.
    int design_id = 6;
    std::string data_path;    // semi-synthetic input file
    std::string colmap_path;  // optional role->header mapping
    int augment_p = 90;

    std::vector<meta::Learner> learners = {meta::Learner::S, meta::Learner::SW, meta::Learner::T,
                                           meta::Learner::X, meta::Learner::DR, meta::Learner::R};
    std::vector<meta::Procedure> procedures = {meta::Procedure::Full, meta::Procedure::Split,
                                               meta::Procedure::CrossFit};
    std::vector<int> n_train = {500, 2000, 8000, 32000};
    std::vector<int> replications = {2000, 1000, 500, 250};
    int n_validation = 10000;

    ForestOverrides forest;
    double clip_epsilon = 0.0;  // propensity clipping; 0 = replication mode (off)
    std::uint64_t master_seed = 42;
    int workers = 1;  // replication-level parallelism
    std::string save_panels_dir;

    // Tests can swap the base learner for oracle stubs.
    std::shared_ptr<const BaseLearner> base_override;

    void validate() const;
    bool semisynthetic() const { return !data_path.empty(); }

    // Named profiles: full-scale settings vs a laptop-scale run.
    static ExperimentConfig paper_profile();
    static ExperimentConfig desk_profile();
};

struct ResultRow {
    std::string design;  // "1".."6" or "semisynth"
    std::string learner;
    std::string procedure;
    int n_train = 0;
    int replications = 0;  // successful replications backing the summary
    metrics::MetricsSummary summary;
    double runtime_s = 0.0;
    meta::WarningCounters warnings;
    bool aborted = false;
    std::string abort_reason;
};

struct ResultTable {
    std::vector<ResultRow> rows;
    bool any_aborted() const {
        for (const auto& r : rows)
            if (r.aborted) return true;
        return false;
    }
};

// ----------------------------------------------------------------------------
// Seed tree. The data sub-seed depends only on (master, design, replication):
// every learner/procedure cell sees the same draw within a replication.
// ----------------------------------------------------------------------------
std::uint64_t derive_seed(std::uint64_t master_seed, int design_id, meta::Learner learner,
                          meta::Procedure procedure, int replication_index);
std::uint64_t derive_data_seed(std::uint64_t master_seed, int design_id, int replication_index);
std::uint64_t derive_validation_seed(std::uint64_t master_seed, int design_id);

ResultTable run_experiment(const ExperimentConfig& config);

// ----------------------------------------------------------------------------
// Persistence. CSV columns: design,learner,procedure,n_train,replications,
// rmse_mean,abs_bias_mean,bias_mean,sd_mean,skew_mean,kurt_mean,jb_mean,
// jb_reject_share,corr,varr,se_rmse,runtime_s,warnings. Floats carry 6
// significant digits, non-applicable cells are empty (null in JSON).
// include_runtime=false blanks the wall-clock column so reruns are
// byte-identical.
// ----------------------------------------------------------------------------
enum class ResultFormat { csv, json };

void write_results(const ResultTable& table, const std::string& path, ResultFormat format,
                   bool include_runtime = true);
ResultTable read_results_csv(const std::string& path);

// Long-format summary-vs-n_train rows for external plotting.
void emit_plotdata(const ResultTable& table, const std::string& path);

// Prediction panels (first line is the truth row, then one line per
// successful replication).
void write_panel(const metrics::PredictionPanel& panel, const std::string& path);
metrics::PredictionPanel read_panel(const std::string& path);

}  // namespace hte::driver
