#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hte/base_learner.hpp"
#include "hte/common.hpp"
#include "hte/dataset.hpp"

namespace hte::meta {

// ============================================================================
// The six meta-learners as compositions of base-learner fits and
// pseudo-outcome constructions. One fit_* call produces the CATE predictor of
// a single rotation; the splitting module arranges rotations and averaging.
// ============================================================================

enum class Learner { S, SW, T, X, DR, R };
enum class Procedure { Full, Split, CrossFit };

std::string to_string(Learner learner);
std::string to_string(Procedure procedure);
Learner parse_learner(const std::string& name);
Procedure parse_procedure(const std::string& name);

struct PropensityOptions {
    // 0 disables clipping: extreme propensities raise ExtremePropensity and
    // the surrounding replication is recorded as failed.
    double clip_epsilon = 0.0;
    double r_denom_epsilon = 1e-12;
};

struct WarningCounters {
    int oob_fallbacks = 0;
    int propensity_clips = 0;
    int degraded_procedures = 0;  // S/SW/T asked for split/cross-fit
    int dgp_redraws = 0;
    int failed_replications = 0;

    int total() const {
        return oob_fallbacks + propensity_clips + degraded_procedures + dgp_redraws +
               failed_replications;
    }
    void add(const WarningCounters& o) {
        oob_fallbacks += o.oob_fallbacks;
        propensity_clips += o.propensity_clips;
        degraded_procedures += o.degraded_procedures;
        dgp_redraws += o.dgp_redraws;
        failed_replications += o.failed_replications;
    }
};

// Row sets for the three stages of one rotation. For full-sample estimation
// all three sets are every row and in_sample is true, which switches nuisance
// values on training rows to out-of-bag predictions.
struct StageRows {
    std::vector<int> propensity_rows;
    std::vector<int> response_rows;
    std::vector<int> cate_rows;
    bool in_sample = false;
    // Fold ids for provenance/error messages; -1 for full-sample.
    int propensity_fold = -1;
    int response_fold = -1;
    int cate_fold = -1;

    static StageRows full_sample(std::size_t n);
};

struct FitContext {
    const BaseLearner* base = nullptr;
    PropensityOptions propensity;
    std::uint64_t seed = 0;
    WarningCounters* warnings = nullptr;  // optional
};

// Predictions of the nuisance functions on the cate-stage rows, with the
// provenance needed by the no-leakage checks.
struct NuisanceSet {
    std::vector<double> mu1_hat;
    std::vector<double> mu0_hat;
    std::vector<double> mu_hat;
    std::vector<double> e_hat;
    bool from_oob = false;
    int response_fold = -1;
    int propensity_fold = -1;
};

class CatePredictor {
public:
    virtual ~CatePredictor() = default;
    virtual std::vector<double> predict(const Matrix& X) const = 0;
};

// A fitted meta-learner under one estimation procedure. Cross-fit models hold
// one predictor per rotation and predict the arithmetic mean.
struct CateModel {
    Learner learner = Learner::S;
    Procedure procedure = Procedure::Full;
    std::vector<std::unique_ptr<CatePredictor>> components;

    std::vector<double> predict(const Matrix& X) const;
};

// ----------------------------------------------------------------------------
// Pseudo-outcome constructions
// ----------------------------------------------------------------------------

struct XiEffects {
    std::vector<int> treated_rows;   // rows with W=1, in input order
    std::vector<double> xi_treated;  // Y - mu0_hat on those rows
    std::vector<int> control_rows;   // rows with W=0
    std::vector<double> xi_control;  // mu1_hat - Y on those rows
};

// mu1_hat/mu0_hat are aligned with Y/W.
XiEffects impute_x_effects(std::span<const double> Y, std::span<const int> W,
                           std::span<const double> mu1_hat, std::span<const double> mu0_hat);

// psi_i = W(Y-mu1)/e - (1-W)(Y-mu0)/(1-e) + mu1 - mu0. Propensities must lie
// strictly inside (0,1) unless clipping is enabled upstream.
std::vector<double> compute_dr_pseudo_outcome(std::span<const double> Y, std::span<const int> W,
                                              std::span<const double> mu1_hat,
                                              std::span<const double> mu0_hat,
                                              std::span<const double> e_hat);

struct RModifiedOutcome {
    std::vector<double> phi;      // (Y - mu)/(W - e)
    std::vector<double> weights;  // (W - e)^2
};

RModifiedOutcome compute_r_modified_outcome(std::span<const double> Y, std::span<const int> W,
                                            std::span<const double> mu_hat,
                                            std::span<const double> e_hat,
                                            double denom_epsilon = 1e-12);

// Clamp into [eps, 1-eps]; counts clipped entries.
int clip_propensities(std::span<double> e_hat, double epsilon);

// ----------------------------------------------------------------------------
// Per-learner rotation fits
// ----------------------------------------------------------------------------

std::unique_ptr<CatePredictor> fit_s(const ObservedDataset& data, const StageRows& rows,
                                     const FitContext& ctx);
std::unique_ptr<CatePredictor> fit_sw(const ObservedDataset& data, const StageRows& rows,
                                      const FitContext& ctx);
std::unique_ptr<CatePredictor> fit_t(const ObservedDataset& data, const StageRows& rows,
                                     const FitContext& ctx);
std::unique_ptr<CatePredictor> fit_x(const ObservedDataset& data, const StageRows& rows,
                                     const FitContext& ctx);
std::unique_ptr<CatePredictor> fit_dr(const ObservedDataset& data, const StageRows& rows,
                                      const FitContext& ctx);
std::unique_ptr<CatePredictor> fit_r(const ObservedDataset& data, const StageRows& rows,
                                     const FitContext& ctx);

std::unique_ptr<CatePredictor> fit_rotation(Learner learner, const ObservedDataset& data,
                                            const StageRows& rows, const FitContext& ctx);

// Nuisance predictions on target rows with full-sample OOB semantics: a row
// inside the model's own training set gets its out-of-bag value, anything
// else a full-model prediction. Exposed for tests.
std::vector<double> honest_values(const BaseModel& model, const Matrix& X,
                                  std::span<const int> trained_rows,
                                  std::span<const int> target_rows, bool in_sample,
                                  WarningCounters* warnings);

// Assembles the NuisanceSet used by the DR- and R-learner second stages;
// exposed for the leakage/provenance tests.
NuisanceSet nuisances_for(Learner learner, const ObservedDataset& data, const StageRows& rows,
                          const FitContext& ctx);

}  // namespace hte::meta
