#include "hte/learners.hpp"

#include <algorithm>
#include <cmath>

#include "hte/rng.hpp"

namespace hte::meta {

namespace {

// Sub-stream tags for the component fits of one rotation.
enum : std::uint64_t {
    kTagSModel = 1,
    kTagMu1 = 2,
    kTagMu0 = 3,
    kTagMuPooled = 4,
    kTagPropensity = 5,
    kTagTau1 = 6,
    kTagTau0 = 7,
    kTagStage2 = 8,
};

std::vector<double> w_as_double(const ObservedDataset& data, std::span<const int> rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (int r : rows) out.push_back(static_cast<double>(data.W[static_cast<std::size_t>(r)]));
    return out;
}

void split_by_arm(const ObservedDataset& data, std::span<const int> rows,
                  std::vector<int>& treated, std::vector<int>& control) {
    treated.clear();
    control.clear();
    for (int r : rows) {
        if (data.W[static_cast<std::size_t>(r)] == 1)
            treated.push_back(r);
        else
            control.push_back(r);
    }
}

void require_arm(const std::vector<int>& arm, const char* role, const char* which) {
    if (arm.empty())
        throw EmptyTreatmentArm(std::string("meta: ") + role + " stage has no " + which + " rows");
}

std::unique_ptr<BaseModel> fit_stage(const FitContext& ctx, const char* role, const Matrix& X,
                                     std::span<const double> y, const BaseFitSpec& spec,
                                     std::uint64_t tag) {
    try {
        return ctx.base->fit(X, y, spec, chain(ctx.seed, tag));
    } catch (const InsufficientData& e) {
        throw InsufficientData(std::string(role) + " stage: " + e.what());
    }
}

// X with the treatment indicator appended as the last column.
Matrix with_treatment_column(const Matrix& X, std::span<const double> w) {
    Matrix out(X.rows(), X.cols() + 1);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const auto row = X.row(i);
        std::copy(row.begin(), row.end(), out.row(i).begin());
        out(i, X.cols()) = w[i];
    }
    return out;
}

Matrix with_constant_column(const Matrix& X, double value) {
    Matrix out(X.rows(), X.cols() + 1);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const auto row = X.row(i);
        std::copy(row.begin(), row.end(), out.row(i).begin());
        out(i, X.cols()) = value;
    }
    return out;
}

}  // namespace

std::string to_string(Learner learner) {
    switch (learner) {
        case Learner::S: return "S";
        case Learner::SW: return "SW";
        case Learner::T: return "T";
        case Learner::X: return "X";
        case Learner::DR: return "DR";
        case Learner::R: return "R";
    }
    return "?";
}

std::string to_string(Procedure procedure) {
    switch (procedure) {
        case Procedure::Full: return "full";
        case Procedure::Split: return "split";
        case Procedure::CrossFit: return "crossfit";
    }
    return "?";
}

Learner parse_learner(const std::string& name) {
    if (name == "S") return Learner::S;
    if (name == "SW" || name == "S-W") return Learner::SW;
    if (name == "T") return Learner::T;
    if (name == "X") return Learner::X;
    if (name == "DR") return Learner::DR;
    if (name == "R") return Learner::R;
    throw InvalidInput("unknown learner '" + name + "'");
}

Procedure parse_procedure(const std::string& name) {
    if (name == "full") return Procedure::Full;
    if (name == "split") return Procedure::Split;
    if (name == "crossfit") return Procedure::CrossFit;
    throw InvalidInput("unknown procedure '" + name + "'");
}

StageRows StageRows::full_sample(std::size_t n) {
    StageRows rows;
    rows.propensity_rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) rows.propensity_rows[i] = static_cast<int>(i);
    rows.response_rows = rows.propensity_rows;
    rows.cate_rows = rows.propensity_rows;
    rows.in_sample = true;
    return rows;
}

std::vector<double> CateModel::predict(const Matrix& X) const {
    if (components.empty()) throw InvalidInput("CateModel::predict: no components");
    std::vector<double> sum = components.front()->predict(X);
    for (std::size_t k = 1; k < components.size(); ++k) {
        const std::vector<double> part = components[k]->predict(X);
        if (part.size() != sum.size()) throw InvalidInput("CateModel::predict: length mismatch");
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += part[i];
    }
    const double k_count = static_cast<double>(components.size());
    for (double& v : sum) v /= k_count;
    return sum;
}

// ----------------------------------------------------------------------------
// Pseudo-outcome constructions
// ----------------------------------------------------------------------------

XiEffects impute_x_effects(std::span<const double> Y, std::span<const int> W,
                           std::span<const double> mu1_hat, std::span<const double> mu0_hat) {
    const std::size_t n = Y.size();
    if (W.size() != n || mu1_hat.size() != n || mu0_hat.size() != n)
        throw InvalidInput("impute_x_effects: length mismatch");
    XiEffects out;
    for (std::size_t i = 0; i < n; ++i) {
        if (W[i] == 1) {
            out.treated_rows.push_back(static_cast<int>(i));
            out.xi_treated.push_back(Y[i] - mu0_hat[i]);
        } else {
            out.control_rows.push_back(static_cast<int>(i));
            out.xi_control.push_back(mu1_hat[i] - Y[i]);
        }
    }
    return out;
}

std::vector<double> compute_dr_pseudo_outcome(std::span<const double> Y, std::span<const int> W,
                                              std::span<const double> mu1_hat,
                                              std::span<const double> mu0_hat,
                                              std::span<const double> e_hat) {
    const std::size_t n = Y.size();
    if (W.size() != n || mu1_hat.size() != n || mu0_hat.size() != n || e_hat.size() != n)
        throw InvalidInput("compute_dr_pseudo_outcome: length mismatch");
    std::vector<double> psi(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double e = e_hat[i];
        if (!(e > 0.0) || !(e < 1.0))
            throw ExtremePropensity("compute_dr_pseudo_outcome: propensity " + std::to_string(e) +
                                    " outside (0,1) at row " + std::to_string(i));
        const double w = static_cast<double>(W[i]);
        psi[i] = w * (Y[i] - mu1_hat[i]) / e - (1.0 - w) * (Y[i] - mu0_hat[i]) / (1.0 - e) +
                 mu1_hat[i] - mu0_hat[i];
    }
    return psi;
}

RModifiedOutcome compute_r_modified_outcome(std::span<const double> Y, std::span<const int> W,
                                            std::span<const double> mu_hat,
                                            std::span<const double> e_hat, double denom_epsilon) {
    const std::size_t n = Y.size();
    if (W.size() != n || mu_hat.size() != n || e_hat.size() != n)
        throw InvalidInput("compute_r_modified_outcome: length mismatch");
    RModifiedOutcome out;
    out.phi.resize(n);
    out.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double resid_w = static_cast<double>(W[i]) - e_hat[i];
        if (std::fabs(resid_w) <= denom_epsilon)
            throw DegenerateResidualTreatment(
                "compute_r_modified_outcome: |W - e| <= " + std::to_string(denom_epsilon) +
                " at row " + std::to_string(i));
        out.phi[i] = (Y[i] - mu_hat[i]) / resid_w;
        out.weights[i] = resid_w * resid_w;
    }
    return out;
}

int clip_propensities(std::span<double> e_hat, double epsilon) {
    if (epsilon <= 0.0) return 0;
    int clipped = 0;
    for (double& e : e_hat) {
        const double c = std::min(std::max(e, epsilon), 1.0 - epsilon);
        if (c != e) {
            e = c;
            ++clipped;
        }
    }
    return clipped;
}

// ----------------------------------------------------------------------------
// Nuisance evaluation
// ----------------------------------------------------------------------------

std::vector<double> honest_values(const BaseModel& model, const Matrix& X,
                                  std::span<const int> trained_rows,
                                  std::span<const int> target_rows, bool in_sample,
                                  WarningCounters* warnings) {
    std::vector<double> out(target_rows.size());
    if (!in_sample) {
        return model.predict(X.take_rows(target_rows));
    }
    std::vector<int> position_of(X.rows(), -1);
    for (std::size_t k = 0; k < trained_rows.size(); ++k)
        position_of[static_cast<std::size_t>(trained_rows[k])] = static_cast<int>(k);

    const forest::OobPredictions oob = model.predict_oob();
    std::vector<int> missing;
    std::vector<std::size_t> missing_slots;
    for (std::size_t k = 0; k < target_rows.size(); ++k) {
        const int pos = position_of[static_cast<std::size_t>(target_rows[k])];
        if (pos >= 0) {
            out[k] = oob.values[static_cast<std::size_t>(pos)];
            if (warnings && !oob.valid[static_cast<std::size_t>(pos)]) ++warnings->oob_fallbacks;
        } else {
            missing.push_back(target_rows[k]);
            missing_slots.push_back(k);
        }
    }
    if (!missing.empty()) {
        const std::vector<double> full = model.predict(X.take_rows(missing));
        for (std::size_t k = 0; k < missing.size(); ++k) out[missing_slots[k]] = full[k];
    }
    return out;
}

NuisanceSet nuisances_for(Learner learner, const ObservedDataset& data, const StageRows& rows,
                          const FitContext& ctx) {
    NuisanceSet nu;
    nu.from_oob = rows.in_sample;
    nu.response_fold = rows.response_fold;
    nu.propensity_fold = rows.propensity_fold;

    // Propensity model on its own stage rows.
    {
        const std::vector<double> wv = w_as_double(data, rows.propensity_rows);
        const auto e_model = fit_stage(ctx, "propensity", data.X.take_rows(rows.propensity_rows),
                                       wv, {}, kTagPropensity);
        nu.e_hat = honest_values(*e_model, data.X, rows.propensity_rows, rows.cate_rows,
                                 rows.in_sample, ctx.warnings);
    }

    if (learner == Learner::DR) {
        std::vector<int> treated, control;
        split_by_arm(data, rows.response_rows, treated, control);
        require_arm(treated, "response", "treated");
        require_arm(control, "response", "control");
        const auto mu1_model = fit_stage(ctx, "response", data.X.take_rows(treated),
                                         take<double>(data.Y, treated), {}, kTagMu1);
        const auto mu0_model = fit_stage(ctx, "response", data.X.take_rows(control),
                                         take<double>(data.Y, control), {}, kTagMu0);
        nu.mu1_hat = honest_values(*mu1_model, data.X, treated, rows.cate_rows, rows.in_sample,
                                   ctx.warnings);
        nu.mu0_hat = honest_values(*mu0_model, data.X, control, rows.cate_rows, rows.in_sample,
                                   ctx.warnings);
    } else if (learner == Learner::R) {
        const auto mu_model = fit_stage(ctx, "response", data.X.take_rows(rows.response_rows),
                                        take<double>(data.Y, rows.response_rows), {}, kTagMuPooled);
        nu.mu_hat = honest_values(*mu_model, data.X, rows.response_rows, rows.cate_rows,
                                  rows.in_sample, ctx.warnings);
    } else {
        throw InvalidInput("nuisances_for: only the DR- and R-learner use this path");
    }
    return nu;
}

// ----------------------------------------------------------------------------
// Predictors
// ----------------------------------------------------------------------------

namespace {

class SPredictor final : public CatePredictor {
public:
    explicit SPredictor(std::unique_ptr<BaseModel> mu) : mu_(std::move(mu)) {}
    std::vector<double> predict(const Matrix& X) const override {
        const std::vector<double> m1 = mu_->predict(with_constant_column(X, 1.0));
        const std::vector<double> m0 = mu_->predict(with_constant_column(X, 0.0));
        std::vector<double> out(m1.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = m1[i] - m0[i];
        return out;
    }

private:
    std::unique_ptr<BaseModel> mu_;
};

class TPredictor final : public CatePredictor {
public:
    TPredictor(std::unique_ptr<BaseModel> mu1, std::unique_ptr<BaseModel> mu0)
        : mu1_(std::move(mu1)), mu0_(std::move(mu0)) {}
    std::vector<double> predict(const Matrix& X) const override {
        const std::vector<double> m1 = mu1_->predict(X);
        const std::vector<double> m0 = mu0_->predict(X);
        std::vector<double> out(m1.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = m1[i] - m0[i];
        return out;
    }

private:
    std::unique_ptr<BaseModel> mu1_;
    std::unique_ptr<BaseModel> mu0_;
};

class XPredictor final : public CatePredictor {
public:
    XPredictor(std::unique_ptr<BaseModel> tau1, std::unique_ptr<BaseModel> tau0,
               std::unique_ptr<BaseModel> e)
        : tau1_(std::move(tau1)), tau0_(std::move(tau0)), e_(std::move(e)) {}
    std::vector<double> predict(const Matrix& X) const override {
        const std::vector<double> t1 = tau1_->predict(X);
        const std::vector<double> t0 = tau0_->predict(X);
        const std::vector<double> e = e_->predict(X);
        std::vector<double> out(t1.size());
        // Convex combination; extreme propensities are admissible here.
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = e[i] * t0[i] + (1.0 - e[i]) * t1[i];
        return out;
    }

private:
    std::unique_ptr<BaseModel> tau1_;
    std::unique_ptr<BaseModel> tau0_;
    std::unique_ptr<BaseModel> e_;
};

class SecondStagePredictor final : public CatePredictor {
public:
    explicit SecondStagePredictor(std::unique_ptr<BaseModel> stage2) : stage2_(std::move(stage2)) {}
    std::vector<double> predict(const Matrix& X) const override { return stage2_->predict(X); }

private:
    std::unique_ptr<BaseModel> stage2_;
};

}  // namespace

// ----------------------------------------------------------------------------
// Per-learner rotation fits
// ----------------------------------------------------------------------------

std::unique_ptr<CatePredictor> fit_s(const ObservedDataset& data, const StageRows& rows,
                                     const FitContext& ctx) {
    const Matrix X = data.X.take_rows(rows.response_rows);
    const std::vector<double> w = w_as_double(data, rows.response_rows);
    auto mu = fit_stage(ctx, "response", with_treatment_column(X, w),
                        take<double>(data.Y, rows.response_rows), {}, kTagSModel);
    return std::make_unique<SPredictor>(std::move(mu));
}

std::unique_ptr<CatePredictor> fit_sw(const ObservedDataset& data, const StageRows& rows,
                                      const FitContext& ctx) {
    const Matrix X = data.X.take_rows(rows.response_rows);
    const std::vector<double> w = w_as_double(data, rows.response_rows);
    BaseFitSpec spec;
    spec.forced_feature = static_cast<int>(X.cols());  // the appended W column
    auto mu = fit_stage(ctx, "response", with_treatment_column(X, w),
                        take<double>(data.Y, rows.response_rows), spec, kTagSModel);
    return std::make_unique<SPredictor>(std::move(mu));
}

std::unique_ptr<CatePredictor> fit_t(const ObservedDataset& data, const StageRows& rows,
                                     const FitContext& ctx) {
    std::vector<int> treated, control;
    split_by_arm(data, rows.response_rows, treated, control);
    require_arm(treated, "response", "treated");
    require_arm(control, "response", "control");
    auto mu1 = fit_stage(ctx, "response", data.X.take_rows(treated),
                         take<double>(data.Y, treated), {}, kTagMu1);
    auto mu0 = fit_stage(ctx, "response", data.X.take_rows(control),
                         take<double>(data.Y, control), {}, kTagMu0);
    return std::make_unique<TPredictor>(std::move(mu1), std::move(mu0));
}

std::unique_ptr<CatePredictor> fit_x(const ObservedDataset& data, const StageRows& rows,
                                     const FitContext& ctx) {
    std::vector<int> resp_treated, resp_control;
    split_by_arm(data, rows.response_rows, resp_treated, resp_control);
    require_arm(resp_treated, "response", "treated");
    require_arm(resp_control, "response", "control");
    const auto mu1_model = fit_stage(ctx, "response", data.X.take_rows(resp_treated),
                                     take<double>(data.Y, resp_treated), {}, kTagMu1);
    const auto mu0_model = fit_stage(ctx, "response", data.X.take_rows(resp_control),
                                     take<double>(data.Y, resp_control), {}, kTagMu0);

    std::vector<int> cate_treated, cate_control;
    split_by_arm(data, rows.cate_rows, cate_treated, cate_control);
    require_arm(cate_treated, "cate", "treated");
    require_arm(cate_control, "cate", "control");

    // Imputed individual effects: cross-arm predictions are out-of-sample for
    // the scoring model by construction.
    const std::vector<double> mu0_on_treated = honest_values(
        *mu0_model, data.X, resp_control, cate_treated, rows.in_sample, ctx.warnings);
    const std::vector<double> mu1_on_control = honest_values(
        *mu1_model, data.X, resp_treated, cate_control, rows.in_sample, ctx.warnings);

    std::vector<double> xi1(cate_treated.size());
    for (std::size_t k = 0; k < cate_treated.size(); ++k)
        xi1[k] = data.Y[static_cast<std::size_t>(cate_treated[k])] - mu0_on_treated[k];
    std::vector<double> xi0(cate_control.size());
    for (std::size_t k = 0; k < cate_control.size(); ++k)
        xi0[k] = mu1_on_control[k] - data.Y[static_cast<std::size_t>(cate_control[k])];

    auto tau1 = fit_stage(ctx, "cate", data.X.take_rows(cate_treated), xi1, {}, kTagTau1);
    auto tau0 = fit_stage(ctx, "cate", data.X.take_rows(cate_control), xi0, {}, kTagTau0);
    auto e_model = fit_stage(ctx, "propensity", data.X.take_rows(rows.propensity_rows),
                             w_as_double(data, rows.propensity_rows), {}, kTagPropensity);
    return std::make_unique<XPredictor>(std::move(tau1), std::move(tau0), std::move(e_model));
}

std::unique_ptr<CatePredictor> fit_dr(const ObservedDataset& data, const StageRows& rows,
                                      const FitContext& ctx) {
    NuisanceSet nu = nuisances_for(Learner::DR, data, rows, ctx);
    if (ctx.propensity.clip_epsilon > 0.0) {
        const int clipped = clip_propensities(nu.e_hat, ctx.propensity.clip_epsilon);
        if (ctx.warnings) ctx.warnings->propensity_clips += clipped;
    }
    const std::vector<double> y = take<double>(data.Y, rows.cate_rows);
    const std::vector<int> w = take<int>(data.W, rows.cate_rows);
    const std::vector<double> psi = compute_dr_pseudo_outcome(y, w, nu.mu1_hat, nu.mu0_hat, nu.e_hat);
    auto stage2 = fit_stage(ctx, "cate", data.X.take_rows(rows.cate_rows), psi, {}, kTagStage2);
    return std::make_unique<SecondStagePredictor>(std::move(stage2));
}

std::unique_ptr<CatePredictor> fit_r(const ObservedDataset& data, const StageRows& rows,
                                     const FitContext& ctx) {
    NuisanceSet nu = nuisances_for(Learner::R, data, rows, ctx);
    if (ctx.propensity.clip_epsilon > 0.0) {
        const int clipped = clip_propensities(nu.e_hat, ctx.propensity.clip_epsilon);
        if (ctx.warnings) ctx.warnings->propensity_clips += clipped;
    }
    const std::vector<double> y = take<double>(data.Y, rows.cate_rows);
    const std::vector<int> w = take<int>(data.W, rows.cate_rows);
    const RModifiedOutcome mod =
        compute_r_modified_outcome(y, w, nu.mu_hat, nu.e_hat, ctx.propensity.r_denom_epsilon);
    BaseFitSpec spec;
    spec.case_weights = mod.weights;
    auto stage2 = fit_stage(ctx, "cate", data.X.take_rows(rows.cate_rows), mod.phi, spec,
                            kTagStage2);
    return std::make_unique<SecondStagePredictor>(std::move(stage2));
}

std::unique_ptr<CatePredictor> fit_rotation(Learner learner, const ObservedDataset& data,
                                            const StageRows& rows, const FitContext& ctx) {
    switch (learner) {
        case Learner::S: return fit_s(data, rows, ctx);
        case Learner::SW: return fit_sw(data, rows, ctx);
        case Learner::T: return fit_t(data, rows, ctx);
        case Learner::X: return fit_x(data, rows, ctx);
        case Learner::DR: return fit_dr(data, rows, ctx);
        case Learner::R: return fit_r(data, rows, ctx);
    }
    throw InvalidInput("fit_rotation: unknown learner");
}

}  // namespace hte::meta
