#include "hte/splitting.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace hte::split {

namespace {

enum : std::uint64_t {
    kTagFolds = 11,
    kTagRotation = 12,
};

meta::StageRows stage_rows_for(const FoldAssignment& folds, const RoleMap& roles) {
    meta::StageRows rows;
    rows.in_sample = false;
    rows.propensity_fold = roles.propensity_fold;
    rows.response_fold = roles.response_fold;
    rows.cate_fold = roles.cate_fold;
    for (std::size_t i = 0; i < folds.fold_of.size(); ++i) {
        const int f = folds.fold_of[i];
        if (f == roles.propensity_fold) rows.propensity_rows.push_back(static_cast<int>(i));
        if (f == roles.response_fold) rows.response_rows.push_back(static_cast<int>(i));
        if (f == roles.cate_fold) rows.cate_rows.push_back(static_cast<int>(i));
    }
    return rows;
}

std::string role_layout(const RoleMap& roles) {
    return "propensity=fold" + std::to_string(roles.propensity_fold) + ", response=fold" +
           std::to_string(roles.response_fold) + ", cate=fold" + std::to_string(roles.cate_fold);
}

}  // namespace

std::vector<std::vector<int>> FoldAssignment::fold_rows() const {
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(K));
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        rows[static_cast<std::size_t>(fold_of[i])].push_back(static_cast<int>(i));
    return rows;
}

FoldAssignment assign_folds(std::size_t n, int K, RngStream& rng) {
    if (K < 1) throw InvalidInput("assign_folds: K must be >= 1");
    if (n < static_cast<std::size_t>(K))
        throw InsufficientData("assign_folds: fewer rows than folds");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    FoldAssignment out;
    out.K = K;
    out.fold_of.resize(n);
    const std::size_t base = n / static_cast<std::size_t>(K);
    const std::size_t remainder = n % static_cast<std::size_t>(K);
    std::size_t cursor = 0;
    for (int f = 0; f < K; ++f) {
        const std::size_t size = base + (static_cast<std::size_t>(f) < remainder ? 1 : 0);
        for (std::size_t k = 0; k < size; ++k)
            out.fold_of[static_cast<std::size_t>(order[cursor++])] = f;
    }
    return out;
}

ProcedureSpec ProcedureSpec::full() { return {Procedure::Full, 3, {}}; }
ProcedureSpec ProcedureSpec::sample_split() { return {Procedure::Split, 3, {}}; }
ProcedureSpec ProcedureSpec::crossfit() { return {Procedure::CrossFit, 3, {}}; }

std::vector<RoleMap> ProcedureSpec::rotations() const {
    std::vector<RoleMap> maps;
    if (kind == Procedure::Full) return maps;
    if (kind == Procedure::Split) {
        maps.push_back(base_roles);
        return maps;
    }
    for (int r = 0; r < K; ++r) {
        RoleMap m;
        m.propensity_fold = (base_roles.propensity_fold + r) % K;
        m.response_fold = (base_roles.response_fold + r) % K;
        m.cate_fold = (base_roles.cate_fold + r) % K;
        maps.push_back(m);
    }
    return maps;
}

std::vector<double> crossfit_combine(
    const std::vector<std::vector<double>>& component_predictions) {
    if (component_predictions.empty()) throw InvalidInput("crossfit_combine: no components");
    const std::size_t m = component_predictions.front().size();
    for (const auto& part : component_predictions)
        if (part.size() != m) throw InvalidInput("crossfit_combine: length mismatch");
    std::vector<double> out = component_predictions.front();
    for (std::size_t k = 1; k < component_predictions.size(); ++k)
        for (std::size_t i = 0; i < m; ++i) out[i] += component_predictions[k][i];
    const double k_count = static_cast<double>(component_predictions.size());
    for (double& v : out) v /= k_count;
    return out;
}

CateModel run_procedure(Learner learner, const ObservedDataset& data, const ProcedureSpec& spec,
                        const FitContext& ctx) {
    data.validate();
    CateModel model;
    model.learner = learner;
    model.procedure = spec.kind;

    Procedure effective = spec.kind;
    const bool single_nuisance =
        learner == Learner::S || learner == Learner::SW || learner == Learner::T;
    if (single_nuisance && effective != Procedure::Full) {
        // These learners estimate no extra nuisance functions; they always see
        // the full training sample. Counted so callers can log the notice.
        if (ctx.warnings) ++ctx.warnings->degraded_procedures;
        effective = Procedure::Full;
    }

    if (effective == Procedure::Full) {
        model.components.push_back(
            meta::fit_rotation(learner, data, meta::StageRows::full_sample(data.n()), ctx));
        return model;
    }

    if (spec.K != 3)
        throw InvalidInput("run_procedure: double splitting uses K = 3 folds");
    RngStream fold_rng(chain(ctx.seed, kTagFolds));
    const FoldAssignment folds = assign_folds(data.n(), spec.K, fold_rng);

    const std::vector<RoleMap> maps = spec.rotations();
    for (std::size_t r = 0; r < maps.size(); ++r) {
        meta::StageRows rows = stage_rows_for(folds, maps[r]);
        FitContext rotation_ctx = ctx;
        rotation_ctx.seed = chain(ctx.seed, kTagRotation + r);
        try {
            model.components.push_back(meta::fit_rotation(learner, data, rows, rotation_ctx));
        } catch (const InsufficientData& e) {
            throw FoldTooSmall("rotation " + std::to_string(r) + " (" + role_layout(maps[r]) +
                               "): " + e.what());
        } catch (const EmptyTreatmentArm& e) {
            throw FoldTooSmall("rotation " + std::to_string(r) + " (" + role_layout(maps[r]) +
                               "): " + e.what());
        }
    }
    return model;
}

}  // namespace hte::split
