#pragma once

#include <cstdint>
#include <vector>

#include "hte/common.hpp"
#include "hte/dataset.hpp"
#include "hte/learners.hpp"
#include "hte/rng.hpp"

namespace hte::split {

using meta::CateModel;
using meta::FitContext;
using meta::Learner;
using meta::Procedure;

// ============================================================================
// Estimation procedures: full-sample, double sample-splitting, and double
// cross-fitting with K = 3 equally sized folds. One fold per function class:
// propensity, responses, second-stage CATE.
// ============================================================================

struct FoldAssignment {
    std::vector<int> fold_of;  // n entries in {0..K-1}
    int K = 0;

    std::vector<std::vector<int>> fold_rows() const;
};

// Uniformly random partition into K near-equal folds; remainder goes to the
// lowest fold indices.
FoldAssignment assign_folds(std::size_t n, int K, RngStream& rng);

struct RoleMap {
    int propensity_fold = 0;
    int response_fold = 1;
    int cate_fold = 2;
};

struct ProcedureSpec {
    Procedure kind = Procedure::Full;
    int K = 3;
    RoleMap base_roles;  // rotation 0; cross-fit cycles it

    static ProcedureSpec full();
    static ProcedureSpec sample_split();
    static ProcedureSpec crossfit();

    // The role maps actually run: one for SampleSplit, K cyclic rotations for
    // CrossFit, none for FullSample.
    std::vector<RoleMap> rotations() const;
};

// Fits `learner` on `data` under the procedure. For S/SW/T, which estimate no
// extra nuisance functions, split and cross-fit degrade to full-sample
// estimation (counted in the warnings).
CateModel run_procedure(Learner learner, const ObservedDataset& data, const ProcedureSpec& spec,
                        const FitContext& ctx);

// Pointwise arithmetic mean of K component prediction vectors.
std::vector<double> crossfit_combine(const std::vector<std::vector<double>>& component_predictions);

}  // namespace hte::split
