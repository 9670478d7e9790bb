#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hte/common.hpp"

namespace hte::forest {

// ============================================================================
// Breiman-style regression random forest. Probability estimation for a binary
// target is the same fit on the 0/1 indicator. Model fitting is a pure
// function of (data, params, seed).
// ============================================================================

struct ForestParams {
    int n_trees = 1000;
    int mtry = 0;  // 0 resolves to ceil(sqrt(p)) at fit time
    int min_leaf = 5;
    std::optional<int> forced_feature;  // always added to the split candidate set
    std::vector<double> case_weights;   // bootstrap sampling probabilities; empty = uniform
    int n_threads = 1;
    bool record_splits = false;  // keep per-node candidate sets (test instrumentation)
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf mean
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct SplitRecord {
    int tree = -1;
    int node = -1;
    std::vector<int> candidates;  // in draw order, forced feature appended if absent
    int chosen_feature = -1;
    double threshold = 0.0;
};

struct OobPredictions {
    std::vector<double> values;
    std::vector<std::uint8_t> valid;  // 0 => no tree left this row out; full-forest fallback
    int fallback_count = 0;
};

class ForestModel {
public:
    const std::vector<Tree>& trees() const { return trees_; }
    // Per tree, bootstrap multiplicity of each training row (saturated at 255).
    const std::vector<std::vector<std::uint8_t>>& inbag() const { return inbag_; }
    std::pair<double, double> training_range() const { return {y_min_, y_max_}; }
    int n_features() const { return n_features_; }
    int n_train() const { return n_train_; }
    const std::vector<SplitRecord>& split_records() const { return split_records_; }
    const OobPredictions& oob() const { return oob_; }

private:
    std::vector<Tree> trees_;
    std::vector<std::vector<std::uint8_t>> inbag_;
    std::vector<SplitRecord> split_records_;
    OobPredictions oob_;
    double y_min_ = 0.0;
    double y_max_ = 0.0;
    int n_features_ = 0;
    int n_train_ = 0;

    friend ForestModel fit(const Matrix& features, std::span<const double> targets,
                           const ForestParams& params, std::uint64_t seed);
};

ForestModel fit(const Matrix& features, std::span<const double> targets,
                const ForestParams& params, std::uint64_t seed);

std::vector<double> predict(const ForestModel& model, const Matrix& features);
double predict_row(const ForestModel& model, std::span<const double> x);

// Per-training-row prediction from trees whose bootstrap excluded the row.
const OobPredictions& predict_oob(const ForestModel& model);

double tree_leaf_value(const Tree& tree, const double* x);

}  // namespace hte::forest
