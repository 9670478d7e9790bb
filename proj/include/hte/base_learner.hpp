#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hte/common.hpp"
#include "hte/forest.hpp"

namespace hte {

// ============================================================================
// Base-learner contract used by every meta-learner: fit / predict /
// predict_oob. The default implementation is the random forest; tests swap in
// oracle stubs through the same interface.
// ============================================================================

struct BaseFitSpec {
    std::optional<int> forced_feature;
    std::span<const double> case_weights;  // empty = unweighted
};

class BaseModel {
public:
    virtual ~BaseModel() = default;
    virtual std::vector<double> predict(const Matrix& X) const = 0;
    // Out-of-sample-style values for the model's own training rows.
    virtual forest::OobPredictions predict_oob() const = 0;
};

class BaseLearner {
public:
    virtual ~BaseLearner() = default;
    virtual std::unique_ptr<BaseModel> fit(const Matrix& X, std::span<const double> y,
                                           const BaseFitSpec& spec, std::uint64_t seed) const = 0;
};

class ForestBaseModel final : public BaseModel {
public:
    explicit ForestBaseModel(forest::ForestModel model) : model_(std::move(model)) {}

    std::vector<double> predict(const Matrix& X) const override {
        return forest::predict(model_, X);
    }
    forest::OobPredictions predict_oob() const override { return model_.oob(); }

    const forest::ForestModel& forest_model() const { return model_; }

private:
    forest::ForestModel model_;
};

class ForestBaseLearner final : public BaseLearner {
public:
    explicit ForestBaseLearner(forest::ForestParams params) : params_(std::move(params)) {}

    std::unique_ptr<BaseModel> fit(const Matrix& X, std::span<const double> y,
                                   const BaseFitSpec& spec, std::uint64_t seed) const override {
        forest::ForestParams p = params_;
        p.forced_feature = spec.forced_feature;
        p.case_weights.assign(spec.case_weights.begin(), spec.case_weights.end());
        return std::make_unique<ForestBaseModel>(forest::fit(X, y, p, seed));
    }

    const forest::ForestParams& params() const { return params_; }

private:
    forest::ForestParams params_;
};

}  // namespace hte
