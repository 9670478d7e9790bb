#include <doctest.h>

#include <algorithm>
#include <set>

#include "hte/splitting.hpp"
#include "oracles.hpp"

using namespace hte;
using meta::Learner;
using meta::Procedure;
using split::ProcedureSpec;
using hte::testing::FunctionBaseLearner;
using hte::testing::RecordingBaseLearner;

namespace {

class ConstantPredictor final : public meta::CatePredictor {
public:
    explicit ConstantPredictor(double value) : value_(value) {}
    std::vector<double> predict(const Matrix& X) const override {
        return std::vector<double>(X.rows(), value_);
    }

private:
    double value_;
};

// Rows carry their index in column 0 so recorded fits reveal row sets.
ObservedDataset indexed_data(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    ObservedDataset data;
    data.X = Matrix(n, 3);
    data.W.resize(n);
    data.Y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        data.X(i, 0) = static_cast<double>(i);
        data.X(i, 1) = rng.uniform01();
        data.X(i, 2) = rng.uniform01();
        data.W[i] = rng.bernoulli(0.5) ? 1 : 0;
        data.Y[i] = rng.normal();
    }
    return data;
}

std::set<int> rows_of(const testing::RecordingBaseLearner::Record& rec) {
    std::set<int> out;
    for (double v : rec.first_column) out.insert(static_cast<int>(v));
    return out;
}

bool disjoint(const std::set<int>& a, const std::set<int>& b) {
    for (int v : a)
        if (b.count(v)) return false;
    return true;
}

}  // namespace

TEST_SUITE_BEGIN("splitting");

TEST_CASE("fold sizes split the remainder onto the lowest folds") {
    RngStream rng(1);
    const auto nine = split::assign_folds(9, 3, rng);
    auto sizes = [](const split::FoldAssignment& f) {
        std::vector<int> s(static_cast<std::size_t>(f.K), 0);
        for (int fold : f.fold_of) ++s[static_cast<std::size_t>(fold)];
        return s;
    };
    CHECK(sizes(nine) == std::vector<int>{3, 3, 3});
    const auto ten = split::assign_folds(10, 3, rng);
    CHECK(sizes(ten) == std::vector<int>{4, 3, 3});

    for (std::size_t n : {7, 23, 100}) {
        for (int k : {2, 3, 5}) {
            const auto folds = split::assign_folds(n, k, rng);
            CHECK(folds.fold_of.size() == n);
            const auto s = sizes(folds);
            const int lo = *std::min_element(s.begin(), s.end());
            const int hi = *std::max_element(s.begin(), s.end());
            CHECK(hi - lo <= 1);
            int total = 0;
            for (int v : s) total += v;
            CHECK(total == static_cast<int>(n));
        }
    }
    CHECK_THROWS_AS(split::assign_folds(2, 3, rng), InsufficientData);
}

TEST_CASE("fold assignment is random across seeds but deterministic per seed") {
    RngStream a(5), b(5), c(6);
    const auto fa = split::assign_folds(30, 3, a);
    const auto fb = split::assign_folds(30, 3, b);
    const auto fc = split::assign_folds(30, 3, c);
    CHECK(fa.fold_of == fb.fold_of);
    CHECK(fa.fold_of != fc.fold_of);
}

TEST_CASE("crossfit_combine is the pointwise mean") {
    const std::vector<std::vector<double>> identity = {{1.0, 2.0, 3.0}};
    CHECK(split::crossfit_combine(identity) == std::vector<double>{1.0, 2.0, 3.0});

    std::vector<std::vector<double>> three = {{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}};
    CHECK(split::crossfit_combine(three) == std::vector<double>{1.0, 1.0});

    std::vector<std::vector<double>> permuted = {three[2], three[0], three[1]};
    CHECK(split::crossfit_combine(permuted) == split::crossfit_combine(three));

    std::vector<std::vector<double>> ragged = {{1.0, 2.0}, {1.0}};
    CHECK_THROWS_AS(split::crossfit_combine(ragged), InvalidInput);
}

TEST_CASE("cross-fit rotations cycle every fold through every role") {
    const auto spec = ProcedureSpec::crossfit();
    const auto maps = spec.rotations();
    REQUIRE(maps.size() == 3);
    std::set<int> propensity, response, cate;
    for (const auto& m : maps) {
        propensity.insert(m.propensity_fold);
        response.insert(m.response_fold);
        cate.insert(m.cate_fold);
        CHECK(m.propensity_fold != m.response_fold);
        CHECK(m.response_fold != m.cate_fold);
        CHECK(m.propensity_fold != m.cate_fold);
    }
    CHECK(propensity == std::set<int>{0, 1, 2});
    CHECK(response == std::set<int>{0, 1, 2});
    CHECK(cate == std::set<int>{0, 1, 2});

    CHECK(ProcedureSpec::sample_split().rotations().size() == 1);
    CHECK(ProcedureSpec::full().rotations().empty());
}

TEST_CASE("a cross-fit model predicts the exact arithmetic mean of its rotations") {
    meta::CateModel model;
    model.learner = Learner::DR;
    model.procedure = Procedure::CrossFit;
    std::vector<std::vector<double>> parts;
    for (double c : {0.0, 1.0, 2.0}) {
        model.components.push_back(std::make_unique<ConstantPredictor>(c));
        parts.push_back(std::vector<double>(4, c));
    }
    const Matrix X(4, 2, 0.5);
    const auto combined = model.predict(X);
    const auto reference = split::crossfit_combine(parts);
    REQUIRE(combined.size() == reference.size());
    for (std::size_t i = 0; i < combined.size(); ++i) CHECK(combined[i] == reference[i]);
    for (double v : combined) CHECK(v == 1.0);
}

TEST_CASE("run_procedure cross-fit components average bitwise") {
    const auto data = indexed_data(120, 9);
    const FunctionBaseLearner base(
        [](std::span<const double> x) { return 0.2 + 0.001 * x[0] + 0.3 * x[1] * x[2]; });
    meta::FitContext ctx;
    ctx.base = &base;
    ctx.seed = 31;
    const auto model = split::run_procedure(Learner::DR, data, ProcedureSpec::crossfit(), ctx);
    REQUIRE(model.components.size() == 3);

    Matrix probe(25, 3);
    RngStream rng(33);
    for (std::size_t i = 0; i < 25; ++i)
        for (std::size_t j = 0; j < 3; ++j) probe(i, j) = rng.uniform01();
    std::vector<std::vector<double>> parts;
    for (const auto& c : model.components) parts.push_back(c->predict(probe));
    const auto reference = split::crossfit_combine(parts);
    const auto combined = model.predict(probe);
    for (std::size_t i = 0; i < combined.size(); ++i) CHECK(combined[i] == reference[i]);
}

TEST_CASE("sample-split stages see pairwise disjoint folds covering the sample") {
    const auto data = indexed_data(90, 13);
    const FunctionBaseLearner inner([](std::span<const double> x) { return 0.4 + 0.0 * x[0]; });
    const RecordingBaseLearner recorder(inner);
    meta::FitContext ctx;
    ctx.base = &recorder;
    ctx.seed = 17;
    (void)split::run_procedure(Learner::DR, data, ProcedureSpec::sample_split(), ctx);

    // DR sample-split fits: propensity, response-treated, response-control, stage 2.
    REQUIRE(recorder.records().size() == 4);
    const auto propensity_rows = rows_of(recorder.records()[0]);
    std::set<int> response_rows = rows_of(recorder.records()[1]);
    for (int v : rows_of(recorder.records()[2])) response_rows.insert(v);
    const auto cate_rows = rows_of(recorder.records()[3]);

    CHECK(propensity_rows.size() == 30);
    CHECK(response_rows.size() == 30);
    CHECK(cate_rows.size() == 30);
    CHECK(disjoint(propensity_rows, response_rows));
    CHECK(disjoint(propensity_rows, cate_rows));
    CHECK(disjoint(response_rows, cate_rows));
    std::set<int> all = propensity_rows;
    all.insert(response_rows.begin(), response_rows.end());
    all.insert(cate_rows.begin(), cate_rows.end());
    CHECK(all.size() == 90);
}

TEST_CASE("nuisance provenance records the stage folds") {
    const auto data = indexed_data(90, 19);
    const FunctionBaseLearner base([](std::span<const double>) { return 0.5; });
    meta::FitContext ctx;
    ctx.base = &base;
    ctx.seed = 23;
    RngStream fold_rng(29);
    const auto folds = split::assign_folds(data.n(), 3, fold_rng);
    meta::StageRows rows;
    rows.in_sample = false;
    rows.propensity_fold = 0;
    rows.response_fold = 1;
    rows.cate_fold = 2;
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (folds.fold_of[i] == 0) rows.propensity_rows.push_back(static_cast<int>(i));
        if (folds.fold_of[i] == 1) rows.response_rows.push_back(static_cast<int>(i));
        if (folds.fold_of[i] == 2) rows.cate_rows.push_back(static_cast<int>(i));
    }
    const auto nu = meta::nuisances_for(Learner::R, data, rows, ctx);
    CHECK(nu.from_oob == false);
    CHECK(nu.propensity_fold == 0);
    CHECK(nu.response_fold == 1);
    CHECK(nu.e_hat.size() == rows.cate_rows.size());
    CHECK(nu.mu_hat.size() == rows.cate_rows.size());

    const auto full = meta::nuisances_for(Learner::R, data, meta::StageRows::full_sample(data.n()),
                                          ctx);
    CHECK(full.from_oob == true);
    CHECK(full.propensity_fold == -1);
}

TEST_CASE("identical rows make sample-split and full-sample agree for a function stub") {
    ObservedDataset data;
    const std::size_t n = 60;
    data.X = Matrix(n, 2);
    data.W.resize(n);
    data.Y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        data.X(i, 0) = 0.3;
        data.X(i, 1) = 0.9;
        data.W[i] = i % 2 == 0 ? 1 : 0;
        data.Y[i] = data.W[i] == 1 ? 2.0 : 1.0;
    }
    const FunctionBaseLearner base([](std::span<const double> x) { return x[0] + x[1]; });
    meta::FitContext ctx;
    ctx.base = &base;
    ctx.seed = 37;
    const auto full = split::run_procedure(Learner::X, data, ProcedureSpec::full(), ctx);
    const auto ss = split::run_procedure(Learner::X, data, ProcedureSpec::sample_split(), ctx);
    Matrix probe(5, 2, 0.4);
    const auto pf = full.predict(probe);
    const auto ps = ss.predict(probe);
    for (std::size_t i = 0; i < pf.size(); ++i) CHECK(pf[i] == ps[i]);
}

TEST_CASE("single-nuisance learners degrade to full-sample estimation") {
    const auto data = indexed_data(100, 41);
    forest::ForestParams params;
    params.n_trees = 10;
    const ForestBaseLearner base(params);
    Matrix probe(20, 3);
    RngStream rng(43);
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t j = 0; j < 3; ++j) probe(i, j) = rng.uniform01();

    for (Learner learner : {Learner::S, Learner::SW, Learner::T}) {
        meta::WarningCounters warnings;
        meta::FitContext ctx;
        ctx.base = &base;
        ctx.seed = 47;
        ctx.warnings = &warnings;
        const auto full = split::run_procedure(learner, data, ProcedureSpec::full(), ctx);
        const auto ss = split::run_procedure(learner, data, ProcedureSpec::sample_split(), ctx);
        const auto cf = split::run_procedure(learner, data, ProcedureSpec::crossfit(), ctx);
        CHECK(warnings.degraded_procedures == 2);
        CHECK(ss.components.size() == 1);
        CHECK(cf.components.size() == 1);
        const auto pf = full.predict(probe);
        const auto ps = ss.predict(probe);
        const auto pc = cf.predict(probe);
        for (std::size_t i = 0; i < pf.size(); ++i) {
            CHECK(pf[i] == ps[i]);
            CHECK(pf[i] == pc[i]);
        }
    }
}

TEST_CASE("starved folds raise FoldTooSmall naming the rotation and roles") {
    // A single treated row: some rotation's response fold has no treated rows.
    ObservedDataset data;
    const std::size_t n = 9;
    data.X = Matrix(n, 2, 0.5);
    for (std::size_t i = 0; i < n; ++i) data.X(i, 0) = static_cast<double>(i);
    data.W.assign(n, 0);
    data.W[4] = 1;
    data.Y.assign(n, 1.0);
    const FunctionBaseLearner base([](std::span<const double>) { return 0.5; });
    meta::FitContext ctx;
    ctx.base = &base;
    ctx.seed = 53;
    bool thrown = false;
    try {
        (void)split::run_procedure(Learner::DR, data, ProcedureSpec::crossfit(), ctx);
    } catch (const FoldTooSmall& e) {
        thrown = true;
        const std::string msg = e.what();
        CHECK(msg.find("rotation") != std::string::npos);
        CHECK(msg.find("fold") != std::string::npos);
    }
    CHECK(thrown);
}

TEST_SUITE_END();
