#include "hte/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hte/kernels.hpp"
#include "hte/parallel.hpp"
#include "hte/rng.hpp"

namespace hte::forest {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct ResolvedParams {
    int n_trees;
    int mtry;
    int min_leaf;
    int forced_feature;  // -1 = none
    int n_threads;
    bool record_splits;
};

ResolvedParams validate(const Matrix& X, std::span<const double> y, const ForestParams& p) {
    const auto n = X.rows();
    const auto cols = X.cols();
    if (cols < 1) throw InvalidInput("forest::fit: need at least one feature");
    if (y.size() != n) throw InvalidInput("forest::fit: feature/target row mismatch");
    if (p.n_trees < 1) throw InvalidInput("forest::fit: n_trees must be >= 1");
    if (p.min_leaf < 1) throw InvalidInput("forest::fit: min_leaf must be >= 1");
    if (n < 2 * static_cast<std::size_t>(p.min_leaf))
        throw InsufficientData("forest::fit: fewer than 2*min_leaf rows");
    if (!X.all_finite() || !all_finite(y))
        throw InvalidInput("forest::fit: non-finite value in features or targets");

    int mtry = p.mtry;
    if (mtry == 0) mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cols))));
    if (mtry < 1 || static_cast<std::size_t>(mtry) > cols)
        throw InvalidInput("forest::fit: mtry out of [1, p]");

    int forced = -1;
    if (p.forced_feature) {
        forced = *p.forced_feature;
        if (forced < 0 || static_cast<std::size_t>(forced) >= cols)
            throw InvalidInput("forest::fit: forced_feature out of range");
    }
    if (!p.case_weights.empty()) {
        if (p.case_weights.size() != n)
            throw InvalidInput("forest::fit: case_weights size mismatch");
        bool any_positive = false;
        for (double w : p.case_weights) {
            if (!(w >= 0.0) || !std::isfinite(w))
                throw InvalidInput("forest::fit: case_weights must be finite and >= 0");
            if (w > 0.0) any_positive = true;
        }
        if (!any_positive) throw InvalidInput("forest::fit: case_weights all zero");
    }
    return {p.n_trees, mtry, p.min_leaf, forced, std::max(1, p.n_threads), p.record_splits};
}

// Per-tree scratch buffers, reused across nodes.
struct Workspace {
    std::vector<int> rows;       // bootstrap row ids, partitioned in place
    std::vector<int> scratch;    // partition buffer
    std::vector<int> feature_pool;
    std::vector<int> candidates;
    std::vector<std::pair<double, double>> sorted;  // (feature value, target)
    std::vector<double> values;
    std::vector<double> prefix;
    std::vector<double> scores;
};

struct NodeTask {
    int node;
    int begin;
    int end;
};

// Grows one tree on a bootstrap sample; columns_ is the column-major feature copy.
class TreeBuilder {
public:
    TreeBuilder(const std::vector<double>& col_major, std::span<const double> y, std::size_t n,
                std::size_t p, const ResolvedParams& rp)
        : columns_(col_major), y_(y), n_(n), p_(p), rp_(rp) {}

    Tree build(std::span<const int> bootstrap_rows, RngStream& rng, Workspace& ws,
               std::vector<SplitRecord>* records, int tree_index) const {
        Tree tree;
        tree.nodes.reserve(2 * bootstrap_rows.size() / rp_.min_leaf + 2);
        ws.rows.assign(bootstrap_rows.begin(), bootstrap_rows.end());

        tree.nodes.emplace_back();
        std::vector<NodeTask> stack;
        stack.push_back({0, 0, static_cast<int>(ws.rows.size())});

        while (!stack.empty()) {
            const NodeTask task = stack.back();
            stack.pop_back();
            process_node(tree, task, rng, ws, records, tree_index, stack);
        }
        return tree;
    }

private:
    const double* column(int j) const { return columns_.data() + static_cast<std::size_t>(j) * n_; }

    void make_leaf(Tree& tree, const NodeTask& task, double sum, double y_lo, double y_hi) const {
        const double m = static_cast<double>(task.end - task.begin);
        double value = sum / m;
        value = std::min(std::max(value, y_lo), y_hi);
        tree.nodes[task.node].value = value;
    }

    void process_node(Tree& tree, const NodeTask& task, RngStream& rng, Workspace& ws,
                      std::vector<SplitRecord>* records, int tree_index,
                      std::vector<NodeTask>& stack) const {
        const int m = task.end - task.begin;
        double sum = 0.0;
        double y_lo = std::numeric_limits<double>::infinity();
        double y_hi = -y_lo;
        for (int r = task.begin; r < task.end; ++r) {
            const double v = y_[static_cast<std::size_t>(ws.rows[r])];
            sum += v;
            y_lo = std::min(y_lo, v);
            y_hi = std::max(y_hi, v);
        }
        if (m < 2 * rp_.min_leaf || y_lo == y_hi) {
            make_leaf(tree, task, sum, y_lo, y_hi);
            return;
        }

        draw_candidates(rng, ws);

        int best_feature = -1;
        double best_score = kNegInf;
        double best_thr = 0.0;
        for (int j : ws.candidates) {
            const double* col = column(j);
            ws.sorted.resize(static_cast<std::size_t>(m));
            for (int r = 0; r < m; ++r) {
                const int row = ws.rows[task.begin + r];
                ws.sorted[static_cast<std::size_t>(r)] = {col[row],
                                                          y_[static_cast<std::size_t>(row)]};
            }
            std::sort(ws.sorted.begin(), ws.sorted.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            if (ws.sorted.front().first == ws.sorted.back().first) continue;

            ws.values.resize(static_cast<std::size_t>(m));
            ws.prefix.resize(static_cast<std::size_t>(m));
            double acc = 0.0;
            for (int r = 0; r < m; ++r) {
                ws.values[static_cast<std::size_t>(r)] = ws.sorted[static_cast<std::size_t>(r)].first;
                acc += ws.sorted[static_cast<std::size_t>(r)].second;
                ws.prefix[static_cast<std::size_t>(r)] = acc;
            }

            const int lo = rp_.min_leaf - 1;
            const int hi = m - rp_.min_leaf - 1;
            if (hi < lo) continue;
            ws.scores.resize(static_cast<std::size_t>(hi) + 1);
            kernels::SplitScanInput scan{ws.prefix.data(), ws.values.data(), acc, m, lo, hi};
            kernels::split_scores(scan, ws.scores.data());
            const kernels::BestSplit found = kernels::best_split(ws.scores.data(), lo, hi);
            if (found.k >= 0 && found.score > best_score) {
                const double vk = ws.values[static_cast<std::size_t>(found.k)];
                const double vk1 = ws.values[static_cast<std::size_t>(found.k) + 1];
                double thr = 0.5 * (vk + vk1);
                if (!(thr < vk1)) thr = vk;  // keep threshold in [vk, vk1)
                best_feature = j;
                best_score = found.score;
                best_thr = thr;
            }
        }

        if (best_feature < 0) {
            make_leaf(tree, task, sum, y_lo, y_hi);
            return;
        }

        // Partition rows: left = value <= threshold, preserving relative order.
        ws.scratch.resize(static_cast<std::size_t>(m));
        const double* col = column(best_feature);
        int nl = 0;
        int nr = 0;
        for (int r = task.begin; r < task.end; ++r) {
            const int row = ws.rows[r];
            if (col[row] <= best_thr)
                ws.rows[task.begin + nl++] = row;
            else
                ws.scratch[static_cast<std::size_t>(nr++)] = row;
        }
        std::copy(ws.scratch.begin(), ws.scratch.begin() + nr, ws.rows.begin() + task.begin + nl);

        const int left_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const int right_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        TreeNode& node = tree.nodes[task.node];
        node.feature = best_feature;
        node.threshold = best_thr;
        node.left = left_id;
        node.right = right_id;

        if (records) {
            SplitRecord rec;
            rec.tree = tree_index;
            rec.node = task.node;
            rec.candidates = ws.candidates;
            rec.chosen_feature = best_feature;
            rec.threshold = best_thr;
            records->push_back(std::move(rec));
        }

        stack.push_back({right_id, task.begin + nl, task.end});
        stack.push_back({left_id, task.begin, task.begin + nl});
    }

    void draw_candidates(RngStream& rng, Workspace& ws) const {
        ws.feature_pool.resize(p_);
        for (std::size_t j = 0; j < p_; ++j) ws.feature_pool[j] = static_cast<int>(j);
        ws.candidates.clear();
        bool forced_drawn = false;
        for (int d = 0; d < rp_.mtry; ++d) {
            const std::size_t j =
                static_cast<std::size_t>(d) + rng.uniform_index(p_ - static_cast<std::size_t>(d));
            std::swap(ws.feature_pool[static_cast<std::size_t>(d)], ws.feature_pool[j]);
            const int f = ws.feature_pool[static_cast<std::size_t>(d)];
            ws.candidates.push_back(f);
            if (f == rp_.forced_feature) forced_drawn = true;
        }
        if (rp_.forced_feature >= 0 && !forced_drawn) ws.candidates.push_back(rp_.forced_feature);
    }

    const std::vector<double>& columns_;
    std::span<const double> y_;
    std::size_t n_;
    std::size_t p_;
    const ResolvedParams& rp_;
};

}  // namespace

double tree_leaf_value(const Tree& tree, const double* x) {
    const TreeNode* nodes = tree.nodes.data();
    int id = 0;
    while (nodes[id].feature >= 0)
        id = x[nodes[id].feature] <= nodes[id].threshold ? nodes[id].left : nodes[id].right;
    return nodes[id].value;
}

ForestModel fit(const Matrix& features, std::span<const double> targets,
                const ForestParams& params, std::uint64_t seed) {
    const ResolvedParams rp = validate(features, targets, params);
    const std::size_t n = features.rows();
    const std::size_t p = features.cols();

    // Column-major copy: split search gathers one feature across node rows.
    std::vector<double> col_major(n * p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) col_major[j * n + i] = features(i, j);

    ForestModel model;
    model.n_features_ = static_cast<int>(p);
    model.n_train_ = static_cast<int>(n);
    model.y_min_ = *std::min_element(targets.begin(), targets.end());
    model.y_max_ = *std::max_element(targets.begin(), targets.end());
    model.trees_.resize(static_cast<std::size_t>(rp.n_trees));
    model.inbag_.resize(static_cast<std::size_t>(rp.n_trees));

    std::optional<WeightedIndexSampler> weighted;
    if (!params.case_weights.empty()) weighted.emplace(params.case_weights);

    const TreeBuilder builder(col_major, targets, n, p, rp);
    std::vector<std::vector<SplitRecord>> records(
        rp.record_splits ? static_cast<std::size_t>(rp.n_trees) : 0);

    const int fit_threads = rp.n_threads;
    std::vector<Workspace> workspaces(static_cast<std::size_t>(std::max(1, fit_threads)));
    std::mutex ws_mutex;
    std::vector<Workspace*> free_ws;
    for (auto& w : workspaces) free_ws.push_back(&w);

    parallel_for(static_cast<std::size_t>(rp.n_trees), fit_threads, [&](std::size_t t) {
        Workspace* ws = nullptr;
        {
            std::lock_guard<std::mutex> lock(ws_mutex);
            ws = free_ws.back();
            free_ws.pop_back();
        }
        RngStream rng(chain(seed, t));
        auto& inbag = model.inbag_[t];
        inbag.assign(n, 0);
        std::vector<int> rows(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t pick = weighted ? weighted->draw(rng) : rng.uniform_index(n);
            rows[i] = static_cast<int>(pick);
            if (inbag[pick] < 255) ++inbag[pick];
        }
        model.trees_[t] = builder.build(rows, rng, *ws,
                                        rp.record_splits ? &records[t] : nullptr,
                                        static_cast<int>(t));
        {
            std::lock_guard<std::mutex> lock(ws_mutex);
            free_ws.push_back(ws);
        }
    });

    if (rp.record_splits) {
        for (auto& r : records)
            model.split_records_.insert(model.split_records_.end(), r.begin(), r.end());
    }

    // OOB and full-forest sums accumulated in tree order: independent of the
    // fitting schedule above.
    std::vector<double> oob_sum(n, 0.0);
    std::vector<int> oob_cnt(n, 0);
    std::vector<double> full_sum(n, 0.0);
    for (std::size_t t = 0; t < model.trees_.size(); ++t) {
        const Tree& tree = model.trees_[t];
        const auto& inbag = model.inbag_[t];
        for (std::size_t i = 0; i < n; ++i) {
            const double leaf = tree_leaf_value(tree, features.row(i).data());
            full_sum[i] += leaf;
            if (inbag[i] == 0) {
                oob_sum[i] += leaf;
                ++oob_cnt[i];
            }
        }
    }
    model.oob_.values.resize(n);
    model.oob_.valid.assign(n, 1);
    const double t_count = static_cast<double>(rp.n_trees);
    for (std::size_t i = 0; i < n; ++i) {
        double v;
        if (oob_cnt[i] > 0) {
            v = oob_sum[i] / static_cast<double>(oob_cnt[i]);
        } else {
            v = full_sum[i] / t_count;
            model.oob_.valid[i] = 0;
            ++model.oob_.fallback_count;
        }
        model.oob_.values[i] = std::min(std::max(v, model.y_min_), model.y_max_);
    }
    return model;
}

std::vector<double> predict(const ForestModel& model, const Matrix& features) {
    if (features.cols() != static_cast<std::size_t>(model.n_features()) && features.rows() > 0)
        throw InvalidInput("forest::predict: feature count differs from training");
    const std::size_t m = features.rows();
    std::vector<double> sums(m, 0.0);
    for (const Tree& tree : model.trees()) {
        for (std::size_t i = 0; i < m; ++i)
            sums[i] += tree_leaf_value(tree, features.row(i).data());
    }
    const double t_count = static_cast<double>(model.trees().size());
    const auto [lo, hi] = model.training_range();
    for (double& s : sums) s = std::min(std::max(s / t_count, lo), hi);
    return sums;
}

double predict_row(const ForestModel& model, std::span<const double> x) {
    if (x.size() != static_cast<std::size_t>(model.n_features()))
        throw InvalidInput("forest::predict_row: feature count differs from training");
    double sum = 0.0;
    for (const Tree& tree : model.trees()) sum += tree_leaf_value(tree, x.data());
    const auto [lo, hi] = model.training_range();
    return std::min(std::max(sum / static_cast<double>(model.trees().size()), lo), hi);
}

const OobPredictions& predict_oob(const ForestModel& model) { return model.oob(); }

}  // namespace hte::forest
