#include "hte/rng.hpp"

#include <algorithm>
#include <numeric>

#include "hte/common.hpp"

namespace hte {

std::vector<int> RngStream::sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw InvalidInput("sample_without_replacement: k > n");
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<int> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + uniform_index(n - i);
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

WeightedIndexSampler::WeightedIndexSampler(std::span<const double> weights) {
    if (weights.empty()) throw InvalidInput("WeightedIndexSampler: empty weights");
    cumulative_.resize(weights.size());
    double acc = 0.0;
    bool any_positive = false;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double w = weights[i];
        if (!(w >= 0.0)) throw InvalidInput("WeightedIndexSampler: negative or NaN weight");
        if (w > 0.0) any_positive = true;
        acc += w;
        cumulative_[i] = acc;
    }
    if (!any_positive) throw InvalidInput("WeightedIndexSampler: all weights zero");
}

std::size_t WeightedIndexSampler::draw(RngStream& rng) const {
    const double target = rng.uniform01() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    const auto idx = static_cast<std::size_t>(it - cumulative_.begin());
    return idx < cumulative_.size() ? idx : cumulative_.size() - 1;
}

}  // namespace hte
