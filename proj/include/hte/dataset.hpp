#pragma once

#include <cstdint>
#include <vector>

#include "hte/common.hpp"

namespace hte {

// The observable triple (X, W, Y).
struct ObservedDataset {
    Matrix X;                   // n x p covariates
    std::vector<int> W;         // treatment indicators in {0,1}
    std::vector<double> Y;      // outcomes

    std::size_t n() const { return X.rows(); }
    std::size_t p() const { return X.cols(); }

    void validate() const {
        if (W.size() != n() || Y.size() != n())
            throw InvalidInput("ObservedDataset: column length mismatch");
        for (int w : W)
            if (w != 0 && w != 1) throw InvalidInput("ObservedDataset: W must be 0/1");
        if (!X.all_finite() || !all_finite(Y))
            throw InvalidInput("ObservedDataset: non-finite value");
    }

    std::size_t n_treated() const {
        std::size_t k = 0;
        for (int w : W) k += static_cast<std::size_t>(w);
        return k;
    }

    ObservedDataset take_rows(std::span<const int> idx) const {
        ObservedDataset out;
        out.X = X.take_rows(idx);
        out.W = take<int>(W, idx);
        out.Y = take<double>(Y, idx);
        return out;
    }

    // Content hash; used by the fairness check that all learners in one
    // replication saw the same draw.
    std::uint64_t content_hash() const {
        std::uint64_t h = fnv1a(X.data(), X.rows() * X.cols() * sizeof(double));
        h = fnv1a(W.data(), W.size() * sizeof(int), h);
        h = fnv1a(Y.data(), Y.size() * sizeof(double), h);
        return h;
    }
};

// Observed triple plus simulation ground truth.
struct SimulatedDataset {
    ObservedDataset observed;
    std::vector<double> Y0;        // potential outcome under control
    std::vector<double> Y1;        // potential outcome under treatment
    std::vector<double> tau_true;  // CATE at each row
    std::vector<double> e_true;    // true propensity; empty when unknown
    int redraw_count = 0;          // sample redraws forced by the treated-share guard

    std::size_t n() const { return observed.n(); }

    SimulatedDataset take_rows(std::span<const int> idx) const {
        SimulatedDataset out;
        out.observed = observed.take_rows(idx);
        if (!Y0.empty()) out.Y0 = take<double>(Y0, idx);
        if (!Y1.empty()) out.Y1 = take<double>(Y1, idx);
        if (!tau_true.empty()) out.tau_true = take<double>(tau_true, idx);
        if (!e_true.empty()) out.e_true = take<double>(e_true, idx);
        return out;
    }
};

}  // namespace hte
