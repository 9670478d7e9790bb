#include "hte/metrics.hpp"

#include <cmath>

#include "hte/kernels.hpp"

namespace hte::metrics {

namespace {

// Population-variance and mean of a span.
struct MeanVar {
    double mean = 0.0;
    double var = 0.0;
};

MeanVar mean_var(std::span<const double> v) {
    MeanVar out;
    const double n = static_cast<double>(v.size());
    double s = 0.0;
    double lo = v.front();
    double hi = v.front();
    for (double x : v) {
        s += x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    out.mean = s / n;
    if (lo == hi) {  // constant series: variance is exactly zero
        out.mean = lo;
        out.var = 0.0;
        return out;
    }
    double m2 = 0.0;
    for (double x : v) {
        const double d = x - out.mean;
        m2 += d * d;
    }
    out.var = m2 / n;
    return out;
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

double jarque_bera(std::span<const double> sample, bool* degenerate) {
    if (degenerate) *degenerate = false;
    const std::size_t n = sample.size();
    if (n < 2) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    const double r = static_cast<double>(n);
    double s = 0.0;
    for (double x : sample) s += x;
    const double mean = s / r;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : sample) {
        const double d = x - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= r;
    m3 /= r;
    m4 /= r;
    if (m2 <= 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    const double skew = m3 / (m2 * std::sqrt(m2));
    const double kurt = m4 / (m2 * m2);
    const double excess = kurt - 3.0;
    return r / 6.0 * (skew * skew + 0.25 * excess * excess);
}

PerObsMetrics per_obs_metrics(const PredictionPanel& panel) {
    panel.validate();
    const auto n_reps = static_cast<int>(panel.n_reps());
    const auto n_obs = static_cast<int>(panel.n_obs());
    if (n_reps < 2) throw InsufficientReplications("per_obs_metrics: need at least 2 replications");
    if (n_obs < 1) throw InvalidInput("per_obs_metrics: empty panel");

    const auto m = static_cast<std::size_t>(n_obs);
    std::vector<double> mean(m), m2(m), m3(m), m4(m), sq(m), err(m), ab(m);
    kernels::PanelSums sums{mean.data(), m2.data(), m3.data(), m4.data(),
                            sq.data(),   err.data(), ab.data()};
    kernels::panel_moment_sums(panel.preds.data(), panel.truth.data(), n_reps, n_obs, sums);

    PerObsMetrics out;
    out.n_reps = n_reps;
    out.rmse.resize(m);
    out.abs_bias.resize(m);
    out.bias.resize(m);
    out.sd.resize(m);
    out.skew.resize(m);
    out.kurt.resize(m);
    out.jb.resize(m);
    out.degenerate.assign(m, 0);

    const double r = static_cast<double>(n_reps);
    for (std::size_t i = 0; i < m; ++i) {
        out.rmse[i] = std::sqrt(sq[i] / r);
        out.abs_bias[i] = ab[i] / r;
        out.bias[i] = err[i] / r;
        const double v2 = m2[i] / r;
        out.sd[i] = std::sqrt(v2);
        if (v2 <= 0.0) {
            // Constant predictions across replications: the standardized
            // moments are undefined; report the Gaussian reference values
            // with JB = 0 and flag the cell.
            out.skew[i] = 0.0;
            out.kurt[i] = 3.0;
            out.jb[i] = 0.0;
            out.degenerate[i] = 1;
            continue;
        }
        const double v3 = m3[i] / r;
        const double v4 = m4[i] / r;
        out.skew[i] = v3 / (v2 * std::sqrt(v2));
        out.kurt[i] = v4 / (v2 * v2);
        const double excess = out.kurt[i] - 3.0;
        out.jb[i] = r / 6.0 * (out.skew[i] * out.skew[i] + 0.25 * excess * excess);
    }
    return out;
}

MetricsSummary aggregate(const PerObsMetrics& rows, const PredictionPanel& panel) {
    if (rows.rmse.empty()) throw InvalidInput("aggregate: empty per-observation rows");
    const std::size_t m = rows.rmse.size();
    const std::size_t n_reps = panel.n_reps();
    if (panel.n_obs() != m) throw InvalidInput("aggregate: panel/rows mismatch");

    MetricsSummary out;
    out.n_replications = rows.n_reps;
    out.n_observations = static_cast<int>(m);
    out.rmse_mean = mean_of(rows.rmse);
    out.abs_bias_mean = mean_of(rows.abs_bias);
    out.bias_mean = mean_of(rows.bias);
    out.sd_mean = mean_of(rows.sd);
    out.skew_mean = mean_of(rows.skew);
    out.kurt_mean = mean_of(rows.kurt);
    out.jb_mean = mean_of(rows.jb);
    int rejected = 0;
    for (double jb : rows.jb)
        if (jb > kJbCritical5) ++rejected;
    out.jb_reject_share = static_cast<double>(rejected) / static_cast<double>(m);
    for (auto flag : rows.degenerate) out.degenerate_cells += flag;

    // Replication-level measures.
    const MeanVar truth_mv = mean_var(panel.truth);
    double se_acc = 0.0;
    double corr_acc = 0.0;
    std::size_t corr_reps = 0;
    double varr_acc = 0.0;
    for (std::size_t r = 0; r < n_reps; ++r) {
        const auto pred = panel.preds.row(r);
        double mse_r = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double e = panel.truth[i] - pred[i];
            mse_r += e * e;
        }
        mse_r /= static_cast<double>(m);
        const double dev = mse_r - out.rmse_mean;  // the displayed form mixes
        se_acc += dev * dev;                       // MSE and RMSE units; kept as defined
        if (truth_mv.var > 0.0) {
            const MeanVar pred_mv = mean_var(pred);
            varr_acc += pred_mv.var / truth_mv.var;
            if (pred_mv.var > 0.0) {
                double cov = 0.0;
                for (std::size_t i = 0; i < m; ++i)
                    cov += (panel.truth[i] - truth_mv.mean) * (pred[i] - pred_mv.mean);
                cov /= static_cast<double>(m);
                corr_acc += cov / std::sqrt(truth_mv.var * pred_mv.var);
                ++corr_reps;
            }
        }
    }
    out.se_rmse = std::sqrt(se_acc / static_cast<double>(n_reps));
    if (truth_mv.var > 0.0) {
        out.varr = varr_acc / static_cast<double>(n_reps);
        if (corr_reps > 0) out.corr = corr_acc / static_cast<double>(corr_reps);
    }
    return out;
}

}  // namespace hte::metrics
