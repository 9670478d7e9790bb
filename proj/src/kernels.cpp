#include "hte/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

namespace hte::kernels {

namespace {

Isa detect_default_isa() {
    if (const char* env = std::getenv("HTE_SIMD")) {
        const std::string v(env);
        if (v == "scalar") return Isa::scalar;
        if (v == "avx2" && avx2_supported()) return Isa::avx2;
        if (v == "auto") { /* fall through */ }
    }
    return avx2_supported() ? Isa::avx2 : Isa::scalar;
}

Isa& isa_state() {
    static Isa isa = detect_default_isa();
    return isa;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

Isa active_isa() { return isa_state(); }

void set_isa(Isa isa) {
    if (isa == Isa::avx2 && !avx2_supported()) isa = Isa::scalar;
    isa_state() = isa;
}

std::string isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void split_scores_scalar(const SplitScanInput& in, double* scores) {
    const double total = in.total;
    const double m = static_cast<double>(in.m);
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    for (int k = in.lo; k <= in.hi; ++k) {
        if (in.sorted_values[k] < in.sorted_values[k + 1]) {
            const double left = in.prefix[k];
            const double right = total - left;
            const double nl = static_cast<double>(k) + 1.0;
            const double nr = m - nl;
            scores[k] = left * left / nl + right * right / nr;
        } else {
            scores[k] = ninf;
        }
    }
}

BestSplit best_split(const double* scores, int lo, int hi) {
    BestSplit best;
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    double top = ninf;
    for (int k = lo; k <= hi; ++k) {
        if (scores[k] > top) {
            top = scores[k];
            best.k = k;
            best.score = top;
        }
    }
    return best;
}

void panel_moment_sums_scalar(const double* preds, const double* truth, int n_reps, int n_obs,
                              const PanelSums& out) {
    detail::panel_moment_sums_stride(preds, truth, n_reps, n_obs,
                                     static_cast<std::size_t>(n_obs), out);
}

void detail::panel_moment_sums_stride(const double* preds, const double* truth, int n_reps,
                                      int n_obs, std::size_t m, const PanelSums& out) {
    for (int i = 0; i < n_obs; ++i) {
        double s = 0.0;
        for (int r = 0; r < n_reps; ++r) s += preds[static_cast<std::size_t>(r) * m + i];
        const double mean = s / static_cast<double>(n_reps);
        double m2 = 0.0, m3 = 0.0, m4 = 0.0;
        double sq = 0.0, err = 0.0, ab = 0.0;
        const double t = truth[i];
        for (int r = 0; r < n_reps; ++r) {
            const double p = preds[static_cast<std::size_t>(r) * m + i];
            const double d = p - mean;
            const double d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
            const double e = t - p;
            sq += e * e;
            err += e;
            ab += std::fabs(e);
        }
        out.mean[i] = mean;
        out.m2[i] = m2;
        out.m3[i] = m3;
        out.m4[i] = m4;
        out.sq_err[i] = sq;
        out.err[i] = err;
        out.abs_err[i] = ab;
    }
}

void split_scores(const SplitScanInput& in, double* scores) {
    if (in.hi < in.lo) return;
#if defined(__x86_64__) || defined(_M_X64)
    if (active_isa() == Isa::avx2) {
        split_scores_avx2(in, scores);
        return;
    }
#endif
    split_scores_scalar(in, scores);
}

void panel_moment_sums(const double* preds, const double* truth, int n_reps, int n_obs,
                       const PanelSums& out) {
    if (n_obs <= 0) return;
#if defined(__x86_64__) || defined(_M_X64)
    if (active_isa() == Isa::avx2) {
        panel_moment_sums_avx2(preds, truth, n_reps, n_obs, out);
        return;
    }
#endif
    panel_moment_sums_scalar(preds, truth, n_reps, n_obs, out);
}

}  // namespace hte::kernels
