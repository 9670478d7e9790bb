// AVX2 variants of the hot kernels. Compiled with -mavx2; only executed after
// the runtime dispatch checked cpu support. Element-wise operation order
// matches the scalar reference exactly, so outputs are bit-identical.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <limits>

#include "hte/kernels.hpp"

namespace hte::kernels {

void split_scores_avx2(const SplitScanInput& in, double* scores) {
    const __m256d total = _mm256_set1_pd(in.total);
    const __m256d m_vec = _mm256_set1_pd(static_cast<double>(in.m));
    const __m256d ninf = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
    const __m256d four = _mm256_set1_pd(4.0);

    const double lo_d = static_cast<double>(in.lo);
    __m256d n_left = _mm256_setr_pd(lo_d + 1.0, lo_d + 2.0, lo_d + 3.0, lo_d + 4.0);

    int k = in.lo;
    for (; k + 3 <= in.hi; k += 4) {
        const __m256d left = _mm256_loadu_pd(in.prefix + k);
        const __m256d right = _mm256_sub_pd(total, left);
        const __m256d n_right = _mm256_sub_pd(m_vec, n_left);
        const __m256d score =
            _mm256_add_pd(_mm256_div_pd(_mm256_mul_pd(left, left), n_left),
                          _mm256_div_pd(_mm256_mul_pd(right, right), n_right));
        const __m256d v0 = _mm256_loadu_pd(in.sorted_values + k);
        const __m256d v1 = _mm256_loadu_pd(in.sorted_values + k + 1);
        const __m256d splittable = _mm256_cmp_pd(v0, v1, _CMP_LT_OQ);
        _mm256_storeu_pd(scores + k, _mm256_blendv_pd(ninf, score, splittable));
        n_left = _mm256_add_pd(n_left, four);
    }
    if (k <= in.hi) {
        SplitScanInput tail = in;
        tail.lo = k;
        split_scores_scalar(tail, scores);
    }
}

void panel_moment_sums_avx2(const double* preds, const double* truth, int n_reps, int n_obs,
                            const PanelSums& out) {
    const auto m = static_cast<std::size_t>(n_obs);
    const __m256d r_count = _mm256_set1_pd(static_cast<double>(n_reps));
    const __m256d sign_mask = _mm256_set1_pd(-0.0);

    int i = 0;
    for (; i + 3 < n_obs; i += 4) {
        __m256d s = _mm256_setzero_pd();
        for (int r = 0; r < n_reps; ++r)
            s = _mm256_add_pd(s, _mm256_loadu_pd(preds + static_cast<std::size_t>(r) * m + i));
        const __m256d mean = _mm256_div_pd(s, r_count);

        __m256d m2 = _mm256_setzero_pd();
        __m256d m3 = _mm256_setzero_pd();
        __m256d m4 = _mm256_setzero_pd();
        __m256d sq = _mm256_setzero_pd();
        __m256d err = _mm256_setzero_pd();
        __m256d ab = _mm256_setzero_pd();
        const __m256d t = _mm256_loadu_pd(truth + i);
        for (int r = 0; r < n_reps; ++r) {
            const __m256d p = _mm256_loadu_pd(preds + static_cast<std::size_t>(r) * m + i);
            const __m256d d = _mm256_sub_pd(p, mean);
            const __m256d d2 = _mm256_mul_pd(d, d);
            m2 = _mm256_add_pd(m2, d2);
            m3 = _mm256_add_pd(m3, _mm256_mul_pd(d2, d));
            m4 = _mm256_add_pd(m4, _mm256_mul_pd(d2, d2));
            const __m256d e = _mm256_sub_pd(t, p);
            sq = _mm256_add_pd(sq, _mm256_mul_pd(e, e));
            err = _mm256_add_pd(err, e);
            ab = _mm256_add_pd(ab, _mm256_andnot_pd(sign_mask, e));
        }
        _mm256_storeu_pd(out.mean + i, mean);
        _mm256_storeu_pd(out.m2 + i, m2);
        _mm256_storeu_pd(out.m3 + i, m3);
        _mm256_storeu_pd(out.m4 + i, m4);
        _mm256_storeu_pd(out.sq_err + i, sq);
        _mm256_storeu_pd(out.err + i, err);
        _mm256_storeu_pd(out.abs_err + i, ab);
    }
    if (i < n_obs) {
        PanelSums tail{out.mean + i,   out.m2 + i,  out.m3 + i,      out.m4 + i,
                       out.sq_err + i, out.err + i, out.abs_err + i};
        detail::panel_moment_sums_stride(preds + i, truth + i, n_reps, n_obs - i, m, tail);
    }
}

}  // namespace hte::kernels

#endif  // x86_64
