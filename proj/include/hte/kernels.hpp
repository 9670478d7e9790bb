#pragma once

#include <cstddef>
#include <string>

namespace hte::kernels {

// ============================================================================
// Hot numeric inner loops, provided as a scalar reference implementation and
// an AVX2 variant selected at runtime. Both variants perform the same IEEE
// operations per output element in the same order, so results are
// bit-identical; the equivalence tests assert that.
// ============================================================================

enum class Isa { scalar, avx2 };

Isa active_isa();
void set_isa(Isa isa);          // test hook; also settable via HTE_SIMD=scalar|avx2
bool avx2_supported();
std::string isa_name(Isa isa);

// ----------------------------------------------------------------------------
// CART split scoring.
//
// Given node targets sorted by a candidate feature, prefix[k] = y(0)+...+y(k),
// the score of splitting after position k (left = 0..k, right = k+1..m-1) is
//
//     score(k) = prefix[k]^2/(k+1) + (total - prefix[k])^2/(m-k-1)
//
// which is variance reduction up to a constant shift. Positions where the
// sorted feature value does not strictly increase are not splittable and
// score -inf. Scores are written for k in [lo, hi] (inclusive); the caller
// owns the buffer, indexed by absolute k.
// ----------------------------------------------------------------------------
struct SplitScanInput {
    const double* prefix;         // length >= hi+1
    const double* sorted_values;  // length >= hi+2
    double total;                 // sum of all m node targets
    int m;                        // node size
    int lo;                       // first candidate k (inclusive)
    int hi;                       // last candidate k (inclusive)
};

void split_scores(const SplitScanInput& in, double* scores);

struct BestSplit {
    int k = -1;            // -1 when no splittable position exists
    double score = 0.0;
};

// First maximum wins; -inf entries are skipped. Shared scalar pass.
BestSplit best_split(const double* scores, int lo, int hi);

// ----------------------------------------------------------------------------
// Per-observation panel moment sums.
//
// preds is R x m row-major (replication-major). For each observation column i
// the kernel accumulates, in replication order,
//   sum_p   = sum_r preds[r][i]
// then with mean = sum_p / R and d = preds[r][i] - mean, e = truth[i] - preds[r][i]:
//   m2 += d*d, m3 += (d*d)*d, m4 += (d*d)*(d*d)
//   sq_err += e*e, err += e, abs_err += |e|
// Raw sums are returned; divisor conventions live in the metrics module.
// The AVX2 variant vectorizes across observations, keeping per-observation
// accumulation order identical to the scalar loop.
// ----------------------------------------------------------------------------
struct PanelSums {
    double* mean;     // length m
    double* m2;
    double* m3;
    double* m4;
    double* sq_err;
    double* err;
    double* abs_err;
};

void panel_moment_sums(const double* preds, const double* truth, int n_reps, int n_obs,
                       const PanelSums& out);

// Scalar reference entry points (ignore the active ISA); used by the
// equivalence tests and by the AVX2 kernels for loop tails.
void split_scores_scalar(const SplitScanInput& in, double* scores);
void panel_moment_sums_scalar(const double* preds, const double* truth, int n_reps, int n_obs,
                              const PanelSums& out);

#if defined(__x86_64__) || defined(_M_X64)
void split_scores_avx2(const SplitScanInput& in, double* scores);
void panel_moment_sums_avx2(const double* preds, const double* truth, int n_reps, int n_obs,
                            const PanelSums& out);
#endif

namespace detail {
// Scalar moment loop over n_obs columns of a panel whose rows are `stride`
// doubles apart; shared by the reference path and the AVX2 tail.
void panel_moment_sums_stride(const double* preds, const double* truth, int n_reps, int n_obs,
                              std::size_t stride, const PanelSums& out);
}  // namespace detail

}  // namespace hte::kernels
