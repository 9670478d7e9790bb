#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hte/common.hpp"
#include "hte/dataset.hpp"
#include "hte/rng.hpp"

namespace hte::dgp {

// ============================================================================
// Synthetic designs 1-6 and the semi-synthetic harness.
//
// Common structure: correlated-uniform covariates (Gaussian copula over a
// random correlation matrix), Friedman response under control, beta-density
// propensity, unit-variance Gaussian noise on both potential outcomes.
// ============================================================================

enum class CateKind { zero, disjoint, const1, indicator, linear, sigmoid };

struct SimulationDesign {
    int design_id = 1;
    double alpha = 0.25;  // propensity scale; bounds e(x) inside (0,1)
    int p = 100;
    int p_mu = 5;
    int p_e = 4;
    int p_tau = 0;
    CateKind cate_kind = CateKind::zero;
    double noise_sd = 1.0;

    // The six standard parameterizations; throws InvalidInput otherwise.
    static SimulationDesign standard(int design_id);
};

struct DgpOptions {
    // Fresh correlation matrix per dataset draw by default; point at a fixed
    // one to share a single draw across replications.
    const Matrix* sigma = nullptr;
    int redraw_cap = 100;
    double min_treated_share = 0.15;  // treated-share guard (design 3)
};

// Uniform over the space of correlation matrices (extended onion construction).
Matrix random_correlation_matrix(int p, RngStream& rng);

// Gaussian-copula draw with uniform marginals on [0,1] whose Pearson
// correlations match sigma; the latent normal uses 2*sin(pi*r/6) moment
// correction. pd_fallbacks counts nearest-PD projections of the corrected
// matrix (logged upstream).
Matrix draw_covariates(int n, int p, const Matrix& sigma, RngStream& rng,
                       int* pd_fallbacks = nullptr);

double mu0_friedman(std::span<const double> x);
double propensity(std::span<const double> x, double alpha);
double cate_true(const SimulationDesign& design, std::span<const double> x);

SimulatedDataset generate_dataset(const SimulationDesign& design, int n, RngStream& rng,
                                  const DgpOptions& opts = {});

// ----------------------------------------------------------------------------
// Semi-synthetic harness: delimiter-separated file with known CATE formula,
// augmented with correlated-uniform noise covariates.
// ----------------------------------------------------------------------------

// Maps dataset roles (Y, W, S3, C1, C2, C3, XC, X1..X5) to header names.
class ColumnMap {
public:
    static ColumnMap defaults();
    static ColumnMap load(const std::string& path);

    const std::string& header_for(const std::string& role) const;
    void set(const std::string& role, const std::string& header);
    static const std::vector<std::string>& roles();

private:
    std::map<std::string, std::string> role_to_header_;
};

double semisynthetic_cate(double x1, double x2, int c1);

SimulatedDataset load_semisynthetic(const std::string& path, RngStream& rng,
                                    const ColumnMap& columns = ColumnMap::defaults(),
                                    int augment_p = 90);

// ----------------------------------------------------------------------------
// Training/validation sampling for dataset-backed experiments.
// ----------------------------------------------------------------------------

std::vector<int> draw_validation_indices(std::size_t n_total, std::size_t n_validation,
                                         RngStream& rng);
std::vector<int> draw_training_indices(std::size_t n_total, std::span<const int> validation,
                                       std::size_t n_train, RngStream& rng);

// One-shot form: validation drawn first, then a training sample from the rest.
std::pair<SimulatedDataset, SimulatedDataset> sample_training(const SimulatedDataset& data,
                                                              std::size_t n_train,
                                                              std::size_t n_validation,
                                                              RngStream& rng);

}  // namespace hte::dgp
