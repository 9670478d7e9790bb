#include "hte/dgp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hte::dgp {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
    return out;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

SimulationDesign SimulationDesign::standard(int design_id) {
    SimulationDesign d;
    d.design_id = design_id;
    switch (design_id) {
        case 1:
            d.alpha = 1.0 / 4.0;
            d.p_tau = 0;
            d.cate_kind = CateKind::zero;
            break;
        case 2:
            d.alpha = 1.0 / 4.0;
            d.p_tau = 5;  // inherits the control response's signal set
            d.cate_kind = CateKind::disjoint;
            break;
        case 3:
            d.alpha = 1.0 / 12.0;
            d.p_tau = 0;
            d.cate_kind = CateKind::const1;
            break;
        case 4:
            d.alpha = 1.0 / 8.0;
            d.p_tau = 1;
            d.cate_kind = CateKind::indicator;
            break;
        case 5:
            d.alpha = 1.0 / 8.0;
            d.p_tau = 2;
            d.cate_kind = CateKind::linear;
            break;
        case 6:
            d.alpha = 1.0 / 8.0;
            d.p_tau = 3;
            d.cate_kind = CateKind::sigmoid;
            break;
        default:
            throw InvalidInput("SimulationDesign: unknown design id " + std::to_string(design_id));
    }
    return d;
}

Matrix random_correlation_matrix(int p, RngStream& rng) {
    if (p < 1) throw InvalidInput("random_correlation_matrix: p must be >= 1");
    Matrix corr(static_cast<std::size_t>(p), static_cast<std::size_t>(p), 0.0);
    for (int i = 0; i < p; ++i) corr(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) = 1.0;
    if (p == 1) return corr;

    // Extended onion construction, uniform over the elliptope.
    double beta = 1.0 + (static_cast<double>(p) - 2.0) / 2.0;
    Eigen::MatrixXd R(2, 2);
    const double r12 = 2.0 * rng.beta(beta, beta) - 1.0;
    R << 1.0, r12, r12, 1.0;

    for (int k = 2; k < p; ++k) {
        beta -= 0.5;
        const double y = rng.beta(static_cast<double>(k) / 2.0, beta);

        Eigen::VectorXd u(k);
        double norm_sq = 0.0;
        do {
            for (int i = 0; i < k; ++i) u(i) = rng.normal();
            norm_sq = u.squaredNorm();
        } while (norm_sq == 0.0);
        u /= std::sqrt(norm_sq);

        const Eigen::VectorXd w = std::sqrt(y) * u;
        Eigen::LLT<Eigen::MatrixXd> llt(R);
        const Eigen::VectorXd q = llt.matrixL() * w;

        Eigen::MatrixXd next(k + 1, k + 1);
        next.topLeftCorner(k, k) = R;
        next.topRightCorner(k, 1) = q;
        next.bottomLeftCorner(1, k) = q.transpose();
        next(k, k) = 1.0;
        R = std::move(next);
    }

    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            corr(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
                i == j ? 1.0 : R(i, j);
    return corr;
}

Matrix draw_covariates(int n, int p, const Matrix& sigma, RngStream& rng, int* pd_fallbacks) {
    if (n < 0 || p < 1) throw InvalidInput("draw_covariates: bad dimensions");
    if (sigma.rows() != static_cast<std::size_t>(p) || sigma.cols() != static_cast<std::size_t>(p))
        throw InvalidInput("draw_covariates: sigma dimension mismatch");

    // Latent normal correlation that yields the target Pearson correlation
    // for uniform marginals.
    Eigen::MatrixXd latent(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            latent(i, j) = i == j ? 1.0
                                  : 2.0 * std::sin(kPi *
                                                   sigma(static_cast<std::size_t>(i),
                                                         static_cast<std::size_t>(j)) /
                                                   6.0);

    Eigen::LLT<Eigen::MatrixXd> llt(latent);
    Eigen::MatrixXd chol;
    if (llt.info() == Eigen::Success) {
        chol = llt.matrixL();
    } else {
        // Nearest-PD projection: clamp the spectrum, rescale to unit diagonal.
        if (pd_fallbacks) ++(*pd_fallbacks);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(latent);
        Eigen::VectorXd vals = es.eigenvalues().cwiseMax(1e-10);
        Eigen::MatrixXd fixed = es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
        const Eigen::VectorXd d = fixed.diagonal().cwiseSqrt().cwiseInverse();
        fixed = d.asDiagonal() * fixed * d.asDiagonal();
        Eigen::LLT<Eigen::MatrixXd> llt2(fixed);
        if (llt2.info() != Eigen::Success)
            throw InvalidInput("draw_covariates: correlation matrix not repairable");
        chol = llt2.matrixL();
    }

    Matrix X(static_cast<std::size_t>(n), static_cast<std::size_t>(p));
    Eigen::VectorXd g(p);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) g(j) = rng.normal();
        const Eigen::VectorXd z = chol * g;
        for (int j = 0; j < p; ++j)
            X(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = normal_cdf(z(j));
    }
    return X;
}

double mu0_friedman(std::span<const double> x) {
    if (x.size() < 5) throw InvalidInput("mu0_friedman: needs at least 5 covariates");
    return std::sin(kPi * x[0] * x[1]) + 2.0 * (x[2] - 0.5) * (x[2] - 0.5) + x[3] + 0.5 * x[4];
}

double propensity(std::span<const double> x, double alpha) {
    if (x.size() < 4) throw InvalidInput("propensity: needs at least 4 covariates");
    const double u = std::sin(kPi * x[0] * x[1] * x[2] * x[3]);
    const double density = 20.0 * u * (1.0 - u) * (1.0 - u) * (1.0 - u);  // Beta(2,4) pdf
    return alpha * (1.0 + density);
}

double cate_true(const SimulationDesign& design, std::span<const double> x) {
    switch (design.cate_kind) {
        case CateKind::zero:
            return 0.0;
        case CateKind::disjoint:
            return 1.0 - mu0_friedman(x);
        case CateKind::const1:
            return 1.0;
        case CateKind::indicator:
            return 1.0 + (x[0] > 0.5 ? 1.0 : 0.0);
        case CateKind::linear:
            return 1.0 + 0.5 * x[0] + 0.5 * x[1];
        case CateKind::sigmoid: {
            double s = 0.0;
            for (int j = 0; j < 3; ++j) s += logistic(12.0 * (x[static_cast<std::size_t>(j)] - 0.5)) - 0.5;
            return 1.0 + (4.0 / 3.0) * s;
        }
    }
    throw InvalidInput("cate_true: unknown design");
}

SimulatedDataset generate_dataset(const SimulationDesign& design, int n, RngStream& rng,
                                  const DgpOptions& opts) {
    if (n < 1) throw InvalidInput("generate_dataset: n must be >= 1");
    const bool guard_share = design.design_id == 3;

    SimulatedDataset out;
    for (int attempt = 0;; ++attempt) {
        if (attempt > opts.redraw_cap)
            throw GenerationStalled("generate_dataset: treated-share guard exceeded " +
                                    std::to_string(opts.redraw_cap) + " redraws");

        Matrix sigma_local;
        const Matrix* sigma = opts.sigma;
        if (!sigma) {
            sigma_local = random_correlation_matrix(design.p, rng);
            sigma = &sigma_local;
        }
        Matrix X = draw_covariates(n, design.p, *sigma, rng);

        const auto un = static_cast<std::size_t>(n);
        std::vector<double> tau(un), e(un), y0(un), y1(un), y(un);
        std::vector<int> w(un);
        std::size_t treated = 0;
        for (std::size_t i = 0; i < un; ++i) {
            const auto row = X.row(i);
            const double m0 = mu0_friedman(row);
            double t;
            double m1;
            if (design.cate_kind == CateKind::disjoint) {
                m1 = 1.0;
                t = m1 - m0;
            } else {
                t = cate_true(design, row);
                m1 = m0 + t;
            }
            tau[i] = t;
            y0[i] = m0 + design.noise_sd * rng.normal();
            y1[i] = m1 + design.noise_sd * rng.normal();
            e[i] = propensity(row, design.alpha);
            w[i] = rng.bernoulli(e[i]) ? 1 : 0;
            y[i] = w[i] == 1 ? y1[i] : y0[i];
            treated += static_cast<std::size_t>(w[i]);
        }

        if (guard_share &&
            static_cast<double>(treated) < opts.min_treated_share * static_cast<double>(n)) {
            ++out.redraw_count;
            continue;
        }

        out.observed.X = std::move(X);
        out.observed.W = std::move(w);
        out.observed.Y = std::move(y);
        out.Y0 = std::move(y0);
        out.Y1 = std::move(y1);
        out.tau_true = std::move(tau);
        out.e_true = std::move(e);
        return out;
    }
}

// ----------------------------------------------------------------------------
// Semi-synthetic loader
// ----------------------------------------------------------------------------

const std::vector<std::string>& ColumnMap::roles() {
    static const std::vector<std::string> r = {"Y",  "W",  "S3", "C1", "C2", "C3",
                                               "XC", "X1", "X2", "X3", "X4", "X5"};
    return r;
}

ColumnMap ColumnMap::defaults() {
    ColumnMap m;
    for (const auto& role : roles()) m.role_to_header_[role] = role;
    return m;
}

ColumnMap ColumnMap::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("ColumnMap::load: cannot open " + path);
    ColumnMap m = defaults();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            bool blank = true;
            for (char c : line)
                if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
            if (blank) continue;
            throw ParseError("ColumnMap::load: line " + std::to_string(line_no) +
                             " is not role=header");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string role = trim(line.substr(0, eq));
        const std::string header = trim(line.substr(eq + 1));
        if (std::find(roles().begin(), roles().end(), role) == roles().end())
            throw ParseError("ColumnMap::load: unknown role '" + role + "' on line " +
                             std::to_string(line_no));
        m.role_to_header_[role] = header;
    }
    return m;
}

const std::string& ColumnMap::header_for(const std::string& role) const {
    const auto it = role_to_header_.find(role);
    if (it == role_to_header_.end()) throw InvalidInput("ColumnMap: unknown role " + role);
    return it->second;
}

void ColumnMap::set(const std::string& role, const std::string& header) {
    if (std::find(roles().begin(), roles().end(), role) == roles().end())
        throw InvalidInput("ColumnMap: unknown role " + role);
    role_to_header_[role] = header;
}

double semisynthetic_cate(double x1, double x2, int c1) {
    double tau = 0.228;
    if (x1 < 0.07) tau += 0.05;
    if (x2 < -0.69) tau -= 0.05;
    if (c1 == 1 || c1 == 13 || c1 == 14) tau -= 0.08;
    return tau;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    try {
        std::size_t consumed = 0;
        const double v = std::stod(cell, &consumed);
        while (consumed < cell.size() &&
               std::isspace(static_cast<unsigned char>(cell[consumed])))
            ++consumed;
        if (consumed != cell.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ParseError("semisynthetic: non-numeric cell at row " + std::to_string(row) +
                         ", column " + column + ": '" + cell + "'");
    }
}

}  // namespace

SimulatedDataset load_semisynthetic(const std::string& path, RngStream& rng,
                                    const ColumnMap& columns, int augment_p) {
    if (augment_p < 0) throw InvalidInput("load_semisynthetic: augment_p must be >= 0");
    std::ifstream in(path);
    if (!in) throw IoError("load_semisynthetic: cannot open " + path);

    std::string header_line;
    if (!std::getline(in, header_line))
        throw SchemaError("load_semisynthetic: empty file " + path);
    const std::vector<std::string> headers = split_csv_line(header_line);

    // Covariate roles in feature order; Y and W handled separately.
    static const std::vector<std::string> covariate_roles = {"S3", "C1", "C2", "C3", "XC",
                                                             "X1", "X2", "X3", "X4", "X5"};
    auto column_index = [&](const std::string& role) {
        const std::string& name = columns.header_for(role);
        const auto it = std::find(headers.begin(), headers.end(), name);
        if (it == headers.end())
            throw SchemaError("load_semisynthetic: missing column '" + name + "' (role " + role +
                              ")");
        return static_cast<std::size_t>(it - headers.begin());
    };

    const std::size_t y_col = column_index("Y");
    const std::size_t w_col = column_index("W");
    std::vector<std::size_t> cov_cols;
    for (const auto& role : covariate_roles) cov_cols.push_back(column_index(role));

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        ++row_no;
        bool blank = true;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
        if (blank) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != headers.size())
            throw ParseError("semisynthetic: row " + std::to_string(row_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(headers.size()));
        std::vector<double> parsed(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
            parsed[c] = parse_cell(cells[c], row_no, headers[c]);
        rows.push_back(std::move(parsed));
    }
    if (rows.empty()) throw SchemaError("load_semisynthetic: no data rows in " + path);

    const std::size_t n = rows.size();
    const std::size_t base_p = covariate_roles.size();

    SimulatedDataset out;
    out.observed.X = Matrix(n, base_p + static_cast<std::size_t>(augment_p));
    out.observed.W.resize(n);
    out.observed.Y.resize(n);
    out.tau_true.resize(n);

    const std::size_t x1_feature = 5;  // X1 within covariate_roles
    const std::size_t x2_feature = 6;
    const std::size_t c1_feature = 1;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < base_p; ++j) out.observed.X(i, j) = rows[i][cov_cols[j]];
        const double w = rows[i][w_col];
        if (w != 0.0 && w != 1.0)
            throw ParseError("semisynthetic: treatment must be 0/1 at row " + std::to_string(i + 1));
        out.observed.W[i] = static_cast<int>(w);
        out.observed.Y[i] = rows[i][y_col];
        out.tau_true[i] = semisynthetic_cate(out.observed.X(i, x1_feature),
                                             out.observed.X(i, x2_feature),
                                             static_cast<int>(out.observed.X(i, c1_feature)));
    }

    if (augment_p > 0) {
        const Matrix sigma = random_correlation_matrix(augment_p, rng);
        const Matrix aug = draw_covariates(static_cast<int>(n), augment_p, sigma, rng);
        for (std::size_t i = 0; i < n; ++i)
            for (int j = 0; j < augment_p; ++j)
                out.observed.X(i, base_p + static_cast<std::size_t>(j)) =
                    aug(i, static_cast<std::size_t>(j));
    }
    out.observed.validate();
    return out;
}

// ----------------------------------------------------------------------------
// Training/validation sampling
// ----------------------------------------------------------------------------

std::vector<int> draw_validation_indices(std::size_t n_total, std::size_t n_validation,
                                         RngStream& rng) {
    if (n_validation > n_total)
        throw InsufficientData("draw_validation_indices: validation larger than dataset");
    return rng.sample_without_replacement(n_total, n_validation);
}

std::vector<int> draw_training_indices(std::size_t n_total, std::span<const int> validation,
                                       std::size_t n_train, RngStream& rng) {
    std::vector<std::uint8_t> held(n_total, 0);
    for (int idx : validation) held[static_cast<std::size_t>(idx)] = 1;
    std::vector<int> remainder;
    remainder.reserve(n_total - validation.size());
    for (std::size_t i = 0; i < n_total; ++i)
        if (!held[i]) remainder.push_back(static_cast<int>(i));
    if (n_train > remainder.size())
        throw InsufficientData("draw_training_indices: training + validation exceed dataset");
    const std::vector<int> picks = rng.sample_without_replacement(remainder.size(), n_train);
    std::vector<int> out;
    out.reserve(n_train);
    for (int k : picks) out.push_back(remainder[static_cast<std::size_t>(k)]);
    return out;
}

std::pair<SimulatedDataset, SimulatedDataset> sample_training(const SimulatedDataset& data,
                                                              std::size_t n_train,
                                                              std::size_t n_validation,
                                                              RngStream& rng) {
    if (n_train + n_validation > data.n())
        throw InsufficientData("sample_training: requested sizes exceed dataset");
    const std::vector<int> val = draw_validation_indices(data.n(), n_validation, rng);
    const std::vector<int> train = draw_training_indices(data.n(), val, n_train, rng);
    return {data.take_rows(train), data.take_rows(val)};
}

}  // namespace hte::dgp
