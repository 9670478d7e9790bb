#include <doctest.h>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <set>

#include "hte/dgp.hpp"
#include "oracles.hpp"

using namespace hte;
using dgp::SimulationDesign;

namespace {

double pearson(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cab = 0.0, caa = 0.0, cbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cab += (a[i] - ma) * (b[i] - mb);
        caa += (a[i] - ma) * (a[i] - ma);
        cbb += (b[i] - mb) * (b[i] - mb);
    }
    return cab / std::sqrt(caa * cbb);
}

std::vector<double> column_of(const Matrix& X, std::size_t j) {
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = X(i, j);
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("dgp");

TEST_CASE("standard designs carry the documented settings") {
    CHECK(SimulationDesign::standard(1).alpha == doctest::Approx(0.25));
    CHECK(SimulationDesign::standard(3).alpha == doctest::Approx(1.0 / 12.0));
    CHECK(SimulationDesign::standard(4).alpha == doctest::Approx(0.125));
    CHECK(SimulationDesign::standard(6).p_tau == 3);
    CHECK(SimulationDesign::standard(1).p == 100);
    CHECK_THROWS_AS(SimulationDesign::standard(7), InvalidInput);
    CHECK_THROWS_AS(SimulationDesign::standard(0), InvalidInput);
}

TEST_CASE("friedman response closed forms") {
    std::vector<double> x(10, 0.0);
    CHECK(dgp::mu0_friedman(x) == doctest::Approx(0.5).epsilon(1e-12));
    std::fill(x.begin(), x.end(), 0.5);
    CHECK(dgp::mu0_friedman(x) == doctest::Approx(1.4571067811865475).epsilon(1e-12));
    x = {1.0, 0.5, 0.5, 0.0, 0.0};
    CHECK(dgp::mu0_friedman(x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("propensity closed forms and exact bounds") {
    std::vector<double> x(4, 0.0);
    CHECK(dgp::propensity(x, 0.25) == doctest::Approx(0.25).epsilon(1e-12));

    // Put the sine argument exactly at the beta-density maximum u = 1/4.
    x = {std::asin(0.25) / 3.14159265358979323846, 1.0, 1.0, 1.0};
    CHECK(dgp::propensity(x, 0.25) == doctest::Approx(0.25 * 3.109375).epsilon(1e-9));
    CHECK(dgp::propensity(x, 1.0 / 12.0) == doctest::Approx(0.2591145833333).epsilon(1e-9));

    RngStream rng(31);
    for (int trial = 0; trial < 20000; ++trial) {
        std::vector<double> probe(4);
        for (auto& v : probe) v = rng.uniform01();
        const double e = dgp::propensity(probe, 0.25);
        CHECK(e >= 0.25);
        CHECK(e <= 0.25 * 3.109375);
    }
}

TEST_CASE("cate closed forms per design") {
    std::vector<double> x(100, 0.5);
    CHECK(dgp::cate_true(SimulationDesign::standard(1), x) == 0.0);
    CHECK(dgp::cate_true(SimulationDesign::standard(3), x) == 1.0);
    CHECK(dgp::cate_true(SimulationDesign::standard(6), x) == doctest::Approx(1.0).epsilon(1e-12));
    x[0] = 0.6;
    CHECK(dgp::cate_true(SimulationDesign::standard(4), x) == 2.0);
    x[0] = 0.2;
    x[1] = 0.8;
    CHECK(dgp::cate_true(SimulationDesign::standard(5), x) == doctest::Approx(1.5).epsilon(1e-12));

    const SimulationDesign d2 = SimulationDesign::standard(2);
    CHECK(dgp::cate_true(d2, x) == doctest::Approx(1.0 - dgp::mu0_friedman(x)).epsilon(1e-12));

    RngStream rng(37);
    const SimulationDesign d6 = SimulationDesign::standard(6);
    for (int trial = 0; trial < 5000; ++trial) {
        std::vector<double> probe(3);
        for (auto& v : probe) v = rng.uniform01();
        const double tau = dgp::cate_true(d6, probe);
        CHECK(tau > -1.0);
        CHECK(tau < 3.0);
    }
}

TEST_CASE("signal sets are nested prefixes") {
    RngStream rng(41);
    std::vector<double> x(100);
    for (auto& v : x) v = rng.uniform01();
    std::vector<double> perturbed = x;
    for (std::size_t j = 5; j < 100; ++j) perturbed[j] = rng.uniform01();

    CHECK(dgp::mu0_friedman(x) == dgp::mu0_friedman(perturbed));
    for (int id : {4, 5, 6}) {
        const auto d = SimulationDesign::standard(id);
        std::vector<double> tau_probe = x;
        for (std::size_t j = static_cast<std::size_t>(d.p_tau); j < 100; ++j)
            tau_probe[j] = rng.uniform01();
        CHECK(dgp::cate_true(d, x) == dgp::cate_true(d, tau_probe));
    }
    std::vector<double> e_probe = x;
    for (std::size_t j = 4; j < 100; ++j) e_probe[j] = rng.uniform01();
    CHECK(dgp::propensity(x, 0.25) == dgp::propensity(e_probe, 0.25));
}

TEST_CASE("random correlation matrices are valid and positive definite") {
    RngStream rng(43);
    const Matrix one = dgp::random_correlation_matrix(1, rng);
    CHECK(one(0, 0) == 1.0);

    for (int trial = 0; trial < 50; ++trial) {
        const Matrix two = dgp::random_correlation_matrix(2, rng);
        CHECK(two(0, 1) == two(1, 0));
        CHECK(two(0, 1) > -1.0);
        CHECK(two(0, 1) < 1.0);
    }

    for (int trial = 0; trial < 20; ++trial) {
        const Matrix sigma = dgp::random_correlation_matrix(100, rng);
        Eigen::MatrixXd m(100, 100);
        for (int i = 0; i < 100; ++i)
            for (int j = 0; j < 100; ++j) {
                m(i, j) = sigma(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
                CHECK(sigma(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ==
                      sigma(static_cast<std::size_t>(j), static_cast<std::size_t>(i)));
            }
        for (int i = 0; i < 100; ++i) CHECK(m(i, i) == 1.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("copula draw has uniform margins and the requested correlations") {
    RngStream rng(47);
    const int n = 10000;

    Matrix identity(4, 4, 0.0);
    for (std::size_t j = 0; j < 4; ++j) identity(j, j) = 1.0;
    const Matrix X = dgp::draw_covariates(n, 4, identity, rng);
    for (std::size_t j = 0; j < 4; ++j) {
        const auto col = column_of(X, j);
        double mean = 0.0;
        for (double v : col) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            mean += v;
        }
        CHECK(mean / n == doctest::Approx(0.5).epsilon(0.04));
    }
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b)
            CHECK(std::fabs(pearson(column_of(X, a), column_of(X, b))) <= 0.05);

    Matrix sigma = identity;
    sigma(0, 1) = sigma(1, 0) = 0.5;
    const Matrix Xc = dgp::draw_covariates(n, 4, sigma, rng);
    CHECK(pearson(column_of(Xc, 0), column_of(Xc, 1)) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("generated datasets satisfy the observational rule exactly") {
    RngStream rng(53);
    const auto data = dgp::generate_dataset(SimulationDesign::standard(6), 500, rng);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double expected = data.observed.W[i] == 1 ? data.Y1[i] : data.Y0[i];
        CHECK(data.observed.Y[i] == expected);
        CHECK(data.e_true[i] > 0.0);
        CHECK(data.e_true[i] < 1.0);
    }
}

TEST_CASE("design treated shares land in the documented ranges") {
    RngStream rng(59);
    const auto d1 = dgp::generate_dataset(SimulationDesign::standard(1), 10000, rng);
    const double share1 = static_cast<double>(d1.observed.n_treated()) / 10000.0;
    CHECK(share1 > 0.40);
    CHECK(share1 < 0.60);

    const auto d3 = dgp::generate_dataset(SimulationDesign::standard(3), 10000, rng);
    const double share3 = static_cast<double>(d3.observed.n_treated()) / 10000.0;
    CHECK(share3 > 0.12);
    CHECK(share3 < 0.22);
    double mean_e = 0.0;
    for (double e : d3.e_true) mean_e += e;
    CHECK(mean_e / 10000.0 == doctest::Approx(0.1677).epsilon(0.12));
}

TEST_CASE("disjoint design: treated response is constant one") {
    RngStream rng(61);
    const auto data = dgp::generate_dataset(SimulationDesign::standard(2), 4000, rng);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double mu0 = dgp::mu0_friedman(data.observed.X.row(i));
        CHECK(data.tau_true[i] == doctest::Approx(1.0 - mu0).epsilon(1e-12));
    }
    double mean_y1 = 0.0;
    for (double v : data.Y1) mean_y1 += v;
    CHECK(mean_y1 / 4000.0 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("potential-outcome noise is independent of the covariates") {
    RngStream rng(67);
    const auto data = dgp::generate_dataset(SimulationDesign::standard(1), 10000, rng);
    std::vector<double> eps(data.n());
    for (std::size_t i = 0; i < data.n(); ++i)
        eps[i] = data.Y0[i] - dgp::mu0_friedman(data.observed.X.row(i));
    for (std::size_t j = 0; j < 5; ++j)
        CHECK(std::fabs(pearson(eps, column_of(data.observed.X, j))) <= 0.03);
}

TEST_CASE("treated-share guard redraws and eventually stalls") {
    dgp::DgpOptions no_retries;
    no_retries.redraw_cap = 0;
    bool stalled = false;
    for (std::uint64_t seed = 0; seed < 200 && !stalled; ++seed) {
        RngStream rng(seed);
        try {
            (void)dgp::generate_dataset(SimulationDesign::standard(3), 2, rng, no_retries);
        } catch (const GenerationStalled&) {
            stalled = true;
        }
    }
    CHECK(stalled);

    RngStream rng(71);
    const auto data = dgp::generate_dataset(SimulationDesign::standard(3), 40, rng);
    const double share = static_cast<double>(data.observed.n_treated()) / 40.0;
    CHECK(share >= 0.15);
    CHECK(data.redraw_count >= 0);
}

TEST_CASE("semisynthetic loader parses, maps columns and computes the cate") {
    const std::string data_path = "acic_fixture_small.csv";
    const std::string map_path = "acic_fixture_colmap.txt";
    testing::write_acic_style_fixture(data_path, 400, 7);
    testing::write_colmap_fixture(map_path);

    RngStream rng(73);
    const auto columns = dgp::ColumnMap::load(map_path);
    const auto data = dgp::load_semisynthetic(data_path, rng, columns, 90);
    CHECK(data.n() == 400);
    CHECK(data.observed.p() == 100);
    CHECK(data.e_true.empty());

    // tau recomputed from the parsed covariates: X1 is feature 5, X2 feature 6,
    // C1 feature 1.
    std::set<double> distinct;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double expected = dgp::semisynthetic_cate(
            data.observed.X(i, 5), data.observed.X(i, 6),
            static_cast<int>(data.observed.X(i, 1)));
        CHECK(data.tau_true[i] == doctest::Approx(expected).epsilon(1e-12));
        distinct.insert(data.tau_true[i]);
    }
    CHECK(distinct.size() >= 4);  // all indicator branches populated

    for (std::size_t i = 0; i < data.n(); ++i)
        for (std::size_t j = 10; j < 100; ++j) {
            CHECK(data.observed.X(i, j) >= 0.0);
            CHECK(data.observed.X(i, j) <= 1.0);
        }

    // Missing required column.
    RngStream rng2(74);
    CHECK_THROWS_AS(dgp::load_semisynthetic(data_path, rng2, dgp::ColumnMap::defaults(), 0),
                    SchemaError);

    // Non-numeric cell.
    const std::string bad_path = "acic_fixture_bad.csv";
    std::FILE* f = std::fopen(bad_path.c_str(), "w");
    std::fprintf(f, "Y,W,S3,C1,C2,C3,XC,X1,X2,X3,X4,X5\n");
    std::fprintf(f, "1.0,1,1,2,1,0,3,0.1,oops,0.3,0.4,0.5\n");
    std::fclose(f);
    RngStream rng3(75);
    CHECK_THROWS_AS(dgp::load_semisynthetic(bad_path, rng3, dgp::ColumnMap::defaults(), 0),
                    ParseError);
    std::remove(data_path.c_str());
    std::remove(map_path.c_str());
    std::remove(bad_path.c_str());
}

TEST_CASE("training/validation sampling is disjoint, exact and replication-dependent") {
    RngStream rng(79);
    const auto data = dgp::generate_dataset(SimulationDesign::standard(1), 300, rng);

    RngStream s1(100);
    const auto [train, validation] = dgp::sample_training(data, 120, 50, s1);
    CHECK(train.n() == 120);
    CHECK(validation.n() == 50);

    RngStream val_rng(200);
    const auto val_idx = dgp::draw_validation_indices(300, 50, val_rng);
    RngStream t1(201), t2(202);
    const auto train1 = dgp::draw_training_indices(300, val_idx, 120, t1);
    const auto train2 = dgp::draw_training_indices(300, val_idx, 120, t2);
    std::set<int> val_set(val_idx.begin(), val_idx.end());
    for (int idx : train1) CHECK(val_set.count(idx) == 0);
    CHECK(std::set<int>(train1.begin(), train1.end()).size() == 120);
    CHECK(train1 != train2);

    RngStream s3(300);
    CHECK_THROWS_AS(dgp::sample_training(data, 290, 50, s3), InsufficientData);
}

TEST_SUITE_END();
