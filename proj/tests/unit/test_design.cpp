#include "dorqf/design.hpp"
#include "dorqf/qp.hpp"

#include "../support/helpers.hpp"

#include <random>

using namespace dorqf;

namespace {

Dataset one_subject() {
    ProbabilityGrid g({0.25, 0.5, 0.75});
    Eigen::MatrixXd y(1, 3), z(1, 1), x(1, 3);
    y << 1.0, 2.0, 3.0;
    z << 0.5;
    x << 0.2, 0.4, 0.9;
    ScalingOptions opt;
    opt.covariate_scales = std::vector<AffineScale>{AffineScale(0.0, 1.0)};
    opt.predictor_scale = AffineScale(0.0, 1.0);
    return make_dataset(g, {"a"}, y, z, {"z1"}, x, opt);
}

}  // namespace

TEST_CASE("hand-computed design block") {
    DesignSystem d = build_design(one_subject(), 1);
    Eigen::MatrixXd expected(3, 5);
    expected << 0.75, 0.25, 0.375, 0.125, 0.2,  //
        0.5, 0.5, 0.25, 0.25, 0.4,              //
        0.25, 0.75, 0.125, 0.375, 0.9;
    REQUIRE(d.stacked.rows() == 3);
    REQUIRE(d.stacked.cols() == 5);
    CHECK((d.stacked - expected).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(d.block(0).middleCols(2, 2) == 0.5 * d.basis);
    CHECK(d.response == Eigen::Vector3d(1.0, 2.0, 3.0));
}

TEST_CASE("design blocks share the intercept basis and evaluate the predictor") {
    Dataset data = testdata::synthetic(6, 2, true, 0.0, 1);
    const int n = 4;
    DesignSystem d = build_design(data, n);
    CHECK(d.layout.dimension() == 3 * (n + 1) + n);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        auto t = d.block(i);
        CHECK(t.leftCols(n + 1) == d.basis);
        for (int j = 0; j < 2; ++j) CHECK((t.middleCols((j + 1) * (n + 1), n + 1) - data.covariates(i, j) * d.basis).cwiseAbs().maxCoeff() <= 1e-15);
        Eigen::MatrixXd s = transport_basis(data.predictor->row(i).transpose(), n);
        CHECK(t.rightCols(n) == s);
        CHECK(d.subject_response(i) == data.outcome.row(i).transpose());
    }
}

TEST_CASE("q = 0 design is [B0 | S]") {
    Dataset data = testdata::synthetic(3, 0, true, 0.0, 2);
    DesignSystem d = build_design(data, 2);
    CHECK(d.layout.dimension() == 3 + 2);
    CHECK(d.block(1).leftCols(3) == d.basis);
}

TEST_CASE("zero covariate without predictor reduces to the intercept model") {
    Dataset data = testdata::synthetic(8, 1, false, 0.0, 3);
    data.covariates.setZero();
    DesignSystem d = build_design(data, 3);
    CHECK(d.stacked.middleCols(4, 4).cwiseAbs().maxCoeff() == 0.0);
    QpSolution s = solve_constrained_ls(d, build_constraint_system(d.layout), 1e-10);
    Eigen::VectorXd mean = data.outcome.colwise().mean().transpose();
    Eigen::VectorXd b0 = (d.basis.transpose() * d.basis).ldlt().solve(d.basis.transpose() * mean);
    CHECK((s.x.head(4) - b0).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(s.x.tail(4).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("validation rejects unscaled covariates and decreasing curves") {
    Dataset data = testdata::synthetic(4, 1, true, 0.0, 4);
    Dataset bad = data;
    bad.covariates(2, 0) = 1.5;
    CHECK_THROWS_CONTAINING(build_design(bad, 2), DataError, "unscaled covariate");
    Dataset badx = data;
    (*badx.predictor)(1, 3) = -0.2;
    CHECK_THROWS_CONTAINING(build_design(badx, 2), DataError, "unscaled predictor");
    Dataset dec = data;
    dec.outcome(0, 5) = dec.outcome(0, 4) - 1.0;
    CHECK_THROWS_CONTAINING(dec.validate(), DataError, "decreasing");
    CHECK_NOTHROW(dec.validate(true));
}

TEST_CASE("make_dataset scales to the unit interval") {
    ProbabilityGrid g({0.25, 0.5, 0.75});
    Eigen::MatrixXd y(2, 3), z(2, 1), x(2, 3);
    y << 1, 2, 3, 2, 3, 4;
    z << 10, 20;
    x << 5, 6, 7, 6, 8, 9;
    Dataset d = make_dataset(g, {"a", "b"}, y, z, {"age"}, x);
    CHECK(d.covariates(0, 0) == 0.0);
    CHECK(d.covariates(1, 0) == 1.0);
    CHECK(d.predictor->minCoeff() == 0.0);
    CHECK(d.predictor->maxCoeff() == 1.0);
    CHECK(d.predictor_scale.lo == 5.0);
    CHECK(d.predictor_scale.hi == 9.0);
}

TEST_CASE("prediction examples") {
    ProbabilityGrid g = ProbabilityGrid::equispaced();
    for (int n = 1; n <= 6; ++n) {
        CoefficientLayout l{0, n, false};
        Eigen::VectorXd psi = power_to_bernstein(Eigen::Vector2d(0.0, 1.0), n);
        Eigen::VectorXd out = predict_quantile(psi, l, g, Eigen::VectorXd(0), std::nullopt);
        CHECK((out - g.as_vector()).cwiseAbs().maxCoeff() <= 1e-12);
    }

    Dataset data = testdata::synthetic(5, 2, true, 0.0, 5);
    DesignSystem d = build_design(data, 3);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    Eigen::VectorXd psi(d.layout.dimension());
    for (Eigen::Index k = 0; k < psi.size(); ++k) psi[k] = nd(rng);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        Eigen::VectorXd pred = predict_quantile(psi, d.layout, data.grid, data.covariates.row(i).transpose(),
                                                Eigen::VectorXd(data.predictor->row(i).transpose()));
        CHECK((pred - d.block(i) * psi).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK_THROWS_AS(predict_quantile(psi, d.layout, data.grid, Eigen::Vector2d(0.5, 1.2),
                                     Eigen::VectorXd(data.predictor->row(0).transpose())),
                    DataError);
}

TEST_CASE("feasible coefficients give monotone predictions") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ProbabilityGrid g = ProbabilityGrid::equispaced();
    for (int rep = 0; rep < 200; ++rep) {
        const int q = static_cast<int>(rep % 3), n = 1 + static_cast<int>(rep % 6);
        CoefficientLayout l{q, n, true};
        Eigen::VectorXd psi(l.dimension());
        // beta_0 steps dominate the summed slope steps, so every subset sum stays monotone.
        double level = u(rng);
        for (int k = 0; k <= n; ++k) {
            psi[l.beta_offset(0) + k] = level;
            level += q + u(rng);
        }
        for (int j = 1; j <= q; ++j) {
            double b = u(rng) - 0.5;
            for (int k = 0; k <= n; ++k) {
                psi[l.beta_offset(j) + k] = b;
                b += u(rng) * 2.0 - 1.0;
                b = std::clamp(b, -5.0, 5.0);
            }
            for (int k = 1; k <= n; ++k) {
                double step = psi[l.beta_offset(j) + k] - psi[l.beta_offset(j) + k - 1];
                if (step < -1.0) psi[l.beta_offset(j) + k] = psi[l.beta_offset(j) + k - 1] - 1.0;
            }
        }
        double t = 0.0;
        for (int k = 0; k < n; ++k) {
            t += u(rng);
            psi[l.theta_offset() + k] = t;
        }
        ConstraintSystem cs = build_constraint_system(l);
        REQUIRE((cs.matrix * psi).minCoeff() >= -1e-12);
        Eigen::VectorXd z(q);
        for (int j = 0; j < q; ++j) z[j] = u(rng);
        Eigen::VectorXd qx(static_cast<Eigen::Index>(g.size()));
        double a = 0.5 * u(rng), b = (1.0 - a) * u(rng), e = 0.5 + 2.0 * u(rng);
        for (std::size_t k = 0; k < g.size(); ++k) qx[static_cast<Eigen::Index>(k)] = a + b * std::pow(g[k], e);
        Eigen::VectorXd out = predict_quantile(psi, l, g, z, qx, &cs);
        CHECK(max_decrease(out) <= 1e-9);
    }
}
