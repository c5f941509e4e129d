#include "dorqf/model.hpp"
#include "dorqf/qp.hpp"
#include "dorqf/simulation.hpp"

#include "../support/helpers.hpp"
#include "../support/oracles.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace dorqf;

TEST_CASE("fit invariants") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        Dataset data = testdata::synthetic(40, 2, true, 0.4, seed);
        DorqfFit f = fit(data, 1 + static_cast<int>(seed % 5));
        CHECK(f.rss_restricted >= f.rss_unrestricted - 1e-9 * f.rss_unrestricted);
        CHECK((f.constraints.matrix * f.psi_restricted).minCoeff() >= -1e-8);
        DesignSystem d = build_design(data, f.layout.order);
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            Eigen::VectorXd fitted = d.block(i) * f.psi_restricted;
            CHECK(max_decrease(fitted) <= 1e-9);
            CHECK((data.outcome.row(i).transpose() - fitted - f.residuals_restricted.row(i).transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        }
        CHECK(f.has_covariance());
        CHECK(f.delta.rows() == f.layout.dimension());
    }
}

TEST_CASE("noiseless recovery of the coefficient functions") {
    ScenarioSpec s;
    s.n = 200;
    s.L = 0;
    s.noise_level = 0.0;
    s.seed = 3;
    SimulatedReplication sim = generate_scenario(s, 0);
    DorqfFit f = fit(sim.train, 5);
    const ProbabilityGrid& g = f.grid;
    auto ise = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return g.integrate((a - b).cwiseAbs2()); };
    CHECK(ise(f.coefficient_curve(1), sim.truth.beta1) <= 1e-4);
    // h is identified up to the constant absorbed by the intercept.
    Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(50, 0.0, 1.0);
    Eigen::VectorXd h_fit = f.transport_curve(xs);
    Eigen::VectorXd h_true = xs.unaryExpr([&](double u) { return true_transport(f.predictor_scale.invert(u)); });
    h_true.array() -= h_true[0];
    CHECK((h_fit - h_true).cwiseAbs2().mean() <= 1e-4);
    Eigen::VectorXd b0_true = sim.truth.beta0.array() + true_transport(f.predictor_scale.lo);
    CHECK(ise(f.coefficient_curve(0), b0_true) <= 1e-4);
}

TEST_CASE("auto ridge rescues a rank-deficient design") {
    Dataset data = testdata::synthetic(10, 1, false, 0.1, 9);
    data.covariates.setZero();
    CHECK_THROWS_CONTAINING(fit(data, 2), NumericalError, "singular");
    FitOptions o;
    o.auto_ridge = true;
    DorqfFit f = fit(data, 2, o);
    CHECK(f.ridge_used > 0.0);
}

TEST_CASE("fold assignment") {
    std::vector<std::string> ids;
    for (int i = 0; i < 53; ++i) ids.push_back("s" + std::to_string(i));
    std::vector<int> folds = assign_folds(ids, 5, 42);
    std::vector<int> counts(5, 0);
    for (int f : folds) ++counts[static_cast<std::size_t>(f)];
    CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
    std::vector<std::string> rev(ids.rbegin(), ids.rend());
    std::vector<int> folds_rev = assign_folds(rev, 5, 42);
    for (std::size_t i = 0; i < ids.size(); ++i) CHECK(folds[i] == folds_rev[ids.size() - 1 - i]);
    CHECK(assign_folds(ids, 5, 43) != folds);
}

TEST_CASE("cross-validation") {
    Dataset data = testdata::synthetic(60, 1, true, 0.2, 13);
    CvOptions o;
    o.orders = {1, 2, 3, 4, 5};
    o.seed = 7;
    CvReport r = cross_validate(data, o);
    double best = 1e300;
    for (const auto& c : r.candidates) best = std::min(best, c.cvsse);
    const auto& chosen = *std::find_if(r.candidates.begin(), r.candidates.end(), [&](const CvCandidate& c) { return c.order == r.selected_order; });
    CHECK(chosen.cvsse == best);
    CHECK(r.candidates.front().cvsse > chosen.cvsse);
    for (const auto& c : r.candidates) {
        double sum = std::accumulate(c.fold_sse.begin(), c.fold_sse.end(), 0.0);
        CHECK(sum == doctest::Approx(c.cvsse).epsilon(1e-12));
    }

    // Fold refits through the Gram trick equal explicit refits.
    const int n_order = 3;
    double sse = 0.0;
    for (int v = 0; v < o.folds; ++v) {
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index i = 0; i < data.n(); ++i) (r.fold_of_subject[static_cast<std::size_t>(i)] == v ? test : train).push_back(i);
        DesignSystem dt = build_design(data.subset(train), n_order);
        QpSolution s = solve_constrained_ls(dt, build_constraint_system(dt.layout));
        DesignSystem dv = build_design(data.subset(test), n_order);
        for (Eigen::Index i = 0; i < dv.subjects; ++i)
            sse += data.grid.integrate((dv.subject_response(i) - dv.block(i) * s.x).cwiseAbs2());
    }
    const auto& c3 = *std::find_if(r.candidates.begin(), r.candidates.end(), [](const CvCandidate& c) { return c.order == 3; });
    CHECK(c3.cvsse == doctest::Approx(sse).epsilon(1e-8));

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(data.n()));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(1);
    std::shuffle(perm.begin(), perm.end(), rng);
    CvReport rp = cross_validate(data.subset(perm), o);
    CHECK(rp.selected_order == r.selected_order);
    for (std::size_t k = 0; k < r.candidates.size(); ++k)
        CHECK(rp.candidates[k].cvsse == doctest::Approx(r.candidates[k].cvsse).epsilon(1e-9));
}

TEST_CASE("sharply nonlinear coefficients push CV away from N = 1") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ProbabilityGrid g = ProbabilityGrid::equispaced(50);
    const int n = 50;
    Eigen::MatrixXd y(n, 50), z(n, 1);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = u(rng);
        for (int l = 0; l < 50; ++l) {
            double p = g[static_cast<std::size_t>(l)];
            y(i, l) = 10.0 * p + 8.0 * std::pow(p, 8) + z(i, 0) * std::pow(p, 6) * 5.0 + 0.01 * (u(rng) - 0.5);
        }
    }
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    ScalingOptions so;
    so.allow_nonmonotone_outcome = true;
    Dataset data = make_dataset(g, ids, y, z, {"z1"}, std::nullopt, so);
    CvReport r = cross_validate(data);
    CHECK(r.selected_order > 1);
    CHECK(r.candidates.front().cvsse > 2.0 * r.candidates[static_cast<std::size_t>(r.selected_order - 1)].cvsse);
}

TEST_CASE("PAVA") {
    std::vector<double> f = pava({3, 1, 2}, {1, 1, 1});
    for (double v : f) CHECK(v == doctest::Approx(2.0));
    std::vector<double> mono{-1, 0, 0, 2.5, 7};
    CHECK(pava(mono, std::vector<double>(5, 1.0)) == mono);
    CHECK_THROWS_AS(pava({1, 2}, {1, 0}), UsageError);

    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> len(1, 12);
    std::uniform_real_distribution<double> w(0.1, 3.0);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 200; ++t) {
        const int n = len(rng);
        std::vector<double> y(static_cast<std::size_t>(n)), ww(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            y[static_cast<std::size_t>(i)] = nd(rng) + 0.1 * i;
            ww[static_cast<std::size_t>(i)] = t % 2 ? w(rng) : 1.0;
        }
        std::vector<double> a = pava(y, ww);
        std::vector<double> b = oracle::brute_force_isotonic(y, ww);
        for (int i = 0; i < n; ++i) CHECK(std::abs(a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)]) <= 1e-8);
    }
}

TEST_CASE("PAVA baseline interpolates between breakpoints") {
    PavaFit p;
    p.x = {0.0, 1.0, 3.0};
    p.y = {1.0, 2.0, 2.0};
    CHECK(p.evaluate(-5.0) == 1.0);
    CHECK(p.evaluate(0.5) == doctest::Approx(1.5));
    CHECK(p.evaluate(2.0) == 2.0);
    CHECK(p.evaluate(10.0) == 2.0);

    Dataset data = testdata::synthetic(30, 0, true, 0.0, 8);
    PavaFit b = fit_pava_baseline(data);
    for (std::size_t i = 1; i < b.x.size(); ++i) {
        CHECK(b.x[i] > b.x[i - 1]);
        CHECK(b.y[i] >= b.y[i - 1]);
    }
    Dataset noq = testdata::synthetic(5, 1, false, 0.0, 8);
    CHECK_THROWS_AS(fit_pava_baseline(noq), DataError);
}

TEST_CASE("R squared and leave-one-out") {
    Dataset data = testdata::synthetic(25, 1, true, 0.3, 21);
    CHECK(r_squared(data.outcome, data.outcome, data.grid) == 1.0);
    const double grand = (data.outcome * data.grid.weights()).mean();
    CHECK(std::abs(r_squared(data.outcome, Eigen::MatrixXd::Constant(data.n(), data.m(), grand), data.grid)) <= 1e-12);

    LoocvResult lo = loocv_r_squared(data, 2);
    for (Eigen::Index i = 0; i < data.n(); i += 6) {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index k = 0; k < data.n(); ++k)
            if (k != i) keep.push_back(k);
        DesignSystem dt = build_design(data.subset(keep), 2);
        QpSolution s = solve_constrained_ls(dt, build_constraint_system(dt.layout));
        DesignSystem full = build_design(data, 2);
        CHECK((lo.predictions.row(i).transpose() - full.block(i) * s.x).cwiseAbs().maxCoeff() <= 1e-6);
    }
    CHECK_THROWS_AS(loocv_r_squared(data.subset({0, 1}), 2), DataError);
}

TEST_CASE("strong scalar effects favour the full model over the isotonic baseline") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ProbabilityGrid g = ProbabilityGrid::equispaced(30);
    const int n = 60;
    Eigen::MatrixXd y(n, 30), x(n, 30), z(n, 1);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = u(rng);
        double shift = u(rng);
        for (int l = 0; l < 30; ++l) {
            double p = g[static_cast<std::size_t>(l)];
            x(i, l) = shift + p;
            y(i, l) = 1.0 + 2.0 * p + 4.0 * z(i, 0) * (0.5 + p) + 0.5 * x(i, l);
        }
    }
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    Dataset data = make_dataset(g, ids, y, z, {"z1"}, x);
    double full = loocv_r_squared(data, 2).r_squared;
    double iso = loocv_r_squared_pava(data).r_squared;
    CHECK(full > iso);
    CHECK(full > 0.9);
}
