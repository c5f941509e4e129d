#include "dorqf/parallel.hpp"
#include "dorqf/simulation.hpp"

#include "../support/helpers.hpp"

#include <cmath>

using namespace dorqf;

TEST_CASE("inverse normal CDF") {
    CHECK(inverse_normal_cdf(0.5) == 0.0);
    CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(inverse_normal_cdf(0.005) == doctest::Approx(-2.5758293035489004).epsilon(1e-13));
    for (double p : {1e-10, 1e-4, 0.02, 0.3, 0.6, 0.9, 0.999, 1 - 1e-9}) {
        double x = inverse_normal_cdf(p);
        CHECK(0.5 * std::erfc(-x / std::sqrt(2.0)) == doctest::Approx(p).epsilon(1e-12));
        CHECK(inverse_normal_cdf(1.0 - p) == doctest::Approx(-x).epsilon(1e-7));
    }
}

TEST_CASE("scenario option validation") {
    ScenarioSpec s;
    CHECK_NOTHROW(s.validate());
    s.n = 0;
    CHECK_THROWS_AS(s.validate(), UsageError);
    s = ScenarioSpec{};
    s.d = -1.0;
    CHECK_THROWS_AS(s.validate(), UsageError);
    s = ScenarioSpec{};
    s.noise_convention = NoiseConvention::Variance;
    CHECK(s.noise_sd() == doctest::Approx(std::sqrt(0.1)));
    s.noise_convention = NoiseConvention::StandardDeviation;
    CHECK(s.noise_sd() == doctest::Approx(0.1));
    CHECK(parse_scenario("A2") == Scenario::A2);
    CHECK(to_string(Scenario::B) == "B");
}

TEST_CASE("ground truth") {
    ProbabilityGrid g = ProbabilityGrid::equispaced();
    ScenarioSpec s;
    s.scenario = Scenario::A2;
    s.d = 0.0;
    GroundTruth t = ground_truth(s, g);
    CHECK(t.beta1.cwiseAbs().maxCoeff() == 0.0);
    s.d = 0.5;
    t = ground_truth(s, g);
    CHECK(t.beta1[50] == doctest::Approx(0.5 * std::sin(M_PI / 2 * g[50])));
    CHECK(t.beta0[10] == doctest::Approx(2.0 + 3.0 * g[10]));
    double qbar = 1.5 * (10.0 + inverse_normal_cdf(g[30]));
    CHECK(t.gamma[30] == doctest::Approx(t.beta0[30] + std::pow(qbar / 10.0, 3)));
    CHECK(true_transport(20.0) == doctest::Approx(8.0));

    // Null data: d = 0 leaves the outcome free of the covariate.
    s.d = 0.0;
    s.L = 0;
    s.noise_level = 0.0;
    s.n = 30;
    SimulatedReplication sim = generate_scenario(s, 0);
    for (Eigen::Index i = 0; i < 30; ++i)
        for (Eigen::Index l = 0; l < 100; ++l) {
            double p = g[static_cast<std::size_t>(l)];
            CHECK(sim.train_subjects.outcome(i, l) ==
                  doctest::Approx(2.0 + 3.0 * p + true_transport(sim.train_subjects.c[i] * (10.0 + inverse_normal_cdf(p)))));
        }
}

TEST_CASE("predictor marginal") {
    ScenarioSpec s;
    s.n = 10000;
    s.L = 200;
    s.m = 101;
    s.test_size = 1;
    SimulatedReplication sim = generate_scenario(s, 0);
    REQUIRE(std::abs(sim.train.grid[50] - 0.5) <= 1e-12);
    double mean = sim.train_subjects.predictor.col(50).mean();
    CHECK(std::abs(mean - 15.0) <= 0.1);
}

TEST_CASE("generated data layout and reproducibility") {
    ScenarioSpec s;
    s.n = 20;
    s.L = 50;
    s.seed = 9;
    SimulatedReplication a = generate_scenario(s, 3);
    SimulatedReplication b = generate_scenario(s, 3);
    SimulatedReplication c = generate_scenario(s, 4);
    CHECK(a.train.outcome == b.train.outcome);
    CHECK(a.train.outcome != c.train.outcome);
    CHECK(a.train.n() == 20);
    CHECK(a.test_subjects.ids.size() == 100);
    CHECK(a.train.subject_ids.front() == "s0001");
    CHECK(a.test_subjects.ids.front() == "t0001");
    CHECK(a.train.covariates.minCoeff() >= 0.0);
    CHECK(a.train.covariates.maxCoeff() <= 1.0);
    CHECK(a.train.covariate_scales.front().is_identity());
    ScenarioSpec sb = s;
    sb.scenario = Scenario::B;
    SimulatedReplication bb = generate_scenario(sb, 0);
    CHECK(bb.train.q() == 0);
    CHECK(bb.truth.beta1.size() == 0);
}

TEST_CASE("curve metrics decompose the MSE") {
    ProbabilityGrid g = ProbabilityGrid::equispaced(10);
    Eigen::VectorXd truth = g.as_vector();
    Eigen::MatrixXd est(3, 10);
    for (int r = 0; r < 3; ++r) est.row(r) = (truth.array() + 0.1 * (r + 1)).transpose();
    CurveMetrics cm = curve_metrics(est, truth, g);
    // Every curve is truth + c with c in {0.1, 0.2, 0.3}: bias 0.2, variance of c with divisor M.
    CHECK(cm.bias2 == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(cm.variance == doctest::Approx(((0.01 + 0.0 + 0.01) / 3.0)).epsilon(1e-12));
    CHECK(std::abs(cm.mse - cm.bias2 - cm.variance) <= 1e-10);
}

TEST_CASE("study reports are identical across thread counts") {
    ScenarioSpec s;
    s.n = 40;
    s.L = 40;
    s.replications = 6;
    s.seed = 5;
    s.test_size = 10;
    StudyOptions o;
    o.cv.orders = {1, 2, 3};
    set_thread_count(1);
    std::string one = format_table1({run_estimation_study(s, o)}) + format_table_s1({run_estimation_study(s, o)});
    set_thread_count(3);
    std::string three = format_table1({run_estimation_study(s, o)}) + format_table_s1({run_estimation_study(s, o)});
    set_thread_count(0);
    CHECK(one == three);

    ScenarioReport r = run_estimation_study(s, o);
    REQUIRE(r.beta1);
    CHECK(std::abs(r.beta1->mse - r.beta1->bias2 - r.beta1->variance) <= 1e-10);
    CHECK(r.records.size() == 6);
    CHECK(r.failures == 0);
    CHECK(r.mean_order >= 1.0);
    CHECK(r.mean_order <= 3.0);
}

TEST_CASE("table layouts") {
    ScenarioSpec s;
    s.n = 30;
    s.L = 30;
    s.replications = 2;
    s.test_size = 5;
    StudyOptions o;
    o.order = 2;
    std::vector<ScenarioReport> a1{run_estimation_study(s, o)};
    CHECK(format_table1(a1).rfind("n,L,bias2,var,mse,mean_order,failures\n", 0) == 0);
    CHECK(format_table2(a1).rfind("n,L,bias2,var,mse,mean_order,failures\n", 0) == 0);
    CHECK(format_table_s1(a1).rfind("n,L,wd_mean,wd_se,failures\n", 0) == 0);
    ScenarioSpec sb = s;
    sb.scenario = Scenario::B;
    std::string t3 = format_table3({run_estimation_study(sb, o)});
    CHECK(t3.rfind("n,L,dorqf_bias2,dorqf_var,dorqf_mse,pava_bias2,pava_var,pava_mse,mean_order,failures\n", 0) == 0);
    std::string s2 = format_table_s2(run_coverage_study(s, {2}, o));
    CHECK(s2.rfind("n,L,N,coverage,mean_width,failures\n", 0) == 0);
    ScenarioSpec sp = s;
    sp.scenario = Scenario::A2;
    StudyOptions po;
    po.band_draws = 100;
    std::string pw = format_power(run_power_study(sp, {0.0, 1.0}, po));
    CHECK(pw.rfind("n,L,d,N,rejection_rate,replications,failures\n", 0) == 0);
    CHECK(std::count(pw.begin(), pw.end(), '\n') == 3);
    CHECK_THROWS_AS(run_power_study(sp, {0.5}, po), UsageError);
    CHECK_THROWS_AS(run_power_study(s, {0.0}, po), UsageError);
}
