#pragma once

#include "dorqf/design.hpp"
#include "dorqf/model.hpp"
#include "dorqf/quantile.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dorqf {

/// Inverse of the standard normal CDF (rational approximation followed by
/// one Halley step; absolute error below 1e-12 on (0,1)).
double inverse_normal_cdf(double p);

enum class Scenario { A1, A2, B };

/// How the noise level is read: as a variance or as a standard deviation.
enum class NoiseConvention { Variance, StandardDeviation };

/// BeforeSampling: every raw outcome draw y = Q_Y(v) + e with fresh noise.
/// AfterQuantiles: noise e(p) added to the empirical outcome quantiles.
enum class NoiseTiming { BeforeSampling, AfterQuantiles };

/// Test-set reference curves: the empirical quantiles of the test
/// subjects' raw outcome samples, or their latent noiseless quantile functions.
enum class TestTruth { Empirical, Latent };

struct ScenarioSpec {
    Scenario scenario = Scenario::A1;
    int n = 200;
    int L = 200;  ///< raw draws per subject; 0 uses the latent curves directly
    int m = 100;
    double d = 1.0;  ///< A2 multiplier on beta_1
    int replications = 100;
    std::uint64_t seed = 1;
    double noise_level = 0.1;
    NoiseConvention noise_convention = NoiseConvention::StandardDeviation;
    NoiseTiming noise_timing = NoiseTiming::BeforeSampling;
    TestTruth test_truth = TestTruth::Empirical;
    int test_size = 100;

    void validate() const;
    double noise_sd() const;
    bool has_covariate() const { return scenario != Scenario::B; }
};

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& text);

/// True coefficient functions on the grid.
struct GroundTruth {
    Eigen::VectorXd beta0;  ///< 2 + 3p (zero in scenario B)
    Eigen::VectorXd beta1;  ///< d sin(pi p / 2) (empty in scenario B)
    /// gamma(p) = beta0(p) + h(qbar(p)) with qbar the population mean
    /// predictor curve 1.5 Q_N(p; 10, 1).
    Eigen::VectorXd gamma;
    Eigen::VectorXd population_mean_predictor;
};

/// h(x) = (x / 10)^3.
double true_transport(double x);
GroundTruth ground_truth(const ScenarioSpec& spec, const ProbabilityGrid& grid);

struct SimulatedSubjects {
    std::vector<std::string> ids;
    Eigen::VectorXd z;              ///< empty in scenario B
    Eigen::VectorXd c;              ///< predictor scale factors
    Eigen::MatrixXd predictor;      ///< observed (estimated) predictor quantiles, raw units
    Eigen::MatrixXd outcome;        ///< observed outcome quantiles
    Eigen::MatrixXd latent_outcome; ///< noiseless beta0 + z beta1 + h(Q_X) on the grid
};

struct SimulatedReplication {
    Dataset train;
    SimulatedSubjects train_subjects;
    SimulatedSubjects test_subjects;
    GroundTruth truth;
};

SimulatedReplication generate_scenario(const ScenarioSpec& spec, int replication);

struct CurveMetrics {
    double bias2 = 0.0;
    double variance = 0.0;
    double mse = 0.0;
};

/// Integrated Bias^2, Var and MSE of a set of estimated curves (rows).
CurveMetrics curve_metrics(const Eigen::MatrixXd& estimates, const Eigen::VectorXd& truth,
                           const ProbabilityGrid& grid);

struct ReplicationRecord {
    int replication = 0;
    bool failed = false;
    std::string failure;
    int order = 0;
    double test_wd = 0.0;   ///< mean test-set Wasserstein distance
    bool covered = false;
    double width = 0.0;
    double p_value = 1.0;
    bool rejected = false;
};

struct ScenarioReport {
    ScenarioSpec spec;
    std::optional<int> fixed_order;
    std::optional<CurveMetrics> beta1;
    std::optional<CurveMetrics> gamma;
    std::optional<CurveMetrics> gamma_pava;
    double wd_mean = 0.0;
    double wd_se = 0.0;
    double mean_order = 0.0;
    double coverage = 0.0;
    double mean_width = 0.0;
    double rejection_rate = 0.0;
    int failures = 0;
    std::vector<ReplicationRecord> records;
    double runtime_seconds = 0.0;
};

/// Predictor curve at which the additive effect is estimated: the mean of
/// the replication's latent predictor curves (cbar Q_N(p; 10, 1)) or the
/// mean of its estimated predictor quantiles.
enum class GammaReference { LatentMean, EstimatedMean };

struct StudyOptions {
    /// Fixed basis order; when absent every replication runs cross-validation.
    std::optional<int> order;
    CvOptions cv;
    bool include_pava = true;
    GammaReference gamma_reference = GammaReference::LatentMean;
    double alpha = 0.05;
    int band_draws = 1000;
    /// Power studies: "band" (joint-band p-value) or "bootstrap".
    std::string test_method = "band";
    int bootstrap_draws = 500;
};

/// Scenario A1 or B: coefficient accuracy and test-set prediction error.
ScenarioReport run_estimation_study(const ScenarioSpec& spec, const StudyOptions& options = {});

/// Scenario A2 at each multiplier d: rejection rate of the global test for beta_1.
std::vector<ScenarioReport> run_power_study(const ScenarioSpec& spec, const std::vector<double>& d_grid,
                                            const StudyOptions& options = {});

/// Scenario A1 at each fixed order: coverage and mean width of joint bands for beta_1.
std::vector<ScenarioReport> run_coverage_study(const ScenarioSpec& spec, const std::vector<int>& orders,
                                               const StudyOptions& options = {});

inline const std::vector<double> kDefaultPowerGrid{0.0, 0.1, 0.25, 0.5, 0.75, 1.0};

/// CSV layouts of the report tables. Numbers use a fixed format, so equal
/// reports give byte-identical text.
std::string format_table1(const std::vector<ScenarioReport>& reports);   ///< beta_1 Bias^2/Var/MSE per (n, L)
std::string format_table2(const std::vector<ScenarioReport>& reports);   ///< gamma Bias^2/Var/MSE per (n, L)
std::string format_table3(const std::vector<ScenarioReport>& reports);   ///< DORQF vs PAVA gamma per n
std::string format_table_s1(const std::vector<ScenarioReport>& reports); ///< test WD per (n, L)
std::string format_table_s2(const std::vector<ScenarioReport>& reports); ///< coverage and width per (n, N)
std::string format_power(const std::vector<ScenarioReport>& reports);    ///< rejection rate per (n, d)
std::string format_records(const std::vector<ScenarioReport>& reports);  ///< one row per replication

}  // namespace dorqf
