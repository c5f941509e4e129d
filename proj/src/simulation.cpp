#include "dorqf/simulation.hpp"

#include "dorqf/error.hpp"
#include "dorqf/inference.hpp"
#include "dorqf/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace dorqf {

namespace {

constexpr std::uint64_t kTrainStream = 0;
constexpr std::uint64_t kTestStream = 1;

double beta0_truth(double p) { return 2.0 + 3.0 * p; }
double beta1_truth(double p) { return std::sin(0.5 * std::numbers::pi * p); }

std::string subject_id(char prefix, int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%c%04d", prefix, i + 1);
    return buf;
}

struct CurveModel {
    double b0_scale = 1.0;  ///< 0 in scenario B
    double b1_scale = 1.0;  ///< d in A2, 0 in B
    bool covariate = true;

    double latent(double p, double z, double c) const {
        return b0_scale * beta0_truth(p) + z * b1_scale * beta1_truth(p) +
               true_transport(c * (10.0 + inverse_normal_cdf(p)));
    }
};

CurveModel curve_model(const ScenarioSpec& spec) {
    CurveModel cm;
    switch (spec.scenario) {
        case Scenario::A1: break;
        case Scenario::A2: cm.b1_scale = spec.d; break;
        case Scenario::B:
            cm.b0_scale = 0.0;
            cm.b1_scale = 0.0;
            cm.covariate = false;
            break;
    }
    return cm;
}

SimulatedSubjects generate_subjects(const ScenarioSpec& spec, const ProbabilityGrid& grid, int count, char prefix,
                                    Engine& engine) {
    const CurveModel cm = curve_model(spec);
    const Eigen::Index m = static_cast<Eigen::Index>(grid.size());
    const double sd = spec.noise_sd();
    SimulatedSubjects s;
    s.z.resize(cm.covariate ? count : 0);
    s.c.resize(count);
    s.predictor.resize(count, m);
    s.outcome.resize(count, m);
    s.latent_outcome.resize(count, m);
    std::vector<double> xs(static_cast<std::size_t>(spec.L));
    std::vector<double> ys(static_cast<std::size_t>(spec.L));
    for (int i = 0; i < count; ++i) {
        s.ids.push_back(subject_id(prefix, i));
        const double z = cm.covariate ? uniform01(engine) : 0.0;
        if (cm.covariate) s.z[i] = z;
        const double c = 1.0 + uniform01(engine);
        s.c[i] = c;
        for (Eigen::Index l = 0; l < m; ++l) s.latent_outcome(i, l) = cm.latent(grid[static_cast<std::size_t>(l)], z, c);

        if (spec.L == 0) {
            for (Eigen::Index l = 0; l < m; ++l) {
                s.predictor(i, l) = c * (10.0 + inverse_normal_cdf(grid[static_cast<std::size_t>(l)]));
                s.outcome(i, l) = s.latent_outcome(i, l) + (sd > 0.0 ? sd * standard_normal(engine) : 0.0);
            }
            continue;
        }
        for (double& x : xs) x = c * (10.0 + inverse_normal_cdf(uniform01(engine)));
        for (double& y : ys) {
            y = cm.latent(uniform01(engine), z, c);
            if (spec.noise_timing == NoiseTiming::BeforeSampling && sd > 0.0) y += sd * standard_normal(engine);
        }
        std::sort(xs.begin(), xs.end());
        std::sort(ys.begin(), ys.end());
        Eigen::VectorXd qx(m), qy(m);
        empirical_quantile_sorted(xs, grid, qx);
        empirical_quantile_sorted(ys, grid, qy);
        if (spec.noise_timing == NoiseTiming::AfterQuantiles && sd > 0.0)
            for (Eigen::Index l = 0; l < m; ++l) qy[l] += sd * standard_normal(engine);
        s.predictor.row(i) = qx.transpose();
        s.outcome.row(i) = qy.transpose();
    }
    return s;
}

std::uint64_t band_seed(std::uint64_t seed, int replication) {
    return mix64(seed ^ mix64(static_cast<std::uint64_t>(replication) + 0x5bd1e995ULL));
}

std::uint64_t fold_seed(std::uint64_t seed, int replication) {
    return mix64(seed ^ mix64(static_cast<std::uint64_t>(replication) + 0x27d4eb2fULL));
}

/// Silences warnings for the lifetime of a Monte-Carlo driver.
struct QuietScope {
    QuietScope() { set_warnings_enabled(false); }
    ~QuietScope() { set_warnings_enabled(true); }
};

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int resolve_order(const Dataset& train, const StudyOptions& options, int replication, std::uint64_t seed) {
    if (options.order) return *options.order;
    CvOptions cv = options.cv;
    cv.seed = fold_seed(seed, replication);
    cv.fit.compute_covariance = false;
    return cross_validate(train, cv).selected_order;
}

void check_failures(const ScenarioReport& r) {
    if (r.failures * 10 > r.spec.replications)
        throw NumericalError("study failed: " + std::to_string(r.failures) + " of " +
                             std::to_string(r.spec.replications) + " replications failed");
}

Eigen::MatrixXd collect_rows(const std::vector<Eigen::VectorXd>& curves, const std::vector<ReplicationRecord>& recs) {
    std::vector<const Eigen::VectorXd*> ok;
    for (std::size_t r = 0; r < recs.size(); ++r)
        if (!recs[r].failed) ok.push_back(&curves[r]);
    if (ok.empty()) return {};
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ok.size()), ok.front()->size());
    for (std::size_t r = 0; r < ok.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = ok[r]->transpose();
    return out;
}

Eigen::VectorXd latent_mean_predictor(const SimulatedReplication& sim) {
    const double cbar = sim.train_subjects.c.mean();
    Eigen::VectorXd out(sim.train.m());
    for (Eigen::Index l = 0; l < out.size(); ++l)
        out[l] = cbar * (10.0 + inverse_normal_cdf(sim.train.grid[static_cast<std::size_t>(l)]));
    return out;
}

Eigen::VectorXd unit_curve(const Eigen::VectorXd& raw, const AffineScale& scale) {
    return raw.unaryExpr([&](double v) { return std::clamp(scale.apply(v), 0.0, 1.0); });
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw UsageError("inverse normal CDF needs p in (0,1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement against the complementary error function.
    double e = (p < 0.5) ? 0.5 * std::erfc(-x / std::numbers::sqrt2) - p
                         : (1.0 - p) - 0.5 * std::erfc(x / std::numbers::sqrt2);
    double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

double true_transport(double x) {
    double t = x / 10.0;
    return t * t * t;
}

void ScenarioSpec::validate() const {
    if (n < 2) throw UsageError("n must be at least 2");
    if (L < 0 || L == 1) throw UsageError("L must be 0 (latent curves) or at least 2");
    if (m < 2) throw UsageError("m must be at least 2");
    if (replications < 1) throw UsageError("replications must be positive");
    if (!(d >= 0.0)) throw UsageError("d must be non-negative");
    if (!(noise_level >= 0.0)) throw UsageError("noise level must be non-negative");
    if (test_size < 1) throw UsageError("test size must be positive");
}

double ScenarioSpec::noise_sd() const {
    return noise_convention == NoiseConvention::Variance ? std::sqrt(noise_level) : noise_level;
}

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::A1: return "A1";
        case Scenario::A2: return "A2";
        case Scenario::B: return "B";
    }
    return "?";
}

Scenario parse_scenario(const std::string& text) {
    if (text == "A1" || text == "a1") return Scenario::A1;
    if (text == "A2" || text == "a2") return Scenario::A2;
    if (text == "B" || text == "b") return Scenario::B;
    throw UsageError("unknown scenario '" + text + "'");
}

GroundTruth ground_truth(const ScenarioSpec& spec, const ProbabilityGrid& grid) {
    const CurveModel cm = curve_model(spec);
    const Eigen::Index m = static_cast<Eigen::Index>(grid.size());
    GroundTruth t;
    t.beta0.resize(m);
    t.gamma.resize(m);
    t.population_mean_predictor.resize(m);
    if (cm.covariate) t.beta1.resize(m);
    for (Eigen::Index l = 0; l < m; ++l) {
        double p = grid[static_cast<std::size_t>(l)];
        t.beta0[l] = cm.b0_scale * beta0_truth(p);
        if (cm.covariate) t.beta1[l] = cm.b1_scale * beta1_truth(p);
        t.population_mean_predictor[l] = 1.5 * (10.0 + inverse_normal_cdf(p));
        t.gamma[l] = t.beta0[l] + true_transport(t.population_mean_predictor[l]);
    }
    return t;
}

SimulatedReplication generate_scenario(const ScenarioSpec& spec, int replication) {
    spec.validate();
    const ProbabilityGrid grid = ProbabilityGrid::equispaced(static_cast<std::size_t>(spec.m));
    const auto rep = static_cast<std::uint64_t>(replication);
    Engine train_engine = make_engine(spec.seed, rep, kTrainStream);
    Engine test_engine = make_engine(spec.seed, rep, kTestStream);

    SimulatedReplication out;
    out.truth = ground_truth(spec, grid);
    out.train_subjects = generate_subjects(spec, grid, spec.n, 's', train_engine);
    out.test_subjects = generate_subjects(spec, grid, spec.test_size, 't', test_engine);

    const SimulatedSubjects& s = out.train_subjects;
    ScalingOptions opts;
    Eigen::MatrixXd cov(spec.n, spec.has_covariate() ? 1 : 0);
    std::vector<std::string> names;
    if (spec.has_covariate()) {
        cov.col(0) = s.z;
        names.push_back("z1");
        opts.covariate_scales = std::vector<AffineScale>{AffineScale(0.0, 1.0)};
    }
    opts.allow_nonmonotone_outcome = spec.noise_sd() > 0.0 && (spec.L == 0 || spec.noise_timing == NoiseTiming::AfterQuantiles);
    out.train = make_dataset(grid, s.ids, s.outcome, cov, names, s.predictor, opts);
    return out;
}

CurveMetrics curve_metrics(const Eigen::MatrixXd& estimates, const Eigen::VectorXd& truth,
                           const ProbabilityGrid& grid) {
    if (estimates.rows() == 0) throw UsageError("no curves to summarise");
    const Eigen::VectorXd& w = grid.weights();
    const Eigen::VectorXd mean = estimates.colwise().mean().transpose();
    CurveMetrics cm;
    cm.bias2 = (mean - truth).array().square().matrix().dot(w);
    double var = 0.0;
    double mse = 0.0;
    for (Eigen::Index r = 0; r < estimates.rows(); ++r) {
        var += (estimates.row(r).transpose() - mean).array().square().matrix().dot(w);
        mse += (estimates.row(r).transpose() - truth).array().square().matrix().dot(w);
    }
    cm.variance = var / static_cast<double>(estimates.rows());
    cm.mse = mse / static_cast<double>(estimates.rows());
    return cm;
}

ScenarioReport run_estimation_study(const ScenarioSpec& spec, const StudyOptions& options) {
    spec.validate();
    if (spec.scenario == Scenario::A2) throw UsageError("estimation studies use scenario A1 or B");
    const auto start = std::chrono::steady_clock::now();
    QuietScope quiet;
    const auto reps = static_cast<std::size_t>(spec.replications);
    const bool pava_wanted = options.include_pava && spec.scenario == Scenario::B;

    ScenarioReport report;
    report.spec = spec;
    report.fixed_order = options.order;
    report.records.resize(reps);
    std::vector<Eigen::VectorXd> beta1(reps), gamma(reps), gamma_pava(reps);
    GroundTruth truth;

    parallel_for(reps, [&](std::size_t r) {
        ReplicationRecord& rec = report.records[r];
        rec.replication = static_cast<int>(r);
        try {
            SimulatedReplication sim = generate_scenario(spec, static_cast<int>(r));
            rec.order = resolve_order(sim.train, options, rec.replication, spec.seed);
            FitOptions fo = options.cv.fit;
            fo.compute_covariance = false;
            fo.auto_ridge = true;
            DorqfFit f = fit(sim.train, rec.order, fo);
            if (spec.has_covariate()) beta1[r] = f.coefficient_curve(1);
            const Eigen::VectorXd qbar_raw = options.gamma_reference == GammaReference::LatentMean
                                                 ? latent_mean_predictor(sim)
                                                 : sim.train_subjects.predictor.colwise().mean().transpose();
            gamma[r] = f.additive_effect(unit_curve(qbar_raw, sim.train.predictor_scale));

            const SimulatedSubjects& test = sim.test_subjects;
            const Eigen::MatrixXd& reference = spec.test_truth == TestTruth::Empirical ? test.outcome
                                                                                       : test.latent_outcome;
            double wd = 0.0;
            for (Eigen::Index i = 0; i < test.predictor.rows(); ++i) {
                Eigen::VectorXd z = spec.has_covariate() ? Eigen::VectorXd::Constant(1, test.z[i]) : Eigen::VectorXd();
                Eigen::VectorXd pred = f.predict_raw(z, Eigen::VectorXd(test.predictor.row(i).transpose()));
                Eigen::VectorXd diff = reference.row(i).transpose() - pred;
                wd += std::sqrt(sim.train.grid.integrate(diff.array().square().matrix()));
            }
            rec.test_wd = wd / static_cast<double>(test.predictor.rows());

            if (pava_wanted) {
                PavaFit pf = fit_pava_baseline(sim.train);
                gamma_pava[r] = pf.evaluate(qbar_raw);
            }
        } catch (const Error& e) {
            rec.failed = true;
            rec.failure = e.what();
        }
    });

    const ProbabilityGrid grid = ProbabilityGrid::equispaced(static_cast<std::size_t>(spec.m));
    truth = ground_truth(spec, grid);
    double wd_sum = 0.0, wd_sq = 0.0, order_sum = 0.0;
    int ok = 0;
    for (const auto& rec : report.records) {
        if (rec.failed) {
            ++report.failures;
            continue;
        }
        ++ok;
        wd_sum += rec.test_wd;
        wd_sq += rec.test_wd * rec.test_wd;
        order_sum += rec.order;
    }
    check_failures(report);
    report.wd_mean = wd_sum / ok;
    report.wd_se = ok > 1 ? std::sqrt(std::max(0.0, (wd_sq - ok * report.wd_mean * report.wd_mean) / (ok - 1))) : 0.0;
    report.mean_order = order_sum / ok;
    if (spec.has_covariate()) report.beta1 = curve_metrics(collect_rows(beta1, report.records), truth.beta1, grid);
    report.gamma = curve_metrics(collect_rows(gamma, report.records), truth.gamma, grid);
    if (pava_wanted) report.gamma_pava = curve_metrics(collect_rows(gamma_pava, report.records), truth.gamma, grid);
    report.runtime_seconds = elapsed_seconds(start);
    return report;
}

std::vector<ScenarioReport> run_power_study(const ScenarioSpec& spec, const std::vector<double>& d_grid,
                                            const StudyOptions& options) {
    if (spec.scenario != Scenario::A2) throw UsageError("power studies use scenario A2");
    if (std::find(d_grid.begin(), d_grid.end(), 0.0) == d_grid.end())
        throw UsageError("the d grid must include 0");
    if (options.test_method != "band" && options.test_method != "bootstrap")
        throw UsageError("unknown test method '" + options.test_method + "'");
    if (options.test_method == "band" && options.band_draws < 100)
        throw UsageError("band tests need at least 100 draws");
    if (options.test_method == "bootstrap" && options.bootstrap_draws < 199)
        throw UsageError("bootstrap tests need at least 199 draws");
    QuietScope quiet;
    std::vector<ScenarioReport> out;
    for (double d : d_grid) {
        const auto start = std::chrono::steady_clock::now();
        ScenarioSpec s = spec;
        s.d = d;
        s.validate();
        ScenarioReport report;
        report.spec = s;
        report.fixed_order = options.order.value_or(3);
        const int order = *report.fixed_order;
        report.records.resize(static_cast<std::size_t>(s.replications));
        parallel_for(report.records.size(), [&](std::size_t r) {
            ReplicationRecord& rec = report.records[r];
            rec.replication = static_cast<int>(r);
            rec.order = order;
            try {
                SimulatedReplication sim = generate_scenario(s, rec.replication);
                if (options.test_method == "band") {
                    FitOptions fo = options.cv.fit;
                    fo.compute_covariance = true;
                    fo.auto_ridge = true;
                    DorqfFit f = fit(sim.train, order, fo);
                    rec.p_value =
                        band_global_pvalue(f, BandTarget::beta(1), options.band_draws, band_seed(s.seed, rec.replication)).p_value;
                } else {
                    rec.p_value = bootstrap_effect_test(sim.train, order, TermId{false, 0}, options.bootstrap_draws,
                                                        band_seed(s.seed, rec.replication), options.cv.fit)
                                      .p_value;
                }
                rec.rejected = rec.p_value <= options.alpha;
            } catch (const Error& e) {
                rec.failed = true;
                rec.failure = e.what();
            }
        });
        int ok = 0, rejected = 0;
        for (const auto& rec : report.records) {
            if (rec.failed) {
                ++report.failures;
                continue;
            }
            ++ok;
            rejected += rec.rejected ? 1 : 0;
        }
        check_failures(report);
        report.rejection_rate = static_cast<double>(rejected) / ok;
        report.mean_order = order;
        report.runtime_seconds = elapsed_seconds(start);
        out.push_back(std::move(report));
    }
    return out;
}

std::vector<ScenarioReport> run_coverage_study(const ScenarioSpec& spec, const std::vector<int>& orders,
                                               const StudyOptions& options) {
    if (spec.scenario != Scenario::A1) throw UsageError("coverage studies use scenario A1");
    if (options.band_draws < 100) throw UsageError("joint bands need at least 100 draws");
    spec.validate();
    QuietScope quiet;
    const ProbabilityGrid grid = ProbabilityGrid::equispaced(static_cast<std::size_t>(spec.m));
    const GroundTruth truth = ground_truth(spec, grid);
    std::vector<ScenarioReport> out;
    for (int order : orders) {
        const auto start = std::chrono::steady_clock::now();
        ScenarioReport report;
        report.spec = spec;
        report.fixed_order = order;
        report.records.resize(static_cast<std::size_t>(spec.replications));
        parallel_for(report.records.size(), [&](std::size_t r) {
            ReplicationRecord& rec = report.records[r];
            rec.replication = static_cast<int>(r);
            rec.order = order;
            try {
                SimulatedReplication sim = generate_scenario(spec, rec.replication);
                FitOptions fo = options.cv.fit;
                fo.compute_covariance = true;
                fo.auto_ridge = true;
                DorqfFit f = fit(sim.train, order, fo);
                ProjectedSamples ps = draw_projected_samples(f, BandTarget::beta(1), options.band_draws,
                                                             band_seed(spec.seed, rec.replication));
                ConfidenceBand band = band_from_samples(ps, f.grid, options.alpha);
                rec.covered = band.covers(truth.beta1);
                rec.width = band.mean_width();
                rec.p_value = band_pvalue_from_samples(ps).p_value;
                rec.rejected = rec.p_value <= options.alpha;
            } catch (const Error& e) {
                rec.failed = true;
                rec.failure = e.what();
            }
        });
        int ok = 0, covered = 0;
        double width = 0.0;
        for (const auto& rec : report.records) {
            if (rec.failed) {
                ++report.failures;
                continue;
            }
            ++ok;
            covered += rec.covered ? 1 : 0;
            width += rec.width;
        }
        check_failures(report);
        report.coverage = static_cast<double>(covered) / ok;
        report.mean_width = width / ok;
        report.mean_order = order;
        report.runtime_seconds = elapsed_seconds(start);
        out.push_back(std::move(report));
    }
    return out;
}

std::string format_table1(const std::vector<ScenarioReport>& reports) {
    std::ostringstream os;
    os << "n,L,bias2,var,mse,mean_order,failures\n";
    for (const auto& r : reports) {
        if (!r.beta1) continue;
        os << r.spec.n << ',' << r.spec.L << ',' << num(r.beta1->bias2) << ',' << num(r.beta1->variance) << ','
           << num(r.beta1->mse) << ',' << num(r.mean_order) << ',' << r.failures << '\n';
    }
    return os.str();
}

std::string format_table2(const std::vector<ScenarioReport>& reports) {
    std::ostringstream os;
    os << "n,L,bias2,var,mse,mean_order,failures\n";
    for (const auto& r : reports) {
        if (!r.gamma) continue;
        os << r.spec.n << ',' << r.spec.L << ',' << num(r.gamma->bias2) << ',' << num(r.gamma->variance) << ','
           << num(r.gamma->mse) << ',' << num(r.mean_order) << ',' << r.failures << '\n';
    }
    return os.str();
}

std::string format_table3(const std::vector<ScenarioReport>& reports) {
    std::ostringstream os;
    os << "n,L,dorqf_bias2,dorqf_var,dorqf_mse,pava_bias2,pava_var,pava_mse,mean_order,failures\n";
    for (const auto& r : reports) {
        if (!r.gamma || !r.gamma_pava) continue;
        os << r.spec.n << ',' << r.spec.L << ',' << num(r.gamma->bias2) << ',' << num(r.gamma->variance) << ','
           << num(r.gamma->mse) << ',' << num(r.gamma_pava->bias2) << ',' << num(r.gamma_pava->variance) << ','
           << num(r.gamma_pava->mse) << ',' << num(r.mean_order) << ',' << r.failures << '\n';
    }
    return os.str();
}

std::string format_table_s1(const std::vector<ScenarioReport>& reports) {
    std::ostringstream os;
    os << "n,L,wd_mean,wd_se,failures\n";
    for (const auto& r : reports)
        os << r.spec.n << ',' << r.spec.L << ',' << num(r.wd_mean) << ',' << num(r.wd_se) << ',' << r.failures
           << '\n';
    return os.str();
}

std::string format_table_s2(const std::vector<ScenarioReport>& reports) {
    std::ostringstream os;
    os << "n,L,N,coverage,mean_width,failures\n";
    for (const auto& r : reports)
        os << r.spec.n << ',' << r.spec.L << ',' << r.fixed_order.value_or(0) << ',' << num(r.coverage) << ','
           << num(r.mean_width) << ',' << r.failures << '\n';
    return os.str();
}

std::string format_power(const std::vector<ScenarioReport>& reports) {
    std::ostringstream os;
    os << "n,L,d,N,rejection_rate,replications,failures\n";
    for (const auto& r : reports)
        os << r.spec.n << ',' << r.spec.L << ',' << num(r.spec.d) << ',' << r.fixed_order.value_or(0) << ','
           << num(r.rejection_rate) << ',' << r.spec.replications << ',' << r.failures << '\n';
    return os.str();
}

std::string format_records(const std::vector<ScenarioReport>& reports) {
    std::ostringstream os;
    os << "scenario,n,L,d,replication,failed,order,test_wd,covered,width,p_value,rejected\n";
    for (const auto& r : reports)
        for (const auto& rec : r.records)
            os << to_string(r.spec.scenario) << ',' << r.spec.n << ',' << r.spec.L << ',' << num(r.spec.d) << ','
               << rec.replication << ',' << (rec.failed ? 1 : 0) << ',' << rec.order << ',' << num(rec.test_wd)
               << ',' << (rec.covered ? 1 : 0) << ',' << num(rec.width) << ',' << num(rec.p_value) << ','
               << (rec.rejected ? 1 : 0) << '\n';
    return os.str();
}

}  // namespace dorqf
