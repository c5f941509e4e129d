#include "dorqf/inference.hpp"

#include "dorqf/error.hpp"
#include "dorqf/parallel.hpp"
#include "dorqf/qp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace dorqf {

namespace {

bool parse_index(const std::string& text, std::size_t from, int& out) {
    if (from >= text.size()) return false;
    for (std::size_t i = from; i < text.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) return false;
    out = std::stoi(text.substr(from));
    return true;
}

/// Columns of a symmetric PSD matrix's square root, V diag(sqrt(max(lambda, 0))).
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov) {
    Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of the coefficient covariance failed");
    const Eigen::VectorXd& lambda = es.eigenvalues();
    double top = std::max(lambda.maxCoeff(), 0.0);
    if (lambda.minCoeff() < -1e-6 * top) throw NumericalError("coefficient covariance is not positive semidefinite");
    return es.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

BandTarget BandTarget::parse(const std::string& text) {
    if (text == "gamma" || text == "additive") return additive();
    int j = 0;
    if (text.rfind("beta", 0) == 0 && parse_index(text, 4, j)) return beta(j);
    throw UsageError("unknown band target '" + text + "' (expected beta<j> or gamma)");
}

std::string BandTarget::label() const {
    return kind == Kind::Additive ? std::string("gamma") : "beta" + std::to_string(index);
}

Eigen::MatrixXd BandTarget::evaluation_matrix(const DorqfFit& fit) const {
    const CoefficientLayout& layout = fit.layout;
    const Eigen::Index m = static_cast<Eigen::Index>(fit.grid.size());
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(m, layout.dimension());
    Eigen::MatrixXd b0 = bernstein_matrix(fit.grid.as_vector(), BasisSpec{layout.order, true});
    if (kind == Kind::Beta) {
        if (index < 0 || index > layout.q) throw UsageError("band target " + label() + " is not in the model");
        e.middleCols(layout.beta_offset(index), layout.beta_size()) = b0;
        return e;
    }
    if (!layout.has_distributional) throw UsageError("additive effect needs a distributional predictor");
    Eigen::VectorXd qx = qx_unit ? *qx_unit : fit.mean_predictor;
    if (qx.size() != m) throw DataError("predictor curve for the additive effect does not match the grid");
    if (qx.minCoeff() < 0.0 || qx.maxCoeff() > 1.0) throw DataError("predictor curve outside [0,1]");
    e.middleCols(layout.beta_offset(0), layout.beta_size()) = b0;
    e.middleCols(layout.theta_offset(), layout.theta_size()) = transport_basis(qx, layout.order);
    return e;
}

ProjectedSamples draw_projected_samples(const DorqfFit& fit, const BandTarget& target, int draws,
                                        std::uint64_t seed) {
    if (draws < 2) throw UsageError("at least two draws are needed");
    if (!fit.has_covariance()) throw UsageError("fit was computed without a coefficient covariance");
    const Eigen::MatrixXd eval = target.evaluation_matrix(fit);
    const Eigen::MatrixXd factor = psd_factor(fit.delta);
    Eigen::MatrixXd omega = fit.gram;
    omega.diagonal().array() += fit.ridge_used;
    omega /= static_cast<double>(fit.subjects);
    const DualActiveSetSolver solver(omega, fit.constraints.matrix);
    const Eigen::Index k = fit.layout.dimension();
    const Eigen::Index m = eval.rows();

    ProjectedSamples out;
    out.target = target.label();
    out.draws = draws;
    out.seed = seed;
    out.center = eval * fit.psi_restricted;
    out.curves.resize(draws, m);
    std::vector<double> infeasible(static_cast<std::size_t>(draws), 0.0);
    parallel_for(static_cast<std::size_t>(draws), [&](std::size_t b) {
        Engine engine = make_engine(seed, b);
        Eigen::VectorXd xi(k);
        for (Eigen::Index c = 0; c < k; ++c) xi[c] = standard_normal(engine);
        Eigen::VectorXd z = fit.psi_unrestricted + factor * xi;
        QpSolution sol = solver.solve(-(omega * z));
        infeasible[b] = std::max(0.0, -(fit.constraints.matrix * sol.x).minCoeff());
        out.curves.row(static_cast<Eigen::Index>(b)) = (eval * sol.x).transpose();
    });
    out.max_infeasibility = *std::max_element(infeasible.begin(), infeasible.end());

    Eigen::RowVectorXd mean = out.curves.colwise().mean();
    out.pointwise_sd =
        ((out.curves.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(draws - 1))
            .sqrt()
            .transpose();
    if (out.pointwise_sd.minCoeff() < 1e-12) {
        warn("zero pointwise standard deviation in projected samples; floored at 1e-12");
        out.pointwise_sd = out.pointwise_sd.cwiseMax(1e-12);
    }
    out.sup_statistics.resize(draws);
    for (Eigen::Index b = 0; b < draws; ++b)
        out.sup_statistics[b] =
            ((out.curves.row(b).transpose() - out.center).cwiseAbs().array() / out.pointwise_sd.array()).maxCoeff();
    return out;
}

double sup_quantile(const Eigen::VectorXd& sup_statistics, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in (0,1]");
    const Eigen::Index b = sup_statistics.size();
    if (b == 0) throw UsageError("no sup-statistics");
    std::vector<double> sorted(sup_statistics.data(), sup_statistics.data() + b);
    std::sort(sorted.begin(), sorted.end());
    auto idx = static_cast<Eigen::Index>(std::ceil((1.0 - alpha) * static_cast<double>(b) - 1e-9));
    idx = std::clamp<Eigen::Index>(idx, 1, b);
    return sorted[static_cast<std::size_t>(idx - 1)];
}

bool ConfidenceBand::covers(const Eigen::Ref<const Eigen::VectorXd>& truth) const {
    return (truth.array() >= lower.array()).all() && (truth.array() <= upper.array()).all();
}

double ConfidenceBand::mean_width() const { return (upper - lower).mean(); }

ConfidenceBand band_from_samples(const ProjectedSamples& samples, const ProbabilityGrid& grid, double alpha) {
    ConfidenceBand band;
    band.target = samples.target;
    band.grid = grid;
    band.center = samples.center;
    band.pointwise_sd = samples.pointwise_sd;
    band.alpha = alpha;
    band.draws = samples.draws;
    band.seed = samples.seed;
    band.critical = sup_quantile(samples.sup_statistics, alpha);
    band.lower = samples.center - band.critical * samples.pointwise_sd;
    band.upper = samples.center + band.critical * samples.pointwise_sd;
    return band;
}

ConfidenceBand joint_band(const DorqfFit& fit, const BandTarget& target, double alpha, int draws,
                          std::uint64_t seed) {
    if (draws < 100) throw UsageError("joint bands need at least 100 draws");
    return band_from_samples(draw_projected_samples(fit, target, draws, seed), fit.grid, alpha);
}

GlobalTestResult band_pvalue_from_samples(const ProjectedSamples& samples) {
    GlobalTestResult r;
    r.method = "band";
    r.null_model = samples.target + " = 0";
    r.draws = samples.draws;
    r.seed = samples.seed;
    r.statistic = (samples.center.cwiseAbs().array() / samples.pointwise_sd.array()).maxCoeff();
    const auto exceed = (samples.sup_statistics.array() >= r.statistic).count();
    r.p_value = static_cast<double>(exceed) / static_cast<double>(samples.draws);
    return r;
}

GlobalTestResult band_global_pvalue(const DorqfFit& fit, const BandTarget& target, int draws, std::uint64_t seed) {
    if (draws < 100) throw UsageError("band tests need at least 100 draws");
    return band_pvalue_from_samples(draw_projected_samples(fit, target, draws, seed));
}

TermId TermId::parse(const std::string& text, const std::vector<std::string>& covariate_names) {
    if (text == "x" || text == "predictor") return TermId{true, 0};
    for (std::size_t j = 0; j < covariate_names.size(); ++j)
        if (covariate_names[j] == text) return TermId{false, static_cast<int>(j)};
    int k = 0;
    if (text.size() > 1 && text[0] == 'z' && parse_index(text, 1, k)) {
        if (k < 1 || static_cast<std::size_t>(k) > covariate_names.size())
            throw UsageError("term '" + text + "' is not in the model");
        return TermId{false, k - 1};
    }
    throw UsageError("unknown model term '" + text + "'");
}

std::string TermId::label(const std::vector<std::string>& covariate_names) const {
    if (predictor) return "predictor";
    if (covariate >= 0 && static_cast<std::size_t>(covariate) < covariate_names.size())
        return covariate_names[static_cast<std::size_t>(covariate)];
    return "z" + std::to_string(covariate + 1);
}

GlobalTestResult bootstrap_effect_test(const Dataset& data, int order, const TermId& drop, int draws,
                                       std::uint64_t seed, const FitOptions& options) {
    if (draws < 199) throw UsageError("bootstrap tests need at least 199 draws");
    data.validate();
    Dataset reduced;
    if (drop.predictor) {
        if (!data.has_predictor()) throw UsageError("null model equals the full model: no predictor to drop");
        reduced = data.without_predictor();
    } else {
        if (drop.covariate < 0 || drop.covariate >= data.q())
            throw UsageError("null model equals the full model: covariate not in the model");
        reduced = data.without_covariate(drop.covariate);
    }

    const DesignSystem full = build_design(data, order);
    const DesignSystem null = build_design(reduced, order);
    const ConstraintOptions copt{options.theta_origin_row};
    const ConstraintSystem cs_full = build_constraint_system(full.layout, copt);
    const ConstraintSystem cs_null = build_constraint_system(null.layout, copt);
    const NormalEquations ne_full = normal_equations(full);
    const NormalEquations ne_null = normal_equations(null);
    Eigen::MatrixXd h_full = ne_full.gram;
    Eigen::MatrixXd h_null = ne_null.gram;
    h_full.diagonal().array() += options.ridge;
    h_null.diagonal().array() += options.ridge;
    const DualActiveSetSolver solve_full(h_full, cs_full.matrix);
    const DualActiveSetSolver solve_null(h_null, cs_null.matrix);

    auto statistic = [&](const NormalEquations& nf, const NormalEquations& nn) {
        double rss_f = nf.rss(solve_full.solve(-nf.cross).x);
        double rss_n = nn.rss(solve_null.solve(-nn.cross).x);
        if (!(rss_f > 0.0)) throw NumericalError("full model interpolates the data; F-type statistic undefined");
        return std::max(0.0, (rss_n - rss_f) / rss_f);
    };

    GlobalTestResult r;
    r.method = "bootstrap";
    r.null_model = drop.label(data.covariate_names) + " = 0";
    r.draws = draws;
    r.seed = seed;
    r.statistic = statistic(ne_full, ne_null);

    const Eigen::VectorXd psi_full = solve_full.solve(-ne_full.cross).x;
    const Eigen::VectorXd psi_null = solve_null.solve(-ne_null.cross).x;
    const Eigen::VectorXd resid = full.response - full.stacked * psi_full;
    const Eigen::VectorXd fitted_null = null.stacked * psi_null;
    const Eigen::Index n = data.n();
    const Eigen::Index m = data.m();

    std::vector<double> boot(static_cast<std::size_t>(draws));
    parallel_for(static_cast<std::size_t>(draws), [&](std::size_t b) {
        Engine engine = make_engine(seed, b);
        Eigen::VectorXd y(n * m);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto pick = std::min<Eigen::Index>(static_cast<Eigen::Index>(uniform01(engine) * static_cast<double>(n)), n - 1);
            y.segment(i * m, m) = fitted_null.segment(i * m, m) + resid.segment(pick * m, m);
        }
        NormalEquations nf{ne_full.gram, full.stacked.transpose() * y, y.squaredNorm()};
        NormalEquations nn{ne_null.gram, null.stacked.transpose() * y, nf.yy};
        boot[b] = statistic(nf, nn);
    });
    const auto exceed = std::count_if(boot.begin(), boot.end(), [&](double t) { return t >= r.statistic; });
    r.p_value = static_cast<double>(exceed) / static_cast<double>(draws);
    return r;
}

}  // namespace dorqf
