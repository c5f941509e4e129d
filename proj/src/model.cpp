#include "dorqf/model.hpp"

#include "dorqf/error.hpp"
#include "dorqf/parallel.hpp"
#include "dorqf/qp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <limits>
#include <numeric>

namespace dorqf {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a(std::uint64_t h, const Eigen::MatrixXd& m) {
    return fnv1a(h, m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string utc_timestamp() {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string input_digest(const Dataset& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a(h, data.grid.points().data(), data.grid.size() * sizeof(double));
    h = fnv1a(h, data.outcome);
    h = fnv1a(h, data.covariates);
    if (data.predictor) h = fnv1a(h, *data.predictor);
    return hex64(h);
}

bool is_singular(const NumericalError& e) {
    return std::string(e.what()).find("singular") != std::string::npos;
}

double auto_ridge_value(const Eigen::MatrixXd& gram) {
    return 1e-10 * std::max(gram.trace(), 1.0) / static_cast<double>(gram.rows());
}

/// n x m view of a subject-major stacked vector.
Eigen::MatrixXd unstack(const Eigen::VectorXd& v, Eigen::Index n, Eigen::Index m) {
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), m, n).transpose();
}

QpSolution constrained_from_gram(const NormalEquations& ne, const ConstraintSystem& cs, const FitOptions& options,
                                 double* ridge_used) {
    double ridge = options.ridge;
    try {
        QpSolution s = solve_constrained_ls(ne, cs, ridge);
        if (ridge_used) *ridge_used = ridge;
        return s;
    } catch (const NumericalError& e) {
        if (!options.auto_ridge || !is_singular(e)) throw;
    }
    ridge = std::max(ridge, auto_ridge_value(ne.gram));
    if (ridge_used) *ridge_used = ridge;
    return solve_constrained_ls(ne, cs, ridge);
}

double curve_sse(const Eigen::Ref<const Eigen::VectorXd>& diff, const ProbabilityGrid& grid, CvWeighting w) {
    if (w == CvWeighting::Quadrature) return grid.integrate(diff.array().square().matrix());
    return diff.squaredNorm();
}

}  // namespace

Eigen::VectorXd DorqfFit::coefficient_curve(int j, bool restricted) const {
    if (j < 0 || j > layout.q) throw UsageError("coefficient index out of range");
    const Eigen::VectorXd& psi = restricted ? psi_restricted : psi_unrestricted;
    Eigen::MatrixXd b0 = bernstein_matrix(grid.as_vector(), BasisSpec{layout.order, true});
    return b0 * psi.segment(layout.beta_offset(j), layout.beta_size());
}

Eigen::VectorXd DorqfFit::transport_curve(const Eigen::Ref<const Eigen::VectorXd>& x_unit, bool restricted) const {
    if (!layout.has_distributional) throw UsageError("model has no distributional predictor");
    const Eigen::VectorXd& psi = restricted ? psi_restricted : psi_unrestricted;
    return transport_basis(x_unit, layout.order) * psi.segment(layout.theta_offset(), layout.theta_size());
}

Eigen::VectorXd DorqfFit::additive_effect(const Eigen::Ref<const Eigen::VectorXd>& qx_unit, bool restricted) const {
    return coefficient_curve(0, restricted) + transport_curve(qx_unit, restricted);
}

Eigen::VectorXd DorqfFit::predict_unit(const Eigen::Ref<const Eigen::VectorXd>& z_unit,
                                       const std::optional<Eigen::VectorXd>& qx_unit) const {
    return predict_quantile(psi_restricted, layout, grid, z_unit, qx_unit, &constraints);
}

Eigen::VectorXd DorqfFit::predict_raw(const Eigen::Ref<const Eigen::VectorXd>& z_raw,
                                      const std::optional<Eigen::VectorXd>& qx_raw) const {
    if (z_raw.size() != layout.q) throw UsageError("covariate vector length does not match the model");
    Eigen::VectorXd z(layout.q);
    for (int j = 0; j < layout.q; ++j) {
        double u = covariate_scales[static_cast<std::size_t>(j)].apply(z_raw[j]);
        if (u < 0.0 || u > 1.0) {
            warn("covariate '" + covariate_names[static_cast<std::size_t>(j)] +
                 "' outside the training range; clamped");
            u = std::clamp(u, 0.0, 1.0);
        }
        z[j] = u;
    }
    std::optional<Eigen::VectorXd> qx;
    if (qx_raw) {
        Eigen::VectorXd x = qx_raw->unaryExpr([&](double v) { return predictor_scale.apply(v); });
        if (x.minCoeff() < 0.0 || x.maxCoeff() > 1.0) {
            warn("predictor quantile function outside the training range; clamped");
            x = x.cwiseMax(0.0).cwiseMin(1.0);
        }
        qx = std::move(x);
    }
    return predict_unit(z, qx);
}

DorqfFit fit(const Dataset& data, int order, const FitOptions& options) {
    data.validate();
    if (options.ridge < 0.0) throw UsageError("ridge must be non-negative");
    DesignSystem design = build_design(data, order);
    NormalEquations ne = normal_equations(design);

    DorqfFit out;
    out.layout = design.layout;
    out.grid = data.grid;
    out.options = options;
    out.subjects = data.n();
    out.constraints = build_constraint_system(out.layout, ConstraintOptions{options.theta_origin_row});

    double ridge = options.ridge;
    QpSolution sol;
    try {
        sol = solve_constrained_ls(design, out.constraints, ridge);
    } catch (const NumericalError& e) {
        if (!options.auto_ridge || !is_singular(e)) throw;
        ridge = std::max(ridge, auto_ridge_value(ne.gram));
        warn("singular normal equations; retrying with ridge " + std::to_string(ridge));
        sol = solve_constrained_ls(design, out.constraints, ridge);
    }
    out.ridge_used = ridge;
    Eigen::MatrixXd h = ne.gram;
    h.diagonal().array() += ridge;
    out.psi_unrestricted = gram_condition_number(h) <= kGramConditionLimit ? solve_unconstrained_ls(ne, ridge)
                                                                           : solve_unconstrained_ls(design, ridge);
    out.psi_restricted = sol.x;
    out.active_set = sol.active_set;
    out.multipliers = sol.multipliers;
    out.qp_iterations = sol.iterations;
    out.gram = ne.gram;

    const Eigen::Index n = data.n();
    const Eigen::Index m = data.m();
    out.residuals_restricted = unstack(design.response - design.stacked * out.psi_restricted, n, m);
    out.residuals_unrestricted = unstack(design.response - design.stacked * out.psi_unrestricted, n, m);
    out.rss_restricted = out.residuals_restricted.squaredNorm();
    out.rss_unrestricted = out.residuals_unrestricted.squaredNorm();

    if (options.compute_covariance) {
        out.residual_covariance = estimate_residual_covariance(out.residuals_unrestricted, data.grid, options.pve);
        out.delta = sandwich_covariance(design, out.residual_covariance->matrix, out.ridge_used);
    }

    out.subject_ids = data.subject_ids;
    out.covariate_names = data.covariate_names;
    out.covariate_scales = data.covariate_scales;
    out.predictor_scale = data.predictor_scale;
    if (data.predictor) out.mean_predictor = data.predictor->colwise().mean().transpose();
    out.provenance.created = utc_timestamp();
    out.provenance.input_digest = input_digest(data);
    return out;
}

std::vector<int> assign_folds(const std::vector<std::string>& subject_ids, int folds, std::uint64_t seed) {
    if (folds < 2) throw UsageError("cross-validation needs at least two folds");
    const std::size_t n = subject_ids.size();
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t h = fnv1a(0xcbf29ce484222325ULL, subject_ids[i].data(), subject_ids[i].size());
        keyed[i] = {mix64(h ^ mix64(seed)), i};
    }
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return subject_ids[a.second] < subject_ids[b.second];
    });
    std::vector<int> fold(n);
    for (std::size_t r = 0; r < n; ++r) fold[keyed[r].second] = static_cast<int>(r % static_cast<std::size_t>(folds));
    return fold;
}

CvReport cross_validate(const Dataset& data, const CvOptions& options) {
    data.validate();
    if (options.orders.empty()) throw UsageError("no candidate orders for cross-validation");
    if (options.folds < 2) throw UsageError("cross-validation needs at least two folds");
    if (data.n() < options.folds) throw DataError("fewer subjects than folds");

    CvReport report;
    report.folds = options.folds;
    report.seed = options.seed;
    report.weighting = options.weighting;
    report.fold_of_subject = assign_folds(data.subject_ids, options.folds, options.seed);

    std::vector<int> orders = options.orders;
    std::sort(orders.begin(), orders.end());
    orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
    report.candidates.resize(orders.size());

    std::vector<Eigen::Index> fold_sizes(static_cast<std::size_t>(options.folds), 0);
    for (int f : report.fold_of_subject) ++fold_sizes[static_cast<std::size_t>(f)];
    const Eigen::Index smallest_training = data.n() - *std::max_element(fold_sizes.begin(), fold_sizes.end());

    parallel_for(orders.size(), [&](std::size_t c) {
        CvCandidate& cand = report.candidates[c];
        cand.order = orders[c];
        cand.fold_sse.assign(static_cast<std::size_t>(options.folds), 0.0);
        try {
            if (cand.order < 1) throw UsageError("basis order must be at least 1");
            CoefficientLayout layout{data.q(), cand.order, data.has_predictor()};
            if (layout.dimension() >= smallest_training * data.m())
                throw DataError("coefficient dimension exceeds the training rows of a fold");
            DesignSystem design = build_design(data, cand.order);
            std::vector<NormalEquations> per_subject = subject_normal_equations(design);
            NormalEquations total = per_subject.front();
            for (std::size_t i = 1; i < per_subject.size(); ++i) total += per_subject[i];
            ConstraintSystem cs = build_constraint_system(layout, ConstraintOptions{options.fit.theta_origin_row});
            for (int f = 0; f < options.folds; ++f) {
                NormalEquations train = total;
                for (std::size_t i = 0; i < per_subject.size(); ++i)
                    if (report.fold_of_subject[i] == f) train -= per_subject[i];
                QpSolution sol = constrained_from_gram(train, cs, options.fit, nullptr);
                double sse = 0.0;
                for (Eigen::Index i = 0; i < design.subjects; ++i) {
                    if (report.fold_of_subject[static_cast<std::size_t>(i)] != f) continue;
                    Eigen::VectorXd diff = design.subject_response(i) - design.block(i) * sol.x;
                    sse += curve_sse(diff, data.grid, options.weighting);
                }
                cand.fold_sse[static_cast<std::size_t>(f)] = sse;
            }
            cand.cvsse = std::accumulate(cand.fold_sse.begin(), cand.fold_sse.end(), 0.0);
        } catch (const Error& e) {
            cand.failed = true;
            cand.failure = e.what();
            cand.cvsse = std::numeric_limits<double>::infinity();
        }
    });

    double best = std::numeric_limits<double>::infinity();
    for (const auto& cand : report.candidates) {
        if (cand.failed) {
            warn("cross-validation candidate N=" + std::to_string(cand.order) + " failed: " + cand.failure);
            continue;
        }
        if (cand.cvsse < best) {
            best = cand.cvsse;
            report.selected_order = cand.order;
        }
    }
    if (report.selected_order == 0) throw NumericalError("every cross-validation candidate failed");
    return report;
}

double r_squared(const Eigen::MatrixXd& outcome, const Eigen::MatrixXd& predictions, const ProbabilityGrid& grid) {
    if (outcome.rows() != predictions.rows() || outcome.cols() != predictions.cols())
        throw UsageError("prediction matrix does not match the outcome");
    const Eigen::VectorXd& w = grid.weights();
    Eigen::VectorXd integrals = outcome * w;
    const double qbar = integrals.mean();
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index i = 0; i < outcome.rows(); ++i) {
        num += (outcome.row(i) - predictions.row(i)).array().square().matrix().dot(w);
        den += (outcome.row(i).array() - qbar).square().matrix().dot(w);
    }
    if (!(den > 0.0)) throw DataError("outcome curves have no variation around their grand mean");
    return 1.0 - num / den;
}

LoocvResult loocv_r_squared(const Dataset& data, int order, const FitOptions& options) {
    data.validate();
    if (data.n() < 3) throw DataError("leave-one-out needs at least three subjects");
    DesignSystem design = build_design(data, order);
    std::vector<NormalEquations> per_subject = subject_normal_equations(design);
    NormalEquations total = per_subject.front();
    for (std::size_t i = 1; i < per_subject.size(); ++i) total += per_subject[i];
    ConstraintSystem cs = build_constraint_system(design.layout, ConstraintOptions{options.theta_origin_row});

    LoocvResult out;
    out.predictions.resize(data.n(), data.m());
    parallel_for(static_cast<std::size_t>(data.n()), [&](std::size_t i) {
        NormalEquations train = total;
        train -= per_subject[i];
        QpSolution sol = constrained_from_gram(train, cs, options, nullptr);
        out.predictions.row(static_cast<Eigen::Index>(i)) =
            (design.block(static_cast<Eigen::Index>(i)) * sol.x).transpose();
    });
    out.r_squared = r_squared(data.outcome, out.predictions, data.grid);
    return out;
}

}  // namespace dorqf
