#include "dorqf/design.hpp"

#include "dorqf/error.hpp"

#include <algorithm>
#include <sstream>

namespace dorqf {

namespace {

constexpr double kUnitSlack = 1e-12;

bool in_unit(double v) { return v >= -kUnitSlack && v <= 1.0 + kUnitSlack; }

}  // namespace

void Dataset::validate(bool allow_nonmonotone_outcome) const {
    const Eigen::Index n_ = n();
    if (n_ == 0) throw DataError("dataset has no subjects");
    if (static_cast<std::size_t>(m()) != grid.size()) throw DataError("outcome curves do not match the grid");
    if (static_cast<Eigen::Index>(subject_ids.size()) != n_) throw DataError("subject id count mismatch");
    if (covariates.rows() != n_) throw DataError("covariate row count mismatch");
    if (static_cast<int>(covariate_names.size()) != q() || static_cast<int>(covariate_scales.size()) != q())
        throw DataError("covariate metadata does not match covariate count");
    if (!outcome.allFinite()) throw DataError("outcome curves contain non-finite values");
    for (Eigen::Index i = 0; i < n_; ++i) {
        for (int j = 0; j < q(); ++j) {
            if (!in_unit(covariates(i, j))) {
                std::ostringstream os;
                os << "unscaled covariate '" << covariate_names[static_cast<std::size_t>(j)] << "' value "
                   << covariates(i, j) << " for subject " << subject_ids[static_cast<std::size_t>(i)];
                throw DataError(os.str());
            }
        }
        if (!allow_nonmonotone_outcome && !nonmonotone_outcome_allowed &&
            max_decrease(outcome.row(i).transpose()) > QuantileFunction::kMonotoneTolerance)
            throw DataError("outcome quantile function of subject " + subject_ids[static_cast<std::size_t>(i)] +
                            " is decreasing");
    }
    if (predictor) {
        if (predictor->rows() != n_ || predictor->cols() != m())
            throw DataError("predictor curves do not match the outcome layout");
        for (Eigen::Index i = 0; i < n_; ++i) {
            for (Eigen::Index l = 0; l < m(); ++l)
                if (!in_unit((*predictor)(i, l)))
                    throw DataError("unscaled predictor value for subject " +
                                    subject_ids[static_cast<std::size_t>(i)]);
            if (max_decrease(predictor->row(i).transpose()) > QuantileFunction::kMonotoneTolerance)
                throw DataError("predictor quantile function of subject " +
                                subject_ids[static_cast<std::size_t>(i)] + " is decreasing");
        }
    }
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
    Dataset out;
    out.grid = grid;
    out.covariate_names = covariate_names;
    out.covariate_scales = covariate_scales;
    out.predictor_scale = predictor_scale;
    out.nonmonotone_outcome_allowed = nonmonotone_outcome_allowed;
    const auto k = static_cast<Eigen::Index>(rows.size());
    out.outcome.resize(k, m());
    out.covariates.resize(k, q());
    if (predictor) out.predictor = Eigen::MatrixXd(k, m());
    out.subject_ids.reserve(rows.size());
    for (Eigen::Index r = 0; r < k; ++r) {
        Eigen::Index i = rows[static_cast<std::size_t>(r)];
        out.subject_ids.push_back(subject_ids[static_cast<std::size_t>(i)]);
        out.outcome.row(r) = outcome.row(i);
        out.covariates.row(r) = covariates.row(i);
        if (predictor) out.predictor->row(r) = predictor->row(i);
    }
    return out;
}

Dataset Dataset::without_covariate(int j) const {
    if (j < 0 || j >= q()) throw UsageError("covariate index out of range");
    Dataset out = *this;
    Eigen::MatrixXd cov(n(), q() - 1);
    for (int c = 0, k = 0; c < q(); ++c)
        if (c != j) cov.col(k++) = covariates.col(c);
    out.covariates = std::move(cov);
    out.covariate_names.erase(out.covariate_names.begin() + j);
    out.covariate_scales.erase(out.covariate_scales.begin() + j);
    return out;
}

Dataset Dataset::without_predictor() const {
    if (!predictor) throw UsageError("dataset has no distributional predictor");
    Dataset out = *this;
    out.predictor.reset();
    out.predictor_scale = AffineScale{};
    return out;
}

Dataset Dataset::with_outcome(Eigen::MatrixXd new_outcome) const {
    Dataset out = *this;
    out.outcome = std::move(new_outcome);
    return out;
}

AffineScale observed_range(const Eigen::Ref<const Eigen::MatrixXd>& values) {
    if (values.size() == 0) return AffineScale{};
    double lo = values.minCoeff();
    double hi = values.maxCoeff();
    if (!(hi > lo)) hi = lo + 1.0;
    return AffineScale(lo, hi);
}

Dataset make_dataset(ProbabilityGrid grid, std::vector<std::string> subject_ids, Eigen::MatrixXd outcome,
                     const Eigen::MatrixXd& raw_covariates, std::vector<std::string> covariate_names,
                     const std::optional<Eigen::MatrixXd>& raw_predictor, const ScalingOptions& options) {
    Dataset d;
    d.grid = std::move(grid);
    d.subject_ids = std::move(subject_ids);
    d.outcome = std::move(outcome);
    d.covariate_names = std::move(covariate_names);
    const auto q = raw_covariates.cols();
    if (static_cast<Eigen::Index>(d.covariate_names.size()) != q) {
        d.covariate_names.clear();
        for (Eigen::Index j = 0; j < q; ++j) d.covariate_names.push_back("z" + std::to_string(j + 1));
    }
    if (options.covariate_scales) {
        if (static_cast<Eigen::Index>(options.covariate_scales->size()) != q)
            throw UsageError("covariate scale count does not match covariate count");
        d.covariate_scales = *options.covariate_scales;
    } else {
        for (Eigen::Index j = 0; j < q; ++j) d.covariate_scales.push_back(observed_range(raw_covariates.col(j)));
    }
    d.covariates.resize(raw_covariates.rows(), q);
    for (Eigen::Index j = 0; j < q; ++j) {
        const AffineScale& s = d.covariate_scales[static_cast<std::size_t>(j)];
        d.covariates.col(j) = raw_covariates.col(j).unaryExpr([&](double v) { return s.apply(v); });
    }
    if (raw_predictor) {
        d.predictor_scale = options.predictor_scale ? *options.predictor_scale : observed_range(*raw_predictor);
        const AffineScale& s = d.predictor_scale;
        d.predictor = raw_predictor->unaryExpr([&](double v) { return s.apply(v); });
    }
    d.nonmonotone_outcome_allowed = options.allow_nonmonotone_outcome;
    d.validate();
    // Values within the slack of the unit interval are pinned inside it.
    d.covariates = d.covariates.cwiseMax(0.0).cwiseMin(1.0);
    if (d.predictor) *d.predictor = d.predictor->cwiseMax(0.0).cwiseMin(1.0);
    return d;
}

Eigen::MatrixXd transport_basis(const Eigen::Ref<const Eigen::VectorXd>& scaled_x, int order) {
    return bernstein_matrix(scaled_x, BasisSpec{order, false});
}

DesignSystem build_design(const Dataset& data, int order) {
    data.validate(true);
    if (order < 1) throw UsageError("Bernstein order must be at least 1");
    DesignSystem ds;
    ds.layout = CoefficientLayout{data.q(), order, data.has_predictor()};
    ds.grid = data.grid;
    ds.subjects = data.n();
    const Eigen::Index m = data.m();
    const Eigen::Index k = ds.layout.dimension();
    if (m < k)
        warn("grid length " + std::to_string(m) + " is smaller than the coefficient dimension " +
             std::to_string(k));
    ds.basis = bernstein_matrix(data.grid.as_vector(), BasisSpec{order, true});
    ds.stacked.resize(data.n() * m, k);
    ds.response.resize(data.n() * m);
    const Eigen::Index nb = order + 1;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        auto rows = ds.stacked.middleRows(i * m, m);
        rows.leftCols(nb) = ds.basis;
        for (int j = 0; j < data.q(); ++j)
            rows.middleCols(ds.layout.beta_offset(j + 1), nb) = data.covariates(i, j) * ds.basis;
        if (data.predictor)
            rows.rightCols(order) = transport_basis(data.predictor->row(i).transpose(), order);
        ds.response.segment(i * m, m) = data.outcome.row(i).transpose();
    }
    return ds;
}

NormalEquations& NormalEquations::operator+=(const NormalEquations& other) {
    gram += other.gram;
    cross += other.cross;
    yy += other.yy;
    return *this;
}

NormalEquations& NormalEquations::operator-=(const NormalEquations& other) {
    gram -= other.gram;
    cross -= other.cross;
    yy -= other.yy;
    return *this;
}

double NormalEquations::rss(const Eigen::VectorXd& psi) const {
    return std::max(0.0, yy - 2.0 * cross.dot(psi) + psi.dot(gram * psi));
}

NormalEquations normal_equations(const DesignSystem& design) {
    NormalEquations ne;
    ne.gram = Eigen::MatrixXd(design.stacked.cols(), design.stacked.cols());
    ne.gram.setZero();
    ne.gram.selfadjointView<Eigen::Lower>().rankUpdate(design.stacked.transpose());
    ne.gram = ne.gram.selfadjointView<Eigen::Lower>();
    ne.cross = design.stacked.transpose() * design.response;
    ne.yy = design.response.squaredNorm();
    return ne;
}

std::vector<NormalEquations> subject_normal_equations(const DesignSystem& design) {
    std::vector<NormalEquations> out(static_cast<std::size_t>(design.subjects));
    const Eigen::Index k = design.stacked.cols();
    for (Eigen::Index i = 0; i < design.subjects; ++i) {
        auto& ne = out[static_cast<std::size_t>(i)];
        auto t = design.block(i);
        auto y = design.subject_response(i);
        ne.gram = Eigen::MatrixXd::Zero(k, k);
        ne.gram.selfadjointView<Eigen::Lower>().rankUpdate(t.transpose());
        ne.gram = ne.gram.selfadjointView<Eigen::Lower>();
        ne.cross = t.transpose() * y;
        ne.yy = y.squaredNorm();
    }
    return out;
}

Eigen::VectorXd predict_quantile(const Eigen::VectorXd& psi, const CoefficientLayout& layout,
                                 const ProbabilityGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& z,
                                 const std::optional<Eigen::VectorXd>& qx, const ConstraintSystem* constraints) {
    if (psi.size() != layout.dimension()) throw UsageError("coefficient vector does not match the layout");
    if (z.size() != layout.q) throw UsageError("covariate vector length does not match the model");
    for (Eigen::Index j = 0; j < z.size(); ++j)
        if (!in_unit(z[j])) throw DataError("scalar covariate outside [0,1] in prediction");
    if (layout.has_distributional != qx.has_value())
        throw UsageError(layout.has_distributional ? "prediction needs a predictor quantile function"
                                                   : "model has no distributional predictor");
    const Eigen::Index nb = layout.order + 1;
    const Eigen::MatrixXd b0 = bernstein_matrix(grid.as_vector(), BasisSpec{layout.order, true});
    Eigen::VectorXd coef = psi.segment(layout.beta_offset(0), nb);
    for (int j = 0; j < layout.q; ++j) coef += std::clamp(z[j], 0.0, 1.0) * psi.segment(layout.beta_offset(j + 1), nb);
    Eigen::VectorXd out = b0 * coef;
    if (qx) {
        if (static_cast<std::size_t>(qx->size()) != grid.size())
            throw DataError("predictor quantile function does not match the grid");
        Eigen::VectorXd x = *qx;
        for (Eigen::Index l = 0; l < x.size(); ++l)
            if (!in_unit(x[l])) throw DataError("predictor quantile value outside [0,1] in prediction");
        x = x.cwiseMax(0.0).cwiseMin(1.0);
        out += transport_basis(x, layout.order) * psi.segment(layout.theta_offset(), layout.order);
    }
    if (constraints) {
        double worst = -(constraints->matrix * psi).minCoeff();
        if (worst > 1e-8) {
            warn("coefficient vector violates the monotonicity constraints by " + std::to_string(worst));
            double dec = max_decrease(out);
            if (dec > 1e-9) warn("predicted quantile function decreases by " + std::to_string(dec));
        }
    }
    return out;
}

}  // namespace dorqf
