#include "dorqf/covariance.hpp"

#include "dorqf/error.hpp"

#include <algorithm>
#include <cmath>

namespace dorqf {

namespace {

double nugget_from_diagonal_gap(const Eigen::MatrixXd& c) {
    const Eigen::Index m = c.rows();
    if (m < 3) return 0.0;
    double sum = 0.0;
    for (Eigen::Index l = 1; l + 1 < m; ++l) sum += c(l, l) - 0.5 * (c(l - 1, l) + c(l, l + 1));
    return std::max(0.0, sum / static_cast<double>(m - 2));
}

}  // namespace

ResidualCovariance estimate_residual_covariance(const Eigen::Ref<const Eigen::MatrixXd>& residuals,
                                                const ProbabilityGrid& grid, double pve) {
    const Eigen::Index n = residuals.rows();
    const Eigen::Index m = residuals.cols();
    if (n < 2) throw DataError("covariance estimation needs at least two residual curves");
    if (static_cast<std::size_t>(m) != grid.size()) throw DataError("residual curves do not match the grid");
    if (!(pve > 0.0 && pve <= 1.0)) throw UsageError("PVE threshold must lie in (0,1]");

    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, m);
    c.selfadjointView<Eigen::Lower>().rankUpdate(residuals.transpose(), 1.0 / static_cast<double>(n));
    c = c.selfadjointView<Eigen::Lower>();

    ResidualCovariance out;
    out.pve_threshold = pve;
    out.noise_variance = nugget_from_diagonal_gap(c);

    const Eigen::VectorXd sqrt_w = grid.weights().cwiseSqrt();
    Eigen::MatrixXd smooth = c;
    smooth.diagonal().array() -= out.noise_variance;
    Eigen::MatrixXd weighted = sqrt_w.asDiagonal() * smooth * sqrt_w.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(weighted);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of the residual covariance failed");

    // Descending order, negatives truncated.
    Eigen::VectorXd lambda = es.eigenvalues().reverse().cwiseMax(0.0);
    Eigen::MatrixXd vectors = es.eigenvectors().rowwise().reverse();
    const double total = lambda.sum();
    int k = 0;
    double explained = 0.0;
    if (total > 0.0) {
        while (k < m && explained < pve * total * (1.0 - 1e-12)) explained += lambda[k++];
        out.pve_attained = explained / total;
    }
    out.components = k;
    out.eigenvalues = lambda.head(k);
    out.eigenfunctions = sqrt_w.cwiseInverse().asDiagonal() * vectors.leftCols(k);
    out.matrix = out.eigenfunctions * out.eigenvalues.asDiagonal() * out.eigenfunctions.transpose();
    out.matrix.diagonal().array() += out.noise_variance;
    out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
    return out;
}

Eigen::MatrixXd sandwich_covariance(const DesignSystem& design, const Eigen::MatrixXd& sigma_m, double ridge) {
    if (ridge < 0.0) throw UsageError("ridge must be non-negative");
    const Eigen::Index m = design.m();
    if (sigma_m.rows() != m || sigma_m.cols() != m) throw UsageError("residual covariance does not match the grid");
    const Eigen::Index k = design.stacked.cols();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(design.stacked.transpose());
    gram = gram.selfadjointView<Eigen::Lower>();
    gram.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericalError("singular normal equations in sandwich covariance");

    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < design.subjects; ++i) {
        auto t = design.block(i);
        meat.noalias() += t.transpose() * (sigma_m * t);
    }
    Eigen::MatrixXd left = llt.solve(meat);
    Eigen::MatrixXd delta = llt.solve(left.transpose());
    return 0.5 * (delta + delta.transpose());
}

}  // namespace dorqf
