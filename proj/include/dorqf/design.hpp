#pragma once

#include "dorqf/bernstein.hpp"
#include "dorqf/quantile.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace dorqf {

/// Subjects with an outcome quantile function, q scalar covariates and an
/// optional predictor quantile function, all on one shared grid. Covariates
/// and predictor values are stored on the unit scale; the affine maps back
/// to raw units travel with the data.
struct Dataset {
    ProbabilityGrid grid = ProbabilityGrid::equispaced();
    std::vector<std::string> subject_ids;
    Eigen::MatrixXd outcome;     ///< n x m
    Eigen::MatrixXd covariates;  ///< n x q, in [0,1]
    std::vector<std::string> covariate_names;
    std::vector<AffineScale> covariate_scales;
    std::optional<Eigen::MatrixXd> predictor;  ///< n x m, in [0,1]
    AffineScale predictor_scale;
    /// Outcome curves may decrease (e.g. noise added after quantile estimation).
    bool nonmonotone_outcome_allowed = false;

    Eigen::Index n() const { return outcome.rows(); }
    Eigen::Index m() const { return outcome.cols(); }
    int q() const { return static_cast<int>(covariates.cols()); }
    bool has_predictor() const { return predictor.has_value(); }

    /// Checks shapes, unit-scale ranges and monotonicity of the predictor.
    /// Outcome curves must be non-decreasing unless `allow_nonmonotone_outcome`
    /// or `nonmonotone_outcome_allowed` is set.
    void validate(bool allow_nonmonotone_outcome = false) const;

    Dataset subset(const std::vector<Eigen::Index>& rows) const;
    Dataset without_covariate(int j) const;  ///< j is 0-based
    Dataset without_predictor() const;
    Dataset with_outcome(Eigen::MatrixXd outcome) const;
};

struct ScalingOptions {
    /// Explicit raw ranges; when absent the observed min/max are used.
    std::optional<std::vector<AffineScale>> covariate_scales;
    std::optional<AffineScale> predictor_scale;
    bool allow_nonmonotone_outcome = false;
};

/// Assembles a dataset from raw-unit covariates and predictor values.
Dataset make_dataset(ProbabilityGrid grid, std::vector<std::string> subject_ids, Eigen::MatrixXd outcome,
                     const Eigen::MatrixXd& raw_covariates, std::vector<std::string> covariate_names,
                     const std::optional<Eigen::MatrixXd>& raw_predictor, const ScalingOptions& options = {});

/// Observed [min, max] of a set of values; a degenerate range widens to [v, v+1].
AffineScale observed_range(const Eigen::Ref<const Eigen::MatrixXd>& values);

/// Stacked regression system: subject i owns rows [i m, (i+1) m) of
/// `stacked` (the block T_i = [B_0, z_i1 B_0, ..., z_iq B_0, S_i]) and of
/// `response`.
struct DesignSystem {
    CoefficientLayout layout;
    ProbabilityGrid grid = ProbabilityGrid::equispaced();
    Eigen::MatrixXd basis;    ///< B_0, m x (N+1)
    Eigen::MatrixXd stacked;  ///< T, nm x K_n
    Eigen::VectorXd response; ///< Q_Y, nm
    Eigen::Index subjects = 0;

    Eigen::Index m() const { return basis.rows(); }
    auto block(Eigen::Index i) const { return stacked.middleRows(i * m(), m()); }
    auto subject_response(Eigen::Index i) const { return response.segment(i * m(), m()); }
};

DesignSystem build_design(const Dataset& data, int order);

/// Sufficient statistics of a least-squares problem: T'T, T'y, y'y.
struct NormalEquations {
    Eigen::MatrixXd gram;
    Eigen::VectorXd cross;
    double yy = 0.0;

    NormalEquations& operator+=(const NormalEquations& other);
    NormalEquations& operator-=(const NormalEquations& other);
    /// ||y - T psi||^2 expanded through the statistics.
    double rss(const Eigen::VectorXd& psi) const;
};

NormalEquations normal_equations(const DesignSystem& design);
std::vector<NormalEquations> subject_normal_equations(const DesignSystem& design);

/// Evaluation matrix of the transport map part on scaled predictor values:
/// row l = (b_1(x_l), ..., b_N(x_l)).
Eigen::MatrixXd transport_basis(const Eigen::Ref<const Eigen::VectorXd>& scaled_x, int order);

/// beta_0(p) + sum_j z_j beta_j(p) + h(qx(p)) on the grid. `qx` must be on
/// the unit scale and is required exactly when the layout has a
/// distributional term. When a constraint system is given, an infeasible psi
/// triggers a warning and the output's monotonicity is re-checked.
Eigen::VectorXd predict_quantile(const Eigen::VectorXd& psi, const CoefficientLayout& layout,
                                 const ProbabilityGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& z,
                                 const std::optional<Eigen::VectorXd>& qx,
                                 const ConstraintSystem* constraints = nullptr);

}  // namespace dorqf
