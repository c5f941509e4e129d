#pragma once

#include "dorqf/bernstein.hpp"
#include "dorqf/covariance.hpp"
#include "dorqf/design.hpp"
#include "dorqf/quantile.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dorqf {

struct FitOptions {
    double ridge = 0.0;
    /// Retry with ridge = 1e-10 trace(H)/K when the normal equations are singular.
    bool auto_ridge = false;
    bool theta_origin_row = true;
    /// Residual FPCA and sandwich covariance; required for bands.
    bool compute_covariance = true;
    double pve = 0.99;
};

struct Provenance {
    std::optional<std::uint64_t> seed;
    std::string created;       ///< ISO-8601 UTC timestamp
    std::string input_digest;  ///< FNV-1a over the scaled inputs, hex
};

/// A fitted model with everything needed for prediction and inference.
struct DorqfFit {
    CoefficientLayout layout;
    ProbabilityGrid grid = ProbabilityGrid::equispaced();
    ConstraintSystem constraints;
    FitOptions options;
    double ridge_used = 0.0;
    Eigen::Index subjects = 0;

    Eigen::VectorXd psi_restricted;
    Eigen::VectorXd psi_unrestricted;
    std::vector<Eigen::Index> active_set;
    Eigen::VectorXd multipliers;
    int qp_iterations = 0;

    Eigen::MatrixXd gram;                    ///< T'T
    Eigen::MatrixXd residuals_restricted;    ///< n x m
    Eigen::MatrixXd residuals_unrestricted;  ///< n x m
    double rss_restricted = 0.0;
    double rss_unrestricted = 0.0;

    std::optional<ResidualCovariance> residual_covariance;
    Eigen::MatrixXd delta;  ///< covariance of psi_unrestricted (empty without covariance)

    std::vector<std::string> subject_ids;
    std::vector<std::string> covariate_names;
    std::vector<AffineScale> covariate_scales;
    AffineScale predictor_scale;
    Eigen::VectorXd mean_predictor;  ///< unit-scale mean of the training predictor curves
    Provenance provenance;

    bool has_covariance() const { return delta.size() > 0; }
    Eigen::MatrixXd omega() const { return gram / static_cast<double>(subjects); }

    /// beta_j on the grid (j = 0 is the intercept).
    Eigen::VectorXd coefficient_curve(int j, bool restricted = true) const;
    /// h at unit-scale predictor values.
    Eigen::VectorXd transport_curve(const Eigen::Ref<const Eigen::VectorXd>& x_unit, bool restricted = true) const;
    /// gamma(p) = beta_0(p) + h(qx(p)) at a unit-scale predictor curve.
    Eigen::VectorXd additive_effect(const Eigen::Ref<const Eigen::VectorXd>& qx_unit, bool restricted = true) const;

    /// Prediction from unit-scale inputs.
    Eigen::VectorXd predict_unit(const Eigen::Ref<const Eigen::VectorXd>& z_unit,
                                 const std::optional<Eigen::VectorXd>& qx_unit) const;
    /// Prediction from raw-unit inputs through the stored scales; values
    /// outside the training range are clamped to [0,1] with a warning.
    Eigen::VectorXd predict_raw(const Eigen::Ref<const Eigen::VectorXd>& z_raw,
                                const std::optional<Eigen::VectorXd>& qx_raw) const;
};

DorqfFit fit(const Dataset& data, int order, const FitOptions& options = {});

enum class CvWeighting { Quadrature, Unweighted };

struct CvOptions {
    std::vector<int> orders{1, 2, 3, 4, 5, 6, 7, 8};
    int folds = 5;
    std::uint64_t seed = 1;
    CvWeighting weighting = CvWeighting::Quadrature;
    FitOptions fit;
};

struct CvCandidate {
    int order = 0;
    double cvsse = 0.0;
    std::vector<double> fold_sse;
    bool failed = false;
    std::string failure;
};

struct CvReport {
    std::vector<CvCandidate> candidates;
    int folds = 0;
    std::uint64_t seed = 0;
    CvWeighting weighting = CvWeighting::Quadrature;
    int selected_order = 0;
    std::vector<int> fold_of_subject;
};

/// Fold of a subject: a pure function of (id, seed), so subject order does
/// not matter. Subjects are ranked by a keyed hash and dealt round-robin.
std::vector<int> assign_folds(const std::vector<std::string>& subject_ids, int folds, std::uint64_t seed);

CvReport cross_validate(const Dataset& data, const CvOptions& options = {});

/// Monotone piecewise-linear map fitted by pooled isotonic regression of
/// outcome values on predictor values (raw units, no intercept).
struct PavaFit {
    std::vector<double> x;  ///< strictly increasing breakpoints
    std::vector<double> y;  ///< non-decreasing fitted values

    double evaluate(double v) const;
    Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& v) const;
};

/// Weighted least-squares isotonic regression of a sequence.
std::vector<double> pava(const std::vector<double>& y, const std::vector<double>& w);

/// Scalar covariates, if any, are ignored.
PavaFit fit_pava_baseline(const Dataset& data);

struct LoocvResult {
    double r_squared = 0.0;
    Eigen::MatrixXd predictions;  ///< n x m, raw outcome units
};

/// 1 - sum_i int (Q_i - Q_i^{-i})^2 / sum_i int (Q_i - Qbar)^2 with Qbar the
/// scalar grand mean of the outcome curves.
LoocvResult loocv_r_squared(const Dataset& data, int order, const FitOptions& options = {});
LoocvResult loocv_r_squared_pava(const Dataset& data);
double r_squared(const Eigen::MatrixXd& outcome, const Eigen::MatrixXd& predictions, const ProbabilityGrid& grid);

}  // namespace dorqf
