#pragma once

#include "dorqf/design.hpp"
#include "dorqf/quantile.hpp"

#include <Eigen/Dense>

namespace dorqf {

/// FPCA summary of the residual process on the grid.
struct ResidualCovariance {
    Eigen::VectorXd eigenvalues;   ///< retained, descending, positive
    Eigen::MatrixXd eigenfunctions;///< m x K, orthonormal under the grid weights
    double noise_variance = 0.0;   ///< white-noise nugget sigma^2
    int components = 0;            ///< K
    double pve_threshold = 0.99;
    double pve_attained = 1.0;
    Eigen::MatrixXd matrix;        ///< Sigma_m = smooth part + sigma^2 I
};

/// Estimates Sigma_m from an n x m residual matrix. The raw covariance is
/// C = E'E / n. The nugget is the mean gap between the diagonal of C and
/// the diagonal interpolated from its first off-diagonals (white noise only
/// inflates the diagonal); the smooth part keeps the leading eigencomponents
/// of C - sigma^2 I reaching the requested fraction of variance.
ResidualCovariance estimate_residual_covariance(const Eigen::Ref<const Eigen::MatrixXd>& residuals,
                                                const ProbabilityGrid& grid, double pve = 0.99);

/// Delta_n = (T'T)^-1 [sum_i T_i' Sigma_m T_i] (T'T)^-1, accumulated subject by subject.
/// A positive ridge replaces T'T by T'T + ridge I, matching a ridged fit.
Eigen::MatrixXd sandwich_covariance(const DesignSystem& design, const Eigen::MatrixXd& sigma_m, double ridge = 0.0);

}  // namespace dorqf
