#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace dorqf {

/// Bernstein basis of order N. Coefficient functions keep the constant
/// element b_0; the transport map h drops it (which pins h(0) = 0).
struct BasisSpec {
    int order = 1;
    bool includes_constant = true;

    int dimension() const { return includes_constant ? order + 1 : order; }
};

/// b_k(x, N) = C(N,k) x^k (1-x)^(N-k) for k = 0..N (k = 1..N when the
/// constant element is dropped). Requires 0 <= x <= 1.
Eigen::VectorXd bernstein_eval(double x, const BasisSpec& spec);

/// Row-wise evaluation at several points into an (xs.size() x dimension) matrix.
Eigen::MatrixXd bernstein_matrix(const Eigen::Ref<const Eigen::VectorXd>& xs, const BasisSpec& spec);

/// Coefficients N (c_{k+1} - c_k), k = 0..N-1, of the derivative against
/// the order N-1 basis.
Eigen::VectorXd bernstein_derivative_coeffs(const Eigen::Ref<const Eigen::VectorXd>& coeffs);

/// Bernstein coefficients (order N) of the polynomial sum_j a_j x^j.
/// Requires deg <= N.
Eigen::VectorXd power_to_bernstein(const Eigen::Ref<const Eigen::VectorXd>& power_coeffs, int order);

/// First-difference matrix A_N (N x (N+1)); with `include_first_nonneg`
/// an extra leading row selects the first coefficient.
Eigen::MatrixXd monotone_difference_matrix(int order, bool include_first_nonneg);

/// Coefficient vector layout psi = (beta_0, beta_1, ..., beta_q, theta).
struct CoefficientLayout {
    int q = 0;
    int order = 1;
    bool has_distributional = true;

    Eigen::Index beta_offset(int j) const { return static_cast<Eigen::Index>(j) * (order + 1); }
    Eigen::Index beta_size() const { return order + 1; }
    Eigen::Index theta_offset() const { return static_cast<Eigen::Index>(q + 1) * (order + 1); }
    Eigen::Index theta_size() const { return has_distributional ? order : 0; }
    Eigen::Index dimension() const { return theta_offset() + theta_size(); }

    bool operator==(const CoefficientLayout&) const = default;
};

/// Stacked inequality system D psi >= 0 encoding joint monotonicity.
struct ConstraintSystem {
    Eigen::MatrixXd matrix;
    std::vector<std::string> row_labels;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }
};

struct ConstraintOptions {
    /// Adds the row theta_1 >= 0 so that h is non-decreasing from h(0) = 0.
    /// Disabling it reproduces the bare A_{N-1} block on theta.
    bool theta_origin_row = true;
};

/// For every subset S of {1..q} (binary mask order, empty set first) the
/// block A_N (beta_0 + sum_{j in S} beta_j) >= 0, followed by the theta block.
ConstraintSystem build_constraint_system(const CoefficientLayout& layout, ConstraintOptions options = {});

}  // namespace dorqf
