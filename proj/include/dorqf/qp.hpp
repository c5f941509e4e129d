#pragma once

#include "dorqf/bernstein.hpp"
#include "dorqf/design.hpp"
#include "dorqf/error.hpp"

#include <Eigen/Dense>

#include <vector>

namespace dorqf {

/// minimise 1/2 x'Hx + g'x  subject to  D x >= b.
struct QpProblem {
    Eigen::MatrixXd hessian;
    Eigen::VectorXd linear;
    Eigen::MatrixXd constraints;
    Eigen::VectorXd lower;  ///< b; empty means all zero
};

struct QpSolution {
    Eigen::VectorXd x;
    std::vector<Eigen::Index> active_set;  ///< rows with |D_r x - b_r| <= 1e-8
    Eigen::VectorXd multipliers;           ///< one per constraint row, zero when inactive
    double objective = 0.0;                ///< 1/2 x'Hx + g'x
    int iterations = 0;
    bool converged = false;
    /// Objective after every constraint addition; non-decreasing for the dual method.
    std::vector<double> objective_trace;
};

struct KktResiduals {
    double primal = 0.0;           ///< max violation of D x >= b
    double dual = 0.0;             ///< max negative multiplier
    double stationarity = 0.0;     ///< ||Hx + g - D'lambda||_inf
    double complementarity = 0.0;  ///< max |lambda_r (D x - b)_r|

    /// Tolerances: primal/dual 1e-8, stationarity 1e-6 (1 + ||g||_inf),
    /// complementarity 1e-6.
    bool acceptable(double linear_inf_norm) const;
};

KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& solution);

class QpNonConvergence : public NumericalError {
public:
    QpNonConvergence(const std::string& what, Eigen::VectorXd best, KktResiduals residuals)
        : NumericalError(what), best_iterate(std::move(best)), residuals(residuals) {}
    Eigen::VectorXd best_iterate;
    KktResiduals residuals;
};

/// Goldfarb-Idnani dual active-set method for strictly convex QPs with
/// inequality constraints. The Hessian factorisation is computed once, so a
/// single solver handles many linear terms (one per projected sample).
class DualActiveSetSolver {
public:
    /// Factors H by Cholesky; fails with "singular normal equations" when H
    /// is not positive definite.
    DualActiveSetSolver(const Eigen::MatrixXd& hessian, Eigen::MatrixXd constraints,
                        Eigen::VectorXd lower = {});

    /// Uses an upper-triangular R with H = R'R (e.g. from a QR of the design).
    static DualActiveSetSolver from_upper_factor(const Eigen::MatrixXd& r_factor, Eigen::MatrixXd constraints,
                                                 Eigen::VectorXd lower = {});

    QpSolution solve(const Eigen::VectorXd& linear) const;

    Eigen::Index dimension() const { return inverse_factor_.rows(); }
    const Eigen::MatrixXd& constraints() const { return constraints_; }

private:
    DualActiveSetSolver() = default;
    void init_constraints(Eigen::MatrixXd constraints, Eigen::VectorXd lower);

    Eigen::MatrixXd inverse_factor_;  ///< J0 = L^{-T} with H = L L'
    Eigen::MatrixXd hessian_;
    Eigen::MatrixXd constraints_;
    Eigen::VectorXd lower_;
    Eigen::VectorXd row_norms_;
};

QpSolution solve_qp(const QpProblem& problem);

/// Ratio of extreme eigenvalues of a symmetric matrix (infinity when singular).
double gram_condition_number(const Eigen::MatrixXd& gram);

/// Condition number above which least-squares solves switch from the Gram
/// matrix to a QR factor of the design.
inline constexpr double kGramConditionLimit = 1e8;

/// Least squares min ||Q_Y - T psi||^2 over D psi >= 0. A positive ridge
/// adds ridge * ||psi||^2. When the Gram matrix is worse conditioned than
/// 1e8, the solver works from a QR factor of the design instead.
QpSolution solve_constrained_ls(const DesignSystem& design, const ConstraintSystem& constraints, double ridge = 0.0);

/// Same problem from accumulated normal equations.
QpSolution solve_constrained_ls(const NormalEquations& ne, const ConstraintSystem& constraints, double ridge = 0.0);

/// argmin over D psi >= 0 of (psi - z)' Omega (psi - z).
QpSolution project_onto_cone(const Eigen::VectorXd& z, const Eigen::MatrixXd& omega,
                             const ConstraintSystem& constraints);

/// Unconstrained least squares through a Householder QR of the design.
Eigen::VectorXd solve_unconstrained_ls(const DesignSystem& design, double ridge = 0.0);
Eigen::VectorXd solve_unconstrained_ls(const NormalEquations& ne, double ridge = 0.0);

}  // namespace dorqf
