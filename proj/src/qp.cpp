#include "dorqf/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dorqf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kActiveTolerance = 1e-8;
constexpr double kViolationTolerance = 1e-12;
constexpr double kDependenceTolerance = 1e-11;

/// Plane rotation acting on a pair (a, b) so that the second entry vanishes.
struct Givens {
    double c = 1.0;
    double s = 0.0;
    double h = 0.0;

    static Givens zeroing(double a, double b) {
        Givens g;
        g.h = std::hypot(a, b);
        if (g.h == 0.0) return g;
        g.c = a / g.h;
        g.s = b / g.h;
        return g;
    }

    template <typename V>
    void apply(V&& first, V&& second) const {
        for (Eigen::Index k = 0; k < first.size(); ++k) {
            double a = first[k];
            double b = second[k];
            first[k] = c * a + s * b;
            second[k] = -s * a + c * b;
        }
    }
};

std::vector<Eigen::Index> active_rows(const Eigen::MatrixXd& d, const Eigen::VectorXd& b, const Eigen::VectorXd& x) {
    std::vector<Eigen::Index> out;
    Eigen::VectorXd slack = d * x - b;
    for (Eigen::Index r = 0; r < slack.size(); ++r)
        if (std::abs(slack[r]) <= kActiveTolerance) out.push_back(r);
    return out;
}

Eigen::MatrixXd ridged(const Eigen::MatrixXd& h, double ridge) {
    if (ridge < 0.0) throw UsageError("ridge must be non-negative");
    Eigen::MatrixXd out = h;
    out.diagonal().array() += ridge;
    return out;
}

}  // namespace

bool KktResiduals::acceptable(double linear_inf_norm) const {
    return primal <= 1e-8 && dual <= 1e-8 && stationarity <= 1e-6 * (1.0 + linear_inf_norm) &&
           complementarity <= 1e-6;
}

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s) {
    KktResiduals r;
    Eigen::VectorXd b = p.lower.size() ? p.lower : Eigen::VectorXd::Zero(p.constraints.rows());
    Eigen::VectorXd slack = p.constraints * s.x - b;
    if (slack.size()) r.primal = std::max(0.0, -slack.minCoeff());
    if (s.multipliers.size()) r.dual = std::max(0.0, -s.multipliers.minCoeff());
    Eigen::VectorXd grad = p.hessian * s.x + p.linear;
    if (p.constraints.rows()) grad -= p.constraints.transpose() * s.multipliers;
    r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
    if (slack.size()) r.complementarity = (s.multipliers.array() * slack.array()).abs().maxCoeff();
    return r;
}

DualActiveSetSolver::DualActiveSetSolver(const Eigen::MatrixXd& hessian, Eigen::MatrixXd constraints,
                                         Eigen::VectorXd lower) {
    if (hessian.rows() != hessian.cols()) throw UsageError("Hessian must be square");
    if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + hessian.cwiseAbs().maxCoeff()))
        throw UsageError("Hessian must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success) throw NumericalError("singular normal equations");
    const Eigen::MatrixXd u = llt.matrixU();
    if (u.diagonal().minCoeff() <= 1e-8 * u.diagonal().maxCoeff())
        throw NumericalError("singular normal equations");
    hessian_ = hessian;
    inverse_factor_ = u.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(u.rows(), u.cols()));
    init_constraints(std::move(constraints), std::move(lower));
}

DualActiveSetSolver DualActiveSetSolver::from_upper_factor(const Eigen::MatrixXd& r_factor,
                                                           Eigen::MatrixXd constraints, Eigen::VectorXd lower) {
    if (r_factor.rows() != r_factor.cols()) throw UsageError("factor must be square");
    Eigen::MatrixXd r = r_factor.triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < r.rows(); ++i)
        if (r(i, i) < 0.0) r.row(i) *= -1.0;
    const double top = r.diagonal().cwiseAbs().maxCoeff();
    if (!(r.diagonal().minCoeff() > 1e-8 * top)) throw NumericalError("singular normal equations");
    DualActiveSetSolver s;
    s.hessian_ = r.transpose() * r;
    s.inverse_factor_ = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(r.rows(), r.cols()));
    s.init_constraints(std::move(constraints), std::move(lower));
    return s;
}

void DualActiveSetSolver::init_constraints(Eigen::MatrixXd constraints, Eigen::VectorXd lower) {
    if (constraints.cols() != inverse_factor_.rows() && constraints.rows() > 0)
        throw UsageError("constraint matrix column count does not match the Hessian");
    if (constraints.rows() == 0) constraints.resize(0, inverse_factor_.rows());
    if (lower.size() == 0) lower = Eigen::VectorXd::Zero(constraints.rows());
    if (lower.size() != constraints.rows()) throw UsageError("lower bound length does not match constraints");
    constraints_ = std::move(constraints);
    lower_ = std::move(lower);
    row_norms_ = constraints_.rowwise().norm();
    for (Eigen::Index r = 0; r < row_norms_.size(); ++r)
        if (row_norms_[r] == 0.0) row_norms_[r] = 1.0;
}

QpSolution DualActiveSetSolver::solve(const Eigen::VectorXd& g) const {
    const Eigen::Index n = inverse_factor_.rows();
    const Eigen::Index rows = constraints_.rows();
    if (g.size() != n) throw UsageError("linear term length does not match the Hessian");

    Eigen::MatrixXd j = inverse_factor_;
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
    std::vector<Eigen::Index> active;
    std::vector<double> u;
    std::vector<char> in_active(static_cast<std::size_t>(rows), 0);
    std::vector<char> excluded(static_cast<std::size_t>(rows), 0);
    Eigen::Index iq = 0;

    Eigen::VectorXd x = -(j * (j.transpose() * g));
    double f = 0.5 * g.dot(x);
    QpSolution sol;
    sol.objective_trace.push_back(f);
    const int max_iter = static_cast<int>(10 * (rows + n));
    int iter = 0;

    auto drop = [&](Eigen::Index l) {
        in_active[static_cast<std::size_t>(active[static_cast<std::size_t>(l)])] = 0;
        active.erase(active.begin() + l);
        u.erase(u.begin() + l);
        for (Eigen::Index c = l; c + 1 < iq; ++c) r.col(c).head(iq) = r.col(c + 1).head(iq);
        r.col(iq - 1).setZero();
        --iq;
        for (Eigen::Index c = l; c < iq; ++c) {
            Givens rot = Givens::zeroing(r(c, c), r(c + 1, c));
            if (rot.h == 0.0) continue;
            for (Eigen::Index col = c; col < iq; ++col) {
                double a = r(c, col);
                double b = r(c + 1, col);
                r(c, col) = rot.c * a + rot.s * b;
                r(c + 1, col) = -rot.s * a + rot.c * b;
            }
            r(c + 1, c) = 0.0;
            rot.apply(j.col(c), j.col(c + 1));
        }
    };

    auto add = [&](Eigen::Index p, Eigen::VectorXd d) -> bool {
        for (Eigen::Index c = n - 1; c > iq; --c) {
            if (d[c] == 0.0) continue;
            Givens rot = Givens::zeroing(d[c - 1], d[c]);
            d[c - 1] = rot.h;
            d[c] = 0.0;
            rot.apply(j.col(c - 1), j.col(c));
        }
        if (std::abs(d[iq]) <= kDependenceTolerance * d.norm()) return false;
        r.col(iq).head(iq + 1) = d.head(iq + 1);
        ++iq;
        active.push_back(p);
        in_active[static_cast<std::size_t>(p)] = 1;
        return true;
    };

    auto best_effort = [&]() {
        QpProblem prob{hessian_, g, constraints_, lower_};
        QpSolution tmp;
        tmp.x = x;
        tmp.multipliers = Eigen::VectorXd::Zero(rows);
        for (std::size_t a = 0; a < active.size(); ++a) tmp.multipliers[active[a]] = u[a];
        return std::make_pair(tmp.x, kkt_residuals(prob, tmp));
    };

    for (;;) {
        // Step 1: most violated constraint (normalised by row length).
        Eigen::Index p = -1;
        double worst = 0.0;
        const double scale = 1.0 + (x.size() ? x.cwiseAbs().maxCoeff() : 0.0);
        for (Eigen::Index c = 0; c < rows; ++c) {
            if (in_active[static_cast<std::size_t>(c)] || excluded[static_cast<std::size_t>(c)]) continue;
            double s = (constraints_.row(c).dot(x) - lower_[c]) / row_norms_[c];
            if (s < -kViolationTolerance * scale && s < worst) {
                worst = s;
                p = c;
            }
        }
        if (p < 0) {
            sol.converged = true;
            break;
        }
        const Eigen::VectorXd np = constraints_.row(p).transpose();
        double sp = np.dot(x) - lower_[p];
        double u_plus = 0.0;

        // Step 2: move along the primal/dual directions until p is satisfied.
        for (;;) {
            if (++iter > max_iter) {
                auto [best, res] = best_effort();
                std::ostringstream os;
                os << "dual active-set solver did not converge in " << max_iter
                   << " iterations (primal residual " << res.primal << ")";
                throw QpNonConvergence(os.str(), best, res);
            }
            const Eigen::VectorXd d = j.transpose() * np;
            const Eigen::VectorXd z = j.rightCols(n - iq) * d.tail(n - iq);
            Eigen::VectorXd rr;
            if (iq > 0) rr = r.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));

            double t1 = kInf;
            Eigen::Index l = -1;
            for (Eigen::Index k = 0; k < iq; ++k) {
                if (rr[k] > 0.0) {
                    double ratio = u[static_cast<std::size_t>(k)] / rr[k];
                    if (ratio < t1) {
                        t1 = ratio;
                        l = k;
                    }
                }
            }
            double t2 = kInf;
            const bool dependent = d.tail(n - iq).norm() <= kDependenceTolerance * d.norm();
            double zn = z.dot(np);
            if (!dependent && zn > 0.0) t2 = -sp / zn;
            double t = std::min(t1, t2);
            if (t == kInf) throw NumericalError("quadratic program is infeasible");

            if (t2 == kInf) {
                for (Eigen::Index k = 0; k < iq; ++k) u[static_cast<std::size_t>(k)] -= t * rr[k];
                u_plus += t;
                drop(l);
                continue;
            }
            x += t * z;
            f += t * zn * (0.5 * t + u_plus);
            for (Eigen::Index k = 0; k < iq; ++k) u[static_cast<std::size_t>(k)] -= t * rr[k];
            u_plus += t;
            if (t2 <= t1) {
                if (add(p, d)) {
                    u.push_back(u_plus);
                } else {
                    excluded[static_cast<std::size_t>(p)] = 1;
                }
                sol.objective_trace.push_back(f);
                break;
            }
            drop(l);
            sp = np.dot(x) - lower_[p];
        }
    }

    sol.iterations = iter;
    sol.x = x;
    sol.multipliers = Eigen::VectorXd::Zero(rows);
    for (std::size_t a = 0; a < active.size(); ++a)
        sol.multipliers[active[a]] = std::max(0.0, u[a]);
    sol.objective = 0.5 * x.dot(hessian_ * x) + g.dot(x);
    sol.active_set = active_rows(constraints_, lower_, x);
    return sol;
}

double gram_condition_number(const Eigen::MatrixXd& gram) {
    if (gram.size() == 0) return 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) return kInf;
    return hi / lo;
}

QpSolution solve_qp(const QpProblem& problem) {
    DualActiveSetSolver solver(problem.hessian, problem.constraints, problem.lower);
    return solver.solve(problem.linear);
}

QpSolution solve_constrained_ls(const NormalEquations& ne, const ConstraintSystem& constraints, double ridge) {
    DualActiveSetSolver solver(ridged(ne.gram, ridge), constraints.matrix);
    return solver.solve(-ne.cross);
}

QpSolution solve_constrained_ls(const DesignSystem& design, const ConstraintSystem& constraints, double ridge) {
    NormalEquations ne = normal_equations(design);
    Eigen::MatrixXd h = ridged(ne.gram, ridge);
    if (gram_condition_number(h) <= kGramConditionLimit) {
        DualActiveSetSolver solver(h, constraints.matrix);
        return solver.solve(-ne.cross);
    }
    const Eigen::Index k = design.stacked.cols();
    Eigen::MatrixXd aug(design.stacked.rows() + (ridge > 0.0 ? k : 0), k);
    aug.topRows(design.stacked.rows()) = design.stacked;
    if (ridge > 0.0) aug.bottomRows(k) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(k, k);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(aug);
    Eigen::MatrixXd rf = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    auto solver = DualActiveSetSolver::from_upper_factor(rf, constraints.matrix);
    return solver.solve(-ne.cross);
}

QpSolution project_onto_cone(const Eigen::VectorXd& z, const Eigen::MatrixXd& omega,
                             const ConstraintSystem& constraints) {
    DualActiveSetSolver solver(omega, constraints.matrix);
    return solver.solve(-(omega * z));
}

Eigen::VectorXd solve_unconstrained_ls(const DesignSystem& design, double ridge) {
    if (ridge < 0.0) throw UsageError("ridge must be non-negative");
    const Eigen::Index k = design.stacked.cols();
    const Eigen::Index nr = design.stacked.rows();
    Eigen::MatrixXd aug(nr + (ridge > 0.0 ? k : 0), k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(aug.rows());
    aug.topRows(nr) = design.stacked;
    rhs.head(nr) = design.response;
    if (ridge > 0.0) aug.bottomRows(k) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(k, k);
    if (aug.rows() < k) throw NumericalError("singular normal equations");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(aug);
    Eigen::VectorXd diag = qr.matrixQR().diagonal().cwiseAbs();
    if (!(diag.minCoeff() > 1e-12 * diag.maxCoeff())) throw NumericalError("singular normal equations");
    return qr.solve(rhs);
}

Eigen::VectorXd solve_unconstrained_ls(const NormalEquations& ne, double ridge) {
    Eigen::LLT<Eigen::MatrixXd> llt(ridged(ne.gram, ridge));
    if (llt.info() != Eigen::Success) throw NumericalError("singular normal equations");
    Eigen::VectorXd diag = Eigen::MatrixXd(llt.matrixL()).diagonal();
    if (!(diag.minCoeff() > 1e-10 * diag.maxCoeff())) throw NumericalError("singular normal equations");
    return llt.solve(ne.cross);
}

}  // namespace dorqf
