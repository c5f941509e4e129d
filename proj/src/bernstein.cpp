#include "dorqf/bernstein.hpp"

#include "dorqf/error.hpp"

#include <cmath>
#include <sstream>

namespace dorqf {

namespace {

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

void eval_into(double x, int order, bool with_constant, double* out) {
    // Powers built incrementally; stable for the small orders used here.
    std::vector<double> xp(static_cast<std::size_t>(order) + 1), yp(static_cast<std::size_t>(order) + 1);
    xp[0] = yp[0] = 1.0;
    for (int k = 1; k <= order; ++k) {
        xp[static_cast<std::size_t>(k)] = xp[static_cast<std::size_t>(k) - 1] * x;
        yp[static_cast<std::size_t>(k)] = yp[static_cast<std::size_t>(k) - 1] * (1.0 - x);
    }
    int start = with_constant ? 0 : 1;
    for (int k = start; k <= order; ++k)
        out[k - start] = binomial(order, k) * xp[static_cast<std::size_t>(k)] *
                         yp[static_cast<std::size_t>(order - k)];
}

}  // namespace

Eigen::VectorXd bernstein_eval(double x, const BasisSpec& spec) {
    if (spec.order < 1) throw UsageError("Bernstein order must be at least 1");
    if (!(x >= 0.0 && x <= 1.0)) {
        std::ostringstream os;
        os << "Bernstein argument " << x << " is outside [0,1]";
        throw DataError(os.str());
    }
    Eigen::VectorXd out(spec.dimension());
    eval_into(x, spec.order, spec.includes_constant, out.data());
    return out;
}

Eigen::MatrixXd bernstein_matrix(const Eigen::Ref<const Eigen::VectorXd>& xs, const BasisSpec& spec) {
    Eigen::MatrixXd out(xs.size(), spec.dimension());
    for (Eigen::Index i = 0; i < xs.size(); ++i) out.row(i) = bernstein_eval(xs[i], spec).transpose();
    return out;
}

Eigen::VectorXd bernstein_derivative_coeffs(const Eigen::Ref<const Eigen::VectorXd>& coeffs) {
    if (coeffs.size() < 2) throw UsageError("derivative needs at least two Bernstein coefficients");
    const Eigen::Index n = coeffs.size() - 1;
    return static_cast<double>(n) * (coeffs.tail(n) - coeffs.head(n));
}

Eigen::VectorXd power_to_bernstein(const Eigen::Ref<const Eigen::VectorXd>& power_coeffs, int order) {
    if (power_coeffs.size() > order + 1) throw UsageError("polynomial degree exceeds Bernstein order");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(order + 1);
    for (int k = 0; k <= order; ++k)
        for (int j = 0; j <= k && j < power_coeffs.size(); ++j)
            out[k] += binomial(k, j) / binomial(order, j) * power_coeffs[j];
    return out;
}

Eigen::MatrixXd monotone_difference_matrix(int order, bool include_first_nonneg) {
    if (order < 0) throw UsageError("difference matrix order must be non-negative");
    const int extra = include_first_nonneg ? 1 : 0;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(order + extra, order + 1);
    if (include_first_nonneg) a(0, 0) = 1.0;
    for (int k = 0; k < order; ++k) {
        a(k + extra, k) = -1.0;
        a(k + extra, k + 1) = 1.0;
    }
    return a;
}

ConstraintSystem build_constraint_system(const CoefficientLayout& layout, ConstraintOptions options) {
    if (layout.order < 1) throw UsageError("Bernstein order must be at least 1");
    if (layout.q < 0) throw UsageError("negative covariate count");
    if (layout.q > 20) throw UsageError("subset enumeration too large: more than 20 scalar covariates");

    const int n = layout.order;
    const Eigen::Index subsets = Eigen::Index{1} << layout.q;
    const Eigen::Index theta_rows =
        layout.has_distributional ? (n - 1) + (options.theta_origin_row ? 1 : 0) : 0;
    ConstraintSystem sys;
    sys.matrix = Eigen::MatrixXd::Zero(subsets * n + theta_rows, layout.dimension());
    sys.row_labels.reserve(static_cast<std::size_t>(sys.matrix.rows()));

    const Eigen::MatrixXd a_n = monotone_difference_matrix(n, false);
    Eigen::Index row = 0;
    for (Eigen::Index mask = 0; mask < subsets; ++mask) {
        std::string subset = "S={";
        bool first = true;
        for (int j = 1; j <= layout.q; ++j) {
            if (mask & (Eigen::Index{1} << (j - 1))) {
                subset += (first ? "" : ",") + std::to_string(j);
                first = false;
            }
        }
        subset += "}";
        for (int k = 0; k < n; ++k, ++row) {
            sys.matrix.block(row, layout.beta_offset(0), 1, n + 1) = a_n.row(k);
            for (int j = 1; j <= layout.q; ++j)
                if (mask & (Eigen::Index{1} << (j - 1)))
                    sys.matrix.block(row, layout.beta_offset(j), 1, n + 1) = a_n.row(k);
            sys.row_labels.push_back(subset + ":k=" + std::to_string(k));
        }
    }
    if (layout.has_distributional) {
        const Eigen::MatrixXd a_theta = monotone_difference_matrix(n - 1, options.theta_origin_row);
        sys.matrix.block(row, layout.theta_offset(), a_theta.rows(), n) = a_theta;
        if (options.theta_origin_row) sys.row_labels.push_back("theta:origin");
        for (int k = 0; k < n - 1; ++k) sys.row_labels.push_back("theta:k=" + std::to_string(k + 1));
    }
    return sys;
}

}  // namespace dorqf
