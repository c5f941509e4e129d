#include "dorqf/quantile.hpp"

#include "dorqf/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dorqf {

ProbabilityGrid::ProbabilityGrid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.empty()) throw DataError("probability grid is empty");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        double p = points_[i];
        if (!(p > 0.0 && p < 1.0)) {
            std::ostringstream os;
            os << "probability grid level " << p << " is outside (0,1)";
            throw DataError(os.str());
        }
        if (i > 0 && !(p > points_[i - 1])) throw DataError("probability grid is not strictly increasing");
    }
    const std::size_t m = points_.size();
    weights_.resize(static_cast<Eigen::Index>(m));
    if (m == 1) {
        weights_[0] = 1.0;
        return;
    }
    for (std::size_t i = 0; i < m; ++i) {
        double left = i == 0 ? 0.0 : 0.5 * (points_[i - 1] + points_[i]);
        double right = i + 1 == m ? 1.0 : 0.5 * (points_[i] + points_[i + 1]);
        weights_[static_cast<Eigen::Index>(i)] = right - left;
    }
}

ProbabilityGrid ProbabilityGrid::equispaced(std::size_t m, double lo, double hi) {
    if (m < 2) throw DataError("an equispaced grid needs at least two levels");
    std::vector<double> pts(m);
    for (std::size_t i = 0; i < m; ++i)
        pts[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1);
    return ProbabilityGrid(std::move(pts));
}

double ProbabilityGrid::integrate(const Eigen::Ref<const Eigen::VectorXd>& values) const {
    return weights_.dot(values);
}

QuantileFunction::QuantileFunction(ProbabilityGrid grid, Eigen::VectorXd values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.size()) != grid_.size())
        throw DataError("quantile function length does not match its grid");
    if (!values_.allFinite()) throw DataError("quantile function has non-finite values");
    if (max_decrease(values_) > kMonotoneTolerance)
        throw DataError("quantile function values are decreasing");
}

double max_decrease(const Eigen::Ref<const Eigen::VectorXd>& values) {
    double worst = 0.0;
    for (Eigen::Index i = 1; i < values.size(); ++i) worst = std::max(worst, values[i - 1] - values[i]);
    return worst;
}

void empirical_quantile_sorted(std::span<const double> sorted, const ProbabilityGrid& grid,
                               Eigen::Ref<Eigen::VectorXd> out) {
    const std::size_t L = sorted.size();
    const double n1 = static_cast<double>(L + 1);
    for (std::size_t l = 0; l < grid.size(); ++l) {
        double h = n1 * grid[l];
        double k = std::floor(h);
        double w = h - k;
        // Snap levels that are k/(L+1) up to rounding onto the order statistic.
        double nearest = std::round(h);
        if (std::abs(h - nearest) <= 1e-12 * n1) {
            k = nearest;
            w = 0.0;
        }
        double value;
        if (k < 1.0) {
            value = sorted.front();
        } else if (k >= static_cast<double>(L)) {
            value = sorted.back();
        } else {
            auto idx = static_cast<std::size_t>(k);  // 1-based order statistic index
            value = w == 0.0 ? sorted[idx - 1] : (1.0 - w) * sorted[idx - 1] + w * sorted[idx];
        }
        out[static_cast<Eigen::Index>(l)] = value;
    }
}

QuantileFunction empirical_quantile(std::span<const double> sample, const ProbabilityGrid& grid) {
    if (sample.size() < 2) throw DataError("insufficient sample: need at least two observations");
    std::vector<double> sorted(sample.begin(), sample.end());
    for (double v : sorted)
        if (!std::isfinite(v)) throw DataError("sample contains non-finite observations");
    std::stable_sort(sorted.begin(), sorted.end());
    Eigen::VectorXd values(static_cast<Eigen::Index>(grid.size()));
    empirical_quantile_sorted(sorted, grid, values);
    return QuantileFunction(grid, std::move(values));
}

double wasserstein_distance(const QuantileFunction& a, const QuantileFunction& b) {
    if (!(a.grid() == b.grid())) throw DataError("quantile functions live on different grids");
    Eigen::VectorXd diff = (a.values() - b.values()).array().square();
    return std::sqrt(std::max(0.0, a.grid().integrate(diff)));
}

AffineScale::AffineScale(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!(std::isfinite(lo) && std::isfinite(hi)) || !(hi > lo))
        throw DataError("scale requires hi > lo");
}

QuantileFunction rescale_to_unit(const QuantileFunction& q, const AffineScale& scale) {
    const double slack = 1e-12 * (scale.hi - scale.lo);
    Eigen::VectorXd out(q.values().size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        double v = q.values()[i];
        if (v < scale.lo - slack || v > scale.hi + slack) {
            std::ostringstream os;
            os << "value " << v << " out of declared range [" << scale.lo << ", " << scale.hi << "]";
            throw DataError(os.str());
        }
        out[i] = std::clamp(scale.apply(v), 0.0, 1.0);
    }
    return QuantileFunction(q.grid(), std::move(out));
}

QuantileFunction rescale_from_unit(const QuantileFunction& q, const AffineScale& scale) {
    Eigen::VectorXd out = q.values().unaryExpr([&](double u) { return scale.invert(u); });
    return QuantileFunction(q.grid(), std::move(out));
}

}  // namespace dorqf
