#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace dorqf {

/// Strictly increasing probability levels in the open interval (0,1).
class ProbabilityGrid {
public:
    explicit ProbabilityGrid(std::vector<double> points);

    /// m equispaced levels on [lo, hi]; the default is 100 levels on [0.005, 0.995].
    static ProbabilityGrid equispaced(std::size_t m = 100, double lo = 0.005, double hi = 0.995);

    std::size_t size() const noexcept { return points_.size(); }
    double operator[](std::size_t i) const { return points_[i]; }
    const std::vector<double>& points() const noexcept { return points_; }
    Eigen::Map<const Eigen::VectorXd> as_vector() const {
        return {points_.data(), static_cast<Eigen::Index>(points_.size())};
    }

    /// Quadrature weights for integrals over [0,1]: each level owns the cell
    /// between the midpoints to its neighbours, the outer cells extend to 0
    /// and 1. Weights sum to one.
    const Eigen::VectorXd& weights() const noexcept { return weights_; }

    /// Weighted integral of grid values.
    double integrate(const Eigen::Ref<const Eigen::VectorXd>& values) const;

    bool operator==(const ProbabilityGrid& other) const { return points_ == other.points_; }

private:
    std::vector<double> points_;
    Eigen::VectorXd weights_;
};

/// A non-decreasing function on a probability grid.
class QuantileFunction {
public:
    QuantileFunction(ProbabilityGrid grid, Eigen::VectorXd values);

    const ProbabilityGrid& grid() const noexcept { return grid_; }
    const Eigen::VectorXd& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return grid_.size(); }
    double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }

    static constexpr double kMonotoneTolerance = 1e-10;

private:
    ProbabilityGrid grid_;
    Eigen::VectorXd values_;
};

/// Largest decrease between consecutive entries (0 for a non-decreasing vector).
double max_decrease(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Empirical quantile function by linear interpolation of order statistics:
/// at level p with h = (L+1)p, k = floor(h), w = h - k the value is
/// (1-w) X(k) + w X(k+1). Levels below 1/(L+1) return the sample minimum and
/// levels above L/(L+1) the maximum.
QuantileFunction empirical_quantile(std::span<const double> sample, const ProbabilityGrid& grid);

/// Same computation writing into a preallocated vector; `sorted` must be
/// sorted ascending and finite.
void empirical_quantile_sorted(std::span<const double> sorted, const ProbabilityGrid& grid,
                               Eigen::Ref<Eigen::VectorXd> out);

/// L2 distance between two quantile functions on the same grid.
double wasserstein_distance(const QuantileFunction& a, const QuantileFunction& b);

/// Affine map [lo, hi] -> [0, 1].
struct AffineScale {
    double lo = 0.0;
    double hi = 1.0;

    AffineScale() = default;
    AffineScale(double lo_, double hi_);

    double apply(double v) const { return (v - lo) / (hi - lo); }
    double invert(double u) const { return lo + u * (hi - lo); }
    bool is_identity() const { return lo == 0.0 && hi == 1.0; }
};

/// Maps every value through `scale`; fails with "out of declared range" when
/// a value lies outside [lo, hi].
QuantileFunction rescale_to_unit(const QuantileFunction& q, const AffineScale& scale);
QuantileFunction rescale_from_unit(const QuantileFunction& q, const AffineScale& scale);

}  // namespace dorqf
