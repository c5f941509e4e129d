#pragma once

#include "dorqf/design.hpp"
#include "dorqf/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dorqf {

/// A functional target: beta_j(p), or the additive effect
/// gamma(p) = beta_0(p) + h(qx(p)) at a fixed unit-scale predictor curve.
struct BandTarget {
    enum class Kind { Beta, Additive };
    Kind kind = Kind::Beta;
    int index = 1;
    /// For Additive; defaults to the training mean predictor curve.
    std::optional<Eigen::VectorXd> qx_unit;

    static BandTarget beta(int j) { return {Kind::Beta, j, std::nullopt}; }
    static BandTarget additive(std::optional<Eigen::VectorXd> qx = std::nullopt) {
        return {Kind::Additive, 0, std::move(qx)};
    }
    /// "beta0", "beta1", ..., or "gamma".
    static BandTarget parse(const std::string& text);
    std::string label() const;

    /// m x K matrix mapping psi to the target curve on the grid.
    Eigen::MatrixXd evaluation_matrix(const DorqfFit& fit) const;
};

/// Target curves of B projected Gaussian draws around the unrestricted
/// estimate, shared by the band and its p-value.
struct ProjectedSamples {
    std::string target;
    Eigen::VectorXd center;       ///< target at psi_restricted
    Eigen::MatrixXd curves;       ///< B x m
    Eigen::VectorXd pointwise_sd; ///< divisor B-1, floored at 1e-12
    Eigen::VectorXd sup_statistics;  ///< u_b
    double max_infeasibility = 0.0;  ///< max over draws of max(0, -D psi_b)
    int draws = 0;
    std::uint64_t seed = 0;
};

ProjectedSamples draw_projected_samples(const DorqfFit& fit, const BandTarget& target, int draws,
                                        std::uint64_t seed);

struct ConfidenceBand {
    std::string target;
    ProbabilityGrid grid = ProbabilityGrid::equispaced();
    Eigen::VectorXd center;
    Eigen::VectorXd pointwise_sd;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double critical = 0.0;  ///< q_{1-alpha}
    double alpha = 0.05;
    int draws = 0;
    std::uint64_t seed = 0;

    bool covers(const Eigen::Ref<const Eigen::VectorXd>& truth) const;
    double mean_width() const;
};

/// Order statistic u_(ceil((1-alpha) B)) of the sup-statistics (at least the first).
double sup_quantile(const Eigen::VectorXd& sup_statistics, double alpha);

ConfidenceBand band_from_samples(const ProjectedSamples& samples, const ProbabilityGrid& grid, double alpha);
ConfidenceBand joint_band(const DorqfFit& fit, const BandTarget& target, double alpha, int draws,
                          std::uint64_t seed);

struct GlobalTestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int draws = 0;
    std::uint64_t seed = 0;
    std::string method;      ///< "band" or "bootstrap"
    std::string null_model;  ///< term set to zero under the null

    bool rejects(double alpha) const { return p_value <= alpha; }
};

/// Statistic T0 = max_p |center(p)| / sd(p); the p-value #{u_b >= T0} / B is
/// the smallest alpha on the grid {b/B} at which the joint band excludes zero.
GlobalTestResult band_pvalue_from_samples(const ProjectedSamples& samples);
GlobalTestResult band_global_pvalue(const DorqfFit& fit, const BandTarget& target, int draws, std::uint64_t seed);

/// A model term that can be removed: one scalar covariate or the predictor.
struct TermId {
    bool predictor = false;
    int covariate = 0;  ///< 0-based, when !predictor

    /// Accepts "x"/"predictor", "z<k>" (1-based) or a covariate name.
    static TermId parse(const std::string& text, const std::vector<std::string>& covariate_names);
    std::string label(const std::vector<std::string>& covariate_names) const;
};

/// Residual bootstrap of T_D = (RSS_N - RSS_F) / RSS_F. Bootstrap
/// responses are the null fit plus whole residual curves of the full fit
/// drawn with replacement.
GlobalTestResult bootstrap_effect_test(const Dataset& data, int order, const TermId& drop, int draws,
                                       std::uint64_t seed, const FitOptions& options = {});

}  // namespace dorqf
