#pragma once

#include "dorqf/design.hpp"
#include "dorqf/error.hpp"

#include <doctest.h>

#include <random>
#include <string>

/// Checks that `expr` throws E with a message containing `text`.
#define CHECK_THROWS_CONTAINING(expr, E, text)                                         \
    do {                                                                               \
        bool thrown_ = false;                                                          \
        try {                                                                          \
            (void)(expr);                                                              \
        } catch (const E& e_) {                                                        \
            thrown_ = true;                                                            \
            CHECK_MESSAGE(std::string(e_.what()).find(text) != std::string::npos, e_.what()); \
        }                                                                              \
        CHECK_MESSAGE(thrown_, "expected " #E " from " #expr);                         \
    } while (0)

namespace testdata {

/// Small synthetic dataset in unit scale: outcome = beta0 + z beta1 + h(x)
/// with beta0 = 2 + 3p, beta1 = sin(pi p / 2), h(x) = x^2 and optional noise.
inline dorqf::Dataset synthetic(int n, int q, bool predictor, double noise, std::uint64_t seed, int m = 20) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd;
    dorqf::ProbabilityGrid grid = dorqf::ProbabilityGrid::equispaced(static_cast<std::size_t>(m));
    Eigen::MatrixXd z(n, q), y(n, m), x(n, m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < q; ++j) z(i, j) = u(rng);
        double a = 0.3 * u(rng), b = 0.2 + 0.5 * u(rng);
        for (int l = 0; l < m; ++l) {
            double p = grid[static_cast<std::size_t>(l)];
            x(i, l) = a + b * p;
            double v = 2.0 + 3.0 * p;
            for (int j = 0; j < q; ++j) v += z(i, j) * std::sin(M_PI / 2 * p) * (j + 1);
            if (predictor) v += x(i, l) * x(i, l);
            y(i, l) = v + noise * nd(rng);
        }
    }
    std::vector<std::string> ids, names;
    for (int i = 0; i < n; ++i) ids.push_back("id" + std::to_string(i));
    for (int j = 0; j < q; ++j) names.push_back("z" + std::to_string(j + 1));
    dorqf::ScalingOptions opt;
    opt.covariate_scales = std::vector<dorqf::AffineScale>(static_cast<std::size_t>(q), dorqf::AffineScale(0.0, 1.0));
    opt.predictor_scale = dorqf::AffineScale(0.0, 1.0);
    opt.allow_nonmonotone_outcome = noise > 0.0;
    std::optional<Eigen::MatrixXd> px;
    if (predictor) px = x;
    return dorqf::make_dataset(grid, ids, y, z, names, px, opt);
}

}  // namespace testdata
