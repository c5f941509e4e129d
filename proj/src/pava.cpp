#include "dorqf/error.hpp"
#include "dorqf/model.hpp"
#include "dorqf/parallel.hpp"

#include <algorithm>

namespace dorqf {

namespace {

struct Pair {
    double x;
    double y;
    Eigen::Index subject;
};

std::vector<Pair> pooled_pairs(const Dataset& data) {
    if (!data.predictor) throw DataError("the isotonic baseline needs a distributional predictor");
    if (data.n() == 0 || data.m() == 0) throw DataError("no data for the isotonic baseline");
    std::vector<Pair> pairs;
    pairs.reserve(static_cast<std::size_t>(data.n() * data.m()));
    for (Eigen::Index i = 0; i < data.n(); ++i)
        for (Eigen::Index l = 0; l < data.m(); ++l)
            pairs.push_back({data.predictor_scale.invert((*data.predictor)(i, l)), data.outcome(i, l), i});
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.x < b.x; });
    return pairs;
}

/// Isotonic fit of x-sorted pairs, skipping one subject when `skip` >= 0.
PavaFit fit_sorted(const std::vector<Pair>& pairs, Eigen::Index skip) {
    PavaFit out;
    std::vector<double> w;
    for (const Pair& p : pairs) {
        if (p.subject == skip) continue;
        if (!out.x.empty() && p.x == out.x.back()) {
            double& wb = w.back();
            out.y.back() = (out.y.back() * wb + p.y) / (wb + 1.0);
            wb += 1.0;
        } else {
            out.x.push_back(p.x);
            out.y.push_back(p.y);
            w.push_back(1.0);
        }
    }
    if (out.x.empty()) throw DataError("no data for the isotonic baseline");
    out.y = pava(out.y, w);
    return out;
}

}  // namespace

std::vector<double> pava(const std::vector<double>& y, const std::vector<double>& w) {
    if (y.size() != w.size()) throw UsageError("values and weights differ in length");
    struct Block {
        double value;
        double weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    blocks.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(w[i] > 0.0)) throw UsageError("isotonic regression weights must be positive");
        blocks.push_back({y[i], w[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].value > blocks.back().value) {
            Block top = blocks.back();
            blocks.pop_back();
            Block& prev = blocks.back();
            double total = prev.weight + top.weight;
            prev.value = (prev.value * prev.weight + top.value * top.weight) / total;
            prev.weight = total;
            prev.count += top.count;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (const Block& b : blocks) out.insert(out.end(), b.count, b.value);
    return out;
}

double PavaFit::evaluate(double v) const {
    if (x.empty()) throw UsageError("empty isotonic fit");
    if (v <= x.front()) return y.front();
    if (v >= x.back()) return y.back();
    auto it = std::upper_bound(x.begin(), x.end(), v);
    std::size_t hi = static_cast<std::size_t>(it - x.begin());
    std::size_t lo = hi - 1;
    double t = (v - x[lo]) / (x[hi] - x[lo]);
    return y[lo] + t * (y[hi] - y[lo]);
}

Eigen::VectorXd PavaFit::evaluate(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = evaluate(v[i]);
    return out;
}

PavaFit fit_pava_baseline(const Dataset& data) { return fit_sorted(pooled_pairs(data), -1); }

LoocvResult loocv_r_squared_pava(const Dataset& data) {
    if (data.n() < 3) throw DataError("leave-one-out needs at least three subjects");
    std::vector<Pair> pairs = pooled_pairs(data);
    LoocvResult out;
    out.predictions.resize(data.n(), data.m());
    parallel_for(static_cast<std::size_t>(data.n()), [&](std::size_t i) {
        const auto s = static_cast<Eigen::Index>(i);
        PavaFit f = fit_sorted(pairs, s);
        for (Eigen::Index l = 0; l < data.m(); ++l)
            out.predictions(s, l) = f.evaluate(data.predictor_scale.invert((*data.predictor)(s, l)));
    });
    out.r_squared = r_squared(data.outcome, out.predictions, data.grid);
    return out;
}

}  // namespace dorqf
