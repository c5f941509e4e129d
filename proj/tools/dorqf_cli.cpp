#include "dorqf/error.hpp"
#include "dorqf/inference.hpp"
#include "dorqf/io.hpp"
#include "dorqf/model.hpp"
#include "dorqf/parallel.hpp"
#include "dorqf/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dorqf;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
    int threads = 0;
    std::string out_dir = ".";
};

struct GridArgs {
    std::size_t m = 100;
    double p_min = 0.005;
    double p_max = 0.995;

    ProbabilityGrid make() const {
        if (m < 2) throw UsageError("--m must be at least 2");
        if (!(p_min > 0.0 && p_max < 1.0 && p_min < p_max)) throw UsageError("grid needs 0 < p-min < p-max < 1");
        return ProbabilityGrid::equispaced(m, p_min, p_max);
    }
    json to_json() const { return {{"m", m}, {"p_min", p_min}, {"p_max", p_max}}; }
};

struct DataArgs {
    std::string outcome;
    std::string predictor;
    std::string covariates;
    std::string submodel = "full";

    json to_json() const {
        return {{"outcome", outcome}, {"predictor", predictor}, {"covariates", covariates}, {"submodel", submodel}};
    }
};

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path prepare_dir(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
    return p;
}

void write_manifest(const fs::path& dir, const std::string& command, json config, const std::vector<std::string>& outputs) {
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["created"] = utc_now();
    j["threads"] = thread_count();
    j["config"] = std::move(config);
    j["outputs"] = outputs;
    write_text((dir / "manifest.json").string(), j.dump(2) + "\n");
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
    return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& flag) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    try {
        while (std::getline(ss, item, ',')) {
            auto dash = item.find('-');
            if (dash != std::string::npos && dash > 0) {
                int a = std::stoi(item.substr(0, dash)), b = std::stoi(item.substr(dash + 1));
                if (a > b) throw UsageError(flag + ": empty range '" + item + "'");
                for (int v = a; v <= b; ++v) out.push_back(v);
            } else {
                out.push_back(std::stoi(item));
            }
        }
    } catch (const std::logic_error&) {
        throw UsageError(flag + ": cannot parse '" + text + "'");
    }
    if (out.empty()) throw UsageError(flag + ": empty list");
    return out;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    try {
        while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    } catch (const std::logic_error&) {
        throw UsageError(flag + ": cannot parse '" + text + "'");
    }
    if (out.empty()) throw UsageError(flag + ": empty list");
    return out;
}

/// Rows of `values` (subjects) reordered to `ids`.
Eigen::MatrixXd reorder(const std::vector<std::string>& from, const Eigen::MatrixXd& values,
                        const std::vector<std::string>& ids) {
    std::map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < from.size(); ++i) index[from[i]] = static_cast<Eigen::Index>(i);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), values.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = values.row(index.at(ids[i]));
    return out;
}

void check_ids(const std::vector<std::string>& reference, const std::string& ref_name,
               const std::vector<std::string>& other, const std::string& other_name) {
    std::set<std::string> a(reference.begin(), reference.end()), b(other.begin(), other.end());
    if (a.size() != reference.size()) throw DataError(ref_name + ": duplicate subject ids");
    if (b.size() != other.size()) throw DataError(other_name + ": duplicate subject ids");
    std::vector<std::string> missing, extra;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(missing));
    std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(extra));
    if (missing.empty() && extra.empty()) return;
    std::string msg = "subject ids differ between " + ref_name + " and " + other_name;
    if (!missing.empty()) msg += "; missing from " + other_name + ": " + join(missing);
    if (!extra.empty()) msg += "; missing from " + ref_name + ": " + join(extra);
    throw DataError(msg);
}

Dataset load_dataset(const DataArgs& args) {
    if (args.submodel != "full" && args.submodel != "qfosr")
        throw UsageError("--submodel must be full or qfosr");
    if (args.outcome.empty()) throw UsageError("--outcome is required");
    const bool use_predictor = args.submodel == "full";
    if (use_predictor && args.predictor.empty())
        throw UsageError("the full model needs --predictor (use --submodel qfosr without one)");
    if (!use_predictor && !args.predictor.empty()) warn("--submodel qfosr ignores --predictor");

    WideQuantiles y = read_wide_quantiles(args.outcome);
    const auto n = static_cast<Eigen::Index>(y.subjects.size());
    check_ids(y.subjects, args.outcome, y.subjects, args.outcome);

    Eigen::MatrixXd z(n, 0);
    std::vector<std::string> names;
    if (!args.covariates.empty()) {
        CovariateTable c = read_covariates(args.covariates);
        check_ids(y.subjects, args.outcome, c.subjects, args.covariates);
        z = reorder(c.subjects, c.values, y.subjects);
        names = c.names;
    }
    std::optional<Eigen::MatrixXd> x;
    if (use_predictor) {
        WideQuantiles xq = read_wide_quantiles(args.predictor);
        check_ids(y.subjects, args.outcome, xq.subjects, args.predictor);
        if (!(xq.grid == y.grid)) throw DataError(args.predictor + ": probability grid differs from " + args.outcome);
        x = reorder(xq.subjects, xq.values, y.subjects);
    }
    if (names.empty() && !x) throw UsageError("the model has neither scalar covariates nor a predictor");
    return make_dataset(y.grid, y.subjects, y.values, z, names, x);
}

void add_data_options(CLI::App* cmd, DataArgs& data) {
    cmd->add_option("--outcome", data.outcome, "wide outcome quantile CSV")->required();
    cmd->add_option("--predictor", data.predictor, "wide predictor quantile CSV");
    cmd->add_option("--covariates", data.covariates, "scalar covariate CSV (subject_id,<name>...)");
    cmd->add_option("--submodel", data.submodel, "full or qfosr (no distributional predictor)");
}

FitOptions fit_options(double ridge, double pve) {
    FitOptions o;
    o.ridge = ridge;
    o.pve = pve;
    if (ridge < 0.0) throw UsageError("--ridge must be non-negative");
    if (!(pve > 0.0 && pve <= 1.0)) throw UsageError("--pve must lie in (0,1]");
    return o;
}

CvWeighting parse_weighting(const std::string& s) {
    if (s == "quadrature") return CvWeighting::Quadrature;
    if (s == "unweighted") return CvWeighting::Unweighted;
    throw UsageError("--weighting must be quadrature or unweighted");
}

std::string format_cv(const CvReport& r) {
    std::ostringstream os;
    os << "order,cvsse";
    for (int v = 0; v < r.folds; ++v) os << ",fold" << (v + 1);
    os << ",failed\n";
    for (const auto& c : r.candidates) {
        os << c.order << ',' << (c.failed ? std::string("nan") : format_double(c.cvsse));
        for (int v = 0; v < r.folds; ++v)
            os << ','
               << (static_cast<std::size_t>(v) < c.fold_sse.size() ? format_double(c.fold_sse[static_cast<std::size_t>(v)])
                                                                    : std::string("nan"));
        os << ',' << (c.failed ? 1 : 0) << '\n';
    }
    return os.str();
}

std::string format_folds(const std::vector<std::string>& ids, const std::vector<int>& folds) {
    std::ostringstream os;
    os << "subject_id,fold\n";
    for (std::size_t i = 0; i < ids.size(); ++i) os << csv_field(ids[i]) << ',' << (folds[i] + 1) << '\n';
    return os.str();
}

json test_json(const GlobalTestResult& r) {
    return {{"method", r.method}, {"null", r.null_model}, {"statistic", r.statistic},
            {"p_value", r.p_value}, {"B", r.draws},       {"seed", r.seed}};
}

// quantiles ------------------------------------------------------------------

struct QuantilesArgs {
    std::string input;
    GridArgs grid;
};

void run_quantiles(const QuantilesArgs& a, const Common& common) {
    const ProbabilityGrid grid = a.grid.make();
    RawSamples raw = read_raw_long(a.input);
    std::set<std::string> variables;
    for (const auto& [id, vars] : raw.values)
        for (const auto& [v, s] : vars) variables.insert(v);

    std::ostringstream rejects;
    rejects << "subject_id,variable,count,reason\n";
    std::vector<std::string> kept;
    for (const auto& id : raw.subjects) {
        const auto& vars = raw.values.at(id);
        bool ok = true;
        for (const auto& v : variables) {
            auto it = vars.find(v);
            std::size_t count = it == vars.end() ? 0 : it->second.size();
            if (count < 2) {
                rejects << csv_field(id) << ',' << v << ',' << count << ",fewer than 2 observations\n";
                ok = false;
            }
        }
        if (ok) kept.push_back(id);
    }
    if (kept.empty()) throw DataError(a.input + ": no subject has at least 2 observations per variable");

    std::map<std::string, std::string> tables;
    for (const auto& v : variables) {
        Eigen::MatrixXd values(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(grid.size()));
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const auto& sample = raw.values.at(kept[i]).at(v);
            values.row(static_cast<Eigen::Index>(i)) = empirical_quantile(sample, grid).values().transpose();
        }
        tables[v] = format_wide_quantiles(grid, kept, values);
    }

    const fs::path dir = prepare_dir(common.out_dir);
    std::vector<std::string> outputs;
    for (const auto& [v, text] : tables) {
        write_text((dir / (v + "_quantiles.csv")).string(), text);
        outputs.push_back(v + "_quantiles.csv");
    }
    write_text((dir / "rejects.csv").string(), rejects.str());
    outputs.push_back("rejects.csv");
    write_manifest(dir, "quantiles", {{"input", a.input}, {"grid", a.grid.to_json()}, {"out_dir", common.out_dir}},
                   outputs);
    std::cout << "subjects: " << kept.size() << " kept, " << raw.subjects.size() - kept.size() << " rejected\n";
}

// fit ------------------------------------------------------------------------

struct FitArgs {
    DataArgs data;
    std::optional<int> order;
    std::string orders = "1-8";
    int folds = 5;
    std::uint64_t seed = 1;
    double ridge = 0.0;
    double pve = 0.99;
    std::string weighting = "quadrature";
};

void run_fit(const FitArgs& a, const Common& common) {
    FitOptions options = fit_options(a.ridge, a.pve);
    CvWeighting weighting = parse_weighting(a.weighting);
    Dataset data = load_dataset(a.data);
    const fs::path dir = prepare_dir(common.out_dir);
    std::vector<std::string> outputs;

    int order = 0;
    if (a.order) {
        order = *a.order;
    } else {
        CvOptions cv;
        cv.orders = parse_int_list(a.orders, "--orders");
        cv.folds = a.folds;
        cv.seed = a.seed;
        cv.weighting = weighting;
        cv.fit = options;
        cv.fit.compute_covariance = false;
        CvReport report = cross_validate(data, cv);
        order = report.selected_order;
        write_text((dir / "cv.csv").string(), format_cv(report));
        outputs.push_back("cv.csv");
        std::cout << "cross-validation selected N = " << order << "\n";
    }

    DorqfFit f = fit(data, order, options);
    if (!a.order) f.provenance.seed = a.seed;
    save_fit((dir / "fit.json").string(), f);
    write_text((dir / "coefficients.csv").string(), format_coefficients(f));
    outputs.insert(outputs.end(), {"fit.json", "coefficients.csv"});
    if (f.layout.has_distributional) {
        write_text((dir / "transport.csv").string(), format_transport(f));
        outputs.push_back("transport.csv");
    }
    write_manifest(dir, "fit",
                   {{"data", a.data.to_json()},
                    {"order", order},
                    {"order_source", a.order ? "fixed" : "cv"},
                    {"orders", a.orders},
                    {"folds", a.folds},
                    {"seed", a.seed},
                    {"weighting", a.weighting},
                    {"ridge", a.ridge},
                    {"pve", a.pve},
                    {"out_dir", common.out_dir}},
                   outputs);

    std::cout << "subjects " << f.subjects << ", order N = " << order << ", parameters " << f.layout.dimension()
              << ", constraints " << f.constraints.matrix.rows() << "\n";
    std::cout << "RSS restricted " << format_double(f.rss_restricted) << ", unrestricted "
              << format_double(f.rss_unrestricted) << "\n";
    std::cout << "active constraints " << f.active_set.size();
    if (!f.active_set.empty()) {
        std::cout << ":";
        for (auto k : f.active_set) std::cout << ' ' << f.constraints.row_labels[static_cast<std::size_t>(k)];
    }
    std::cout << "\n";
}

// predict --------------------------------------------------------------------

struct PredictArgs {
    std::string fit;
    std::string covariates;
    std::string predictor;
};

void run_predict(const PredictArgs& a, const Common& common) {
    DorqfFit f = load_fit(a.fit);
    const bool needs_x = f.layout.has_distributional;
    const int q = f.layout.q;
    if (needs_x && a.predictor.empty()) throw UsageError("this model needs --predictor");
    if (q > 0 && a.covariates.empty()) throw UsageError("this model needs --covariates");

    std::vector<std::string> ids;
    Eigen::MatrixXd z;
    if (q > 0) {
        CovariateTable c = read_covariates(a.covariates);
        ids = c.subjects;
        z.resize(static_cast<Eigen::Index>(ids.size()), q);
        for (int j = 0; j < q; ++j) {
            const std::string& name = f.covariate_names[static_cast<std::size_t>(j)];
            auto it = std::find(c.names.begin(), c.names.end(), name);
            if (it == c.names.end()) throw DataError(a.covariates + ": missing column '" + name + "'");
            z.col(j) = c.values.col(it - c.names.begin());
        }
    }
    Eigen::MatrixXd x;
    if (needs_x) {
        WideQuantiles xq = read_wide_quantiles(a.predictor);
        if (!(xq.grid == f.grid)) throw DataError(a.predictor + ": probability grid differs from the fit");
        if (q > 0) {
            check_ids(ids, a.covariates, xq.subjects, a.predictor);
            x = reorder(xq.subjects, xq.values, ids);
        } else {
            ids = xq.subjects;
            x = xq.values;
        }
    }
    if (ids.empty()) throw DataError("no subjects to predict");
    const auto n = static_cast<Eigen::Index>(ids.size());
    if (z.rows() == 0) z.resize(n, 0);
    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(f.grid.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::optional<Eigen::VectorXd> qx;
        if (needs_x) qx = x.row(i).transpose();
        out.row(i) = f.predict_raw(z.row(i).transpose(), qx).transpose();
    }
    const fs::path dir = prepare_dir(common.out_dir);
    write_text((dir / "predictions.csv").string(), format_wide_quantiles(f.grid, ids, out));
    write_manifest(dir, "predict",
                   {{"fit", a.fit}, {"covariates", a.covariates}, {"predictor", a.predictor}, {"out_dir", common.out_dir}},
                   {"predictions.csv"});
    std::cout << "predicted " << n << " quantile functions\n";
}

// cv -------------------------------------------------------------------------

struct CvArgs {
    DataArgs data;
    std::string orders = "1-8";
    int folds = 5;
    std::uint64_t seed = 1;
    double ridge = 0.0;
    std::string weighting = "quadrature";
};

void run_cv(const CvArgs& a, const Common& common) {
    CvOptions cv;
    cv.orders = parse_int_list(a.orders, "--orders");
    cv.folds = a.folds;
    cv.seed = a.seed;
    cv.weighting = parse_weighting(a.weighting);
    cv.fit = fit_options(a.ridge, 0.99);
    cv.fit.compute_covariance = false;
    Dataset data = load_dataset(a.data);
    CvReport report = cross_validate(data, cv);
    const fs::path dir = prepare_dir(common.out_dir);
    write_text((dir / "cv.csv").string(), format_cv(report));
    write_text((dir / "folds.csv").string(), format_folds(data.subject_ids, report.fold_of_subject));
    write_manifest(dir, "cv",
                   {{"data", a.data.to_json()},
                    {"orders", a.orders},
                    {"folds", a.folds},
                    {"seed", a.seed},
                    {"weighting", a.weighting},
                    {"ridge", a.ridge},
                    {"selected_order", report.selected_order},
                    {"out_dir", common.out_dir}},
                   {"cv.csv", "folds.csv"});
    std::cout << "selected N = " << report.selected_order << "\n";
}

// band -----------------------------------------------------------------------

struct BandArgs {
    std::string fit;
    std::string target = "beta1";
    std::string qx;
    double alpha = 0.05;
    int draws = 1000;
    std::uint64_t seed = 1;
};

void run_band(const BandArgs& a, const Common& common) {
    if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw UsageError("--alpha must lie in (0,1)");
    BandTarget target = BandTarget::parse(a.target);
    DorqfFit f = load_fit(a.fit);
    if (!a.qx.empty()) {
        if (target.kind != BandTarget::Kind::Additive) throw UsageError("--qx applies only to the gamma target");
        WideQuantiles w = read_wide_quantiles(a.qx);
        if (w.subjects.size() != 1) throw DataError(a.qx + ": expected exactly one predictor curve");
        if (!(w.grid == f.grid)) throw DataError(a.qx + ": probability grid differs from the fit");
        Eigen::VectorXd v = w.values.row(0).transpose();
        target.qx_unit = v.unaryExpr([&](double t) { return f.predictor_scale.apply(t); });
    }
    if (a.draws < 100) throw UsageError("joint bands need at least 100 draws");
    ProjectedSamples samples = draw_projected_samples(f, target, a.draws, a.seed);
    ConfidenceBand band = band_from_samples(samples, f.grid, a.alpha);
    GlobalTestResult zero = band_pvalue_from_samples(samples);

    json summary = {{"target", band.target},
                    {"alpha", band.alpha},
                    {"critical", band.critical},
                    {"mean_width", band.mean_width()},
                    {"B", band.draws},
                    {"seed", band.seed},
                    {"max_infeasibility", samples.max_infeasibility},
                    {"zero_test", test_json(zero)}};
    const fs::path dir = prepare_dir(common.out_dir);
    write_text((dir / "band.csv").string(), format_band(band));
    write_text((dir / "band.json").string(), summary.dump(2) + "\n");
    write_manifest(dir, "band",
                   {{"fit", a.fit},
                    {"target", a.target},
                    {"qx", a.qx},
                    {"alpha", a.alpha},
                    {"B", a.draws},
                    {"seed", a.seed},
                    {"out_dir", common.out_dir}},
                   {"band.csv", "band.json"});
    std::cout << band.target << ": critical value " << format_double(band.critical) << ", mean width "
              << format_double(band.mean_width()) << "\n";
}

// test -----------------------------------------------------------------------

struct TestArgs {
    DataArgs data;
    std::string fit;
    std::string drop;
    std::string target;
    std::string method = "bootstrap";
    int order = 3;
    int draws = 500;
    std::uint64_t seed = 1;
    double ridge = 0.0;
};

void run_test(const TestArgs& a, const Common& common) {
    GlobalTestResult r;
    json config;
    if (a.method == "bootstrap") {
        if (a.drop.empty()) throw UsageError("the bootstrap test needs --drop");
        if (!a.fit.empty()) throw UsageError("the bootstrap test refits from data; --fit is not accepted");
        if (a.data.outcome.empty()) throw UsageError("the bootstrap test needs --outcome");
        Dataset data = load_dataset(a.data);
        TermId term = TermId::parse(a.drop, data.covariate_names);
        r = bootstrap_effect_test(data, a.order, term, a.draws, a.seed, fit_options(a.ridge, 0.99));
        config = {{"data", a.data.to_json()}, {"drop", a.drop}, {"order", a.order}};
    } else if (a.method == "band") {
        if (!a.drop.empty() && !a.target.empty()) throw UsageError("--drop and --target are mutually exclusive");
        DorqfFit f;
        if (!a.fit.empty()) {
            if (!a.data.outcome.empty()) throw UsageError("--fit and --outcome are mutually exclusive");
            f = load_fit(a.fit);
        } else {
            if (a.data.outcome.empty()) throw UsageError("the band test needs --fit or --outcome");
            FitOptions o = fit_options(a.ridge, 0.99);
            f = fit(load_dataset(a.data), a.order, o);
        }
        BandTarget target = BandTarget::beta(1);
        if (!a.target.empty()) {
            target = BandTarget::parse(a.target);
        } else if (!a.drop.empty()) {
            TermId term = TermId::parse(a.drop, f.covariate_names);
            if (term.predictor) throw UsageError("the band test covers coefficient functions; use bootstrap to drop the predictor");
            target = BandTarget::beta(term.covariate + 1);
        }
        if (target.kind != BandTarget::Kind::Beta || target.index == 0)
            throw UsageError("the band test needs a slope target beta<j>, j >= 1");
        r = band_global_pvalue(f, target, a.draws, a.seed);
        config = {{"fit", a.fit}, {"data", a.data.to_json()}, {"target", target.label()}, {"order", f.layout.order}};
    } else {
        throw UsageError("--method must be bootstrap or band");
    }
    config["method"] = a.method;
    config["B"] = a.draws;
    config["seed"] = a.seed;
    config["ridge"] = a.ridge;
    config["out_dir"] = common.out_dir;
    const fs::path dir = prepare_dir(common.out_dir);
    write_text((dir / "test.json").string(), test_json(r).dump(2) + "\n");
    write_manifest(dir, "test", config, {"test.json"});
    std::cout << r.method << " test of " << r.null_model << ": statistic " << format_double(r.statistic) << ", p = "
              << format_double(r.p_value) << "\n";
}

// simulate -------------------------------------------------------------------

struct SimulateArgs {
    std::string table = "1";
    std::string n = "200";
    std::string L = "200";
    int reps = 100;
    std::uint64_t seed = 1;
    int m = 100;
    int test_size = 100;
    double noise = 0.1;
    std::string noise_convention = "sd";
    std::string noise_timing = "before";
    std::string test_truth = "empirical";
    std::optional<int> order;
    std::string orders;
    std::string cv_orders = "1-8";
    int folds = 5;
    std::string d_grid;
    std::string method = "band";
    int band_draws = 1000;
    int bootstrap_draws = 500;
    std::string gamma_reference = "latent";
    bool no_pava = false;
    bool records = false;
    bool export_only = false;
};

/// Training data of replication 0 in raw units, as CLI inputs.
std::vector<std::string> export_replication(const ScenarioSpec& spec, const fs::path& dir) {
    SimulatedReplication sim = generate_scenario(spec, 0);
    const SimulatedSubjects& s = sim.train_subjects;
    const ProbabilityGrid& grid = sim.train.grid;
    std::vector<std::string> outputs{"outcome_quantiles.csv"};
    write_text((dir / "outcome_quantiles.csv").string(), format_wide_quantiles(grid, s.ids, s.outcome));
    if (s.predictor.size() > 0) {
        write_text((dir / "predictor_quantiles.csv").string(), format_wide_quantiles(grid, s.ids, s.predictor));
        outputs.push_back("predictor_quantiles.csv");
    }
    if (s.z.size() > 0) {
        std::ostringstream os;
        os << "subject_id,z1\n";
        for (std::size_t i = 0; i < s.ids.size(); ++i) os << csv_field(s.ids[i]) << ',' << format_double(s.z[static_cast<Eigen::Index>(i)]) << '\n';
        write_text((dir / "covariates.csv").string(), os.str());
        outputs.push_back("covariates.csv");
    }
    return outputs;
}

void run_simulate(const SimulateArgs& a, const Common& common) {
    static const std::set<std::string> tables{"1", "2", "3", "s1", "s2", "power"};
    if (!tables.count(a.table)) throw UsageError("--table must be one of 1, 2, 3, s1, s2, power");
    ScenarioSpec base;
    base.replications = a.reps;
    base.seed = a.seed;
    base.m = a.m;
    base.test_size = a.test_size;
    base.noise_level = a.noise;
    if (a.noise_convention == "sd") base.noise_convention = NoiseConvention::StandardDeviation;
    else if (a.noise_convention == "variance") base.noise_convention = NoiseConvention::Variance;
    else throw UsageError("--noise-convention must be sd or variance");
    if (a.noise_timing == "before") base.noise_timing = NoiseTiming::BeforeSampling;
    else if (a.noise_timing == "after") base.noise_timing = NoiseTiming::AfterQuantiles;
    else throw UsageError("--noise-timing must be before or after");
    if (a.test_truth == "empirical") base.test_truth = TestTruth::Empirical;
    else if (a.test_truth == "latent") base.test_truth = TestTruth::Latent;
    else throw UsageError("--test-truth must be empirical or latent");
    if (a.table != "s2" && !a.orders.empty()) throw UsageError("--orders applies only to --table s2");
    if (a.table != "power" && !a.d_grid.empty()) throw UsageError("--d applies only to --table power");

    StudyOptions options;
    options.order = a.order;
    options.cv.orders = parse_int_list(a.cv_orders, "--cv-orders");
    options.cv.folds = a.folds;
    options.include_pava = !a.no_pava;
    options.band_draws = a.band_draws;
    options.bootstrap_draws = a.bootstrap_draws;
    options.test_method = a.method;
    if (a.gamma_reference == "latent") options.gamma_reference = GammaReference::LatentMean;
    else if (a.gamma_reference == "estimated") options.gamma_reference = GammaReference::EstimatedMean;
    else throw UsageError("--gamma-reference must be latent or estimated");

    const std::vector<int> ns = parse_int_list(a.n, "--n");
    const std::vector<int> Ls = parse_int_list(a.L, "--L");
    if (a.export_only) {
        ScenarioSpec s = base;
        s.n = ns.front();
        s.L = Ls.front();
        s.scenario = a.table == "3" ? Scenario::B : a.table == "power" ? Scenario::A2 : Scenario::A1;
        if (a.table == "power") s.d = a.d_grid.empty() ? 0.0 : parse_double_list(a.d_grid, "--d").front();
        s.validate();
        const fs::path dir = prepare_dir(common.out_dir);
        std::vector<std::string> outputs = export_replication(s, dir);
        write_manifest(dir, "simulate",
                       {{"export_only", true}, {"scenario", to_string(s.scenario)}, {"n", s.n}, {"L", s.L},
                        {"d", s.d}, {"seed", a.seed}, {"m", a.m}, {"noise_level", a.noise},
                        {"noise_convention", a.noise_convention}, {"noise_timing", a.noise_timing},
                        {"out_dir", common.out_dir}},
                       outputs);
        std::cout << "exported replication 0 of scenario " << to_string(s.scenario) << "\n";
        return;
    }
    std::vector<ScenarioReport> reports;
    for (int n : ns) {
        for (int L : Ls) {
            ScenarioSpec s = base;
            s.n = n;
            s.L = L;
            if (a.table == "1" || a.table == "2" || a.table == "s1") {
                s.scenario = Scenario::A1;
                reports.push_back(run_estimation_study(s, options));
            } else if (a.table == "3") {
                s.scenario = Scenario::B;
                reports.push_back(run_estimation_study(s, options));
            } else if (a.table == "s2") {
                s.scenario = Scenario::A1;
                std::vector<int> orders = a.orders.empty() ? std::vector<int>{2, 3, 4} : parse_int_list(a.orders, "--orders");
                for (auto& r : run_coverage_study(s, orders, options)) reports.push_back(std::move(r));
            } else {
                s.scenario = Scenario::A2;
                std::vector<double> d = a.d_grid.empty() ? kDefaultPowerGrid : parse_double_list(a.d_grid, "--d");
                for (auto& r : run_power_study(s, d, options)) reports.push_back(std::move(r));
            }
        }
    }

    std::string text;
    if (a.table == "1") text = format_table1(reports);
    else if (a.table == "2") text = format_table2(reports);
    else if (a.table == "3") text = format_table3(reports);
    else if (a.table == "s1") text = format_table_s1(reports);
    else if (a.table == "s2") text = format_table_s2(reports);
    else text = format_power(reports);

    const fs::path dir = prepare_dir(common.out_dir);
    const std::string name = "table" + a.table + ".csv";
    std::vector<std::string> outputs{name};
    write_text((dir / name).string(), text);
    if (a.records) {
        write_text((dir / "records.csv").string(), format_records(reports));
        outputs.push_back("records.csv");
    }
    json runtimes = json::array();
    int failures = 0;
    for (const auto& r : reports) {
        runtimes.push_back(r.runtime_seconds);
        failures += r.failures;
    }
    write_manifest(dir, "simulate",
                   {{"table", a.table},
                    {"n", ns},
                    {"L", Ls},
                    {"replications", a.reps},
                    {"seed", a.seed},
                    {"m", a.m},
                    {"test_size", a.test_size},
                    {"noise_level", a.noise},
                    {"noise_convention", a.noise_convention},
                    {"noise_timing", a.noise_timing},
                    {"test_truth", a.test_truth},
                    {"order", a.order ? json(*a.order) : json(nullptr)},
                    {"orders", a.orders},
                    {"cv_orders", a.cv_orders},
                    {"folds", a.folds},
                    {"d", a.d_grid},
                    {"method", a.method},
                    {"band_draws", a.band_draws},
                    {"bootstrap_draws", a.bootstrap_draws},
                    {"gamma_reference", a.gamma_reference},
                    {"pava", !a.no_pava},
                    {"failures", failures},
                    {"runtime_seconds", runtimes},
                    {"out_dir", common.out_dir}},
                   outputs);
    std::cout << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributional regression for quantile function responses"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    Common common;
    app.add_option("--threads", common.threads, "worker threads (default: DORQF_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);

    auto add_out = [&](CLI::App* cmd) {
        cmd->add_option("--out-dir", common.out_dir, "output directory")->capture_default_str();
    };

    QuantilesArgs qa;
    auto* quantiles = app.add_subcommand("quantiles", "empirical quantile functions from raw long samples");
    quantiles->add_option("--input", qa.input, "raw CSV subject_id,variable,value")->required();
    quantiles->add_option("--m", qa.grid.m, "grid size")->capture_default_str();
    quantiles->add_option("--p-min", qa.grid.p_min, "lowest level")->capture_default_str();
    quantiles->add_option("--p-max", qa.grid.p_max, "highest level")->capture_default_str();
    add_out(quantiles);

    FitArgs fa;
    auto* fitc = app.add_subcommand("fit", "fit the constrained model");
    add_data_options(fitc, fa.data);
    auto* order_opt = fitc->add_option("--order", fa.order, "Bernstein order N (omit to select by cross-validation)");
    fitc->add_option("--orders", fa.orders, "candidate orders for cross-validation")->excludes(order_opt);
    fitc->add_option("--folds", fa.folds, "cross-validation folds")->excludes(order_opt);
    fitc->add_option("--weighting", fa.weighting, "quadrature or unweighted")->excludes(order_opt);
    fitc->add_option("--seed", fa.seed, "fold assignment seed");
    fitc->add_option("--ridge", fa.ridge, "ridge added to the normal equations");
    fitc->add_option("--pve", fa.pve, "explained-variance threshold for the residual FPCA");
    add_out(fitc);

    PredictArgs pa;
    auto* predict = app.add_subcommand("predict", "predict outcome quantile functions");
    predict->add_option("--fit", pa.fit, "fit archive")->required();
    predict->add_option("--covariates", pa.covariates, "scalar covariates in raw units");
    predict->add_option("--predictor", pa.predictor, "wide predictor quantile CSV in raw units");
    add_out(predict);

    CvArgs ca;
    auto* cvc = app.add_subcommand("cv", "select the Bernstein order by cross-validation");
    add_data_options(cvc, ca.data);
    cvc->add_option("--orders", ca.orders, "candidate orders, e.g. 1-8 or 2,3,5")->capture_default_str();
    cvc->add_option("--folds", ca.folds, "folds")->capture_default_str();
    cvc->add_option("--seed", ca.seed, "fold assignment seed")->capture_default_str();
    cvc->add_option("--ridge", ca.ridge, "ridge added to the normal equations");
    cvc->add_option("--weighting", ca.weighting, "quadrature or unweighted")->capture_default_str();
    add_out(cvc);

    BandArgs ba;
    auto* band = app.add_subcommand("band", "joint confidence band by projected sampling");
    band->add_option("--fit", ba.fit, "fit archive")->required();
    band->add_option("--target", ba.target, "beta<j> or gamma")->capture_default_str();
    band->add_option("--qx", ba.qx, "predictor curve (raw units) for the gamma target; default: training mean");
    band->add_option("--alpha", ba.alpha, "level")->capture_default_str();
    band->add_option("--B", ba.draws, "projected samples")->capture_default_str();
    band->add_option("--seed", ba.seed, "seed")->capture_default_str();
    add_out(band);

    TestArgs ta;
    auto* test = app.add_subcommand("test", "global test of a model term");
    add_data_options(test, ta.data);
    test->get_option("--outcome")->required(false);
    test->add_option("--fit", ta.fit, "fit archive (band method)");
    test->add_option("--drop", ta.drop, "term removed under the null: a covariate name, zK or x");
    test->add_option("--target", ta.target, "band method target beta<j>");
    test->add_option("--method", ta.method, "bootstrap or band")->capture_default_str();
    test->add_option("--order", ta.order, "Bernstein order N")->capture_default_str();
    test->add_option("--B", ta.draws, "resamples")->capture_default_str();
    test->add_option("--seed", ta.seed, "seed")->capture_default_str();
    test->add_option("--ridge", ta.ridge, "ridge added to the normal equations");
    add_out(test);

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Monte-Carlo studies");
    sim->add_option("--table", sa.table, "1, 2, 3, s1, s2 or power")->capture_default_str();
    sim->add_option("--n", sa.n, "training sizes (comma list)")->capture_default_str();
    sim->add_option("--L", sa.L, "raw draws per subject (comma list; 0 = latent curves)")->capture_default_str();
    sim->add_option("--reps", sa.reps, "replications")->capture_default_str();
    sim->add_option("--seed", sa.seed, "master seed")->capture_default_str();
    sim->add_option("--m", sa.m, "grid size")->capture_default_str();
    sim->add_option("--test-size", sa.test_size, "test subjects per replication")->capture_default_str();
    sim->add_option("--noise", sa.noise, "noise level")->capture_default_str();
    sim->add_option("--noise-convention", sa.noise_convention, "sd or variance")->capture_default_str();
    sim->add_option("--noise-timing", sa.noise_timing, "before (raw draws) or after (quantiles)")->capture_default_str();
    sim->add_option("--test-truth", sa.test_truth, "empirical or latent")->capture_default_str();
    sim->add_option("--order", sa.order, "fixed order for tables 1-3 and s1 (default: CV per replication)");
    sim->add_option("--orders", sa.orders, "orders for table s2 (default 2,3,4)");
    sim->add_option("--cv-orders", sa.cv_orders, "candidate orders for CV")->capture_default_str();
    sim->add_option("--folds", sa.folds, "CV folds")->capture_default_str();
    sim->add_option("--d", sa.d_grid, "power table d grid (default 0,0.1,0.25,0.5,0.75,1)");
    sim->add_option("--method", sa.method, "power table test: band or bootstrap")->capture_default_str();
    sim->add_option("--band-draws", sa.band_draws, "projected samples per band")->capture_default_str();
    sim->add_option("--bootstrap-draws", sa.bootstrap_draws, "bootstrap resamples per test")->capture_default_str();
    sim->add_option("--gamma-reference", sa.gamma_reference, "latent or estimated mean predictor")->capture_default_str();
    sim->add_flag("--no-pava", sa.no_pava, "skip the isotonic baseline in table 3");
    sim->add_flag("--records", sa.records, "also write per-replication records");
    sim->add_flag("--export-only", sa.export_only, "write the training data of replication 0 instead of running the study");
    add_out(sim);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (common.threads > 0) set_thread_count(static_cast<std::size_t>(common.threads));
        if (*quantiles) run_quantiles(qa, common);
        else if (*fitc) run_fit(fa, common);
        else if (*predict) run_predict(pa, common);
        else if (*cvc) run_cv(ca, common);
        else if (*band) run_band(ba, common);
        else if (*test) run_test(ta, common);
        else if (*sim) run_simulate(sa, common);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
