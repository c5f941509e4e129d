#include "dorqf/io.hpp"

#include "../support/helpers.hpp"

#include <json.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>

using namespace dorqf;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    std::string cmd = std::string(DORQF_CLI_PATH) + " --threads 2 " + args + " 2>&1";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t got;
    while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), got);
    int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("dorqf_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

nlohmann::json read_json(const std::string& path) { return nlohmann::json::parse(read_text(path)); }

void check_manifest(const std::string& dir, const std::string& command) {
    nlohmann::json m = read_json(dir + "/manifest.json");
    CHECK(m.at("command") == command);
    CHECK(m.at("version") == "0.1.0");
    CHECK(m.contains("config"));
    for (const auto& f : m.at("outputs")) CHECK(fs::exists(dir + "/" + f.get<std::string>()));
}

}  // namespace

TEST_CASE("cli quantiles") {
    TempDir t("quantiles");
    write_text(t / "raw.csv",
               "subject_id,variable,value\n"
               "a,outcome,4\na,outcome,1\na,outcome,3\na,outcome,2\n"
               "b,outcome,10\nb,outcome,20\nb,outcome,30\nb,outcome,40\n"
               "c,outcome,5\n");
    RunResult r = run_cli("quantiles --input " + (t / "raw.csv") + " --m 9 --out-dir " + (t / "out"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    WideQuantiles w = read_wide_quantiles(t / "out/outcome_quantiles.csv");
    REQUIRE(w.subjects == std::vector<std::string>{"a", "b"});
    ProbabilityGrid g = ProbabilityGrid::equispaced(9);
    std::vector<double> a{4, 1, 3, 2}, b{10, 20, 30, 40};
    CHECK(w.values.row(0).transpose() == empirical_quantile(a, g).values());
    CHECK(w.values.row(1).transpose() == empirical_quantile(b, g).values());
    CsvTable rej = read_csv(t / "out/rejects.csv");
    CHECK(rej.header == std::vector<std::string>{"subject_id", "variable", "count", "reason"});
    REQUIRE(rej.rows.size() == 1);
    CHECK(rej.rows[0][0] == "c");
    CHECK(rej.rows[0][2] == "1");
    check_manifest(t / "out", "quantiles");

    write_text(t / "empty.csv", "subject_id,variable,value\n");
    r = run_cli("quantiles --input " + (t / "empty.csv") + " --out-dir " + (t / "none"));
    CHECK(r.code == 2);
    CHECK(!fs::exists(t / "none"));

    write_text(t / "bad.csv", "subject_id,variable,value\na,outcome,1\na,outcome,x\n");
    r = run_cli("quantiles --input " + (t / "bad.csv") + " --out-dir " + (t / "bad"));
    CHECK(r.code == 2);
    CHECK(r.output.find("bad.csv:3:") != std::string::npos);
}

TEST_CASE("cli fit, predict, band, test and cv on a simulated export") {
    TempDir t("pipeline");
    RunResult r = run_cli("simulate --table 1 --n 60 --L 60 --seed 3 --export-only --out-dir " + (t / "data"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    const std::string data = " --outcome " + (t / "data/outcome_quantiles.csv") + " --predictor " +
                             (t / "data/predictor_quantiles.csv") + " --covariates " + (t / "data/covariates.csv");

    r = run_cli("fit" + data + " --order 3 --out-dir " + (t / "fit"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(r.output.find("RSS restricted") != std::string::npos);
    CHECK(r.output.find("active constraints") != std::string::npos);
    check_manifest(t / "fit", "fit");
    CHECK(read_json(t / "fit/fit.json").at("version") == "dorqf-fit/1");
    CsvTable coef = read_csv(t / "fit/coefficients.csv");
    CHECK(coef.header == std::vector<std::string>{"p", "beta0", "beta1"});
    CHECK(coef.rows.size() == 100);
    CsvTable tr = read_csv(t / "fit/transport.csv");
    CHECK(tr.header == std::vector<std::string>{"x_unit", "x_raw", "h"});
    CHECK(tr.rows.size() == 200);

    // The archive reproduces the training predictions exactly.
    r = run_cli("predict --fit " + (t / "fit/fit.json") + " --covariates " + (t / "data/covariates.csv") +
                " --predictor " + (t / "data/predictor_quantiles.csv") + " --out-dir " + (t / "pred"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    DorqfFit f = load_fit(t / "fit/fit.json");
    WideQuantiles pred = read_wide_quantiles(t / "pred/predictions.csv");
    WideQuantiles qx = read_wide_quantiles(t / "data/predictor_quantiles.csv");
    CovariateTable cov = read_covariates(t / "data/covariates.csv");
    REQUIRE(pred.subjects == qx.subjects);
    for (std::size_t i = 0; i < pred.subjects.size(); ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        Eigen::VectorXd expected = f.predict_raw(cov.values.row(e).transpose(), Eigen::VectorXd(qx.values.row(e).transpose()));
        CHECK(pred.values.row(e).transpose() == expected);
    }

    // Predictions for training subjects equal the archived fitted values T_i psi.
    Dataset train = make_dataset(qx.grid, qx.subjects, read_wide_quantiles(t / "data/outcome_quantiles.csv").values,
                                 cov.values, cov.names, qx.values);
    DesignSystem d = build_design(train, 3);
    for (Eigen::Index i = 0; i < 5; ++i)
        CHECK((pred.values.row(i).transpose() - d.block(i) * f.psi_restricted).cwiseAbs().maxCoeff() <= 1e-9);

    r = run_cli("band --fit " + (t / "fit/fit.json") + " --target beta1 --alpha 0.05 --B 1000 --seed 4 --out-dir " + (t / "band"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CsvTable band = read_csv(t / "band/band.csv");
    CHECK(band.header == std::vector<std::string>{"p", "center", "sd", "lower", "upper"});
    for (const auto& row : band.rows) CHECK(std::stod(row[4]) >= std::stod(row[3]));
    nlohmann::json bj = read_json(t / "band/band.json");
    CHECK(bj.at("B") == 1000);
    CHECK(bj.at("critical").get<double>() > 0.0);

    r = run_cli("test --drop z1" + data + " --B 199 --seed 5 --out-dir " + (t / "test"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    nlohmann::json tj = read_json(t / "test/test.json");
    CHECK(tj.at("method") == "bootstrap");
    CHECK(tj.at("p_value").get<double>() >= 0.0);
    CHECK(tj.at("p_value").get<double>() <= 1.0);

    r = run_cli("cv" + data + " --orders 1-4 --folds 5 --seed 2 --out-dir " + (t / "cv"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CsvTable cv = read_csv(t / "cv/cv.csv");
    CHECK(cv.header.front() == "order");
    CHECK(cv.header.size() == 8);
    CHECK(cv.rows.size() == 4);
    CsvTable folds = read_csv(t / "cv/folds.csv");
    CHECK(folds.rows.size() == 60);

    r = run_cli("fit" + data + " --orders 1-3 --out-dir " + (t / "fitcv"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(fs::exists(t / "fitcv/cv.csv"));

    // A deterministic rerun writes the same archive.
    r = run_cli("fit" + data + " --order 3 --out-dir " + (t / "fit2"));
    CHECK(read_text(t / "fit2/fit.json") == read_text(t / "fit/fit.json"));
}

TEST_CASE("cli submodel and data errors") {
    TempDir t("errors");
    REQUIRE(run_cli("simulate --table 1 --n 30 --L 30 --seed 2 --export-only --out-dir " + (t / "data")).code == 0);
    const std::string outcome = " --outcome " + (t / "data/outcome_quantiles.csv");
    const std::string predictor = " --predictor " + (t / "data/predictor_quantiles.csv");

    RunResult r = run_cli("fit" + outcome + " --covariates " + (t / "data/covariates.csv") +
                          " --submodel qfosr --order 2 --out-dir " + (t / "qfosr"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(!fs::exists(t / "qfosr/transport.csv"));

    // Missing covariate column at prediction time.
    REQUIRE(run_cli("fit" + outcome + predictor + " --covariates " + (t / "data/covariates.csv") +
                    " --order 2 --out-dir " + (t / "fit")).code == 0);
    write_text(t / "other.csv", "subject_id,age\ns0001,0.5\n");
    r = run_cli("predict --fit " + (t / "fit/fit.json") + " --covariates " + (t / "other.csv") + predictor +
                " --out-dir " + (t / "pred"));
    CHECK(r.code == 2);
    CHECK(r.output.find("missing column 'z1'") != std::string::npos);

    // Subject ids that do not line up across files.
    CsvTable cov = read_csv(t / "data/covariates.csv");
    std::string text = "subject_id,z1\n";
    for (std::size_t i = 1; i < cov.rows.size(); ++i) text += cov.rows[i][0] + "," + cov.rows[i][1] + "\n";
    write_text(t / "short.csv", text);
    r = run_cli("fit" + outcome + predictor + " --covariates " + (t / "short.csv") + " --order 2 --out-dir " + (t / "bad"));
    CHECK(r.code == 2);
    CHECK(r.output.find("missing from") != std::string::npos);
    CHECK(r.output.find("s0001") != std::string::npos);

    // Usage errors.
    CHECK(run_cli("fit" + outcome + " --order 2 --orders 1-3").code == 1);
    CHECK(run_cli("frobnicate").code == 1);
    CHECK(run_cli("band --fit " + (t / "fit/fit.json") + " --B 50 --out-dir " + (t / "b")).code == 1);
    CHECK(run_cli("simulate --table 9 --out-dir " + (t / "s")).code == 1);
    CHECK(run_cli("--help").code == 0);
}

TEST_CASE("cli simulate writes identical tables at any thread count") {
    TempDir t("simulate");
    const std::string args = "simulate --table 1 --n 40 --L 40 --reps 4 --seed 11 --test-size 10 --order 2";
    REQUIRE(run_cli(args + " --out-dir " + (t / "a")).code == 0);
    std::string cmd = std::string(DORQF_CLI_PATH) + " --threads 1 " + args + " --out-dir " + (t / "b") + " > /dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(read_text(t / "a/table1.csv") == read_text(t / "b/table1.csv"));
    CsvTable tab = read_csv(t / "a/table1.csv");
    CHECK(tab.header == std::vector<std::string>{"n", "L", "bias2", "var", "mse", "mean_order", "failures"});
    check_manifest(t / "a", "simulate");
}
