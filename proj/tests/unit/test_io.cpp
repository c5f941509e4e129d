#include "dorqf/io.hpp"

#include "../support/helpers.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <random>

using namespace dorqf;

TEST_CASE("CSV parsing") {
    CsvTable t = parse_csv("a,b,\"c,d\"\r\n1,\"say \"\"hi\"\"\",3\n\n4,5,6\n", "mem");
    REQUIRE(t.header.size() == 3);
    CHECK(t.header[2] == "c,d");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "say \"hi\"");
    CHECK(t.line_numbers[1] == 4);
    CHECK(t.column("b", "mem") == 1);
    CHECK_THROWS_CONTAINING(t.column("z", "mem"), DataError, "mem: missing column 'z'");

    CHECK_THROWS_CONTAINING(parse_csv("a,b\n1\n", "f.csv"), DataError, "f.csv:2:");
    CHECK_THROWS_CONTAINING(parse_csv("a,a\n", "f.csv"), DataError, "duplicate column");
    CHECK_THROWS_CONTAINING(parse_csv("a\n\"x\n", "f.csv"), DataError, "unterminated quote");
    CHECK_THROWS_CONTAINING(parse_csv("a\n\"x\"y\n", "f.csv"), DataError, "text after closing quote");
    CHECK_THROWS_CONTAINING(parse_csv("", "f.csv"), DataError, "empty input");
}

TEST_CASE("number formatting round-trips") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int t = 0; t < 1000; ++t) {
        double v = u(rng) * std::pow(10.0, (t % 40) - 20);
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(3.0) == "3");
    CHECK(std::strtod(format_double(std::numeric_limits<double>::denorm_min()).c_str(), nullptr) == std::numeric_limits<double>::denorm_min());
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("plain") == "plain");
}

TEST_CASE("file readers report the offending line") {
    auto dir = std::filesystem::temp_directory_path() / "dorqf_io_test";
    std::filesystem::create_directories(dir);
    std::string raw = (dir / "raw.csv").string();
    write_text(raw, "subject_id,variable,value\na,outcome,1\na,outcome,oops\n");
    CHECK_THROWS_CONTAINING(read_raw_long(raw), DataError, raw + ":3: malformed number 'oops'");
    write_text(raw, "subject_id,variable,value\na,outcome,1\nb,outcome,inf\n");
    CHECK_THROWS_CONTAINING(read_raw_long(raw), DataError, ":3: non-finite");
    write_text(raw, "subject_id,variable,value\na,y,1\n");
    CHECK_THROWS_CONTAINING(read_raw_long(raw), DataError, ":2: unknown variable 'y'");

    std::string cov = (dir / "cov.csv").string();
    write_text(cov, "subject_id,age\na,1\na,2\n");
    CHECK_THROWS_CONTAINING(read_covariates(cov), DataError, ":3: duplicate subject 'a'");
    write_text(cov, "subject_id,age,sex\na,1,0\nb,2,1\n");
    CovariateTable c = read_covariates(cov);
    CHECK(c.names == std::vector<std::string>{"age", "sex"});
    CHECK(c.values(1, 0) == 2.0);

    std::string wide = (dir / "wide.csv").string();
    ProbabilityGrid g = ProbabilityGrid::equispaced(7);
    Eigen::MatrixXd v(2, 7);
    for (int l = 0; l < 7; ++l) {
        v(0, l) = 0.1 * l + 1.0 / 3.0;
        v(1, l) = std::exp(0.3 * l);
    }
    write_text(wide, format_wide_quantiles(g, {"x1", "x,2"}, v));
    WideQuantiles w = read_wide_quantiles(wide);
    CHECK(w.subjects == std::vector<std::string>{"x1", "x,2"});
    CHECK(w.values == v);
    for (std::size_t l = 0; l < 7; ++l) CHECK(w.grid[l] == g[l]);
    CHECK_THROWS_CONTAINING(read_text((dir / "absent.csv").string()), DataError, "cannot open");
    std::filesystem::remove_all(dir);
}

TEST_CASE("fit archive round trip") {
    Dataset data = testdata::synthetic(30, 2, true, 0.3, 17);
    DorqfFit f = fit(data, 3);
    DorqfFit back = fit_from_json(fit_to_json(f));
    CHECK(back.psi_restricted == f.psi_restricted);
    CHECK(back.psi_unrestricted == f.psi_unrestricted);
    CHECK(back.delta == f.delta);
    CHECK(back.layout.order == f.layout.order);
    CHECK(back.covariate_names == f.covariate_names);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        Eigen::VectorXd z = data.covariates.row(i).transpose();
        Eigen::VectorXd x = data.predictor->row(i).transpose();
        CHECK(back.predict_unit(z, x) == f.predict_unit(z, x));
    }
    CHECK(fit_to_json(back) == fit_to_json(f));

    CHECK_THROWS_CONTAINING(fit_from_json("{"), DataError, "not valid JSON");
    CHECK_THROWS_CONTAINING(fit_from_json("{\"version\":\"dorqf-fit/9\"}"), DataError, "unsupported fit archive version");
}

TEST_CASE("output tables") {
    Dataset data = testdata::synthetic(20, 1, true, 0.2, 4);
    DorqfFit f = fit(data, 2);
    std::string coef = format_coefficients(f);
    CHECK(coef.rfind("p,beta0,beta1\n", 0) == 0);
    CHECK(std::count(coef.begin(), coef.end(), '\n') == 21);
    std::string tr = format_transport(f);
    CHECK(tr.rfind("x_unit,x_raw,h\n", 0) == 0);
    CHECK(std::count(tr.begin(), tr.end(), '\n') == 201);
    CsvTable ct = parse_csv(constraint_csv(f.constraints), "constraints");
    CHECK(ct.rows.size() == static_cast<std::size_t>(f.constraints.rows()));
}
