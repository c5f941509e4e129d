#pragma once

#include "dorqf/inference.hpp"
#include "dorqf/model.hpp"
#include "dorqf/quantile.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace dorqf {

/// A parsed CSV file. Fields may be double-quoted; `line_numbers[r]` is the
/// 1-based source line of row r.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    /// Column index of `name`; fails with "missing column" otherwise.
    std::size_t column(const std::string& name, const std::string& source) const;
};

CsvTable parse_csv(const std::string& text, const std::string& source);
CsvTable read_csv(const std::string& path);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

/// Long raw samples `subject_id,variable,value`, grouped per subject in
/// order of first appearance.
struct RawSamples {
    std::vector<std::string> subjects;
    std::map<std::string, std::map<std::string, std::vector<double>>> values;  ///< subject -> variable -> sample
};

RawSamples read_raw_long(const std::string& path);

/// Wide quantile table: column `p`, then one column per subject.
struct WideQuantiles {
    ProbabilityGrid grid = ProbabilityGrid::equispaced();
    std::vector<std::string> subjects;
    Eigen::MatrixXd values;  ///< subjects x grid
};

WideQuantiles read_wide_quantiles(const std::string& path);
std::string format_wide_quantiles(const ProbabilityGrid& grid, const std::vector<std::string>& subjects,
                                  const Eigen::MatrixXd& values);

/// Scalar covariates `subject_id,<name>...`.
struct CovariateTable {
    std::vector<std::string> subjects;
    std::vector<std::string> names;
    Eigen::MatrixXd values;
};

CovariateTable read_covariates(const std::string& path);

/// Quotes a CSV field when it contains a comma, quote or line break.
std::string csv_field(const std::string& s);

/// Shortest text that reads back as the same double.
std::string format_double(double v);

/// Fit archive, version "dorqf-fit/1". Residual matrices are not stored.
std::string fit_to_json(const DorqfFit& fit);
DorqfFit fit_from_json(const std::string& text);
void save_fit(const std::string& path, const DorqfFit& fit);
DorqfFit load_fit(const std::string& path);

/// `p,<beta_0>,...,<beta_q>` on the fit grid.
std::string format_coefficients(const DorqfFit& fit);
/// `x_unit,x_raw,h` on 200 equispaced points of [0,1].
std::string format_transport(const DorqfFit& fit);
/// `p,center,sd,lower,upper`.
std::string format_band(const ConfidenceBand& band);
std::string constraint_csv(const ConstraintSystem& constraints);

}  // namespace dorqf
