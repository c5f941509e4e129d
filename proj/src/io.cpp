#include "dorqf/io.hpp"

#include "dorqf/error.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dorqf {

namespace {

using nlohmann::json;

std::string where(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line) + ": ";
}

double parse_number(const std::string& field, const std::string& source, std::size_t line) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || begin == end)
        throw DataError(where(source, line) + "malformed number '" + field + "'");
    if (!std::isfinite(v)) throw DataError(where(source, line) + "non-finite value '" + field + "'");
    return v;
}

std::vector<std::string> split_line(const std::string& line, const std::string& source, std::size_t number) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            if (!field.empty() || was_quoted) throw DataError(where(source, number) + "misplaced quote");
            quoted = was_quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(field));
            field.clear();
            was_quoted = false;
        } else {
            if (was_quoted) throw DataError(where(source, number) + "text after closing quote");
            field.push_back(ch);
        }
    }
    if (quoted) throw DataError(where(source, number) + "unterminated quote");
    out.push_back(std::move(field));
    return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd matrix_from(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const json& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows) throw DataError("fit archive: matrix row count mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = data[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != cols) throw DataError("fit archive: matrix column count mismatch");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
    std::vector<double> v = j.get<std::vector<double>>();
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json scale_json(const AffineScale& s) { return json{{"lo", s.lo}, {"hi", s.hi}}; }
AffineScale scale_from(const json& j) { return AffineScale(j.at("lo").get<double>(), j.at("hi").get<double>()); }

}  // namespace

std::size_t CsvTable::column(const std::string& name, const std::string& source) const {
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == name) return c;
    throw DataError(source + ": missing column '" + name + "'");
}

CsvTable parse_csv(const std::string& text, const std::string& source) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_line(line, source, number);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            std::set<std::string> seen;
            for (const auto& h : t.header)
                if (!seen.insert(h).second) throw DataError(where(source, number) + "duplicate column '" + h + "'");
            continue;
        }
        if (fields.size() != t.header.size())
            throw DataError(where(source, number) + "expected " + std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(number);
    }
    if (!have_header) throw DataError(source + ": empty input");
    return t;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
    if (!out) throw DataError("write failed for '" + path + "'");
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_text(path), path); }

RawSamples read_raw_long(const std::string& path) {
    CsvTable t = read_csv(path);
    const std::size_t cs = t.column("subject_id", path);
    const std::size_t cv = t.column("variable", path);
    const std::size_t cx = t.column("value", path);
    if (t.rows.empty()) throw DataError(path + ": no observations");
    RawSamples raw;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string& var = row[cv];
        if (var != "outcome" && var != "predictor")
            throw DataError(where(path, t.line_numbers[r]) + "unknown variable '" + var +
                            "' (expected outcome or predictor)");
        if (row[cs].empty()) throw DataError(where(path, t.line_numbers[r]) + "empty subject id");
        double v = parse_number(row[cx], path, t.line_numbers[r]);
        auto [it, inserted] = raw.values.try_emplace(row[cs]);
        if (inserted) raw.subjects.push_back(row[cs]);
        it->second[var].push_back(v);
    }
    return raw;
}

WideQuantiles read_wide_quantiles(const std::string& path) {
    CsvTable t = read_csv(path);
    if (t.header.empty() || t.header.front() != "p") throw DataError(path + ": first column must be 'p'");
    if (t.header.size() < 2) throw DataError(path + ": no subject columns");
    if (t.rows.empty()) throw DataError(path + ": no grid rows");
    std::vector<double> p;
    const auto n = static_cast<Eigen::Index>(t.header.size() - 1);
    Eigen::MatrixXd values(n, static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        p.push_back(parse_number(t.rows[r][0], path, t.line_numbers[r]));
        for (Eigen::Index i = 0; i < n; ++i)
            values(i, static_cast<Eigen::Index>(r)) =
                parse_number(t.rows[r][static_cast<std::size_t>(i + 1)], path, t.line_numbers[r]);
    }
    WideQuantiles w;
    try {
        w.grid = ProbabilityGrid(std::move(p));
    } catch (const Error& e) {
        throw DataError(path + ": " + e.what());
    }
    w.subjects.assign(t.header.begin() + 1, t.header.end());
    w.values = std::move(values);
    return w;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string format_wide_quantiles(const ProbabilityGrid& grid, const std::vector<std::string>& subjects,
                                  const Eigen::MatrixXd& values) {
    std::ostringstream os;
    os << 'p';
    for (const auto& s : subjects) os << ',' << csv_field(s);
    os << '\n';
    for (std::size_t l = 0; l < grid.size(); ++l) {
        os << format_double(grid[l]);
        for (Eigen::Index i = 0; i < values.rows(); ++i) os << ',' << format_double(values(i, static_cast<Eigen::Index>(l)));
        os << '\n';
    }
    return os.str();
}

CovariateTable read_covariates(const std::string& path) {
    CsvTable t = read_csv(path);
    const std::size_t cs = t.column("subject_id", path);
    CovariateTable c;
    for (std::size_t k = 0; k < t.header.size(); ++k)
        if (k != cs) c.names.push_back(t.header[k]);
    c.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(c.names.size()));
    std::set<std::string> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (!seen.insert(row[cs]).second)
            throw DataError(where(path, t.line_numbers[r]) + "duplicate subject '" + row[cs] + "'");
        c.subjects.push_back(row[cs]);
        Eigen::Index j = 0;
        for (std::size_t k = 0; k < row.size(); ++k)
            if (k != cs) c.values(static_cast<Eigen::Index>(r), j++) = parse_number(row[k], path, t.line_numbers[r]);
    }
    return c;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) return std::to_string(v);
    return std::string(buf, ptr);
}

std::string fit_to_json(const DorqfFit& f) {
    json j;
    j["version"] = "dorqf-fit/1";
    j["spec"] = {{"order", f.layout.order},
                 {"q", f.layout.q},
                 {"has_distributional", f.layout.has_distributional},
                 {"theta_origin_row", f.options.theta_origin_row},
                 {"ridge", f.ridge_used},
                 {"pve", f.options.pve}};
    j["subjects"] = f.subjects;
    j["subject_ids"] = f.subject_ids;
    j["grid"] = f.grid.points();
    j["psi_restricted"] = vector_json(f.psi_restricted);
    j["psi_unrestricted"] = vector_json(f.psi_unrestricted);
    j["constraints"] = {{"labels", f.constraints.row_labels}, {"matrix", matrix_json(f.constraints.matrix)}};
    j["active_set"] = f.active_set;
    j["multipliers"] = vector_json(f.multipliers);
    j["qp_iterations"] = f.qp_iterations;
    j["rss"] = {{"restricted", f.rss_restricted}, {"unrestricted", f.rss_unrestricted}};
    j["gram"] = matrix_json(f.gram);
    if (f.residual_covariance) {
        const ResidualCovariance& rc = *f.residual_covariance;
        j["residual_covariance"] = {{"eigenvalues", vector_json(rc.eigenvalues)},
                                    {"eigenfunctions", matrix_json(rc.eigenfunctions)},
                                    {"noise_variance", rc.noise_variance},
                                    {"components", rc.components},
                                    {"pve_threshold", rc.pve_threshold},
                                    {"pve_attained", rc.pve_attained},
                                    {"matrix", matrix_json(rc.matrix)}};
    } else {
        j["residual_covariance"] = nullptr;
    }
    j["delta"] = f.has_covariance() ? matrix_json(f.delta) : json(nullptr);
    json covs = json::array();
    for (std::size_t k = 0; k < f.covariate_names.size(); ++k)
        covs.push_back({{"name", f.covariate_names[k]}, {"scale", scale_json(f.covariate_scales[k])}});
    j["covariates"] = std::move(covs);
    j["predictor_scale"] = f.layout.has_distributional ? scale_json(f.predictor_scale) : json(nullptr);
    j["mean_predictor"] = vector_json(f.mean_predictor);
    j["provenance"] = {{"seed", f.provenance.seed ? json(*f.provenance.seed) : json(nullptr)},
                       {"created", f.provenance.created},
                       {"input_digest", f.provenance.input_digest}};
    return j.dump(1) + "\n";
}

DorqfFit fit_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("fit archive is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("version").get<std::string>() != "dorqf-fit/1")
            throw DataError("unsupported fit archive version '" + j.at("version").get<std::string>() + "'");
        DorqfFit f;
        const json& spec = j.at("spec");
        f.layout = CoefficientLayout{spec.at("q").get<int>(), spec.at("order").get<int>(),
                                     spec.at("has_distributional").get<bool>()};
        f.options.theta_origin_row = spec.at("theta_origin_row").get<bool>();
        f.options.pve = spec.at("pve").get<double>();
        f.ridge_used = spec.at("ridge").get<double>();
        f.options.ridge = f.ridge_used;
        f.subjects = j.at("subjects").get<Eigen::Index>();
        f.subject_ids = j.at("subject_ids").get<std::vector<std::string>>();
        f.grid = ProbabilityGrid(j.at("grid").get<std::vector<double>>());
        f.psi_restricted = vector_from(j.at("psi_restricted"));
        f.psi_unrestricted = vector_from(j.at("psi_unrestricted"));
        f.constraints.row_labels = j.at("constraints").at("labels").get<std::vector<std::string>>();
        f.constraints.matrix = matrix_from(j.at("constraints").at("matrix"));
        f.active_set = j.at("active_set").get<std::vector<Eigen::Index>>();
        f.multipliers = vector_from(j.at("multipliers"));
        f.qp_iterations = j.at("qp_iterations").get<int>();
        f.rss_restricted = j.at("rss").at("restricted").get<double>();
        f.rss_unrestricted = j.at("rss").at("unrestricted").get<double>();
        f.gram = matrix_from(j.at("gram"));
        if (!j.at("residual_covariance").is_null()) {
            const json& rc = j.at("residual_covariance");
            ResidualCovariance r;
            r.eigenvalues = vector_from(rc.at("eigenvalues"));
            r.eigenfunctions = matrix_from(rc.at("eigenfunctions"));
            r.noise_variance = rc.at("noise_variance").get<double>();
            r.components = rc.at("components").get<int>();
            r.pve_threshold = rc.at("pve_threshold").get<double>();
            r.pve_attained = rc.at("pve_attained").get<double>();
            r.matrix = matrix_from(rc.at("matrix"));
            f.residual_covariance = std::move(r);
        }
        f.options.compute_covariance = !j.at("delta").is_null();
        if (!j.at("delta").is_null()) f.delta = matrix_from(j.at("delta"));
        for (const json& c : j.at("covariates")) {
            f.covariate_names.push_back(c.at("name").get<std::string>());
            f.covariate_scales.push_back(scale_from(c.at("scale")));
        }
        if (!j.at("predictor_scale").is_null()) f.predictor_scale = scale_from(j.at("predictor_scale"));
        f.mean_predictor = vector_from(j.at("mean_predictor"));
        const json& prov = j.at("provenance");
        if (!prov.at("seed").is_null()) f.provenance.seed = prov.at("seed").get<std::uint64_t>();
        f.provenance.created = prov.at("created").get<std::string>();
        f.provenance.input_digest = prov.at("input_digest").get<std::string>();

        const Eigen::Index k = f.layout.dimension();
        if (f.psi_restricted.size() != k || f.psi_unrestricted.size() != k || f.constraints.matrix.cols() != k ||
            f.gram.rows() != k || static_cast<int>(f.covariate_names.size()) != f.layout.q ||
            (f.has_covariance() && f.delta.rows() != k))
            throw DataError("fit archive is inconsistent with its layout");
        return f;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed fit archive: ") + e.what());
    }
}

void save_fit(const std::string& path, const DorqfFit& fit) { write_text(path, fit_to_json(fit)); }

DorqfFit load_fit(const std::string& path) { return fit_from_json(read_text(path)); }

std::string format_coefficients(const DorqfFit& f) {
    std::ostringstream os;
    os << 'p';
    for (int j = 0; j <= f.layout.q; ++j) os << ",beta" << j;
    os << '\n';
    std::vector<Eigen::VectorXd> curves;
    for (int j = 0; j <= f.layout.q; ++j) curves.push_back(f.coefficient_curve(j));
    for (std::size_t l = 0; l < f.grid.size(); ++l) {
        os << format_double(f.grid[l]);
        for (const auto& c : curves) os << ',' << format_double(c[static_cast<Eigen::Index>(l)]);
        os << '\n';
    }
    return os.str();
}

std::string format_transport(const DorqfFit& f) {
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(200, 0.0, 1.0);
    const Eigen::VectorXd h = f.transport_curve(x);
    std::ostringstream os;
    os << "x_unit,x_raw,h\n";
    for (Eigen::Index i = 0; i < x.size(); ++i)
        os << format_double(x[i]) << ',' << format_double(f.predictor_scale.invert(x[i])) << ','
           << format_double(h[i]) << '\n';
    return os.str();
}

std::string format_band(const ConfidenceBand& band) {
    std::ostringstream os;
    os << "p,center,sd,lower,upper\n";
    for (std::size_t l = 0; l < band.grid.size(); ++l) {
        const auto i = static_cast<Eigen::Index>(l);
        os << format_double(band.grid[l]) << ',' << format_double(band.center[i]) << ','
           << format_double(band.pointwise_sd[i]) << ',' << format_double(band.lower[i]) << ','
           << format_double(band.upper[i]) << '\n';
    }
    return os.str();
}

std::string constraint_csv(const ConstraintSystem& cs) {
    std::ostringstream os;
    os << "label";
    for (Eigen::Index c = 0; c < cs.cols(); ++c) os << ",c" << c;
    os << '\n';
    for (Eigen::Index r = 0; r < cs.rows(); ++r) {
        os << csv_field(cs.row_labels[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < cs.cols(); ++c) os << ',' << format_double(cs.matrix(r, c));
        os << '\n';
    }
    return os.str();
}

}  // namespace dorqf
