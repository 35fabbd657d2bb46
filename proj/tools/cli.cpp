#include "cli.hpp"

#include "xsdep/dependence.hpp"
#include "xsdep/error.hpp"
#include "xsdep/estimators.hpp"
#include "xsdep/families.hpp"
#include "xsdep/inference.hpp"
#include "xsdep/mc_io.hpp"
#include "xsdep/panel_data.hpp"
#include "xsdep/parallel.hpp"
#include "xsdep/robust_cov.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace xsdep::cli {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

[[noreturn]] void usage(const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); }

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vec(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(num(v(i)));
    return out;
}

Json mat(const Eigen::MatrixXd& m) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) vec(m.row(i).transpose()).swap(out.emplace_back());
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Writes the whole document to a sibling temp file, then renames it into place.
void write_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw Error(ErrorKind::InvalidArgument, "failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorKind::InvalidArgument, "cannot move output into place at " + path + ": " + ec.message());
    }
}

void emit(const std::string& content, const std::string& out_path, std::ostream& out) {
    if (out_path.empty() || out_path == "-") out << content;
    else write_atomic(out_path, content);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    for (auto& field : split_csv_row(text))
        if (!field.empty()) out.push_back(field);
    return out;
}

std::vector<Eigen::Index> parse_grid(const std::string& text) {
    std::vector<Eigen::Index> out;
    for (const auto& field : split_list(text)) {
        try {
            std::size_t used = 0;
            const long v = std::stol(field, &used);
            if (used != field.size() || v < 1) throw std::invalid_argument(field);
            out.push_back(v);
        } catch (...) {
            usage("--grid expects comma-separated positive integers, got '" + field + "'");
        }
    }
    return out;
}

/// Numeric matrix from a CSV file; a non-numeric first row is treated as a header.
Eigen::MatrixXd read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> row;
        bool numeric = true;
        for (const auto& field : split_csv_row(line)) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(field, &used));
                if (used != field.size()) numeric = false;
            } catch (...) {
                numeric = false;
            }
        }
        if (!numeric) {
            if (rows.empty() && line_no == 1) continue;
            throw Error(ErrorKind::ParseError, path + ":" + std::to_string(line_no) + ": non-numeric entry");
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw Error(ErrorKind::ParseError, path + ":" + std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorKind::ParseError, path + ": no numeric rows");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    return default_thread_count();
}

// ---------------------------------------------------------------------------
// estimate / test

struct DataOptions {
    std::string data;
    std::string id_col = "id";
    std::string time_col = "time";
    std::string y_col = "y";
    std::string x_cols;
    std::string model = "fe";
    std::string cov = "cs";
    std::string kernel = "bartlett";
    std::string trunc = "auto";
    std::string declare = "unknown";
    bool require_invertible = false;
    std::string out;
    std::string residuals;
    std::string format = "json";
};

void add_data_flags(CLI::App* sub, DataOptions& o) {
    sub->add_option("--data", o.data, "Long-format panel CSV")->required();
    sub->add_option("--model", o.model, "fe | pooled | nointercept")->capture_default_str();
    sub->add_option("--id-col", o.id_col, "Unit id column")->capture_default_str();
    sub->add_option("--time-col", o.time_col, "Time column")->capture_default_str();
    sub->add_option("--y-col", o.y_col, "Outcome column")->capture_default_str();
    sub->add_option("--x-cols", o.x_cols, "Comma-separated regressor columns (default: all others)");
    sub->add_option("--cov", o.cov, "cs | kernel | plugin")->capture_default_str();
    sub->add_option("--kernel", o.kernel, "bartlett | uniform | parzen")->capture_default_str();
    sub->add_option("--trunc", o.trunc, "auto | <lag>")->capture_default_str();
    sub->add_option("--declare-dependence", o.declare, "pure-cs | ma:<q> | summable | unknown")->capture_default_str();
    sub->add_flag("--require-invertible", o.require_invertible, "Fail with SingularCov on a singular estimate");
    sub->add_option("--out", o.out, "Report path (default: stdout)");
    sub->add_option("--residuals", o.residuals, "Write residuals (id,time,residual) to this CSV");
    sub->add_option("--format", o.format, "json | table")->capture_default_str();
}

struct Estimation {
    PanelData panel;
    std::vector<std::string> names;
    FitResult fit;
    RobustCov cov;
};

CovConfig cov_config(const DataOptions& o) {
    CovConfig c;
    c.method = parse_cov_method(o.cov);
    c.kernel = parse_kernel(o.kernel);
    if (o.trunc != "auto") {
        try {
            std::size_t used = 0;
            const long lag = std::stol(o.trunc, &used);
            if (used != o.trunc.size() || lag < 0) throw std::invalid_argument(o.trunc);
            c.trunc.lag = lag;
        } catch (...) {
            usage("--trunc expects auto or a non-negative integer, got '" + o.trunc + "'");
        }
    }
    c.trunc.declared = DeclaredDependence::parse(o.declare);
    return c;
}

void check_format(const std::string& format, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
        if (format == a) return;
    usage("unsupported --format '" + format + "'");
}

Estimation run_estimation(const DataOptions& o) {
    const EstimatorKind kind = parse_estimator_kind(o.model);
    const CovConfig cfg = cov_config(o);
    CsvSchema schema{o.id_col, o.time_col, o.y_col, split_list(o.x_cols)};
    PanelData panel = load_csv(o.data, schema);
    auto names = regressor_names(o.data, schema);
    FitResult f = fit(panel, kind);
    const WeightBlocks w = weight_blocks(f);
    CovOptions opts;
    opts.require_invertible = o.require_invertible;
    RobustCov cov = estimate_cov(f, w, cfg, opts);
    return {std::move(panel), std::move(names), std::move(f), std::move(cov)};
}

Json cov_metadata(const RobustCov& cov) {
    Json m;
    m["method"] = to_string(cov.method);
    m["kernel"] = cov.kernel ? Json(to_string(*cov.kernel)) : Json(nullptr);
    m["trunc_lag"] = cov.trunc_lag ? Json(*cov.trunc_lag) : Json(nullptr);
    m["declared_dependence"] = cov.declared.empty() ? Json(nullptr) : Json(cov.declared);
    m["psd_repaired"] = cov.psd_repaired;
    m["clipped_mass"] = cov.clipped_mass;
    m["singular"] = cov.singular;
    m["omega_rank_deficient"] = cov.omega_rank_deficient;
    m["reference_distribution"] = "asymptotic normal / chi-square, no small-sample correction";
    return m;
}

Json estimation_json(const Estimation& e, const std::string& command) {
    const CoefficientTable table = coefficient_table(e.fit.beta_hat, e.cov.matrix);
    Json doc;
    doc["schema_version"] = 1;
    doc["command"] = command;
    doc["model"] = to_string(e.fit.kind());
    doc["n_units"] = e.panel.n_units();
    doc["n_periods"] = e.panel.n_periods();
    doc["regressors"] = e.names;
    doc["beta"] = vec(e.fit.beta_hat);
    doc["se"] = vec(table.se);
    doc["t_stats"] = vec(table.t_stats);
    doc["p_values"] = vec(table.p_values);
    doc["cov"] = mat(e.cov.matrix);
    doc["cov_estimator_metadata"] = cov_metadata(e.cov);
    doc["gram_condition_number"] = num(e.fit.design.condition_number);
    doc["warnings"] = e.fit.warnings;
    return doc;
}

std::string coefficient_text(const Estimation& e) {
    const CoefficientTable table = coefficient_table(e.fit.beta_hat, e.cov.matrix);
    std::ostringstream os;
    os << "model " << to_string(e.fit.kind()) << ", N=" << e.panel.n_units() << ", T=" << e.panel.n_periods()
       << ", cov " << to_string(e.cov.method);
    if (e.cov.kernel) os << " (" << to_string(*e.cov.kernel) << ", C=" << e.cov.trunc_lag.value_or(0) << ")";
    if (e.cov.psd_repaired) os << " [PSD repaired, clipped " << e.cov.clipped_mass << "]";
    os << "\n" << std::setw(14) << "coef" << std::setw(14) << "estimate" << std::setw(14) << "se" << std::setw(10)
       << "z" << std::setw(12) << "p" << "\n";
    os << std::setprecision(6);
    for (Eigen::Index j = 0; j < e.fit.beta_hat.size(); ++j) {
        const auto name = j < static_cast<Eigen::Index>(e.names.size()) ? e.names[static_cast<std::size_t>(j)]
                                                                         : "x" + std::to_string(j + 1);
        os << std::setw(14) << name << std::setw(14) << e.fit.beta_hat(j) << std::setw(14) << table.se(j)
           << std::setw(10) << std::setprecision(4) << table.t_stats(j) << std::setw(12) << table.p_values(j)
           << std::setprecision(6) << "\n";
    }
    for (const auto& w : e.fit.warnings) os << w << "\n";
    return os.str();
}

std::string residual_csv(const Estimation& e, const DataOptions& o) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << o.id_col << "," << o.time_col << ",residual\n";
    for (Eigen::Index i = 0; i < e.panel.n_units(); ++i)
        for (Eigen::Index t = 0; t < e.panel.n_periods(); ++t)
            os << e.panel.unit_ids()[static_cast<std::size_t>(i)] << ","
               << e.panel.time_ids()[static_cast<std::size_t>(t)] << "," << e.fit.residuals(i, t) << "\n";
    return os.str();
}

void finish_estimation(const Estimation& e, const DataOptions& o, const std::string& report, std::ostream& out) {
    // Everything is computed before the first byte is written.
    const std::string residuals = o.residuals.empty() ? std::string() : residual_csv(e, o);
    if (!o.residuals.empty()) write_atomic(o.residuals, residuals);
    emit(report, o.out, out);
}

int cmd_estimate(const DataOptions& o, std::ostream& out) {
    check_format(o.format, {"json", "table"});
    const Estimation e = run_estimation(o);
    const std::string report = o.format == "json" ? estimation_json(e, "estimate").dump(2) + "\n" : coefficient_text(e);
    finish_estimation(e, o, report, out);
    return 0;
}

int cmd_test(const DataOptions& o, const std::string& restr_text, std::ostream& out) {
    check_format(o.format, {"json", "table"});
    const Estimation e = run_estimation(o);
    const LinearRestriction restr = parse_restriction(restr_text, e.fit.beta_hat.size());
    const TestResult test = wald(e.fit.beta_hat, e.cov, restr);
    std::string report;
    if (o.format == "json") {
        Json doc = estimation_json(e, "test");
        Json t;
        t["restriction"] = restr_text;
        t["R"] = mat(restr.R);
        t["r"] = vec(restr.r);
        t["statistic"] = num(test.statistic);
        t["dof"] = test.dof;
        t["p_value"] = num(test.p_value);
        t["method"] = test.method;
        doc["wald"] = t;
        report = doc.dump(2) + "\n";
    } else {
        std::ostringstream os;
        os << coefficient_text(e) << "Wald test of " << restr_text << ": statistic " << std::setprecision(6)
           << test.statistic << ", chi2(" << test.dof << ") p-value " << test.p_value << " [" << test.method << "]\n";
        report = os.str();
    }
    finish_estimation(e, o, report, out);
    return 0;
}

// ---------------------------------------------------------------------------
// diagnose / decompose / explore-conjecture

struct SourceOptions {
    std::string family;
    int example = 0;
    std::string matrix;
    std::string matrix_dir;
    std::string residuals;
    std::string id_col = "id";
    std::string time_col = "time";
    std::string value_col = "residual";
    std::string grid;
};

void add_source_flags(CLI::App* sub, SourceOptions& s, bool residuals) {
    sub->add_option("--family", s.family, "Covariance family, e.g. equicorr(1,0.5) or factor(1,1)");
    sub->add_option("--example", s.example, "Builtin example number (1-14)");
    sub->add_option("--matrix", s.matrix, "CSV file holding one covariance matrix");
    sub->add_option("--matrix-dir", s.matrix_dir, "Directory of omega_<N>.csv files");
    if (residuals) {
        sub->add_option("--residuals", s.residuals, "Residual CSV (long format) for an Omega_hat diagnosis");
        sub->add_option("--id-col", s.id_col, "Unit id column of --residuals")->capture_default_str();
        sub->add_option("--time-col", s.time_col, "Time column of --residuals")->capture_default_str();
        sub->add_option("--value-col", s.value_col, "Residual column of --residuals")->capture_default_str();
    }
    sub->add_option("--grid", s.grid, "Comma-separated N values");
}

int source_count(const SourceOptions& s) {
    return int(!s.family.empty()) + int(s.example != 0) + int(!s.matrix.empty()) + int(!s.matrix_dir.empty()) +
           int(!s.residuals.empty());
}

std::optional<CrossSection> source_family(const SourceOptions& s) {
    if (!s.family.empty()) return parse_family(s.family);
    if (s.example != 0) return builtin_example(s.example);
    return std::nullopt;
}

std::string source_label(const SourceOptions& s) {
    if (auto f = source_family(s)) return describe(*f);
    if (!s.matrix.empty()) return "matrix:" + s.matrix;
    if (!s.matrix_dir.empty()) return "matrix-dir:" + s.matrix_dir;
    return "residuals:" + s.residuals;
}

/// Leading principal submatrices of one matrix; default grid N/8, N/4, N/2, N.
std::vector<Eigen::Index> submatrix_grid(Eigen::Index n, const std::string& grid_text) {
    if (!grid_text.empty()) {
        auto grid = parse_grid(grid_text);
        for (auto g : grid)
            if (g > n) usage("grid value " + std::to_string(g) + " exceeds the matrix dimension " + std::to_string(n));
        return grid;
    }
    if (n < 16) usage("a single matrix needs N >= 16 for the default grid N/8..N; pass --grid");
    return {n / 8, n / 4, n / 2, n};
}

struct Source {
    CovFamily family;
    std::vector<Eigen::Index> grid;
};

Source resolve_source(const SourceOptions& s, std::vector<Eigen::Index> default_grid) {
    if (source_count(s) != 1)
        usage("give exactly one of --family, --example, --matrix, --matrix-dir" +
              std::string(s.residuals.empty() ? "" : ", --residuals"));
    if (auto f = source_family(s)) return {as_generator(*f), s.grid.empty() ? default_grid : parse_grid(s.grid)};
    if (!s.matrix_dir.empty()) {
        std::map<Eigen::Index, fs::path> files;
        if (!fs::is_directory(s.matrix_dir)) usage("--matrix-dir " + s.matrix_dir + " is not a directory");
        for (const auto& entry : fs::directory_iterator(s.matrix_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("omega_", 0) != 0 || entry.path().extension() != ".csv") continue;
            try {
                files[std::stol(name.substr(6, name.size() - 10))] = entry.path();
            } catch (...) {
            }
        }
        if (files.empty()) usage("--matrix-dir holds no omega_<N>.csv files");
        std::vector<Eigen::Index> grid;
        for (const auto& [n, _] : files) grid.push_back(n);
        if (!s.grid.empty()) grid = parse_grid(s.grid);
        auto family = [files](Eigen::Index n) {
            auto it = files.find(n);
            if (it == files.end()) throw Error(ErrorKind::InvalidArgument, "no omega_" + std::to_string(n) + ".csv");
            CovMatrix omega(read_matrix_csv(it->second.string()));
            if (omega.n() != n)
                throw Error(ErrorKind::InvalidArgument, it->second.string() + " is not " + std::to_string(n) + " x " +
                                                            std::to_string(n));
            return omega;
        };
        return {family, grid};
    }
    std::shared_ptr<CovMatrix> full;
    if (!s.matrix.empty()) {
        full = std::make_shared<CovMatrix>(read_matrix_csv(s.matrix));
    } else {
        CsvSchema schema{s.id_col, s.time_col, s.value_col, {s.value_col}};
        const PanelData panel = load_csv(s.residuals, schema);
        full = std::make_shared<CovMatrix>(omega_hat(panel.y()).omega);
    }
    const auto grid = submatrix_grid(full->n(), s.grid);
    return {[full](Eigen::Index n) { return n == full->n() ? *full : full->leading(n); }, grid};
}

Json fit_json(const ExponentFit& f) {
    Json j;
    j["alpha"] = num(f.alpha);
    j["std_error"] = num(f.std_error);
    j["regime"] = to_string(f.regime);
    return j;
}

int cmd_diagnose(const SourceOptions& s, const ClassifyConfig& cfg, const std::string& format,
                 const std::string& out_path, std::ostream& out) {
    check_format(format, {"json", "table"});
    const Source src = resolve_source(s, {25, 50, 100, 200, 400, 800});
    const DependenceProfile p = classify(src.family, src.grid, cfg);
    std::string report;
    if (format == "json") {
        Json doc;
        doc["schema_version"] = 1;
        doc["command"] = "diagnose";
        doc["source"] = source_label(s);
        Json rows = Json::array();
        for (const auto& r : p.norms_by_n) {
            Json j;
            j["n"] = r.n;
            j["max_eig"] = num(r.max_eig);
            j["max_row_sum"] = num(r.max_row_sum);
            j["euclid_scaled"] = num(r.euclid_scaled);
            j["taxicab_scaled"] = num(r.taxicab_scaled);
            rows.push_back(j);
        }
        doc["norms_by_n"] = rows;
        doc["exponent_max_eig"] = fit_json(p.headline);
        doc["regime"] = to_string(p.regime);
        Json per;
        for (NormKind k : kAllNorms) per[to_string(k)] = fit_json(p.fit(k));
        doc["regime_per_norm"] = per;
        doc["thresholds"] = {{"weak_max", cfg.weak_max}, {"strong_min", cfg.strong_min}};
        report = doc.dump(2) + "\n";
    } else {
        std::ostringstream os;
        os << "source " << source_label(s) << "\n";
        os << std::setw(8) << "N" << std::setw(14) << "max_eig" << std::setw(14) << "max_row_sum" << std::setw(14)
           << "euclid_sc" << std::setw(14) << "taxicab_sc" << "\n"
           << std::setprecision(6);
        for (const auto& r : p.norms_by_n)
            os << std::setw(8) << r.n << std::setw(14) << r.max_eig << std::setw(14) << r.max_row_sum << std::setw(14)
               << r.euclid_scaled << std::setw(14) << r.taxicab_scaled << "\n";
        os << std::setprecision(4);
        for (NormKind k : kAllNorms) {
            const auto& f = p.fit(k);
            os << std::setw(16) << to_string(k) << ": alpha " << f.alpha << " (se " << f.std_error << ") -> "
               << to_string(f.regime) << "\n";
        }
        os << "regime (max eigenvalue): " << to_string(p.regime) << "\n";
        report = os.str();
    }
    emit(report, out_path, out);
    return 0;
}

int cmd_decompose(const SourceOptions& s, Eigen::Index n, std::optional<Eigen::Index> m, const std::string& c_text,
                  const FactorCountConfig& count_cfg, const std::string& format, const std::string& out_path,
                  std::ostream& out) {
    check_format(format, {"json", "table"});
    if (source_count(s) != 1 || !s.matrix_dir.empty())
        usage("give exactly one of --family, --example, --matrix");
    std::optional<CovMatrix> omega;
    if (auto f = source_family(s)) {
        if (n < 1) usage("--n is required with --family / --example");
        omega = build_omega(*f, n);
    } else {
        omega = CovMatrix(read_matrix_csv(s.matrix));
    }
    std::optional<Eigen::VectorXd> c;
    if (!c_text.empty()) {
        const auto fields = split_list(c_text);
        Eigen::VectorXd v(static_cast<Eigen::Index>(fields.size()));
        for (std::size_t i = 0; i < fields.size(); ++i) {
            try {
                v(static_cast<Eigen::Index>(i)) = std::stod(fields[i]);
            } catch (...) {
                usage("--c expects comma-separated numbers");
            }
        }
        c = v;
    }
    const FactorSplit split = factor_decompose(*omega, m, c, count_cfg);
    const Eigen::MatrixXd rebuilt = split.loadings * split.loadings.transpose() + split.idio_cov.values();
    const double rel_err = (rebuilt - omega->values()).norm() / omega->values().norm();
    std::string report;
    if (format == "json") {
        Json doc;
        doc["schema_version"] = 1;
        doc["command"] = "decompose";
        doc["source"] = source_label(s);
        doc["n"] = omega->n();
        doc["m"] = split.m;
        doc["c"] = vec(split.c_coeffs);
        doc["delta"] = vec(split.delta);
        doc["top_eigenvalues"] = vec(omega->eigenvalues().tail(std::min<Eigen::Index>(omega->n(), split.m + 3)).reverse());
        doc["reconstruction_rel_error"] = num(rel_err);
        doc["loadings"] = mat(split.loadings);
        doc["idio_cov"] = mat(split.idio_cov.values());
        report = doc.dump(2) + "\n";
    } else {
        std::ostringstream os;
        os << std::setprecision(6) << "source " << source_label(s) << ", N=" << omega->n() << ", factors m=" << split.m
           << "\n";
        for (Eigen::Index i = 0; i < split.m; ++i)
            os << "  factor " << i + 1 << ": delta " << split.delta(i) << ", c " << split.c_coeffs(i) << "\n";
        os << "idiosyncratic lambda_max " << split.idio_cov.max_eigenvalue() << "\n";
        os << "reconstruction relative error " << rel_err << "\n";
        report = os.str();
    }
    emit(report, out_path, out);
    return 0;
}

int cmd_conjecture(const SourceOptions& s, const std::string& format, const std::string& out_path,
                   std::ostream& out) {
    check_format(format, {"json", "table", "csv"});
    const Source src = resolve_source(s, {25, 50, 100, 200, 400, 800});
    const auto rows = explore_conjecture(src.family, src.grid);
    std::ostringstream os;
    if (format == "json") {
        Json doc;
        doc["schema_version"] = 1;
        doc["command"] = "explore-conjecture";
        doc["source"] = source_label(s);
        Json arr = Json::array();
        for (const auto& r : rows)
            arr.push_back({{"n", r.n},
                           {"max_eig", num(r.max_eig)},
                           {"taxicab_scaled", num(r.taxicab_scaled)},
                           {"euclid_over_sqrt_n", num(r.euclid_over_sqrt_n)}});
        doc["rows"] = arr;
        os << doc.dump(2) << "\n";
    } else if (format == "csv") {
        os << std::setprecision(std::numeric_limits<double>::max_digits10) << "n,max_eig,taxicab_scaled,euclid_over_sqrt_n\n";
        for (const auto& r : rows) os << r.n << "," << r.max_eig << "," << r.taxicab_scaled << "," << r.euclid_over_sqrt_n << "\n";
    } else {
        os << "source " << source_label(s) << "\n"
           << std::setw(8) << "N" << std::setw(14) << "max_eig" << std::setw(16) << "taxicab_scaled" << std::setw(20)
           << "euclid/sqrt(N)" << std::setw(14) << "tax/max_eig" << "\n"
           << std::setprecision(6);
        for (const auto& r : rows)
            os << std::setw(8) << r.n << std::setw(14) << r.max_eig << std::setw(16) << r.taxicab_scaled
               << std::setw(20) << r.euclid_over_sqrt_n << std::setw(14) << r.taxicab_scaled / r.max_eig << "\n";
    }
    emit(os.str(), out_path, out);
    return 0;
}

// ---------------------------------------------------------------------------
// mc

int cmd_mc_run(const std::string& config_path, int threads, const std::string& out_path, std::ostream& out,
               std::ostream& err) {
    McConfig cfg = parse_mc_config(slurp(config_path));
    if (threads > 0) cfg.threads = threads;
    else if (cfg.threads <= 1) cfg.threads = default_thread_count();
    const McReport report = run_mc(cfg);
    for (const auto& c : report.cells)
        if (c.failed)
            err << "warning: cell (N=" << c.cell.n << ", T=" << c.cell.t << ") failed: " << c.failures << " of "
                << c.reps << " replications errored\n";
    emit(report_to_json(report), out_path, out);
    return 0;
}

int cmd_mc_report(const std::string& report_path, const std::string& format, const std::string& out_path,
                  std::ostream& out) {
    check_format(format, {"table", "csv", "json"});
    const McReport report = parse_mc_report(slurp(report_path));
    std::string text;
    if (format == "table") text = render_table(report);
    else if (format == "csv") text = render_csv(report);
    else text = report_to_json(report);
    emit(text, out_path, out);
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Panel regression under cross-sectional dependence: estimation, robust inference, "
                 "dependence diagnostics and Monte Carlo experiments.",
                 "xsdep"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "xsdep 0.1.0");

    DataOptions data;
    auto* estimate = app.add_subcommand("estimate", "Fit a panel regression and report robust standard errors");
    add_data_flags(estimate, data);

    DataOptions test_data;
    std::string restr;
    auto* test = app.add_subcommand("test", "Wald test of linear restrictions, e.g. --restr \"b1=0,b2=b3\"");
    add_data_flags(test, test_data);
    test->add_option("--restr", restr, "Comma-separated linear equations over b1..bk")->required();

    SourceOptions diag_src;
    ClassifyConfig classify_cfg;
    std::string diag_format = "json", diag_out;
    int diag_threads = 0;
    auto* diagnose = app.add_subcommand("diagnose", "Growth-rate classification of cross-sectional dependence");
    add_source_flags(diagnose, diag_src, true);
    diagnose->add_option("--weak-max", classify_cfg.weak_max, "Exponent at or below which dependence is weak")
        ->capture_default_str();
    diagnose->add_option("--strong-min", classify_cfg.strong_min, "Exponent at or above which dependence is strong")
        ->capture_default_str();
    diagnose->add_option("--threads", diag_threads, "Worker threads (default: XSDEP_THREADS or 1)");
    diagnose->add_option("--format", diag_format, "json | table")->capture_default_str();
    diagnose->add_option("--out", diag_out, "Output path (default: stdout)");

    SourceOptions dec_src;
    Eigen::Index dec_n = 0;
    Eigen::Index dec_m = 0;
    std::string dec_c, dec_format = "json", dec_out;
    FactorCountConfig count_cfg;
    auto* decompose = app.add_subcommand("decompose", "Split a covariance into factor and idiosyncratic parts");
    add_source_flags(decompose, dec_src, false);
    decompose->add_option("--n", dec_n, "Dimension for --family / --example");
    decompose->add_option("--factors", dec_m, "Number of factors (default: eigenvalue-ratio rule)");
    decompose->add_option("--c", dec_c, "Comma-separated c_i in (0, 1] (default: all 1)");
    decompose->add_option("--m-max", count_cfg.m_max, "Largest factor count the ratio rule considers")
        ->capture_default_str();
    decompose->add_option("--min-ratio", count_cfg.min_ratio, "Eigenvalue ratio the rule requires")
        ->capture_default_str();
    decompose->add_option("--format", dec_format, "json | table")->capture_default_str();
    decompose->add_option("--out", dec_out, "Output path (default: stdout)");

    SourceOptions conj_src;
    std::string conj_format = "table", conj_out;
    auto* conjecture = app.add_subcommand("explore-conjecture", "Compare max-eigenvalue and taxicab growth");
    add_source_flags(conjecture, conj_src, false);
    conjecture->add_option("--format", conj_format, "table | csv | json")->capture_default_str();
    conjecture->add_option("--out", conj_out, "Output path (default: stdout)");

    auto* mc = app.add_subcommand("mc", "Monte Carlo experiments");
    mc->require_subcommand(1);
    std::string mc_config, mc_out;
    int mc_threads = 0;
    auto* mc_run = mc->add_subcommand("run", "Run an experiment config and write a JSON report");
    mc_run->add_option("config", mc_config, "Experiment config (JSON)")->required();
    mc_run->add_option("--out", mc_out, "Report path (default: stdout)");
    mc_run->add_option("--threads", mc_threads, "Worker threads (default: XSDEP_THREADS or 1)");
    std::string rep_path, rep_format = "table", rep_out;
    auto* mc_report = mc->add_subcommand("report", "Render a JSON report");
    mc_report->add_option("report", rep_path, "Report written by mc run")->required();
    mc_report->add_option("--format", rep_format, "table | csv | json")->capture_default_str();
    mc_report->add_option("--out", rep_out, "Output path (default: stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    try {
        if (*estimate) return cmd_estimate(data, out);
        if (*test) return cmd_test(test_data, restr, out);
        if (*diagnose) {
            classify_cfg.threads = resolve_threads(diag_threads);
            return cmd_diagnose(diag_src, classify_cfg, diag_format, diag_out, out);
        }
        if (*decompose) {
            std::optional<Eigen::Index> m;
            if (decompose->count("--factors") > 0) m = dec_m;
            return cmd_decompose(dec_src, dec_n, m, dec_c, count_cfg, dec_format, dec_out, out);
        }
        if (*conjecture) return cmd_conjecture(conj_src, conj_format, conj_out, out);
        if (*mc_run) return cmd_mc_run(mc_config, mc_threads, mc_out, out, err);
        if (*mc_report) return cmd_mc_report(rep_path, rep_format, rep_out, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return is_numerical(e.kind()) ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace xsdep::cli
