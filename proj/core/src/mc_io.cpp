#include "xsdep/mc_io.hpp"

#include "xsdep/error.hpp"

#include "json.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace xsdep {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::InvalidArgument, "config: " + what); }

void only_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) bad(where + " must be an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) bad("unknown key '" + key + "' in " + where);
}

double as_number(const Json& v, const std::string& what) {
    if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!v.is_number()) bad(what + " must be a number");
    return v.get<double>();
}

std::int64_t as_integer(const Json& v, const std::string& what) {
    if (!v.is_number_integer()) bad(what + " must be an integer");
    return v.get<std::int64_t>();
}

std::string as_string(const Json& v, const std::string& what) {
    if (!v.is_string()) bad(what + " must be a string");
    return v.get<std::string>();
}

bool as_bool(const Json& v, const std::string& what) {
    if (!v.is_boolean()) bad(what + " must be true or false");
    return v.get<bool>();
}

Json vec_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(std::isfinite(v(i)) ? Json(v(i)) : Json(nullptr));
    return out;
}

Json num_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Eigen::VectorXd json_vec(const Json& v, const std::string& what) {
    if (!v.is_array()) bad(what + " must be an array");
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = as_number(v[i], what);
    return out;
}

TimeDependenceSpec parse_time(const Json& v) {
    if (v.is_string()) {
        if (v.get<std::string>() == "none") return TimeDependenceSpec::none();
        bad("time must be \"none\" or an object");
    }
    only_keys(v, {"family", "coeffs", "decay"}, "dgp.time");
    const std::string fam = v.contains("family") ? as_string(v["family"], "time.family") : "none";
    auto coeffs = [&] {
        if (!v.contains("coeffs")) bad("MA time memory needs coeffs");
        const Eigen::VectorXd c = json_vec(v["coeffs"], "time.coeffs");
        return std::vector<double>(c.data(), c.data() + c.size());
    };
    auto decay = [&] {
        if (!v.contains("decay")) bad("summable time memory needs decay");
        return as_number(v["decay"], "time.decay");
    };
    TimeDependenceSpec out;
    if (fam == "none") out = TimeDependenceSpec::none();
    else if (fam == "idio_ma") out = TimeDependenceSpec::idio_ma(coeffs());
    else if (fam == "factor_ma") out = TimeDependenceSpec::factor_ma(coeffs());
    else if (fam == "idio_summable") out = TimeDependenceSpec::idio_summable(decay());
    else if (fam == "factor_summable") out = TimeDependenceSpec::factor_summable(decay());
    else bad("unknown time family '" + fam + "'");
    out.validate();
    return out;
}

Json time_json(const TimeDependenceSpec& t) {
    Json out;
    out["family"] = to_string(t.family);
    if (t.family == TimeFamily::IdioMA || t.family == TimeFamily::FactorMA) {
        Json c = Json::array();
        for (double x : t.ma_coeffs) c.push_back(x);
        out["coeffs"] = c;
    }
    if (t.family == TimeFamily::IdioSummable || t.family == TimeFamily::FactorSummable) out["decay"] = t.decay;
    return out;
}

DgpSpec parse_dgp(const Json& v) {
    only_keys(v, {"family", "time", "x_law", "alignment", "beta", "mu_scale", "errors", "nu", "fixed_design"}, "dgp");
    DgpSpec d;
    if (!v.contains("family")) bad("dgp.family is required");
    d.cross_section = parse_family(as_string(v["family"], "dgp.family"));
    if (v.contains("time")) d.time_memory = parse_time(v["time"]);
    if (v.contains("x_law")) d.x_law = parse_x_law(as_string(v["x_law"], "dgp.x_law"));
    if (v.contains("alignment")) d.alignment = as_number(v["alignment"], "dgp.alignment");
    if (v.contains("beta")) d.beta = json_vec(v["beta"], "dgp.beta");
    if (v.contains("mu_scale")) d.mu_scale = as_number(v["mu_scale"], "dgp.mu_scale");
    if (v.contains("errors")) d.error_dist = parse_error_dist(as_string(v["errors"], "dgp.errors"));
    if (v.contains("nu")) d.nu = as_number(v["nu"], "dgp.nu");
    if (v.contains("fixed_design")) d.fixed_design = as_bool(v["fixed_design"], "dgp.fixed_design");
    return d;
}

Json dgp_json(const DgpSpec& d) {
    Json out;
    out["family"] = describe(d.cross_section);
    out["time"] = time_json(d.time_memory);
    out["x_law"] = to_string(d.x_law);
    out["alignment"] = d.alignment;
    out["beta"] = vec_json(d.beta);
    out["mu_scale"] = d.mu_scale;
    out["errors"] = to_string(d.error_dist);
    out["nu"] = d.nu;
    out["fixed_design"] = d.fixed_design;
    return out;
}

CovConfig parse_cov(const Json& v) {
    if (v.is_string()) {
        CovConfig c;
        c.method = parse_cov_method(v.get<std::string>());
        return c;
    }
    only_keys(v, {"method", "kernel", "trunc", "declare"}, "cov");
    CovConfig c;
    if (v.contains("method")) c.method = parse_cov_method(as_string(v["method"], "cov.method"));
    if (v.contains("kernel")) c.kernel = parse_kernel(as_string(v["kernel"], "cov.kernel"));
    if (v.contains("trunc")) {
        const auto& t = v["trunc"];
        if (t.is_string() && t.get<std::string>() == "auto") c.trunc.lag.reset();
        else {
            const auto lag = as_integer(t, "cov.trunc");
            if (lag < 0) bad("cov.trunc must be >= 0");
            c.trunc.lag = static_cast<Eigen::Index>(lag);
        }
    }
    if (v.contains("declare")) c.trunc.declared = DeclaredDependence::parse(as_string(v["declare"], "cov.declare"));
    return c;
}

Json cov_json(const CovConfig& c) {
    Json out;
    out["method"] = to_string(c.method);
    out["kernel"] = to_string(c.kernel);
    if (c.trunc.lag) out["trunc"] = static_cast<std::int64_t>(*c.trunc.lag);
    else out["trunc"] = "auto";
    out["declare"] = c.trunc.declared.to_string();
    return out;
}

McConfig config_from(const Json& doc) {
    only_keys(doc,
              {"dgp", "grid", "reps", "estimator", "cov", "seed", "threads", "compute_true_variance", "alpha",
               "failure_tolerance", "min_reps"},
              "config");
    McConfig c;
    if (!doc.contains("dgp")) bad("dgp is required");
    c.dgp = parse_dgp(doc["dgp"]);
    if (!doc.contains("grid") || !doc["grid"].is_array()) bad("grid must be an array of [N, T] pairs");
    for (const auto& cell : doc["grid"]) {
        if (cell.is_array() && cell.size() == 2) {
            c.grid.push_back({as_integer(cell[0], "grid N"), as_integer(cell[1], "grid T")});
        } else if (cell.is_object()) {
            only_keys(cell, {"n", "t"}, "grid cell");
            if (!cell.contains("n") || !cell.contains("t")) bad("grid cell needs n and t");
            c.grid.push_back({as_integer(cell["n"], "grid n"), as_integer(cell["t"], "grid t")});
        } else {
            bad("grid entries must be [N, T]");
        }
    }
    if (doc.contains("reps")) c.reps = as_integer(doc["reps"], "reps");
    if (doc.contains("estimator")) c.estimator = parse_estimator_kind(as_string(doc["estimator"], "estimator"));
    if (doc.contains("cov")) c.cov = parse_cov(doc["cov"]);
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer()) bad("seed must be an integer");
        c.seed = doc["seed"].get<std::uint64_t>();
    }
    if (doc.contains("threads")) c.threads = static_cast<int>(as_integer(doc["threads"], "threads"));
    if (doc.contains("compute_true_variance"))
        c.compute_true_variance = as_bool(doc["compute_true_variance"], "compute_true_variance");
    if (doc.contains("alpha")) c.alpha = as_number(doc["alpha"], "alpha");
    if (doc.contains("failure_tolerance")) c.failure_tolerance = as_number(doc["failure_tolerance"], "failure_tolerance");
    if (doc.contains("min_reps")) c.min_reps = as_integer(doc["min_reps"], "min_reps");
    return c;
}

Json config_json(const McConfig& c) {
    Json out;
    out["dgp"] = dgp_json(c.dgp);
    Json grid = Json::array();
    for (const auto& g : c.grid) grid.push_back(Json::array({g.n, g.t}));
    out["grid"] = grid;
    out["reps"] = c.reps;
    out["estimator"] = to_string(c.estimator);
    out["cov"] = cov_json(c.cov);
    out["seed"] = c.seed;
    out["compute_true_variance"] = c.compute_true_variance;
    out["alpha"] = c.alpha;
    out["failure_tolerance"] = c.failure_tolerance;
    out["min_reps"] = c.min_reps;
    return out;
}

Json parse_text(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ParseError, std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace

McConfig parse_mc_config(const std::string& json_text) {
    McConfig c = config_from(parse_text(json_text));
    c.validate();
    return c;
}

std::string config_to_json(const McConfig& config) { return config_json(config).dump(2) + "\n"; }

std::string report_to_json(const McReport& report) {
    Json doc;
    doc["schema_version"] = report.schema_version;
    doc["config"] = config_json(report.config);
    doc["seed_rule"] = report.seed_rule;
    Json cells = Json::array();
    for (const auto& c : report.cells) {
        Json j;
        j["n"] = c.cell.n;
        j["t"] = c.cell.t;
        j["reps"] = c.reps;
        j["failures"] = c.failures;
        j["failed"] = c.failed;
        Json kinds = Json::object();
        for (const auto& [name, count] : c.failure_kinds) kinds[name] = count;
        j["failure_kinds"] = kinds;
        j["h_n"] = num_json(c.h_n);
        j["mean_beta"] = vec_json(c.mean_beta);
        j["sd_beta"] = vec_json(c.sd_beta);
        j["bias"] = vec_json(c.bias);
        j["mc_se"] = vec_json(c.mc_se);
        j["rmse"] = vec_json(c.rmse);
        j["rmse_total"] = num_json(c.rmse_total);
        j["size"] = num_json(c.size);
        j["coverage"] = vec_json(c.coverage);
        j["mean_cov"] = vec_json(c.mean_cov);
        j["mean_true"] = vec_json(c.mean_true);
        j["var_ratio"] = vec_json(c.var_ratio);
        j["rel_rmse_cov"] = num_json(c.rel_rmse_cov);
        j["psd_repaired_rate"] = num_json(c.psd_repaired_rate);
        cells.push_back(j);
    }
    doc["cells"] = cells;
    Json rates = Json::array();
    for (const auto& r : report.rates) {
        Json j;
        j["axis"] = r.axis;
        j["slope"] = num_json(r.slope);
        j["std_error"] = num_json(r.std_error);
        j["ci_low"] = num_json(r.ci_low);
        j["ci_high"] = num_json(r.ci_high);
        j["points"] = r.points;
        rates.push_back(j);
    }
    doc["rates"] = rates;
    return doc.dump(2) + "\n";
}

McReport parse_mc_report(const std::string& json_text) {
    const Json doc = parse_text(json_text);
    try {
        McReport r;
        r.schema_version = doc.at("schema_version").get<int>();
        if (r.schema_version != 1)
            throw Error(ErrorKind::ParseError, "unsupported report schema_version " + std::to_string(r.schema_version));
        r.config = config_from(doc.at("config"));
        r.seed_rule = doc.at("seed_rule").get<std::string>();
        for (const auto& j : doc.at("cells")) {
            CellStats c;
            c.cell = {j.at("n").get<Eigen::Index>(), j.at("t").get<Eigen::Index>()};
            c.reps = j.at("reps").get<Eigen::Index>();
            c.failures = j.at("failures").get<Eigen::Index>();
            c.failed = j.at("failed").get<bool>();
            for (const auto& [name, count] : j.at("failure_kinds").items()) c.failure_kinds[name] = count.get<Eigen::Index>();
            c.h_n = as_number(j.at("h_n"), "h_n");
            c.mean_beta = json_vec(j.at("mean_beta"), "mean_beta");
            c.sd_beta = json_vec(j.at("sd_beta"), "sd_beta");
            c.bias = json_vec(j.at("bias"), "bias");
            c.mc_se = json_vec(j.at("mc_se"), "mc_se");
            c.rmse = json_vec(j.at("rmse"), "rmse");
            c.rmse_total = as_number(j.at("rmse_total"), "rmse_total");
            c.size = as_number(j.at("size"), "size");
            c.coverage = json_vec(j.at("coverage"), "coverage");
            c.mean_cov = json_vec(j.at("mean_cov"), "mean_cov");
            c.mean_true = json_vec(j.at("mean_true"), "mean_true");
            c.var_ratio = json_vec(j.at("var_ratio"), "var_ratio");
            c.rel_rmse_cov = as_number(j.at("rel_rmse_cov"), "rel_rmse_cov");
            c.psd_repaired_rate = as_number(j.at("psd_repaired_rate"), "psd_repaired_rate");
            r.cells.push_back(std::move(c));
        }
        for (const auto& j : doc.at("rates")) {
            RateFit f;
            f.axis = j.at("axis").get<std::string>();
            f.slope = as_number(j.at("slope"), "slope");
            f.std_error = as_number(j.at("std_error"), "std_error");
            f.ci_low = as_number(j.at("ci_low"), "ci_low");
            f.ci_high = as_number(j.at("ci_high"), "ci_high");
            f.points = j.at("points").get<Eigen::Index>();
            r.rates.push_back(f);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed report: ") + e.what());
    }
}

namespace {

std::string fmt(double v, int precision = 4) {
    if (!std::isfinite(v)) return "-";
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

double first(const Eigen::VectorXd& v) {
    return v.size() > 0 ? v(0) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

std::string render_table(const McReport& report) {
    std::ostringstream os;
    os << "dgp " << describe(report.config.dgp.cross_section) << ", time " << to_string(report.config.dgp.time_memory.family)
       << ", estimator " << to_string(report.config.estimator) << ", cov " << to_string(report.config.cov.method)
       << ", reps " << report.config.reps << ", seed " << report.config.seed << "\n";
    const char* head[] = {"N", "T", "fail", "bias1", "rmse1", "rmse_total", "size", "cover1", "var_ratio1", "rel_rmse_cov"};
    const int width[] = {6, 6, 5, 11, 11, 11, 8, 8, 11, 13};
    for (std::size_t i = 0; i < std::size(head); ++i) os << std::setw(width[i]) << head[i];
    os << "\n";
    for (const auto& c : report.cells) {
        const std::string cols[] = {std::to_string(c.cell.n), std::to_string(c.cell.t),
                                    std::to_string(c.failures) + (c.failed ? "!" : ""), fmt(first(c.bias)),
                                    fmt(first(c.rmse)), fmt(c.rmse_total), fmt(c.size), fmt(first(c.coverage)),
                                    fmt(first(c.var_ratio)), fmt(c.rel_rmse_cov)};
        for (std::size_t i = 0; i < std::size(cols); ++i) os << std::setw(width[i]) << cols[i];
        os << "\n";
    }
    for (const auto& r : report.rates)
        os << "rate vs log " << r.axis << ": slope " << fmt(r.slope) << " (se " << fmt(r.std_error) << ", 95% CI ["
           << fmt(r.ci_low) << ", " << fmt(r.ci_high) << "], " << r.points << " cells)\n";
    return os.str();
}

std::string render_csv(const McReport& report) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    const auto k = report.config.dgp.k();
    os << "n,t,reps,failures,failed,h_n,rmse_total,size,rel_rmse_cov,psd_repaired_rate";
    for (Eigen::Index j = 1; j <= k; ++j)
        os << ",mean_beta" << j << ",sd_beta" << j << ",bias" << j << ",mc_se" << j << ",rmse" << j << ",coverage" << j
           << ",mean_cov" << j << ",mean_true" << j << ",var_ratio" << j;
    os << "\n";
    auto cell = [&os](double v) {
        if (std::isfinite(v)) os << v;
    };
    auto at = [](const Eigen::VectorXd& v, Eigen::Index j) {
        return j < v.size() ? v(j) : std::numeric_limits<double>::quiet_NaN();
    };
    for (const auto& c : report.cells) {
        os << c.cell.n << "," << c.cell.t << "," << c.reps << "," << c.failures << "," << (c.failed ? "true" : "false")
           << ",";
        cell(c.h_n);
        os << ",";
        cell(c.rmse_total);
        os << ",";
        cell(c.size);
        os << ",";
        cell(c.rel_rmse_cov);
        os << ",";
        cell(c.psd_repaired_rate);
        for (Eigen::Index j = 0; j < k; ++j) {
            for (const auto* v : {&c.mean_beta, &c.sd_beta, &c.bias, &c.mc_se, &c.rmse, &c.coverage, &c.mean_cov,
                                  &c.mean_true, &c.var_ratio}) {
                os << ",";
                cell(at(*v, j));
            }
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace xsdep
