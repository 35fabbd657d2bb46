#include "xsdep/panel_data.hpp"

#include "xsdep/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>

namespace xsdep {

namespace {

std::vector<std::string> default_labels(Eigen::Index n, const char* prefix) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
    return out;
}

void require_unique(const std::vector<std::string>& labels, const char* what) {
    std::set<std::string> seen(labels.begin(), labels.end());
    if (seen.size() != labels.size())
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " labels are not unique");
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> out;
    std::string_view rest(line);
    while (true) {
        auto comma = rest.find(',');
        out.emplace_back(trim(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    return out;
}

std::optional<double> parse_number(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return value;
}

}  // namespace

PanelData::PanelData(Eigen::MatrixXd y, std::vector<Eigen::MatrixXd> x,
                     std::vector<std::string> unit_ids, std::vector<std::string> time_ids)
    : y_(std::move(y)), x_(std::move(x)), unit_ids_(std::move(unit_ids)), time_ids_(std::move(time_ids)) {
    if (y_.rows() < 2 || y_.cols() < 1)
        throw Error(ErrorKind::InvalidArgument, "panel needs N >= 2 units and T >= 1 periods");
    if (x_.empty()) throw Error(ErrorKind::InvalidArgument, "panel needs at least one regressor");
    for (const auto& xj : x_) {
        if (xj.rows() != y_.rows() || xj.cols() != y_.cols())
            throw Error(ErrorKind::InvalidArgument, "regressor shape does not match outcome shape");
        if (!xj.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite regressor value");
    }
    if (!y_.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite outcome value");
    if (unit_ids_.empty()) unit_ids_ = default_labels(y_.rows(), "u");
    if (time_ids_.empty()) time_ids_ = default_labels(y_.cols(), "t");
    if (static_cast<Eigen::Index>(unit_ids_.size()) != y_.rows() ||
        static_cast<Eigen::Index>(time_ids_.size()) != y_.cols())
        throw Error(ErrorKind::InvalidArgument, "label count does not match panel shape");
    require_unique(unit_ids_, "unit");
    require_unique(time_ids_, "time");
}

Eigen::VectorXd PanelData::x_cell(Eigen::Index i, Eigen::Index t) const {
    Eigen::VectorXd out(n_regressors());
    for (Eigen::Index j = 0; j < n_regressors(); ++j) out(j) = x_[static_cast<std::size_t>(j)](i, t);
    return out;
}

Eigen::MatrixXd PanelData::x_period(Eigen::Index t) const {
    Eigen::MatrixXd out(n_units(), n_regressors());
    for (Eigen::Index j = 0; j < n_regressors(); ++j) out.col(j) = x_[static_cast<std::size_t>(j)].col(t);
    return out;
}

PanelData PanelData::with_y(Eigen::MatrixXd y) const {
    return PanelData(std::move(y), x_, unit_ids_, time_ids_);
}

bool PanelData::operator==(const PanelData& other) const {
    if (unit_ids_ != other.unit_ids_ || time_ids_ != other.time_ids_) return false;
    if (y_.rows() != other.y_.rows() || y_.cols() != other.y_.cols() || y_ != other.y_) return false;
    if (x_.size() != other.x_.size()) return false;
    for (std::size_t j = 0; j < x_.size(); ++j)
        if (x_[j] != other.x_[j]) return false;
    return true;
}

StackedView stack(const PanelData& panel, Ordering ordering) {
    const auto n = panel.n_units();
    const auto t_count = panel.n_periods();
    const auto k = panel.n_regressors();
    StackedView view;
    view.ordering = ordering;
    view.n_units = n;
    view.n_periods = t_count;
    view.y_vec.resize(n * t_count);
    view.x_mat.resize(n * t_count, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 0; t < t_count; ++t) {
            const auto row = stacked_row(ordering, n, t_count, i, t);
            view.y_vec(row) = panel.y()(i, t);
            for (Eigen::Index j = 0; j < k; ++j) view.x_mat(row, j) = panel.x(j)(i, t);
        }
    }
    return view;
}

StackedView restack(const StackedView& view, Ordering ordering) {
    StackedView out;
    out.ordering = ordering;
    out.n_units = view.n_units;
    out.n_periods = view.n_periods;
    out.y_vec.resize(view.y_vec.size());
    out.x_mat.resize(view.x_mat.rows(), view.x_mat.cols());
    for (Eigen::Index i = 0; i < view.n_units; ++i) {
        for (Eigen::Index t = 0; t < view.n_periods; ++t) {
            const auto from = stacked_row(view.ordering, view.n_units, view.n_periods, i, t);
            const auto to = stacked_row(ordering, view.n_units, view.n_periods, i, t);
            out.y_vec(to) = view.y_vec(from);
            out.x_mat.row(to) = view.x_mat.row(from);
        }
    }
    return out;
}

void sort_labels(std::vector<std::string>& labels) {
    const bool numeric = std::all_of(labels.begin(), labels.end(),
                                     [](const std::string& s) { return parse_number(s).has_value(); });
    if (numeric) {
        std::stable_sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
            const double va = *parse_number(a);
            const double vb = *parse_number(b);
            return va < vb || (va == vb && a < b);
        });
    } else {
        std::sort(labels.begin(), labels.end());
    }
}

std::vector<std::string> split_csv_row(const std::string& line) { return split_row(line); }

std::vector<std::string> regressor_names(std::istream& in, const CsvSchema& schema) {
    if (!schema.x_cols.empty()) return schema.x_cols;
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "empty file (header row required)");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::vector<std::string> out;
    for (auto& name : split_row(line))
        if (name != schema.id_col && name != schema.time_col && name != schema.y_col) out.push_back(name);
    return out;
}

std::vector<std::string> regressor_names(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
    return regressor_names(in, schema);
}

PanelData load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
    return load_csv(in, schema);
}

PanelData load_csv(std::istream& in, const CsvSchema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "empty file (header row required)");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_row(line);

    auto column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw Error(ErrorKind::ParseError, "missing column '" + name + "' in header");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t id_idx = column(schema.id_col);
    const std::size_t time_idx = column(schema.time_col);
    const std::size_t y_idx = column(schema.y_col);
    std::vector<std::size_t> x_idx;
    if (schema.x_cols.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (c != id_idx && c != time_idx && c != y_idx) x_idx.push_back(c);
    } else {
        for (const auto& name : schema.x_cols) x_idx.push_back(column(name));
    }
    if (x_idx.empty()) throw Error(ErrorKind::ParseError, "no regressor columns");

    struct Row {
        std::string unit;
        std::string time;
        double y;
        std::vector<double> x;
        std::size_t line_no;
    };
    std::vector<Row> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_row(line);
        if (fields.size() != header.size())
            throw Error(ErrorKind::ParseError, "row " + std::to_string(line_no) + ": expected " +
                                                   std::to_string(header.size()) + " fields, got " +
                                                   std::to_string(fields.size()));
        Row row{fields[id_idx], fields[time_idx], 0.0, {}, line_no};
        auto number = [&](std::size_t c) {
            auto v = parse_number(fields[c]);
            if (!v || !std::isfinite(*v))
                throw Error(ErrorKind::ParseError, "row " + std::to_string(line_no) + ": column '" + header[c] +
                                                       "' is not a number: '" + fields[c] + "'");
            return *v;
        };
        if (row.unit.empty() || row.time.empty())
            throw Error(ErrorKind::ParseError, "row " + std::to_string(line_no) + ": empty id or time label");
        row.y = number(y_idx);
        for (auto c : x_idx) row.x.push_back(number(c));
        rows.push_back(std::move(row));
    }

    std::vector<std::string> units;
    std::vector<std::string> times;
    {
        std::set<std::string> us;
        std::set<std::string> ts;
        for (const auto& r : rows) {
            us.insert(r.unit);
            ts.insert(r.time);
        }
        units.assign(us.begin(), us.end());
        times.assign(ts.begin(), ts.end());
    }
    sort_labels(units);
    sort_labels(times);
    if (units.size() < 2 || times.size() < 2)
        throw Error(ErrorKind::InvalidArgument, "panel needs N >= 2 units and T >= 2 periods");

    std::unordered_map<std::string, Eigen::Index> unit_pos;
    std::unordered_map<std::string, Eigen::Index> time_pos;
    for (std::size_t i = 0; i < units.size(); ++i) unit_pos[units[i]] = static_cast<Eigen::Index>(i);
    for (std::size_t t = 0; t < times.size(); ++t) time_pos[times[t]] = static_cast<Eigen::Index>(t);

    const auto n = static_cast<Eigen::Index>(units.size());
    const auto t_count = static_cast<Eigen::Index>(times.size());
    Eigen::MatrixXd y(n, t_count);
    std::vector<Eigen::MatrixXd> x(x_idx.size(), Eigen::MatrixXd(n, t_count));
    Eigen::Matrix<std::size_t, Eigen::Dynamic, Eigen::Dynamic> seen =
        Eigen::Matrix<std::size_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, t_count);
    for (const auto& r : rows) {
        const auto i = unit_pos.at(r.unit);
        const auto t = time_pos.at(r.time);
        if (seen(i, t) != 0)
            throw Error(ErrorKind::DuplicateCell, "row " + std::to_string(r.line_no) + ": cell (" + r.unit + ", " +
                                                      r.time + ") already given on row " +
                                                      std::to_string(seen(i, t)));
        seen(i, t) = r.line_no;
        y(i, t) = r.y;
        for (std::size_t j = 0; j < x.size(); ++j) x[j](i, t) = r.x[j];
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index t = 0; t < t_count; ++t)
            if (seen(i, t) == 0)
                throw Error(ErrorKind::UnbalancedPanel, "unit '" + units[static_cast<std::size_t>(i)] +
                                                            "' has no row for period '" +
                                                            times[static_cast<std::size_t>(t)] + "'");
    return PanelData(std::move(y), std::move(x), std::move(units), std::move(times));
}

void write_csv(const PanelData& panel, const std::filesystem::path& path, const CsvSchema& schema) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
    write_csv(panel, out, schema);
}

void write_csv(const PanelData& panel, std::ostream& out, const CsvSchema& schema) {
    out << schema.id_col << ',' << schema.time_col << ',' << schema.y_col;
    for (Eigen::Index j = 0; j < panel.n_regressors(); ++j) {
        const auto idx = static_cast<std::size_t>(j);
        out << ',' << (idx < schema.x_cols.size() ? schema.x_cols[idx] : "x" + std::to_string(j + 1));
    }
    out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Eigen::Index i = 0; i < panel.n_units(); ++i) {
        for (Eigen::Index t = 0; t < panel.n_periods(); ++t) {
            out << panel.unit_ids()[static_cast<std::size_t>(i)] << ','
                << panel.time_ids()[static_cast<std::size_t>(t)] << ',' << panel.y()(i, t);
            for (Eigen::Index j = 0; j < panel.n_regressors(); ++j) out << ',' << panel.x(j)(i, t);
            out << '\n';
        }
    }
}

}  // namespace xsdep
