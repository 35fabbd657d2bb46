#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace xsdep {

/// Balanced N x T panel with k regressors. Immutable once constructed.
///
/// y(i, t) is the outcome of unit i at period t; x(j)(i, t) is regressor j.
/// Units and periods are stored in the order of unit_ids / time_ids.
class PanelData {
public:
    PanelData(Eigen::MatrixXd y, std::vector<Eigen::MatrixXd> x,
              std::vector<std::string> unit_ids = {},
              std::vector<std::string> time_ids = {});

    Eigen::Index n_units() const noexcept { return y_.rows(); }
    Eigen::Index n_periods() const noexcept { return y_.cols(); }
    Eigen::Index n_regressors() const noexcept { return static_cast<Eigen::Index>(x_.size()); }

    const Eigen::MatrixXd& y() const noexcept { return y_; }
    const Eigen::MatrixXd& x(Eigen::Index j) const { return x_.at(static_cast<std::size_t>(j)); }
    const std::vector<Eigen::MatrixXd>& xs() const noexcept { return x_; }

    /// k-vector of regressors for cell (i, t).
    Eigen::VectorXd x_cell(Eigen::Index i, Eigen::Index t) const;
    /// N x k slice of the regressors at period t (X_{.t}).
    Eigen::MatrixXd x_period(Eigen::Index t) const;

    const std::vector<std::string>& unit_ids() const noexcept { return unit_ids_; }
    const std::vector<std::string>& time_ids() const noexcept { return time_ids_; }

    /// Same regressors and ids, new outcome matrix.
    PanelData with_y(Eigen::MatrixXd y) const;

    bool operator==(const PanelData& other) const;

private:
    Eigen::MatrixXd y_;
    std::vector<Eigen::MatrixXd> x_;
    std::vector<std::string> unit_ids_;
    std::vector<std::string> time_ids_;
};

enum class Ordering { ByUnit, ByTime };

/// Row-stacked panel. ByUnit rows run (i=0,t=0),(i=0,t=1),...; ByTime rows
/// run (i=0,t=0),(i=1,t=0),...
struct StackedView {
    Ordering ordering = Ordering::ByUnit;
    Eigen::Index n_units = 0;
    Eigen::Index n_periods = 0;
    Eigen::VectorXd y_vec;
    Eigen::MatrixXd x_mat;
};

StackedView stack(const PanelData& panel, Ordering ordering);

/// Re-orders a stacked view into the other stacking (or returns a copy).
StackedView restack(const StackedView& view, Ordering ordering);

/// Position of cell (i, t) in a stacked vector.
constexpr Eigen::Index stacked_row(Ordering ordering, Eigen::Index n_units, Eigen::Index n_periods,
                                   Eigen::Index i, Eigen::Index t) {
    return ordering == Ordering::ByUnit ? i * n_periods + t : t * n_units + i;
}

struct CsvSchema {
    std::string id_col = "id";
    std::string time_col = "time";
    std::string y_col = "y";
    std::vector<std::string> x_cols;  ///< empty: every remaining column
};

/// Reads a long-format CSV (one row per cell, header required).
/// Unit and time labels are sorted: numerically when every label parses as
/// a number, lexicographically otherwise.
PanelData load_csv(const std::filesystem::path& path, const CsvSchema& schema);
PanelData load_csv(std::istream& in, const CsvSchema& schema);

void write_csv(const PanelData& panel, const std::filesystem::path& path,
               const CsvSchema& schema = {});
void write_csv(const PanelData& panel, std::ostream& out, const CsvSchema& schema = {});

/// Regressor column names load_csv would pick for this schema.
std::vector<std::string> regressor_names(const std::filesystem::path& path, const CsvSchema& schema);
std::vector<std::string> regressor_names(std::istream& in, const CsvSchema& schema);

/// Splits one CSV line (double-quoted fields, surrounding whitespace trimmed).
std::vector<std::string> split_csv_row(const std::string& line);

/// Sort order used for unit and time labels.
void sort_labels(std::vector<std::string>& labels);

}  // namespace xsdep
