#pragma once

#include "xsdep/estimators.hpp"
#include "xsdep/families.hpp"
#include "xsdep/random.hpp"
#include "xsdep/robust_cov.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace xsdep {

/// Normal: i.i.d. N(0,1). MeanShift: i.i.d. N(1,1). Centered: N(0,1) with the
/// cross-section mean removed in every period, so sum_i x_it = 0.
/// LoadingAligned: the first regressor is kappa * l_i * z_t + v_it, where l is
/// the leading loading (or leading eigenvector of Omega) scaled to unit mean square.
enum class XLaw { Normal, MeanShift, Centered, LoadingAligned };
enum class ErrorDist { Gaussian, StudentT };

std::string to_string(XLaw law);
std::string to_string(ErrorDist dist);
XLaw parse_x_law(const std::string& text);
ErrorDist parse_error_dist(const std::string& text);

struct DgpSpec {
    CrossSection cross_section = DiagonalFamily{};
    TimeDependenceSpec time_memory;
    XLaw x_law = XLaw::Normal;
    double alignment = 1.0;  ///< kappa for LoadingAligned
    Eigen::VectorXd beta = Eigen::VectorXd::Ones(1);
    double mu_scale = 1.0;  ///< mu_i ~ U(-mu_scale, mu_scale)
    ErrorDist error_dist = ErrorDist::Gaussian;
    double nu = 8.0;
    /// Draw X once per (N, T) cell and hold it fixed across replications.
    bool fixed_design = false;

    Eigen::Index k() const { return beta.size(); }
    /// Throws InvalidArgument / SpecMismatch on bad parameters.
    void validate() const;
};

/// Everything about a DGP that depends on N but not on the draw.
struct PreparedDgp {
    DgpSpec spec;
    Eigen::Index n = 0;
    CovMatrix omega{Eigen::MatrixXd::Identity(1, 1)};  ///< contemporaneous covariance of eps_t
    Eigen::MatrixXd loadings;                          ///< N x m; empty for non-factor families
    Eigen::MatrixXd sigma;                             ///< idiosyncratic covariance (Omega itself without factors)
    Eigen::MatrixXd omega_sqrt;                        ///< symmetric square root; empty for factor families
    Eigen::VectorXd align_direction;                   ///< unit-mean-square direction for LoadingAligned
    double h_n = 1.0;                                  ///< N^a for factor families, lambda_max(Omega) otherwise

    bool has_factors() const { return loadings.cols() > 0; }
};

std::shared_ptr<const PreparedDgp> prepare(const DgpSpec& spec, Eigen::Index n);

struct Truth {
    Eigen::VectorXd beta;
    Eigen::VectorXd mu;
    std::shared_ptr<const PreparedDgp> model;  ///< Lambda, Sigma, Omega, h_N
};

struct GeneratedPanel {
    PanelData panel;
    Truth truth;
    Eigen::MatrixXd errors;  ///< N x T eps
};

/// k regressor matrices (N x T).
std::vector<Eigen::MatrixXd> gen_design(const PreparedDgp& model, Eigen::Index t, Rng& rng);

/// N x T errors with the target contemporaneous covariance and time memory.
Eigen::MatrixXd gen_errors(const PreparedDgp& model, Eigen::Index t, Rng& rng);

/// Deterministic in (model, t, seed). When `design` is given it is used for X.
GeneratedPanel gen_panel(const std::shared_ptr<const PreparedDgp>& model, Eigen::Index t, std::uint64_t seed,
                         const std::vector<Eigen::MatrixXd>* design = nullptr);
GeneratedPanel gen_panel(const DgpSpec& spec, Eigen::Index n, Eigen::Index t, std::uint64_t seed);

/// Exact conditional variance of beta_hat given the design.
Eigen::MatrixXd true_variance(const PreparedDgp& model, const Design& design);

// ---------------------------------------------------------------------------
// Monte Carlo.

struct GridCell {
    Eigen::Index n = 0;
    Eigen::Index t = 0;
    bool operator==(const GridCell&) const = default;
};

struct McConfig {
    DgpSpec dgp;
    std::vector<GridCell> grid;
    Eigen::Index reps = 200;
    EstimatorKind estimator = EstimatorKind::FixedEffect;
    CovConfig cov;
    std::uint64_t seed = 1;
    int threads = 1;  ///< not part of the report
    bool compute_true_variance = true;
    double alpha = 0.05;
    double failure_tolerance = 0.01;
    Eigen::Index min_reps = 200;

    void validate() const;
};

struct CellStats {
    GridCell cell;
    Eigen::Index reps = 0;
    Eigen::Index failures = 0;
    bool failed = false;
    std::map<std::string, Eigen::Index> failure_kinds;
    Eigen::VectorXd mean_beta, sd_beta, bias, mc_se, rmse;
    double rmse_total = 0.0;
    double size = 0.0;             ///< joint Wald rejection rate at alpha under beta_true
    Eigen::VectorXd coverage;      ///< per-coefficient 1 - alpha interval coverage
    Eigen::VectorXd mean_cov;      ///< mean diagonal of the estimated covariance
    Eigen::VectorXd mean_true;     ///< mean diagonal of the true variance (empty if not computed)
    Eigen::VectorXd var_ratio;     ///< mean_cov / mean_true
    double rel_rmse_cov = 0.0;     ///< sqrt(mean ||V_hat - V||_F^2) / mean ||V||_F
    double psd_repaired_rate = 0.0;
    double h_n = 1.0;
};

struct RateFit {
    std::string axis;  ///< T, N or NT
    double slope = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    Eigen::Index points = 0;
};

struct McReport {
    int schema_version = 1;
    McConfig config;
    std::vector<CellStats> cells;
    std::vector<RateFit> rates;
    std::string seed_rule = "splitmix64(master, N, T, rep)";

    const CellStats& cell(Eigen::Index n, Eigen::Index t) const;
    std::optional<RateFit> rate(const std::string& axis) const;
};

McReport run_mc(const McConfig& config);

/// Least-squares slope of log(rmse_total) on log(axis) over non-failed cells.
std::vector<RateFit> fit_rates(const std::vector<CellStats>& cells);

}  // namespace xsdep
