#pragma once

#include "xsdep/dependence.hpp"
#include "xsdep/estimators.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace xsdep {

enum class CovMethod { PlugIn, CrossSection, Kernel };
enum class KernelKind { Bartlett, Uniform, Parzen };

std::string to_string(CovMethod method);
std::string to_string(KernelKind kernel);
CovMethod parse_cov_method(const std::string& text);  ///< cs | kernel | plugin
KernelKind parse_kernel(const std::string& text);     ///< bartlett | uniform | parzen

/// What the user asserts about temporal dependence; drives automatic truncation.
struct DeclaredDependence {
    enum class Kind { Unknown, PureCrossSection, MovingAverage, Summable };
    Kind kind = Kind::Unknown;
    Eigen::Index ma_order = 0;

    static DeclaredDependence parse(const std::string& text);  ///< pure-cs | ma:<q> | summable
    std::string to_string() const;
};

/// C(T): 0 for pure cross-sectional, q for MA(q), floor(4 (T/100)^(2/9)) otherwise.
Eigen::Index auto_truncation(const DeclaredDependence& declared, Eigen::Index n_periods);

/// K(j, C) for lag j and truncation C.
double kernel_weight(KernelKind kernel, Eigen::Index lag, Eigen::Index trunc);

struct RobustCov {
    Eigen::MatrixXd matrix;
    CovMethod method = CovMethod::CrossSection;
    std::optional<KernelKind> kernel;
    std::optional<Eigen::Index> trunc_lag;
    std::string declared;
    bool psd_repaired = false;
    double clipped_mass = 0.0;
    bool singular = false;
    bool omega_rank_deficient = false;
};

struct CovOptions {
    /// Throw SingularCov instead of only flagging a singular estimate.
    bool require_invertible = false;
    double singular_tol = 1e-12;
};

/// Scores g_t = w_t e_t (k x T) from weight blocks and an N x T residual panel.
Eigen::MatrixXd scores(const WeightBlocks& weights, const Eigen::MatrixXd& residuals);

struct OmegaHat {
    CovMatrix omega;
    bool rank_deficient = false;  ///< T < N
};

/// (1/T) sum_t e_t e_t'.
OmegaHat omega_hat(const Eigen::MatrixXd& residuals);

/// sum_t w_t e_t e_t' w_t'.
RobustCov cov_cross_section(const WeightBlocks& weights, const Eigen::MatrixXd& residuals,
                            const CovOptions& options = {});
RobustCov cov_cross_section(const FitResult& fit, const WeightBlocks& weights, const CovOptions& options = {});

/// Truncation lag: explicit, or automatic from the declared dependence.
struct Truncation {
    std::optional<Eigen::Index> lag;
    DeclaredDependence declared;
};

/// Zero-lag term plus kernel-weighted, symmetrized lag-j cross products
/// sum_{t>j} w_t e_t e_{t-j}' w_{t-j}' for j = 1..C. Negative eigenvalues are
/// clipped (and recorded) when the kernel does not guarantee PSD.
RobustCov cov_kernel(const WeightBlocks& weights, const Eigen::MatrixXd& residuals, KernelKind kernel,
                     const Truncation& trunc, const CovOptions& options = {});
RobustCov cov_kernel(const FitResult& fit, const WeightBlocks& weights, KernelKind kernel, const Truncation& trunc,
                     const CovOptions& options = {});

/// sum_t w_t Omega_hat w_t' with the unrestricted N x N Omega_hat.
RobustCov cov_plugin(const FitResult& fit, const WeightBlocks& weights, const CovOptions& options = {});

struct CovConfig {
    CovMethod method = CovMethod::CrossSection;
    KernelKind kernel = KernelKind::Bartlett;
    Truncation trunc;
};

RobustCov estimate_cov(const FitResult& fit, const WeightBlocks& weights, const CovConfig& config,
                       const CovOptions& options = {});

// ---------------------------------------------------------------------------
// Exact conditional variances for simulation.

/// sum_t w_t Omega w_t' = gram^{-1} (sum_t X~_t' Omega X~_t) gram^{-1}.
Eigen::MatrixXd true_variance_cs(const Design& design, const CovMatrix& omega);
Eigen::MatrixXd true_variance_cs(const PanelData& panel, EstimatorKind kind, const CovMatrix& omega);

enum class TimeFamily { None, FactorMA, IdioMA, IdioSummable, FactorSummable };
std::string to_string(TimeFamily family);

/// Law of the temporal memory. MA families filter unit-variance innovations
/// with the normalized coefficients ma_coeffs; summable families use a
/// stationary AR(1) with coefficient `decay`.
struct TimeDependenceSpec {
    TimeFamily family = TimeFamily::None;
    std::vector<double> ma_coeffs;
    double decay = 0.0;

    static TimeDependenceSpec none();
    static TimeDependenceSpec idio_ma(std::vector<double> coeffs);
    static TimeDependenceSpec factor_ma(std::vector<double> coeffs);
    static TimeDependenceSpec idio_summable(double decay);
    static TimeDependenceSpec factor_summable(double decay);

    bool is_factor() const { return family == TimeFamily::FactorMA || family == TimeFamily::FactorSummable; }
    bool is_idio() const { return family == TimeFamily::IdioMA || family == TimeFamily::IdioSummable; }

    /// rho_0 = 1, rho_1, ... up to max_lag (MA: zero past q; AR: decay^k,
    /// truncated once below 1e-16).
    std::vector<double> autocorrelation(Eigen::Index max_lag) const;
    void validate() const;
};

/// Autocovariance sequences implied by a TimeDependenceSpec:
/// theta_k = Cov(f_t, f_{t+k}) (m x m, theta_0 = I) and idiosyncratic
/// Delta_k = delta[k] * Delta_0 (delta[0] = 1).
struct Autocovariances {
    std::vector<Eigen::MatrixXd> theta;
    std::vector<double> delta;
};

Autocovariances autocovariances(const TimeDependenceSpec& spec, Eigen::Index n_factors, Eigen::Index max_lag);

/// Gamma: finite idiosyncratic memory (or none); Gamma1: summable
/// idiosyncratic memory; Gamma2: finite factor memory; Gamma3: summable factor memory.
enum class GammaKind { Gamma, Gamma1, Gamma2, Gamma3 };
std::string to_string(GammaKind kind);

struct MixedVariance {
    Eigen::MatrixXd matrix;
    GammaKind gamma_kind = GammaKind::Gamma;
};

/// Sandwich gram^{-1} X~' Gamma X~ gram^{-1} for the block-Toeplitz error
/// covariance with blocks Lambda theta_k Lambda' + delta_k Sigma, evaluated
/// lag by lag (Gamma is never formed). Throws SpecMismatch on inconsistent inputs.
MixedVariance true_variance_mixed(const Design& design, TimeFamily family, const Autocovariances& autocov,
                                  const Eigen::MatrixXd& loadings, const Eigen::MatrixXd& sigma);

/// Normalization NT / h_N applied to a finite-sample sandwich to report the limit matrices.
double limit_scale(Eigen::Index n, Eigen::Index t, double h_n);

}  // namespace xsdep
