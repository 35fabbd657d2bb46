#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace xsdep {

/// Symmetric N x N cross-sectional covariance with a lazily computed,
/// thread-safe eigensystem cache. Copies share the cache.
class CovMatrix {
public:
    /// Throws InvalidArgument when `values` is not square or not symmetric to
    /// 1e-10 relative; the stored matrix is exactly symmetrized.
    explicit CovMatrix(Eigen::MatrixXd values);

    Eigen::Index n() const noexcept { return values_.rows(); }
    const Eigen::MatrixXd& values() const noexcept { return values_; }

    /// Ascending eigenvalues; values within 1e-10 * lambda_N of zero are clamped to 0.
    const Eigen::VectorXd& eigenvalues() const;
    /// Orthonormal eigenvectors, column i paired with eigenvalues()(i).
    const Eigen::MatrixXd& eigenvectors() const;
    double max_eigenvalue() const;

    /// Throws NotPSD if the smallest eigenvalue is below -1e-8 * lambda_N.
    void require_psd(const std::string& what = "covariance") const;

    /// Leading m x m principal submatrix.
    CovMatrix leading(Eigen::Index m) const;

private:
    struct Cache;
    Eigen::MatrixXd values_;
    std::shared_ptr<Cache> cache_;
};

double norm_max_eig(const CovMatrix& omega);
double norm_max_row_sum(const CovMatrix& omega);
/// sqrt((1/N) sum_ij omega_ij^2)
double norm_euclid_scaled(const CovMatrix& omega);
/// sqrt(sum_ij omega_ij^2), the plain Frobenius norm.
double norm_euclid_unscaled(const CovMatrix& omega);
/// (1/N) sum_ij |omega_ij|
double norm_taxicab_scaled(const CovMatrix& omega);

enum class Regime { Weak, Moderate, Strong };
std::string to_string(Regime regime);

enum class NormKind { MaxEig, MaxRowSum, EuclidScaled, TaxicabScaled };
inline constexpr NormKind kAllNorms[] = {NormKind::MaxEig, NormKind::MaxRowSum, NormKind::EuclidScaled,
                                         NormKind::TaxicabScaled};
std::string to_string(NormKind kind);

struct NormsAtN {
    Eigen::Index n = 0;
    double max_eig = 0.0;
    double max_row_sum = 0.0;
    double euclid_scaled = 0.0;
    double taxicab_scaled = 0.0;

    double get(NormKind kind) const;
};

struct ExponentFit {
    double alpha = 0.0;
    double std_error = 0.0;
    Regime regime = Regime::Weak;
};

struct ClassifyConfig {
    double weak_max = 0.1;    ///< alpha <= weak_max is Weak
    double strong_min = 0.9;  ///< alpha >= strong_min is Strong
    int threads = 1;
};

struct DependenceProfile {
    std::vector<NormsAtN> norms_by_n;
    ExponentFit headline;  ///< max-eigenvalue norm
    Regime regime = Regime::Weak;
    ExponentFit max_row_sum;
    ExponentFit euclid_scaled;
    ExponentFit taxicab_scaled;

    const ExponentFit& fit(NormKind kind) const;
};

using CovFamily = std::function<CovMatrix(Eigen::Index)>;

NormsAtN compute_norms(const CovMatrix& omega);

/// Least-squares slope of log(values) on log(n) with its standard error.
ExponentFit fit_exponent(const std::vector<double>& n, const std::vector<double>& values,
                         const ClassifyConfig& config = {});

Regime regime_for(double alpha, const ClassifyConfig& config = {});

/// Evaluates every norm along n_grid and labels the growth regime.
DependenceProfile classify(const CovFamily& family, const std::vector<Eigen::Index>& n_grid,
                           const ClassifyConfig& config = {});

struct FactorSplit {
    Eigen::Index m = 0;
    Eigen::MatrixXd loadings;  ///< N x m
    CovMatrix idio_cov;        ///< Sigma
    Eigen::VectorXd c_coeffs;  ///< length m
    Eigen::VectorXd delta;     ///< nonzero eigenvalues of loadings * loadings'
};

struct FactorCountConfig {
    Eigen::Index m_max = 8;
    double min_ratio = 3.0;
};

/// Eigenvalue-ratio rule: the gap j <= m_max with the largest ratio
/// lambda_{N-j+1} / lambda_{N-j}; 0 when that ratio is below min_ratio.
Eigen::Index choose_factor_count(const CovMatrix& omega, const FactorCountConfig& config = {});

/// Spectral split Omega = Lambda Lambda' + Sigma. The top m eigen-pairs
/// give Lambda = [P_{N-m+1} ... P_N] diag(sqrt(lambda - c lambda_1)) and
/// Sigma keeps the remaining spectrum plus c_i * lambda_1 on the top
/// directions. `m` empty selects the count with choose_factor_count.
FactorSplit factor_decompose(const CovMatrix& omega, std::optional<Eigen::Index> m = std::nullopt,
                             std::optional<Eigen::VectorXd> c_coeffs = std::nullopt,
                             const FactorCountConfig& count_config = {});

struct FourthMomentBound {
    double trace_vf = 0.0;
    double lambda_max_vf = 0.0;
    double sum_omega_sq = 0.0;
    double lambda_max_sq = 0.0;
};

/// Sample version of the chain trace(V_F) >= lambda_max(V_F) >= sum omega_ij^2
/// >= lambda_max(Omega)^2 with V_F = mean_t (e_t e_t') (x) (e_t e_t').
/// `sample` is N x T (column t is e_t). Throws DimensionGuard for N > 40.
FourthMomentBound fourth_moment_lower_bound(const Eigen::MatrixXd& sample);

struct ConjectureRow {
    Eigen::Index n = 0;
    double max_eig = 0.0;
    double taxicab_scaled = 0.0;
    double euclid_over_sqrt_n = 0.0;  ///< sqrt(sum omega^2) / sqrt(N)
};

/// Tabulates the three quantities of the weak-end equivalence question.
std::vector<ConjectureRow> explore_conjecture(const CovFamily& family, const std::vector<Eigen::Index>& n_grid);

}  // namespace xsdep
