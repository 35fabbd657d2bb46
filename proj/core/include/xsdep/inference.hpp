#pragma once

#include "xsdep/robust_cov.hpp"

#include <Eigen/Dense>

#include <string>

namespace xsdep {

/// H0: R beta = r with R of full row rank q <= k.
struct LinearRestriction {
    Eigen::MatrixXd R;
    Eigen::VectorXd r;

    LinearRestriction() = default;
    /// Throws InvalidArgument on shape mismatch or rank(R) < q
    /// (singular values at or below 1e-10 * max).
    LinearRestriction(Eigen::MatrixXd R, Eigen::VectorXd r);

    Eigen::Index n_restrictions() const { return R.rows(); }
    Eigen::Index n_coefficients() const { return R.cols(); }

    /// beta_j = value for every j (the all-coefficients test).
    static LinearRestriction all_equal_to(const Eigen::VectorXd& value);
    /// Single restriction beta_j = value.
    static LinearRestriction single(Eigen::Index k, Eigen::Index j, double value);
};

/// Comma-separated linear equations over b1..bk, e.g. "b1=0,b2=b3" or
/// "2*b1 - 1/2 b2 = 3/4". Coefficients are decimals or ratios.
LinearRestriction parse_restriction(const std::string& text, Eigen::Index k);

struct TestResult {
    double statistic = 0.0;
    Eigen::Index dof = 0;
    double p_value = 1.0;
    std::string method;
};

/// (R b - r)' [R V R']^{-1} (R b - r), referred to chi2 with q degrees of freedom.
/// Throws SingularRestrictedCov when R V R' is numerically singular.
TestResult wald(const Eigen::VectorXd& beta_hat, const Eigen::MatrixXd& cov, const LinearRestriction& restr);
TestResult wald(const Eigen::VectorXd& beta_hat, const RobustCov& cov, const LinearRestriction& restr);

/// Upper tail of chi2(dof) at x. DomainError for x < 0 or dof < 1.
double chi2_sf(double x, Eigen::Index dof);
double chi2_cdf(double x, Eigen::Index dof);
/// x with chi2_sf(x, dof) = alpha.
double chi2_critical(double alpha, Eigen::Index dof);

double normal_cdf(double z);
/// 2 (1 - Phi(|z|)).
double normal_two_sided_p(double z);
/// z with 1 - Phi(z) = alpha.
double normal_critical(double alpha);

struct CoefficientTable {
    Eigen::VectorXd se;
    Eigen::VectorXd t_stats;
    Eigen::VectorXd p_values;
};

/// Per-coefficient z statistics against zero with the asymptotic normal reference.
CoefficientTable coefficient_table(const Eigen::VectorXd& beta_hat, const Eigen::MatrixXd& cov);

}  // namespace xsdep
