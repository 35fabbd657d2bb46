#pragma once

#include "xsdep/panel_data.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace xsdep {

/// FixedEffect removes unit means, Pooled removes the grand mean, and
/// NoIntercept leaves the data as is (regression through the origin).
enum class EstimatorKind { FixedEffect, Pooled, NoIntercept };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(const std::string& text);

struct Demeaned {
    Eigen::MatrixXd y;               ///< N x T
    std::vector<Eigen::MatrixXd> x;  ///< k matrices, each N x T
};

/// y_it - ybar_i and x_it - xbar_i.
Demeaned within_demean(const PanelData& panel);
/// y_it - ybar and x_it - xbar over all NT cells.
Demeaned grand_demean(const PanelData& panel);
Demeaned demean(const PanelData& panel, EstimatorKind kind);

struct ConditionLimits {
    double warn = 1e8;
    double fail = 1e12;
};

/// The regressor side of an estimation: transformed regressors, their Gram
/// matrix and its inverse. Reused by the true-variance oracles.
struct Design {
    EstimatorKind kind = EstimatorKind::FixedEffect;
    std::vector<Eigen::MatrixXd> x_tilde;  ///< k matrices, each N x T
    Eigen::MatrixXd gram;                  ///< sum_t X~_t' X~_t
    Eigen::MatrixXd gram_inv;
    double condition_number = 1.0;

    Eigen::Index n_units() const { return x_tilde.front().rows(); }
    Eigen::Index n_periods() const { return x_tilde.front().cols(); }
    Eigen::Index n_regressors() const { return static_cast<Eigen::Index>(x_tilde.size()); }
    /// N x k slice X~_{.t}.
    Eigen::MatrixXd period(Eigen::Index t) const;
};

/// Throws SingularGram when the Gram matrix is singular or its condition
/// number reaches limits.fail.
Design prepare_design(const PanelData& panel, EstimatorKind kind, const ConditionLimits& limits = {});

struct FitResult {
    Design design;
    Eigen::VectorXd beta_hat;
    Eigen::MatrixXd residuals;   ///< N x T
    Eigen::VectorXd intercepts;  ///< N (FE: mu_i; Pooled: grand intercept repeated; NoIntercept: 0)
    std::vector<std::string> warnings;

    EstimatorKind kind() const { return design.kind; }
    const Eigen::MatrixXd& gram() const { return design.gram; }
    const Eigen::MatrixXd& gram_inv() const { return design.gram_inv; }
};

FitResult fit(const PanelData& panel, EstimatorKind kind, const ConditionLimits& limits = {});

/// Per-period weights w_t = gram^{-1} X~_{.t}' (k x N), so that
/// beta_hat = sum_t w_t y~_{.t}.
struct WeightBlocks {
    std::vector<Eigen::MatrixXd> blocks;

    Eigen::Index n_periods() const { return static_cast<Eigen::Index>(blocks.size()); }
};

WeightBlocks weight_blocks(const Design& design);
WeightBlocks weight_blocks(const FitResult& fit);

}  // namespace xsdep
