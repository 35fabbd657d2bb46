#include "xsdep/estimators.hpp"

#include "xsdep/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <sstream>

namespace xsdep {

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::FixedEffect: return "fe";
        case EstimatorKind::Pooled: return "pooled";
        case EstimatorKind::NoIntercept: return "nointercept";
    }
    return "unknown";
}

EstimatorKind parse_estimator_kind(const std::string& text) {
    if (text == "fe" || text == "fixed_effect") return EstimatorKind::FixedEffect;
    if (text == "pooled" || text == "ols") return EstimatorKind::Pooled;
    if (text == "nointercept" || text == "origin") return EstimatorKind::NoIntercept;
    throw Error(ErrorKind::InvalidArgument, "unknown estimator '" + text + "' (expected fe|pooled|nointercept)");
}

Demeaned within_demean(const PanelData& panel) {
    Demeaned out;
    out.y = panel.y().colwise() - panel.y().rowwise().mean();
    out.x.reserve(panel.xs().size());
    for (const auto& xj : panel.xs()) out.x.emplace_back(xj.colwise() - xj.rowwise().mean());
    return out;
}

Demeaned grand_demean(const PanelData& panel) {
    Demeaned out;
    out.y = panel.y().array() - panel.y().mean();
    out.x.reserve(panel.xs().size());
    for (const auto& xj : panel.xs()) out.x.emplace_back(xj.array() - xj.mean());
    return out;
}

Demeaned demean(const PanelData& panel, EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::FixedEffect: return within_demean(panel);
        case EstimatorKind::Pooled: return grand_demean(panel);
        case EstimatorKind::NoIntercept: return Demeaned{panel.y(), panel.xs()};
    }
    throw Error(ErrorKind::InvalidArgument, "unknown estimator kind");
}

Eigen::MatrixXd Design::period(Eigen::Index t) const {
    Eigen::MatrixXd out(n_units(), n_regressors());
    for (Eigen::Index j = 0; j < n_regressors(); ++j) out.col(j) = x_tilde[static_cast<std::size_t>(j)].col(t);
    return out;
}

namespace {

Design design_from(std::vector<Eigen::MatrixXd> x_tilde, EstimatorKind kind, const ConditionLimits& limits) {
    Design d;
    d.kind = kind;
    d.x_tilde = std::move(x_tilde);
    const auto k = d.n_regressors();
    d.gram.resize(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = a; b < k; ++b)
            d.gram(a, b) = d.gram(b, a) =
                (d.x_tilde[static_cast<std::size_t>(a)].array() * d.x_tilde[static_cast<std::size_t>(b)].array()).sum();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(d.gram, Eigen::EigenvaluesOnly);
    const double lo = solver.eigenvalues()(0);
    const double hi = solver.eigenvalues()(k - 1);
    d.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(hi > 0.0) || !(d.condition_number < limits.fail)) {
        std::ostringstream msg;
        msg << "Gram matrix of the " << to_string(kind) << "-transformed regressors is singular (condition number "
            << d.condition_number << ")";
        if (kind == EstimatorKind::FixedEffect) msg << "; a time-invariant regressor is absorbed by the unit effects";
        throw Error(ErrorKind::SingularGram, msg.str());
    }
    d.gram_inv = d.gram.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    d.gram_inv = 0.5 * (d.gram_inv + d.gram_inv.transpose()).eval();
    return d;
}

}  // namespace

Design prepare_design(const PanelData& panel, EstimatorKind kind, const ConditionLimits& limits) {
    return design_from(demean(panel, kind).x, kind, limits);
}

FitResult fit(const PanelData& panel, EstimatorKind kind, const ConditionLimits& limits) {
    Demeaned dm = demean(panel, kind);
    const auto n = panel.n_units();
    const auto t_count = panel.n_periods();
    const auto k = panel.n_regressors();

    FitResult out;
    out.design = design_from(std::move(dm.x), kind, limits);
    const auto& xt = out.design.x_tilde;

    // Orthogonal (QR) solve of the stacked transformed regression.
    Eigen::MatrixXd stacked(n * t_count, k);
    for (Eigen::Index j = 0; j < k; ++j)
        stacked.col(j) = Eigen::Map<const Eigen::VectorXd>(xt[static_cast<std::size_t>(j)].data(), n * t_count);
    const Eigen::Map<const Eigen::VectorXd> y_vec(dm.y.data(), n * t_count);
    out.beta_hat = stacked.colPivHouseholderQr().solve(y_vec);

    out.residuals = dm.y;
    for (Eigen::Index j = 0; j < k; ++j) out.residuals -= out.beta_hat(j) * xt[static_cast<std::size_t>(j)];

    out.intercepts.resize(n);
    switch (kind) {
        case EstimatorKind::FixedEffect: {
            Eigen::VectorXd mu = panel.y().rowwise().mean();
            for (Eigen::Index j = 0; j < k; ++j) mu -= out.beta_hat(j) * panel.x(j).rowwise().mean();
            out.intercepts = mu;
            break;
        }
        case EstimatorKind::Pooled: {
            double mu = panel.y().mean();
            for (Eigen::Index j = 0; j < k; ++j) mu -= out.beta_hat(j) * panel.x(j).mean();
            out.intercepts.setConstant(mu);
            break;
        }
        case EstimatorKind::NoIntercept: out.intercepts.setZero(); break;
    }

    if (out.design.condition_number > limits.warn) {
        std::ostringstream msg;
        msg << "ConditionWarning: Gram condition number " << out.design.condition_number;
        out.warnings.push_back(msg.str());
    }
    return out;
}

WeightBlocks weight_blocks(const Design& design) {
    WeightBlocks out;
    const auto t_count = design.n_periods();
    out.blocks.reserve(static_cast<std::size_t>(t_count));
    for (Eigen::Index t = 0; t < t_count; ++t) out.blocks.emplace_back(design.gram_inv * design.period(t).transpose());
    return out;
}

WeightBlocks weight_blocks(const FitResult& fit) { return weight_blocks(fit.design); }

}  // namespace xsdep
