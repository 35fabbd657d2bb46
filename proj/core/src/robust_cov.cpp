#include "xsdep/robust_cov.hpp"

#include "xsdep/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace xsdep {

std::string to_string(CovMethod method) {
    switch (method) {
        case CovMethod::PlugIn: return "plugin";
        case CovMethod::CrossSection: return "cs";
        case CovMethod::Kernel: return "kernel";
    }
    return "unknown";
}

std::string to_string(KernelKind kernel) {
    switch (kernel) {
        case KernelKind::Bartlett: return "bartlett";
        case KernelKind::Uniform: return "uniform";
        case KernelKind::Parzen: return "parzen";
    }
    return "unknown";
}

CovMethod parse_cov_method(const std::string& text) {
    if (text == "cs") return CovMethod::CrossSection;
    if (text == "kernel") return CovMethod::Kernel;
    if (text == "plugin") return CovMethod::PlugIn;
    throw Error(ErrorKind::InvalidArgument, "unknown covariance method '" + text + "' (expected cs|kernel|plugin)");
}

KernelKind parse_kernel(const std::string& text) {
    if (text == "bartlett") return KernelKind::Bartlett;
    if (text == "uniform" || text == "truncated") return KernelKind::Uniform;
    if (text == "parzen") return KernelKind::Parzen;
    throw Error(ErrorKind::InvalidArgument, "unknown kernel '" + text + "' (expected bartlett|uniform|parzen)");
}

DeclaredDependence DeclaredDependence::parse(const std::string& text) {
    DeclaredDependence d;
    if (text.empty() || text == "unknown") return d;
    if (text == "pure-cs") {
        d.kind = Kind::PureCrossSection;
        return d;
    }
    if (text == "summable") {
        d.kind = Kind::Summable;
        return d;
    }
    if (text.rfind("ma:", 0) == 0) {
        try {
            std::size_t used = 0;
            const long q = std::stol(text.substr(3), &used);
            if (used == text.size() - 3 && q >= 0) {
                d.kind = Kind::MovingAverage;
                d.ma_order = q;
                return d;
            }
        } catch (...) {
        }
    }
    throw Error(ErrorKind::InvalidArgument,
                "bad dependence declaration '" + text + "' (expected pure-cs|ma:<q>|summable)");
}

std::string DeclaredDependence::to_string() const {
    switch (kind) {
        case Kind::Unknown: return "unknown";
        case Kind::PureCrossSection: return "pure-cs";
        case Kind::MovingAverage: return "ma:" + std::to_string(ma_order);
        case Kind::Summable: return "summable";
    }
    return "unknown";
}

Eigen::Index auto_truncation(const DeclaredDependence& declared, Eigen::Index n_periods) {
    switch (declared.kind) {
        case DeclaredDependence::Kind::PureCrossSection: return 0;
        case DeclaredDependence::Kind::MovingAverage: return declared.ma_order;
        case DeclaredDependence::Kind::Unknown:
        case DeclaredDependence::Kind::Summable:
            return static_cast<Eigen::Index>(
                std::floor(4.0 * std::pow(static_cast<double>(n_periods) / 100.0, 2.0 / 9.0)));
    }
    return 0;
}

double kernel_weight(KernelKind kernel, Eigen::Index lag, Eigen::Index trunc) {
    if (lag == 0) return 1.0;
    if (lag > trunc) return 0.0;
    const double z = static_cast<double>(lag) / static_cast<double>(trunc + 1);
    switch (kernel) {
        case KernelKind::Bartlett: return 1.0 - z;
        case KernelKind::Uniform: return 1.0;
        case KernelKind::Parzen:
            return z <= 0.5 ? 1.0 - 6.0 * z * z + 6.0 * z * z * z : 2.0 * std::pow(1.0 - z, 3.0);
    }
    return 0.0;
}

Eigen::MatrixXd scores(const WeightBlocks& weights, const Eigen::MatrixXd& residuals) {
    const auto t_count = residuals.cols();
    if (weights.n_periods() != t_count)
        throw Error(ErrorKind::InvalidArgument, "weight blocks and residuals disagree on T");
    if (t_count == 0) throw Error(ErrorKind::InvalidArgument, "empty residual panel");
    const auto k = weights.blocks.front().rows();
    Eigen::MatrixXd g(k, t_count);
    for (Eigen::Index t = 0; t < t_count; ++t) {
        const auto& w = weights.blocks[static_cast<std::size_t>(t)];
        if (w.cols() != residuals.rows())
            throw Error(ErrorKind::InvalidArgument, "weight block width does not match N");
        g.col(t) = w * residuals.col(t);
    }
    return g;
}

OmegaHat omega_hat(const Eigen::MatrixXd& residuals) {
    if (residuals.cols() < 2) throw Error(ErrorKind::InvalidArgument, "Omega_hat needs T >= 2");
    Eigen::MatrixXd values = residuals * residuals.transpose() / static_cast<double>(residuals.cols());
    return OmegaHat{CovMatrix(std::move(values)), residuals.cols() < residuals.rows()};
}

namespace {

void finalize(RobustCov& cov, bool repair, const CovOptions& options) {
    cov.matrix = 0.5 * (cov.matrix + cov.matrix.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov.matrix);
    if (solver.info() != Eigen::Success) throw Error(ErrorKind::EigenFailure, "eigensolver failed on k x k covariance");
    Eigen::VectorXd evals = solver.eigenvalues();
    const double scale = evals.cwiseAbs().maxCoeff();
    if (repair && evals(0) < -1e-10 * scale) {
        double clipped = 0.0;
        for (Eigen::Index i = 0; i < evals.size(); ++i) {
            if (evals(i) < 0.0) {
                clipped -= evals(i);
                evals(i) = 0.0;
            }
        }
        cov.matrix = solver.eigenvectors() * evals.asDiagonal() * solver.eigenvectors().transpose();
        cov.matrix = 0.5 * (cov.matrix + cov.matrix.transpose()).eval();
        cov.psd_repaired = true;
        cov.clipped_mass = clipped;
    }
    const double top = evals.maxCoeff();
    cov.singular = !(top > 0.0) || evals.minCoeff() <= options.singular_tol * top;
    if (cov.singular && options.require_invertible)
        throw Error(ErrorKind::SingularCov, to_string(cov.method) + " covariance estimate is numerically singular");
}

Eigen::MatrixXd lag_cross(const Eigen::MatrixXd& g, Eigen::Index lag) {
    const auto t_count = g.cols();
    return g.rightCols(t_count - lag) * g.leftCols(t_count - lag).transpose();
}

}  // namespace

RobustCov cov_cross_section(const WeightBlocks& weights, const Eigen::MatrixXd& residuals, const CovOptions& options) {
    const Eigen::MatrixXd g = scores(weights, residuals);
    RobustCov cov;
    cov.method = CovMethod::CrossSection;
    cov.trunc_lag = 0;
    cov.matrix = g * g.transpose();
    finalize(cov, false, options);
    return cov;
}

RobustCov cov_cross_section(const FitResult& fit, const WeightBlocks& weights, const CovOptions& options) {
    return cov_cross_section(weights, fit.residuals, options);
}

RobustCov cov_kernel(const WeightBlocks& weights, const Eigen::MatrixXd& residuals, KernelKind kernel,
                     const Truncation& trunc, const CovOptions& options) {
    const auto t_count = residuals.cols();
    const Eigen::Index lag = trunc.lag ? *trunc.lag : auto_truncation(trunc.declared, t_count);
    if (lag < 0) throw Error(ErrorKind::InvalidArgument, "truncation lag must be >= 0");
    if (lag >= t_count)
        throw Error(ErrorKind::TruncTooLarge, "truncation lag " + std::to_string(lag) + " must be below T = " +
                                                  std::to_string(t_count));
    const Eigen::MatrixXd g = scores(weights, residuals);
    RobustCov cov;
    cov.method = CovMethod::Kernel;
    cov.kernel = kernel;
    cov.trunc_lag = lag;
    cov.declared = trunc.lag ? "explicit" : trunc.declared.to_string();
    cov.matrix = g * g.transpose();
    for (Eigen::Index j = 1; j <= lag; ++j) {
        const Eigen::MatrixXd s = lag_cross(g, j);
        cov.matrix += kernel_weight(kernel, j, lag) * (s + s.transpose());
    }
    finalize(cov, true, options);
    return cov;
}

RobustCov cov_kernel(const FitResult& fit, const WeightBlocks& weights, KernelKind kernel, const Truncation& trunc,
                     const CovOptions& options) {
    return cov_kernel(weights, fit.residuals, kernel, trunc, options);
}

RobustCov cov_plugin(const FitResult& fit, const WeightBlocks& weights, const CovOptions& options) {
    const OmegaHat oh = omega_hat(fit.residuals);
    const auto& omega = oh.omega.values();
    const auto k = fit.beta_hat.size();
    RobustCov cov;
    cov.method = CovMethod::PlugIn;
    cov.omega_rank_deficient = oh.rank_deficient;
    cov.matrix = Eigen::MatrixXd::Zero(k, k);
    for (const auto& w : weights.blocks) cov.matrix.noalias() += (w * omega) * w.transpose();
    finalize(cov, false, options);
    return cov;
}

RobustCov estimate_cov(const FitResult& fit, const WeightBlocks& weights, const CovConfig& config,
                       const CovOptions& options) {
    switch (config.method) {
        case CovMethod::CrossSection: return cov_cross_section(fit, weights, options);
        case CovMethod::Kernel: return cov_kernel(fit, weights, config.kernel, config.trunc, options);
        case CovMethod::PlugIn: return cov_plugin(fit, weights, options);
    }
    throw Error(ErrorKind::InvalidArgument, "unknown covariance method");
}

Eigen::MatrixXd true_variance_cs(const Design& design, const CovMatrix& omega) {
    if (omega.n() != design.n_units()) throw Error(ErrorKind::InvalidArgument, "Omega dimension does not match N");
    const auto k = design.n_regressors();
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index t = 0; t < design.n_periods(); ++t) {
        const Eigen::MatrixXd xt = design.period(t);
        meat.noalias() += xt.transpose() * (omega.values() * xt);
    }
    Eigen::MatrixXd v = design.gram_inv * meat * design.gram_inv;
    return 0.5 * (v + v.transpose());
}

Eigen::MatrixXd true_variance_cs(const PanelData& panel, EstimatorKind kind, const CovMatrix& omega) {
    return true_variance_cs(prepare_design(panel, kind), omega);
}

std::string to_string(TimeFamily family) {
    switch (family) {
        case TimeFamily::None: return "none";
        case TimeFamily::FactorMA: return "factor_ma";
        case TimeFamily::IdioMA: return "idio_ma";
        case TimeFamily::IdioSummable: return "idio_summable";
        case TimeFamily::FactorSummable: return "factor_summable";
    }
    return "unknown";
}

TimeDependenceSpec TimeDependenceSpec::none() { return {}; }

TimeDependenceSpec TimeDependenceSpec::idio_ma(std::vector<double> coeffs) {
    return {TimeFamily::IdioMA, std::move(coeffs), 0.0};
}

TimeDependenceSpec TimeDependenceSpec::factor_ma(std::vector<double> coeffs) {
    return {TimeFamily::FactorMA, std::move(coeffs), 0.0};
}

TimeDependenceSpec TimeDependenceSpec::idio_summable(double decay) { return {TimeFamily::IdioSummable, {}, decay}; }

TimeDependenceSpec TimeDependenceSpec::factor_summable(double decay) {
    return {TimeFamily::FactorSummable, {}, decay};
}

void TimeDependenceSpec::validate() const {
    if (family == TimeFamily::IdioMA || family == TimeFamily::FactorMA) {
        double ss = 0.0;
        for (double c : ma_coeffs) {
            if (!std::isfinite(c)) throw Error(ErrorKind::InvalidArgument, "MA coefficient is not finite");
            ss += c * c;
        }
        if (ma_coeffs.empty() || !(ss > 0.0))
            throw Error(ErrorKind::InvalidArgument, "MA memory needs at least one nonzero coefficient");
    }
    if (family == TimeFamily::IdioSummable || family == TimeFamily::FactorSummable) {
        if (!(std::abs(decay) < 1.0))
            throw Error(ErrorKind::InvalidArgument, "summable memory needs |decay| < 1 (sum of |Delta_k| diverges)");
    }
}

std::vector<double> TimeDependenceSpec::autocorrelation(Eigen::Index max_lag) const {
    validate();
    std::vector<double> rho{1.0};
    if (family == TimeFamily::IdioMA || family == TimeFamily::FactorMA) {
        double ss = 0.0;
        for (double c : ma_coeffs) ss += c * c;
        const auto q = static_cast<Eigen::Index>(ma_coeffs.size()) - 1;
        for (Eigen::Index k = 1; k <= std::min(q, max_lag); ++k) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i + k <= q; ++i)
                acc += ma_coeffs[static_cast<std::size_t>(i)] * ma_coeffs[static_cast<std::size_t>(i + k)];
            rho.push_back(acc / ss);
        }
    } else if (family == TimeFamily::IdioSummable || family == TimeFamily::FactorSummable) {
        double r = 1.0;
        for (Eigen::Index k = 1; k <= max_lag; ++k) {
            r *= decay;
            if (std::abs(r) < 1e-16) break;
            rho.push_back(r);
        }
    }
    return rho;
}

Autocovariances autocovariances(const TimeDependenceSpec& spec, Eigen::Index n_factors, Eigen::Index max_lag) {
    const auto rho = spec.autocorrelation(max_lag);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n_factors, n_factors);
    Autocovariances out;
    if (spec.is_factor()) {
        for (double r : rho) out.theta.push_back(r * eye);
        out.delta = {1.0};
    } else if (spec.is_idio()) {
        out.theta = {eye};
        out.delta = rho;
    } else {
        out.theta = {eye};
        out.delta = {1.0};
    }
    return out;
}

std::string to_string(GammaKind kind) {
    switch (kind) {
        case GammaKind::Gamma: return "Gamma";
        case GammaKind::Gamma1: return "Gamma1";
        case GammaKind::Gamma2: return "Gamma2";
        case GammaKind::Gamma3: return "Gamma3";
    }
    return "unknown";
}

MixedVariance true_variance_mixed(const Design& design, TimeFamily family, const Autocovariances& autocov,
                                  const Eigen::MatrixXd& loadings, const Eigen::MatrixXd& sigma) {
    const auto n = design.n_units();
    const auto t_count = design.n_periods();
    const auto k = design.n_regressors();
    const auto m = loadings.cols();
    auto mismatch = [](const std::string& what) { throw Error(ErrorKind::SpecMismatch, what); };

    if (loadings.rows() != n && m > 0) mismatch("loadings must have N rows");
    if (sigma.rows() != n || sigma.cols() != n) mismatch("Sigma must be N x N");
    if (autocov.theta.empty() || autocov.delta.empty()) mismatch("theta and delta need their lag-0 terms");
    for (const auto& th : autocov.theta)
        if (th.rows() != m || th.cols() != m) mismatch("theta_k must be m x m with m = loadings.cols()");
    if (m > 0 && !autocov.theta.front().isApprox(Eigen::MatrixXd::Identity(m, m), 1e-12))
        mismatch("theta_0 must be the identity (Var(f_t) = I)");
    if (std::abs(autocov.delta.front() - 1.0) > 1e-12) mismatch("delta_0 must be 1 (Delta_0 = Sigma)");

    const bool factor_memory = family == TimeFamily::FactorMA || family == TimeFamily::FactorSummable;
    const bool idio_memory = family == TimeFamily::IdioMA || family == TimeFamily::IdioSummable;
    if (!factor_memory && autocov.theta.size() > 1) mismatch("factor autocovariances given for a non-factor family");
    if (!idio_memory && autocov.delta.size() > 1)
        mismatch("idiosyncratic autocovariances given for a non-idiosyncratic family");
    if (factor_memory && m == 0) mismatch("factor memory requires loadings");

    MixedVariance out;
    switch (family) {
        case TimeFamily::None:
        case TimeFamily::IdioMA: out.gamma_kind = GammaKind::Gamma; break;
        case TimeFamily::IdioSummable: out.gamma_kind = GammaKind::Gamma1; break;
        case TimeFamily::FactorMA: out.gamma_kind = GammaKind::Gamma2; break;
        case TimeFamily::FactorSummable: out.gamma_kind = GammaKind::Gamma3; break;
    }

    // Per-period pieces of the sandwich: X~_t' Lambda and X~_t' Sigma.
    std::vector<Eigen::MatrixXd> xt(static_cast<std::size_t>(t_count));
    std::vector<Eigen::MatrixXd> xl(static_cast<std::size_t>(t_count));
    std::vector<Eigen::MatrixXd> xs(static_cast<std::size_t>(t_count));
    for (Eigen::Index t = 0; t < t_count; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        xt[ti] = design.period(t);
        if (m > 0) xl[ti] = xt[ti].transpose() * loadings;
        xs[ti] = xt[ti].transpose() * sigma;
    }

    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index t = 0; t < t_count; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        if (m > 0) meat.noalias() += xl[ti] * xl[ti].transpose();
        meat.noalias() += xs[ti] * xt[ti];
    }
    const auto max_lag = static_cast<Eigen::Index>(std::max(autocov.theta.size(), autocov.delta.size())) - 1;
    for (Eigen::Index j = 1; j <= std::min(max_lag, t_count - 1); ++j) {
        const auto ji = static_cast<std::size_t>(j);
        Eigen::MatrixXd lag_term = Eigen::MatrixXd::Zero(k, k);
        const bool has_theta = m > 0 && ji < autocov.theta.size();
        const double delta = ji < autocov.delta.size() ? autocov.delta[ji] : 0.0;
        for (Eigen::Index t = 0; t + j < t_count; ++t) {
            const auto a = static_cast<std::size_t>(t);
            const auto b = static_cast<std::size_t>(t + j);
            if (has_theta) lag_term.noalias() += xl[a] * autocov.theta[ji] * xl[b].transpose();
            if (delta != 0.0) lag_term.noalias() += delta * (xs[a] * xt[b]);
        }
        meat += lag_term + lag_term.transpose();
    }
    out.matrix = design.gram_inv * meat * design.gram_inv;
    out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
    return out;
}

double limit_scale(Eigen::Index n, Eigen::Index t, double h_n) {
    if (!(h_n > 0.0)) throw Error(ErrorKind::InvalidArgument, "h_N must be positive");
    return static_cast<double>(n) * static_cast<double>(t) / h_n;
}

}  // namespace xsdep
