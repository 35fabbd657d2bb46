#include "xsdep/dependence.hpp"

#include "xsdep/error.hpp"
#include "xsdep/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <mutex>

namespace xsdep {

struct CovMatrix::Cache {
    std::mutex mutex;
    std::optional<Eigen::VectorXd> values_only;
    std::optional<Eigen::VectorXd> full_values;
    std::optional<Eigen::MatrixXd> full_vectors;
};

namespace {

void clamp_near_zero(Eigen::VectorXd& evals) {
    if (evals.size() == 0) return;
    const double top = std::max(std::abs(evals(evals.size() - 1)), std::abs(evals(0)));
    const double tol = 1e-10 * top;
    for (Eigen::Index i = 0; i < evals.size(); ++i)
        if (std::abs(evals(i)) <= tol) evals(i) = 0.0;
}

}  // namespace

CovMatrix::CovMatrix(Eigen::MatrixXd values) : values_(std::move(values)), cache_(std::make_shared<Cache>()) {
    if (values_.rows() != values_.cols() || values_.rows() == 0)
        throw Error(ErrorKind::InvalidArgument, "covariance matrix must be square and non-empty");
    if (!values_.allFinite()) throw Error(ErrorKind::InvalidArgument, "covariance matrix has non-finite entries");
    const double scale = values_.cwiseAbs().maxCoeff();
    const double asym = (values_ - values_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * scale)
        throw Error(ErrorKind::InvalidArgument, "covariance matrix is not symmetric (max |a_ij - a_ji| = " +
                                                    std::to_string(asym) + ")");
    values_ = 0.5 * (values_ + values_.transpose()).eval();
}

const Eigen::VectorXd& CovMatrix::eigenvalues() const {
    std::lock_guard lock(cache_->mutex);
    if (cache_->full_values) return *cache_->full_values;
    if (!cache_->values_only) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(values_, Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success)
            throw Error(ErrorKind::EigenFailure, "symmetric eigensolver did not converge");
        Eigen::VectorXd evals = solver.eigenvalues();
        clamp_near_zero(evals);
        cache_->values_only = std::move(evals);
    }
    return *cache_->values_only;
}

const Eigen::MatrixXd& CovMatrix::eigenvectors() const {
    std::lock_guard lock(cache_->mutex);
    if (!cache_->full_vectors) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(values_, Eigen::ComputeEigenvectors);
        if (solver.info() != Eigen::Success)
            throw Error(ErrorKind::EigenFailure, "symmetric eigensolver did not converge");
        Eigen::VectorXd evals = solver.eigenvalues();
        clamp_near_zero(evals);
        cache_->full_vectors = solver.eigenvectors();
        cache_->full_values = std::move(evals);
    }
    return *cache_->full_vectors;
}

double CovMatrix::max_eigenvalue() const {
    const auto& evals = eigenvalues();
    return evals(evals.size() - 1);
}

void CovMatrix::require_psd(const std::string& what) const {
    const auto& evals = eigenvalues();
    const double top = evals(evals.size() - 1);
    if (evals(0) < -1e-8 * std::max(std::abs(top), std::numeric_limits<double>::min()))
        throw Error(ErrorKind::NotPSD,
                    what + " is not positive semidefinite (smallest eigenvalue " + std::to_string(evals(0)) + ")");
}

CovMatrix CovMatrix::leading(Eigen::Index m) const {
    if (m < 1 || m > n()) throw Error(ErrorKind::InvalidArgument, "leading block size out of range");
    return CovMatrix(values_.topLeftCorner(m, m));
}

double norm_max_eig(const CovMatrix& omega) { return omega.max_eigenvalue(); }

double norm_max_row_sum(const CovMatrix& omega) { return omega.values().cwiseAbs().rowwise().sum().maxCoeff(); }

double norm_euclid_scaled(const CovMatrix& omega) {
    return std::sqrt(omega.values().squaredNorm() / static_cast<double>(omega.n()));
}

double norm_euclid_unscaled(const CovMatrix& omega) { return omega.values().norm(); }

double norm_taxicab_scaled(const CovMatrix& omega) {
    return omega.values().cwiseAbs().sum() / static_cast<double>(omega.n());
}

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::Weak: return "weak";
        case Regime::Moderate: return "moderate";
        case Regime::Strong: return "strong";
    }
    return "unknown";
}

std::string to_string(NormKind kind) {
    switch (kind) {
        case NormKind::MaxEig: return "max_eig";
        case NormKind::MaxRowSum: return "max_row_sum";
        case NormKind::EuclidScaled: return "euclid_scaled";
        case NormKind::TaxicabScaled: return "taxicab_scaled";
    }
    return "unknown";
}

double NormsAtN::get(NormKind kind) const {
    switch (kind) {
        case NormKind::MaxEig: return max_eig;
        case NormKind::MaxRowSum: return max_row_sum;
        case NormKind::EuclidScaled: return euclid_scaled;
        case NormKind::TaxicabScaled: return taxicab_scaled;
    }
    return 0.0;
}

const ExponentFit& DependenceProfile::fit(NormKind kind) const {
    switch (kind) {
        case NormKind::MaxEig: return headline;
        case NormKind::MaxRowSum: return max_row_sum;
        case NormKind::EuclidScaled: return euclid_scaled;
        case NormKind::TaxicabScaled: return taxicab_scaled;
    }
    return headline;
}

NormsAtN compute_norms(const CovMatrix& omega) {
    return NormsAtN{omega.n(), norm_max_eig(omega), norm_max_row_sum(omega), norm_euclid_scaled(omega),
                    norm_taxicab_scaled(omega)};
}

Regime regime_for(double alpha, const ClassifyConfig& config) {
    if (alpha <= config.weak_max) return Regime::Weak;
    if (alpha >= config.strong_min) return Regime::Strong;
    return Regime::Moderate;
}

ExponentFit fit_exponent(const std::vector<double>& n, const std::vector<double>& values,
                         const ClassifyConfig& config) {
    if (n.size() != values.size() || n.size() < 2)
        throw Error(ErrorKind::InvalidArgument, "exponent fit needs at least two matched points");
    const auto m = static_cast<double>(n.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        if (!(values[i] > 0.0) || !(n[i] > 0.0))
            throw Error(ErrorKind::DegenerateFamily, "non-positive value in log-log fit");
        mx += std::log(n[i]);
        my += std::log(values[i]);
    }
    mx /= m;
    my /= m;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        const double dx = std::log(n[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(values[i]) - my);
    }
    if (sxx <= 0.0) throw Error(ErrorKind::InvalidArgument, "exponent fit needs distinct n values");
    ExponentFit fit;
    fit.alpha = sxy / sxx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        const double r = std::log(values[i]) - my - fit.alpha * (std::log(n[i]) - mx);
        ssr += r * r;
    }
    fit.std_error = n.size() > 2 ? std::sqrt(ssr / (m - 2.0) / sxx) : 0.0;
    fit.regime = regime_for(fit.alpha, config);
    return fit;
}

DependenceProfile classify(const CovFamily& family, const std::vector<Eigen::Index>& n_grid,
                           const ClassifyConfig& config) {
    if (n_grid.size() < 4) throw Error(ErrorKind::InvalidArgument, "classification grid needs at least 4 points");
    for (std::size_t i = 1; i < n_grid.size(); ++i)
        if (n_grid[i] <= n_grid[i - 1])
            throw Error(ErrorKind::InvalidArgument, "classification grid must be strictly increasing");
    if (n_grid.front() < 1 || n_grid.back() < 4 * n_grid.front())
        throw Error(ErrorKind::InvalidArgument, "classification grid must span a factor of at least 4");

    DependenceProfile profile;
    profile.norms_by_n.resize(n_grid.size());
    parallel_for(n_grid.size(), config.threads, [&](std::size_t g) {
        const CovMatrix omega = family(n_grid[g]);
        if (omega.n() != n_grid[g])
            throw Error(ErrorKind::InvalidArgument, "family returned a matrix of the wrong dimension");
        profile.norms_by_n[g] = compute_norms(omega);
    });

    std::vector<double> ns;
    for (auto n : n_grid) ns.push_back(static_cast<double>(n));
    auto fit_for = [&](NormKind kind) {
        std::vector<double> vals;
        for (const auto& row : profile.norms_by_n) {
            const double v = row.get(kind);
            if (!(v > 0.0))
                throw Error(ErrorKind::DegenerateFamily,
                            to_string(kind) + " norm is zero at N=" + std::to_string(row.n));
            vals.push_back(v);
        }
        return fit_exponent(ns, vals, config);
    };
    profile.headline = fit_for(NormKind::MaxEig);
    profile.regime = profile.headline.regime;
    profile.max_row_sum = fit_for(NormKind::MaxRowSum);
    profile.euclid_scaled = fit_for(NormKind::EuclidScaled);
    profile.taxicab_scaled = fit_for(NormKind::TaxicabScaled);
    return profile;
}

Eigen::Index choose_factor_count(const CovMatrix& omega, const FactorCountConfig& config) {
    const auto& evals = omega.eigenvalues();
    const auto n = evals.size();
    const auto j_max = std::min(config.m_max, n - 1);
    double best = 0.0;
    Eigen::Index best_j = 0;
    for (Eigen::Index j = 1; j <= j_max; ++j) {
        const double upper = evals(n - j);
        const double lower = evals(n - j - 1);
        double ratio = 1.0;
        if (lower > 0.0) {
            ratio = upper / lower;
        } else if (upper > 0.0) {
            ratio = std::numeric_limits<double>::infinity();
        }
        if (ratio >= best) {
            best = ratio;
            best_j = j;
        }
    }
    return best < config.min_ratio ? 0 : best_j;
}

FactorSplit factor_decompose(const CovMatrix& omega, std::optional<Eigen::Index> m,
                             std::optional<Eigen::VectorXd> c_coeffs, const FactorCountConfig& count_config) {
    const auto n = omega.n();
    const Eigen::Index count = m ? *m : choose_factor_count(omega, count_config);
    if (count < 0 || count >= n)
        throw Error(ErrorKind::InvalidArgument, "factor count must satisfy 0 <= m < N");

    const auto& vectors = omega.eigenvectors();
    const auto& evals = omega.eigenvalues();
    const double top = evals(n - 1);
    const double lambda1 = evals(0);
    if (lambda1 < -1e-8 * std::abs(top))
        throw Error(ErrorKind::RankDeficient,
                    "smallest eigenvalue " + std::to_string(lambda1) + " is negative beyond tolerance");
    const double floor_value = std::max(lambda1, 0.0);

    Eigen::VectorXd c = c_coeffs ? *c_coeffs : Eigen::VectorXd::Ones(count);
    if (c.size() != count) throw Error(ErrorKind::InvalidArgument, "c_coeffs length must equal the factor count");
    for (Eigen::Index i = 0; i < count; ++i)
        if (!(c(i) > 0.0 && c(i) <= 1.0)) throw Error(ErrorKind::InvalidArgument, "c_coeffs must lie in (0, 1]");

    FactorSplit split{count, Eigen::MatrixXd::Zero(n, count), CovMatrix(Eigen::MatrixXd::Zero(n, n)), c,
                      Eigen::VectorXd::Zero(count)};
    Eigen::VectorXd idio_spectrum = evals.cwiseMax(0.0);
    for (Eigen::Index i = 0; i < count; ++i) {
        const Eigen::Index idx = n - count + i;
        double delta = evals(idx) - c(i) * floor_value;
        if (delta < -1e-10 * std::max(std::abs(top), 1.0))
            throw Error(ErrorKind::NegativeDelta, "eigenvalue ordering corrupted (delta " + std::to_string(delta) + ")");
        delta = std::max(delta, 0.0);
        split.delta(i) = delta;
        split.loadings.col(i) = vectors.col(idx) * std::sqrt(delta);
        idio_spectrum(idx) = c(i) * floor_value;
    }
    split.idio_cov = CovMatrix(vectors * idio_spectrum.asDiagonal() * vectors.transpose());
    return split;
}

FourthMomentBound fourth_moment_lower_bound(const Eigen::MatrixXd& sample) {
    const auto n = sample.rows();
    const auto t_count = sample.cols();
    if (n > 40) throw Error(ErrorKind::DimensionGuard, "fourth-moment matrix limited to N <= 40 (got " +
                                                           std::to_string(n) + ")");
    if (n < 1 || t_count < 1) throw Error(ErrorKind::InvalidArgument, "empty error sample");
    const double inv_t = 1.0 / static_cast<double>(t_count);

    FourthMomentBound out;
    out.trace_vf = sample.colwise().squaredNorm().array().square().sum() * inv_t;
    const Eigen::MatrixXd omega = (sample * sample.transpose()) * inv_t;
    out.sum_omega_sq = omega.squaredNorm();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(omega, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw Error(ErrorKind::EigenFailure, "eigensolver failed on Omega_hat");
    const double lam = solver.eigenvalues()(n - 1);
    out.lambda_max_sq = lam * lam;

    // Power iteration on V_F acting on N x N matrices:
    // V_F vec(V) = mean_t (e_t' V e_t) vec(e_t e_t').
    // Started at vec(Omega_hat), whose Rayleigh quotient is already >= sum omega^2.
    Eigen::MatrixXd v = omega;
    double vnorm = v.norm();
    if (vnorm == 0.0) return out;
    v /= vnorm;
    double best = 0.0;
    for (int iter = 0; iter < 1000; ++iter) {
        const Eigen::RowVectorXd s = (sample.array() * (v * sample).array()).colwise().sum();
        const Eigen::MatrixXd w = sample * s.asDiagonal() * sample.transpose() * inv_t;
        const double q = (v.array() * w.array()).sum();
        const double prev = best;
        best = std::max(best, q);
        const double wn = w.norm();
        if (wn == 0.0) break;
        v = w / wn;
        if (iter > 0 && std::abs(best - prev) <= 1e-14 * best) break;
    }
    // V_F is PSD, so its largest eigenvalue cannot exceed its trace.
    out.lambda_max_vf = std::min(best, out.trace_vf);
    return out;
}

std::vector<ConjectureRow> explore_conjecture(const CovFamily& family, const std::vector<Eigen::Index>& n_grid) {
    std::vector<ConjectureRow> rows;
    for (auto n : n_grid) {
        const CovMatrix omega = family(n);
        rows.push_back({n, norm_max_eig(omega), norm_taxicab_scaled(omega),
                        norm_euclid_unscaled(omega) / std::sqrt(static_cast<double>(n))});
    }
    return rows;
}

}  // namespace xsdep
