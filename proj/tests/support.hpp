#pragma once

#include "xsdep/panel_data.hpp"
#include "xsdep/random.hpp"

#include <Eigen/Dense>

#include <vector>

namespace xsdep::testing {

/// Random panel with unit effects and i.i.d. normal errors.
inline PanelData random_panel(Eigen::Index n, Eigen::Index t, Eigen::Index k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Eigen::MatrixXd> x;
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::MatrixXd xj(n, t);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index s = 0; s < t; ++s) xj(i, s) = rng.normal() + 0.3 * static_cast<double>(i);
        x.push_back(xj);
    }
    Eigen::MatrixXd y(n, t);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = rng.uniform(-2.0, 2.0);
        for (Eigen::Index s = 0; s < t; ++s) {
            double v = mu + rng.normal();
            for (Eigen::Index j = 0; j < k; ++j) v += (0.5 + static_cast<double>(j)) * x[static_cast<std::size_t>(j)](i, s);
            y(i, s) = v;
        }
    }
    return PanelData(y, x);
}

/// Random symmetric PSD matrix with a random correlation structure.
inline Eigen::MatrixXd random_psd(Eigen::Index n, Rng& rng) {
    const auto r = 1 + static_cast<Eigen::Index>(rng.uniform(0.0, 1.0) * static_cast<double>(2 * n));
    Eigen::MatrixXd a(n, r);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < r; ++j) a(i, j) = rng.normal() * (1.0 + 3.0 * rng.uniform(0.0, 1.0));
    Eigen::MatrixXd m = a * a.transpose() / static_cast<double>(r);
    m.diagonal().array() += rng.uniform(0.0, 0.5);
    return 0.5 * (m + m.transpose());
}

/// Unit dummies D (NT x N) for the by-unit stacking (row i*T + t).
inline Eigen::MatrixXd unit_dummies_by_unit(Eigen::Index n, Eigen::Index t) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n * t, n);
    for (Eigen::Index i = 0; i < n; ++i) d.block(i * t, i, t, 1).setOnes();
    return d;
}

/// Unit dummies for the by-time stacking (row t*N + i).
inline Eigen::MatrixXd unit_dummies_by_time(Eigen::Index n, Eigen::Index t) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n * t, n);
    for (Eigen::Index s = 0; s < t; ++s) d.block(s * n, 0, n, n).setIdentity();
    return d;
}

/// I - D (D'D)^{-1} D'.
inline Eigen::MatrixXd annihilator(const Eigen::MatrixXd& d) {
    const Eigen::MatrixXd dtd = d.transpose() * d;
    return Eigen::MatrixXd::Identity(d.rows(), d.rows()) - d * dtd.ldlt().solve(d.transpose());
}

/// Stacked by-time vector (row t*N + i) of an N x T matrix.
inline Eigen::VectorXd by_time(const Eigen::MatrixXd& m) {
    return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

/// NT x k by-time stacked regressors.
inline Eigen::MatrixXd stacked_x_by_time(const PanelData& p) {
    Eigen::MatrixXd out(p.n_units() * p.n_periods(), p.n_regressors());
    for (Eigen::Index j = 0; j < p.n_regressors(); ++j) out.col(j) = by_time(p.x(j));
    return out;
}

}  // namespace xsdep::testing
