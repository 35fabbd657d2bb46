#include "doctest.h"

#include "support.hpp"
#include "xsdep/error.hpp"
#include "xsdep/robust_cov.hpp"

using namespace xsdep;

namespace {

/// FE-transformed NT x k regressors through the dense annihilator.
Eigen::MatrixXd dense_x_tilde(const PanelData& p) {
    const Eigen::MatrixXd m = testing::annihilator(testing::unit_dummies_by_time(p.n_units(), p.n_periods()));
    return m * testing::stacked_x_by_time(p);
}

/// (X'X)^{-1} X' B X (X'X)^{-1}.
Eigen::MatrixXd dense_sandwich(const Eigen::MatrixXd& x, const Eigen::MatrixXd& b) {
    const Eigen::MatrixXd gi = (x.transpose() * x).inverse();
    return gi * x.transpose() * b * x * gi;
}

/// Dense meat with (s, t) block K(|s-t|) e_s e_t' for |s-t| <= trunc.
Eigen::MatrixXd dense_kernel_meat(const Eigen::MatrixXd& e, KernelKind kernel, Eigen::Index trunc) {
    const auto n = e.rows(), t = e.cols();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n * t, n * t);
    for (Eigen::Index s = 0; s < t; ++s)
        for (Eigen::Index u = 0; u < t; ++u) {
            const Eigen::Index lag = std::abs(s - u);
            if (lag > trunc) continue;
            b.block(s * n, u * n, n, n) = kernel_weight(kernel, lag, trunc) * e.col(s) * e.col(u).transpose();
        }
    return b;
}

Eigen::MatrixXd block_diag(const Eigen::MatrixXd& omega, Eigen::Index t) {
    const auto n = omega.rows();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n * t, n * t);
    for (Eigen::Index s = 0; s < t; ++s) b.block(s * n, s * n, n, n) = omega;
    return b;
}

}  // namespace

TEST_CASE("cross-section covariance matches the dense sandwich") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const PanelData p = testing::random_panel(6, 9, 2, seed);
        const FitResult f = fit(p, EstimatorKind::FixedEffect);
        const RobustCov v = cov_cross_section(f, weight_blocks(f));
        const Eigen::MatrixXd oracle =
            dense_sandwich(dense_x_tilde(p), dense_kernel_meat(f.residuals, KernelKind::Bartlett, 0));
        CHECK((v.matrix - oracle).norm() <= 1e-12 * std::max(1.0, oracle.norm()) * 100);
        CHECK(v.method == CovMethod::CrossSection);
        CHECK_FALSE(v.psd_repaired);
    }
}

TEST_CASE("kernel covariance matches the dense formula") {
    SUBCASE("N=2, T=4, truncation 1") {
        const PanelData p = testing::random_panel(2, 4, 1, 3);
        const FitResult f = fit(p, EstimatorKind::FixedEffect);
        for (KernelKind kk : {KernelKind::Bartlett, KernelKind::Uniform, KernelKind::Parzen}) {
            const RobustCov v = cov_kernel(f, weight_blocks(f), kk, Truncation{1, {}});
            const Eigen::MatrixXd oracle = dense_sandwich(dense_x_tilde(p), dense_kernel_meat(f.residuals, kk, 1));
            if (!v.psd_repaired) CHECK((v.matrix - oracle).norm() <= 1e-10 * std::max(1.0, oracle.norm()));
            CHECK(v.trunc_lag.value() == 1);
        }
    }
    SUBCASE("larger panel, Bartlett") {
        const PanelData p = testing::random_panel(5, 12, 2, 8);
        const FitResult f = fit(p, EstimatorKind::FixedEffect);
        const RobustCov v = cov_kernel(f, weight_blocks(f), KernelKind::Bartlett, Truncation{3, {}});
        const Eigen::MatrixXd oracle =
            dense_sandwich(dense_x_tilde(p), dense_kernel_meat(f.residuals, KernelKind::Bartlett, 3));
        CHECK((v.matrix - oracle).norm() <= 1e-10 * oracle.norm());
        CHECK_FALSE(v.psd_repaired);
        CHECK(v.declared == "explicit");
    }
}

TEST_CASE("kernel with truncation 0 equals the cross-section estimator") {
    const PanelData p = testing::random_panel(7, 15, 3, 21);
    const FitResult f = fit(p, EstimatorKind::Pooled);
    const WeightBlocks w = weight_blocks(f);
    const RobustCov cs = cov_cross_section(f, w);
    const RobustCov k0 = cov_kernel(f, w, KernelKind::Parzen, Truncation{0, {}});
    CHECK((cs.matrix - k0.matrix).norm() <= 1e-14 * cs.matrix.norm());
    const RobustCov declared = cov_kernel(f, w, KernelKind::Bartlett, Truncation{std::nullopt, DeclaredDependence::parse("pure-cs")});
    CHECK((cs.matrix - declared.matrix).norm() <= 1e-14 * cs.matrix.norm());
    CHECK(declared.declared == "pure-cs");
}

TEST_CASE("Bartlett estimate is PSD without repair") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const PanelData p = testing::random_panel(4, 20, 3, seed);
        const FitResult f = fit(p, EstimatorKind::FixedEffect);
        const RobustCov v = cov_kernel(f, weight_blocks(f), KernelKind::Bartlett, Truncation{6, {}});
        CHECK_FALSE(v.psd_repaired);
        CHECK(CovMatrix(v.matrix).eigenvalues()(0) >= -1e-12 * v.matrix.norm());
    }
}

TEST_CASE("uniform kernel repairs indefinite estimates") {
    int repaired = 0;
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        const PanelData p = testing::random_panel(3, 8, 2, seed);
        const FitResult f = fit(p, EstimatorKind::FixedEffect);
        const RobustCov v = cov_kernel(f, weight_blocks(f), KernelKind::Uniform, Truncation{5, {}});
        CHECK(CovMatrix(v.matrix).eigenvalues()(0) >= -1e-12 * v.matrix.norm());
        if (v.psd_repaired) {
            ++repaired;
            CHECK(v.clipped_mass > 0.0);
        }
    }
    CHECK(repaired > 0);
}

TEST_CASE("zero residuals give a zero, singular covariance") {
    const PanelData p = testing::random_panel(4, 6, 2, 1);
    const Design d = prepare_design(p, EstimatorKind::FixedEffect);
    const WeightBlocks w = weight_blocks(d);
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 6);
    const RobustCov v = cov_cross_section(w, zero);
    CHECK(v.matrix.isZero());
    CHECK(v.singular);
    try {
        cov_cross_section(w, zero, CovOptions{true});
        FAIL("expected SingularCov");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularCov);
    }
}

TEST_CASE("kernel weights and automatic truncation") {
    CHECK(kernel_weight(KernelKind::Bartlett, 0, 4) == 1.0);
    CHECK(kernel_weight(KernelKind::Bartlett, 2, 4) == doctest::Approx(0.6));
    CHECK(kernel_weight(KernelKind::Bartlett, 5, 4) == 0.0);
    CHECK(kernel_weight(KernelKind::Uniform, 4, 4) == 1.0);
    CHECK(kernel_weight(KernelKind::Parzen, 1, 3) == doctest::Approx(1.0 - 6 * 0.0625 + 6 * 0.015625));
    CHECK(kernel_weight(KernelKind::Parzen, 3, 3) == doctest::Approx(2.0 * std::pow(0.25, 3)));
    CHECK(auto_truncation(DeclaredDependence::parse("pure-cs"), 500) == 0);
    CHECK(auto_truncation(DeclaredDependence::parse("ma:3"), 500) == 3);
    CHECK(auto_truncation(DeclaredDependence::parse("summable"), 100) == 4);
    CHECK(auto_truncation(DeclaredDependence{}, 400) == static_cast<Eigen::Index>(std::floor(4.0 * std::pow(4.0, 2.0 / 9.0))));
    CHECK_THROWS_AS(DeclaredDependence::parse("ma:x"), Error);
    CHECK_THROWS_AS(parse_kernel("gaussian"), Error);
    CHECK(parse_cov_method("kernel") == CovMethod::Kernel);
}

TEST_CASE("truncation at or beyond T is rejected") {
    const PanelData p = testing::random_panel(3, 5, 1, 2);
    const FitResult f = fit(p, EstimatorKind::FixedEffect);
    try {
        cov_kernel(f, weight_blocks(f), KernelKind::Bartlett, Truncation{5, {}});
        FAIL("expected TruncTooLarge");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TruncTooLarge);
    }
}

TEST_CASE("plug-in estimator and Omega-hat") {
    const PanelData p = testing::random_panel(4, 30, 2, 6);
    const FitResult f = fit(p, EstimatorKind::FixedEffect);
    const WeightBlocks w = weight_blocks(f);
    const OmegaHat oh = omega_hat(f.residuals);
    CHECK_FALSE(oh.rank_deficient);
    CHECK(oh.omega.values().isApprox(f.residuals * f.residuals.transpose() / 30.0));
    const RobustCov v = cov_plugin(f, w);
    const Eigen::MatrixXd oracle = dense_sandwich(dense_x_tilde(p), block_diag(oh.omega.values(), 30));
    CHECK((v.matrix - oracle).norm() <= 1e-10 * oracle.norm());
    CHECK(omega_hat(Eigen::MatrixXd::Ones(5, 3)).rank_deficient);
}

TEST_CASE("score columns reproduce beta_hat - beta") {
    const PanelData p = testing::random_panel(5, 7, 2, 44);
    const FitResult f = fit(p, EstimatorKind::FixedEffect);
    const Eigen::MatrixXd g = scores(weight_blocks(f), f.residuals);
    CHECK(g.rows() == 2);
    CHECK(g.cols() == 7);
    // Residuals are orthogonal to the transformed regressors.
    CHECK(g.rowwise().sum().norm() < 1e-10);
}

TEST_CASE("exact cross-section variance matches the dense sandwich") {
    Rng rng(12);
    const PanelData p = testing::random_panel(6, 5, 2, 13);
    const CovMatrix omega(testing::random_psd(6, rng));
    const Eigen::MatrixXd v = true_variance_cs(p, EstimatorKind::FixedEffect, omega);
    const Eigen::MatrixXd oracle = dense_sandwich(dense_x_tilde(p), block_diag(omega.values(), 5));
    CHECK((v - oracle).norm() <= 1e-10 * oracle.norm());
}

TEST_CASE("exact mixed variance matches a dense block-Toeplitz covariance") {
    Rng rng(31);
    const Eigen::Index n = 5, t = 6, m = 1;
    const PanelData p = testing::random_panel(n, t, 2, 77);
    const Design d = prepare_design(p, EstimatorKind::FixedEffect);
    Eigen::MatrixXd lambda(n, m);
    for (Eigen::Index i = 0; i < n; ++i) lambda(i, 0) = rng.normal();
    const Eigen::MatrixXd sigma = testing::random_psd(n, rng);

    auto dense_gamma = [&](const Autocovariances& ac) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n * t, n * t);
        for (Eigen::Index s = 0; s < t; ++s)
            for (Eigen::Index u = s; u < t; ++u) {
                const auto j = static_cast<std::size_t>(u - s);
                Eigen::MatrixXd blk = Eigen::MatrixXd::Zero(n, n);
                if (j < ac.theta.size()) blk += lambda * ac.theta[j] * lambda.transpose();
                if (j < ac.delta.size()) blk += ac.delta[j] * sigma;
                g.block(s * n, u * n, n, n) = blk;
                g.block(u * n, s * n, n, n) = blk.transpose();
            }
        return g;
    };

    SUBCASE("factor MA(1) with theta_1 = 0.5 I") {
        Autocovariances ac;
        ac.theta = {Eigen::MatrixXd::Identity(1, 1), 0.5 * Eigen::MatrixXd::Identity(1, 1)};
        ac.delta = {1.0};
        const MixedVariance mv = true_variance_mixed(d, TimeFamily::FactorMA, ac, lambda, sigma);
        const Eigen::MatrixXd oracle = dense_sandwich(dense_x_tilde(p), dense_gamma(ac));
        CHECK((mv.matrix - oracle).norm() <= 1e-10 * oracle.norm());
        CHECK(mv.gamma_kind == GammaKind::Gamma2);
    }
    SUBCASE("idiosyncratic AR(1)") {
        const auto spec = TimeDependenceSpec::idio_summable(0.6);
        const Autocovariances ac = autocovariances(spec, m, t);
        const MixedVariance mv = true_variance_mixed(d, TimeFamily::IdioSummable, ac, lambda, sigma);
        const Eigen::MatrixXd oracle = dense_sandwich(dense_x_tilde(p), dense_gamma(ac));
        CHECK((mv.matrix - oracle).norm() <= 1e-10 * oracle.norm());
        CHECK(mv.gamma_kind == GammaKind::Gamma1);
    }
    SUBCASE("no memory reduces to the cross-section variance") {
        const Autocovariances ac = autocovariances(TimeDependenceSpec::none(), m, t);
        const MixedVariance mv = true_variance_mixed(d, TimeFamily::None, ac, lambda, sigma);
        const Eigen::MatrixXd omega = lambda * lambda.transpose() + sigma;
        const Eigen::MatrixXd cs = true_variance_cs(d, CovMatrix(0.5 * (omega + omega.transpose())));
        CHECK((mv.matrix - cs).norm() <= 1e-10 * cs.norm());
    }
    SUBCASE("inconsistent inputs are rejected") {
        Autocovariances ac;
        ac.theta = {Eigen::MatrixXd::Identity(1, 1), 0.5 * Eigen::MatrixXd::Identity(1, 1)};
        ac.delta = {1.0};
        auto kind_of = [&](auto&& call) {
            try {
                call();
            } catch (const Error& e) {
                return e.kind();
            }
            return ErrorKind::ReplicationFailure;
        };
        CHECK(kind_of([&] { true_variance_mixed(d, TimeFamily::IdioMA, ac, lambda, sigma); }) == ErrorKind::SpecMismatch);
        CHECK(kind_of([&] { true_variance_mixed(d, TimeFamily::FactorMA, ac, Eigen::MatrixXd(n, 0), sigma); }) ==
              ErrorKind::SpecMismatch);
        CHECK(kind_of([&] { true_variance_mixed(d, TimeFamily::FactorMA, ac, lambda, Eigen::MatrixXd::Identity(3, 3)); }) ==
              ErrorKind::SpecMismatch);
    }
}

TEST_CASE("time dependence specifications") {
    const auto ma = TimeDependenceSpec::idio_ma({1.0, 0.5});
    const auto rho = ma.autocorrelation(3);
    REQUIRE(rho.size() >= 2);
    CHECK(rho[1] == doctest::Approx(0.5 / 1.25));
    for (std::size_t j = 2; j < rho.size(); ++j) CHECK(rho[j] == 0.0);
    const auto ar = TimeDependenceSpec::factor_summable(0.5);
    CHECK(ar.autocorrelation(2)[2] == doctest::Approx(0.25));
    CHECK_THROWS_AS(TimeDependenceSpec::idio_summable(1.0).validate(), Error);
    CHECK_THROWS_AS(TimeDependenceSpec::idio_ma({0.0, 0.0}).validate(), Error);
    CHECK(limit_scale(10, 20, 4.0) == doctest::Approx(50.0));
}
