#include "doctest.h"

#include "support.hpp"
#include "xsdep/error.hpp"
#include "xsdep/inference.hpp"

#include <cmath>
#include <functional>

using namespace xsdep;

namespace {

/// Composite Simpson integral of the chi2(dof) density over [0, x].
double chi2_cdf_simpson(double x, int dof) {
    const int steps = 20000;
    const double h = x / steps;
    auto pdf = [dof](double u) {
        if (u <= 0.0) return dof == 2 ? 0.5 : 0.0;
        const double k = 0.5 * dof;
        return std::exp((k - 1.0) * std::log(u) - 0.5 * u - k * std::log(2.0) - std::lgamma(k));
    };
    double s = pdf(0.0) + pdf(x);
    for (int i = 1; i < steps; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(i * h);
    return s * h / 3.0;
}

ErrorKind kind_of(const std::function<void()>& call) {
    try {
        call();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::ReplicationFailure;
}

}  // namespace

TEST_CASE("Wald statistic with identity covariance is the squared norm") {
    const Eigen::Vector3d b(0.5, -1.0, 2.0);
    const TestResult r = wald(b, Eigen::MatrixXd::Identity(3, 3), LinearRestriction::all_equal_to(Eigen::Vector3d::Zero()));
    CHECK(r.statistic == doctest::Approx(b.squaredNorm()));
    CHECK(r.dof == 3);
    CHECK(r.p_value == doctest::Approx(chi2_sf(b.squaredNorm(), 3)));
}

TEST_CASE("single restriction Wald equals the squared t statistic") {
    Rng rng(3);
    const Eigen::MatrixXd v = testing::random_psd(4, rng);
    const Eigen::Vector4d b(1.0, 2.0, -0.5, 0.3);
    const TestResult r = wald(b, v, LinearRestriction::single(4, 2, 0.25));
    const double t = (b(2) - 0.25) / std::sqrt(v(2, 2));
    CHECK(r.statistic == doctest::Approx(t * t).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(normal_two_sided_p(t)).epsilon(1e-10));
}

TEST_CASE("Wald statistic is invariant to invertible recombination of restrictions") {
    Rng rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::MatrixXd v = testing::random_psd(5, rng);
        Eigen::VectorXd b(5);
        for (int i = 0; i < 5; ++i) b(i) = rng.normal();
        Eigen::MatrixXd r(3, 5), a(3, 3);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 5; ++j) r(i, j) = rng.normal();
            for (int j = 0; j < 3; ++j) a(i, j) = rng.normal() + (i == j ? 3.0 : 0.0);
        }
        const Eigen::Vector3d rhs(rng.normal(), rng.normal(), rng.normal());
        const double w1 = wald(b, v, LinearRestriction(r, rhs)).statistic;
        const double w2 = wald(b, v, LinearRestriction(a * r, a * rhs)).statistic;
        CHECK(w1 == doctest::Approx(w2).epsilon(1e-8));
    }
}

TEST_CASE("chi-square tail matches closed forms and quadrature") {
    for (double x : {0.1, 1.0, 3.84, 10.0}) {
        CHECK(chi2_sf(x, 2) == doctest::Approx(std::exp(-x / 2)).epsilon(1e-12));
        CHECK(chi2_sf(x, 1) == doctest::Approx(std::erfc(std::sqrt(x / 2))).epsilon(1e-12));
        CHECK(chi2_cdf(x, 3) ==
              doctest::Approx(std::erf(std::sqrt(x / 2)) - std::sqrt(2 * x / M_PI) * std::exp(-x / 2)).epsilon(1e-12));
        for (int dof : {4, 5, 8}) CHECK(chi2_cdf(x, dof) == doctest::Approx(chi2_cdf_simpson(x, dof)).epsilon(1e-8));
    }
    CHECK(chi2_critical(0.05, 1) == doctest::Approx(3.841458820694124).epsilon(1e-10));
    CHECK(chi2_critical(0.05, 2) == doctest::Approx(-2.0 * std::log(0.05)).epsilon(1e-10));
    double prev = 1.0;
    for (double x = 0.0; x < 30.0; x += 0.5) {
        const double p = chi2_sf(x, 4);
        CHECK(p <= prev);
        prev = p;
    }
    CHECK(kind_of([] { chi2_sf(-1.0, 2); }) == ErrorKind::DomainError);
    CHECK(kind_of([] { chi2_cdf(1.0, 0); }) == ErrorKind::DomainError);
}

TEST_CASE("normal helpers") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
    CHECK(normal_critical(0.025) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-10));
    CHECK(normal_cdf(-1.0) + normal_cdf(1.0) == doctest::Approx(1.0));
}

TEST_CASE("restriction parsing") {
    const LinearRestriction a = parse_restriction("b1=0,b2=b3", 3);
    Eigen::MatrixXd ra(2, 3);
    ra << 1, 0, 0, 0, 1, -1;
    CHECK(a.R.isApprox(ra));
    CHECK(a.r.isZero());
    const LinearRestriction b = parse_restriction("2*b1 - 1/2 b2 = 3/4", 2);
    CHECK(b.R(0, 0) == 2.0);
    CHECK(b.R(0, 1) == -0.5);
    CHECK(b.r(0) == 0.75);
    const LinearRestriction c = parse_restriction("b1 + 1 = b2", 2);
    CHECK(c.R(0, 0) == 1.0);
    CHECK(c.R(0, 1) == -1.0);
    CHECK(c.r(0) == -1.0);
    CHECK(kind_of([] { parse_restriction("b4=0", 3); }) == ErrorKind::ParseError);
    CHECK(kind_of([] { parse_restriction("b1=0,b1=1", 3); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([] { parse_restriction("b1=", 3); }) != ErrorKind::ReplicationFailure);
    CHECK(kind_of([] { parse_restriction("b1*b2=0", 3); }) != ErrorKind::ReplicationFailure);
}

TEST_CASE("singular restricted covariance is reported") {
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(2, 2);
    v(0, 0) = 1.0;
    CHECK(kind_of([&] { wald(Eigen::Vector2d(1, 1), v, LinearRestriction::single(2, 1, 0.0)); }) ==
          ErrorKind::SingularRestrictedCov);
    CHECK(kind_of([&] { wald(Eigen::Vector3d(1, 1, 1), v, LinearRestriction::single(2, 1, 0.0)); }) ==
          ErrorKind::InvalidArgument);
    RobustCov rc;
    rc.matrix = Eigen::MatrixXd::Identity(2, 2);
    rc.method = CovMethod::Kernel;
    rc.kernel = KernelKind::Bartlett;
    rc.trunc_lag = 4;
    CHECK(wald(Eigen::Vector2d(1, 1), rc, LinearRestriction::single(2, 0, 0.0)).method == "kernel/bartlett/C=4");
}

TEST_CASE("coefficient table") {
    Eigen::Matrix2d v;
    v << 4.0, 1.0, 1.0, 9.0;
    const CoefficientTable t = coefficient_table(Eigen::Vector2d(2.0, -6.0), v);
    CHECK(t.se(0) == doctest::Approx(2.0));
    CHECK(t.t_stats(1) == doctest::Approx(-2.0));
    CHECK(t.p_values(0) == doctest::Approx(normal_two_sided_p(1.0)));
}
