#include "xsdep/inference.hpp"

#include "xsdep/error.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace xsdep {

LinearRestriction::LinearRestriction(Eigen::MatrixXd R_in, Eigen::VectorXd r_in) : R(std::move(R_in)), r(std::move(r_in)) {
    if (R.rows() == 0 || R.cols() == 0) throw Error(ErrorKind::InvalidArgument, "restriction matrix is empty");
    if (R.rows() != r.size()) throw Error(ErrorKind::InvalidArgument, "R and r disagree on the number of restrictions");
    if (R.rows() > R.cols())
        throw Error(ErrorKind::InvalidArgument, "more restrictions than coefficients (q > k)");
    if (!R.allFinite() || !r.allFinite()) throw Error(ErrorKind::InvalidArgument, "restriction has non-finite entries");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
    const auto& s = svd.singularValues();
    const double top = s.size() > 0 ? s(0) : 0.0;
    if (!(top > 0.0) || s(s.size() - 1) <= 1e-10 * top)
        throw Error(ErrorKind::InvalidArgument, "restriction matrix R is not of full row rank");
}

LinearRestriction LinearRestriction::all_equal_to(const Eigen::VectorXd& value) {
    return {Eigen::MatrixXd::Identity(value.size(), value.size()), value};
}

LinearRestriction LinearRestriction::single(Eigen::Index k, Eigen::Index j, double value) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(1, k);
    R(0, j) = 1.0;
    return {R, Eigen::VectorXd::Constant(1, value)};
}

namespace {

class RestrictionParser {
public:
    RestrictionParser(std::string_view text, Eigen::Index k) : text_(text), k_(k) {}

    /// Accumulates sign * (side) into coef, and its constant moved to the right into `constant`.
    void side(Eigen::RowVectorXd& coef, double& constant, double sign) {
        bool first = true;
        while (true) {
            skip();
            double s = 1.0;
            if (peek() == '+' || peek() == '-') {
                s = get() == '-' ? -1.0 : 1.0;
                skip();
            } else if (!first) {
                return;
            }
            first = false;
            double c = 1.0;
            bool have_number = false;
            if (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.') {
                c = ratio();
                have_number = true;
                skip();
                if (peek() == '*') {
                    get();
                    skip();
                    if (peek() != 'b') fail("expected b<index> after '*'");
                }
            }
            if (peek() == 'b') {
                get();
                const auto idx = index();
                coef(idx) += sign * s * c;
            } else if (have_number) {
                constant -= sign * s * c;
            } else {
                fail("expected a number or b<index>");
            }
            skip();
            if (peek() != '+' && peek() != '-') return;
        }
    }

    LinearRestriction parse() {
        std::vector<Eigen::RowVectorXd> rows;
        std::vector<double> rhs;
        while (true) {
            Eigen::RowVectorXd coef = Eigen::RowVectorXd::Zero(k_);
            double constant = 0.0;
            side(coef, constant, 1.0);
            skip();
            if (get() != '=') fail("expected '='");
            side(coef, constant, -1.0);
            skip();
            rows.push_back(coef);
            rhs.push_back(constant);
            if (pos_ == text_.size()) break;
            if (get() != ',') fail("expected ',' between equations");
        }
        Eigen::MatrixXd R(static_cast<Eigen::Index>(rows.size()), k_);
        Eigen::VectorXd r(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].isZero(0.0)) fail("equation " + std::to_string(i + 1) + " involves no coefficient");
            R.row(static_cast<Eigen::Index>(i)) = rows[i];
            r(static_cast<Eigen::Index>(i)) = rhs[i];
        }
        return {R, r};
    }

private:
    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
    char get() { return pos_ < text_.size() ? text_[pos_++] : '\0'; }
    void skip() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorKind::ParseError,
                    "restriction '" + std::string(text_) + "' at position " + std::to_string(pos_) + ": " + what);
    }

    double number() {
        const char* begin = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(begin, end, v, std::chars_format::fixed);
        if (ec != std::errc() || ptr == begin) fail("bad number");
        pos_ += static_cast<std::size_t>(ptr - begin);
        return v;
    }

    double ratio() {
        double v = number();
        skip();
        if (peek() == '/') {
            get();
            skip();
            const double d = number();
            if (d == 0.0) fail("zero denominator");
            v /= d;
        }
        return v;
    }

    Eigen::Index index() {
        const char* begin = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        long v = 0;
        auto [ptr, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc() || ptr == begin) fail("expected an index after 'b'");
        pos_ += static_cast<std::size_t>(ptr - begin);
        if (v < 1 || v > k_) fail("coefficient b" + std::to_string(v) + " out of range 1.." + std::to_string(k_));
        return static_cast<Eigen::Index>(v - 1);
    }

    std::string_view text_;
    Eigen::Index k_;
    std::size_t pos_ = 0;
};

}  // namespace

LinearRestriction parse_restriction(const std::string& text, Eigen::Index k) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "restriction needs k >= 1");
    if (text.find_first_not_of(" \t") == std::string::npos)
        throw Error(ErrorKind::ParseError, "empty restriction");
    return RestrictionParser(text, k).parse();
}

TestResult wald(const Eigen::VectorXd& beta_hat, const Eigen::MatrixXd& cov, const LinearRestriction& restr) {
    if (restr.n_coefficients() != beta_hat.size() || cov.rows() != beta_hat.size() || cov.cols() != beta_hat.size())
        throw Error(ErrorKind::InvalidArgument, "Wald inputs disagree on k");
    const Eigen::VectorXd d = restr.R * beta_hat - restr.r;
    Eigen::MatrixXd middle = restr.R * cov * restr.R.transpose();
    middle = 0.5 * (middle + middle.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(middle);
    if (solver.info() != Eigen::Success) throw Error(ErrorKind::EigenFailure, "eigensolver failed on R V R'");
    const auto& ev = solver.eigenvalues();
    const double top = ev(ev.size() - 1);
    if (!(top > 0.0) || ev(0) <= 1e-12 * top)
        throw Error(ErrorKind::SingularRestrictedCov, "R V R' is numerically singular");
    const Eigen::VectorXd z = solver.eigenvectors().transpose() * d;
    double stat = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) stat += z(i) * z(i) / ev(i);
    TestResult out;
    out.statistic = std::max(stat, 0.0);
    out.dof = restr.n_restrictions();
    out.p_value = chi2_sf(out.statistic, out.dof);
    return out;
}

TestResult wald(const Eigen::VectorXd& beta_hat, const RobustCov& cov, const LinearRestriction& restr) {
    TestResult out = wald(beta_hat, cov.matrix, restr);
    std::ostringstream m;
    m << to_string(cov.method);
    if (cov.kernel) m << "/" << to_string(*cov.kernel);
    if (cov.trunc_lag && cov.method == CovMethod::Kernel) m << "/C=" << *cov.trunc_lag;
    out.method = m.str();
    return out;
}

double chi2_sf(double x, Eigen::Index dof) {
    if (dof < 1) throw Error(ErrorKind::DomainError, "chi2 degrees of freedom must be >= 1");
    if (!(x >= 0.0)) throw Error(ErrorKind::DomainError, "chi2 argument must be >= 0");
    if (std::isinf(x)) return 0.0;
    if (x == 0.0) return 1.0;
    return boost::math::gamma_q(0.5 * static_cast<double>(dof), 0.5 * x);
}

double chi2_cdf(double x, Eigen::Index dof) {
    if (dof < 1) throw Error(ErrorKind::DomainError, "chi2 degrees of freedom must be >= 1");
    if (!(x >= 0.0)) throw Error(ErrorKind::DomainError, "chi2 argument must be >= 0");
    if (std::isinf(x)) return 1.0;
    if (x == 0.0) return 0.0;
    return boost::math::gamma_p(0.5 * static_cast<double>(dof), 0.5 * x);
}

double chi2_critical(double alpha, Eigen::Index dof) {
    if (dof < 1 || !(alpha > 0.0 && alpha < 1.0))
        throw Error(ErrorKind::DomainError, "chi2_critical needs dof >= 1 and alpha in (0, 1)");
    return 2.0 * boost::math::gamma_q_inv(0.5 * static_cast<double>(dof), alpha);
}

double normal_cdf(double z) { return 0.5 * boost::math::erfc(-z / std::sqrt(2.0)); }

double normal_two_sided_p(double z) {
    if (std::isnan(z)) return std::numeric_limits<double>::quiet_NaN();
    return boost::math::erfc(std::abs(z) / std::sqrt(2.0));
}

double normal_critical(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::DomainError, "normal_critical needs alpha in (0, 1)");
    return std::sqrt(2.0) * boost::math::erfc_inv(2.0 * alpha);
}

CoefficientTable coefficient_table(const Eigen::VectorXd& beta_hat, const Eigen::MatrixXd& cov) {
    const auto k = beta_hat.size();
    CoefficientTable out{Eigen::VectorXd(k), Eigen::VectorXd(k), Eigen::VectorXd(k)};
    for (Eigen::Index j = 0; j < k; ++j) {
        const double v = cov(j, j);
        out.se(j) = v > 0.0 ? std::sqrt(v) : 0.0;
        out.t_stats(j) = out.se(j) > 0.0 ? beta_hat(j) / out.se(j) : std::numeric_limits<double>::quiet_NaN();
        out.p_values(j) = normal_two_sided_p(out.t_stats(j));
    }
    return out;
}

}  // namespace xsdep
