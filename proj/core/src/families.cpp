#include "xsdep/families.hpp"

#include "xsdep/error.hpp"
#include "xsdep/random.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <sstream>

namespace xsdep {

namespace {

Eigen::Index band_width(const BandFamily& f, Eigen::Index n) {
    const double w = f.width_scale * std::pow(static_cast<double>(n), f.width_power);
    return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(w + 1e-9)));
}

Eigen::MatrixXd band_matrix(const BandFamily& f, Eigen::Index n) {
    const auto w = band_width(f, n);
    Eigen::MatrixXd out = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n && j - i <= w; ++j) {
            double v = f.b;
            if (f.taper == BandTaper::Triangular)
                v *= 1.0 - static_cast<double>(j - i) / static_cast<double>(w + 1);
            out(i, j) = out(j, i) = v;
        }
    }
    return out;
}

Eigen::MatrixXd block_matrix(const BlockFamily& f, Eigen::Index n) {
    std::vector<Eigen::Index> sizes;
    if (f.mode == BlockFamily::Mode::Size) {
        const double s = f.scale * std::pow(static_cast<double>(n), f.power);
        const auto size = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(s + 1e-9)));
        for (Eigen::Index start = 0; start < n; start += size) sizes.push_back(std::min(size, n - start));
    } else {
        const auto count = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::lround(f.scale)), 1, n);
        for (Eigen::Index g = 0; g < count; ++g) sizes.push_back((n * (g + 1)) / count - (n * g) / count);
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    Eigen::Index start = 0;
    for (auto size : sizes) {
        out.block(start, start, size, size).setConstant(f.b);
        start += size;
    }
    out.diagonal().setOnes();
    return out;
}

Eigen::MatrixXd spatial_ar_matrix(const SpatialArFamily& f, Eigen::Index n) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (f.weights == SpatialWeights::Cycle) {
            w(i, (i + 1) % n) += 0.5;
            w(i, (i + n - 1) % n) += 0.5;
        } else {
            const bool left = i > 0;
            const bool right = i + 1 < n;
            const double share = 1.0 / static_cast<double>(int(left) + int(right));
            if (left) w(i, i - 1) = share;
            if (right) w(i, i + 1) = share;
        }
    }
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - f.rho * w;
    const Eigen::MatrixXd a_inv = a.partialPivLu().inverse();
    return f.sigma2 * a_inv * a_inv.transpose();
}

std::vector<std::string> split_args(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != ' ') {
            cur.push_back(ch);
        }
    }
    if (!cur.empty() || !out.empty()) out.push_back(cur);
    return out;
}

double num(const std::vector<std::string>& args, std::size_t i, const std::string& ctx) {
    try {
        std::size_t used = 0;
        const double v = std::stod(args.at(i), &used);
        if (used != args[i].size()) throw std::invalid_argument(args[i]);
        return v;
    } catch (...) {
        throw Error(ErrorKind::InvalidArgument, "family '" + ctx + "': argument " + std::to_string(i + 1) +
                                                    " must be a number");
    }
}

void expect_args(const std::vector<std::string>& args, std::size_t lo, std::size_t hi, const std::string& ctx) {
    if (args.size() < lo || args.size() > hi)
        throw Error(ErrorKind::InvalidArgument, "family '" + ctx + "': wrong number of arguments");
}

}  // namespace

Eigen::MatrixXd factor_loadings(const FactorFamily& f, Eigen::Index n) {
    if (f.m < 1) throw Error(ErrorKind::InvalidArgument, "factor family needs m >= 1");
    Eigen::MatrixXd loadings(n, f.m);
    const double scale = std::pow(static_cast<double>(n), 0.5 * (f.exponent - 1.0));
    for (Eigen::Index i = 0; i < n; ++i) {
        Rng rng(derive_seed(f.seed, static_cast<std::uint64_t>(i), 0, 0));
        for (Eigen::Index j = 0; j < f.m; ++j) {
            double v = 1.0;
            switch (f.law) {
                case LoadingLaw::Normal: v = 1.0 + rng.normal(); break;
                case LoadingLaw::Uniform: v = rng.uniform(0.5, 1.5); break;
                case LoadingLaw::Constant: v = 1.0; break;
            }
            loadings(i, j) = scale * v;
        }
    }
    return loadings;
}

CovMatrix build_omega(const CrossSection& family, Eigen::Index n) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "dimension must be positive");
    Eigen::MatrixXd values = std::visit(
        [n](const auto& f) -> Eigen::MatrixXd {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, DiagonalFamily>) {
                if (!(f.variance > 0.0) || std::abs(f.hetero) >= 1.0)
                    throw Error(ErrorKind::InvalidArgument, "diagonal family needs variance > 0, |hetero| < 1");
                Eigen::VectorXd d(n);
                for (Eigen::Index i = 0; i < n; ++i) d(i) = f.variance * (1.0 + f.hetero * std::cos(double(i)));
                return d.asDiagonal();
            } else if constexpr (std::is_same_v<F, BandFamily>) {
                return band_matrix(f, n);
            } else if constexpr (std::is_same_v<F, BlockFamily>) {
                if (f.b < 0.0 || f.b >= 1.0) throw Error(ErrorKind::InvalidArgument, "block family needs 0 <= b < 1");
                return block_matrix(f, n);
            } else if constexpr (std::is_same_v<F, DecayFamily>) {
                if (!(f.p > 0.0) || f.floor < 0.0 || f.floor >= 1.0)
                    throw Error(ErrorKind::InvalidArgument, "decay family needs p > 0 and 0 <= floor < 1");
                Eigen::MatrixXd out(n, n);
                for (Eigen::Index i = 0; i < n; ++i)
                    for (Eigen::Index j = 0; j < n; ++j)
                        out(i, j) = f.floor + (1.0 - f.floor) * std::pow(1.0 + std::abs(double(i - j)), -f.p);
                return out;
            } else if constexpr (std::is_same_v<F, SpatialArFamily>) {
                if (std::abs(f.rho) >= 1.0)
                    throw Error(ErrorKind::InvalidArgument, "spatial AR needs |rho| < 1 for row-normalized weights");
                return spatial_ar_matrix(f, n);
            } else if constexpr (std::is_same_v<F, EquicorrFamily>) {
                Eigen::MatrixXd out = Eigen::MatrixXd::Constant(n, n, f.b);
                out.diagonal().setConstant(f.a);
                return out;
            } else if constexpr (std::is_same_v<F, StarFamily>) {
                if (f.c < 2.0) throw Error(ErrorKind::InvalidArgument, "star family needs c >= 2");
                Eigen::MatrixXd out = f.a * Eigen::MatrixXd::Identity(n, n);
                const double v = 1.0 / (f.c * std::sqrt(double(n)));
                for (Eigen::Index j = 1; j < n; ++j) out(0, j) = out(j, 0) = v;
                return out;
            } else if constexpr (std::is_same_v<F, RootEquicorrFamily>) {
                Eigen::MatrixXd out = Eigen::MatrixXd::Constant(n, n, 1.0 / std::sqrt(double(n)));
                out.diagonal().setConstant(f.a);
                return out;
            } else {
                if (f.exponent < 0.0 || f.exponent > 1.0)
                    throw Error(ErrorKind::InvalidArgument, "factor exponent must lie in [0, 1]");
                if (!(f.idio_var >= 0.0)) throw Error(ErrorKind::InvalidArgument, "idio_var must be >= 0");
                const Eigen::MatrixXd l = factor_loadings(f, n);
                Eigen::MatrixXd out = l * l.transpose();
                out.diagonal().array() += f.idio_var;
                return out;
            }
        },
        family);
    CovMatrix omega(std::move(values));
    omega.require_psd(describe(family) + " at N=" + std::to_string(n));
    return omega;
}

CovFamily as_generator(const CrossSection& family) {
    return [family](Eigen::Index n) { return build_omega(family, n); };
}

CrossSection builtin_example(int number) {
    switch (number) {
        case 1: return DiagonalFamily{1.0, 0.5};
        case 2: return BandFamily{2.0, 0.0, 0.3, BandTaper::Flat};
        case 3: return BlockFamily{BlockFamily::Mode::Size, 5.0, 0.0, 0.5};
        case 4: return DecayFamily{2.0, 0.0};
        case 5: return SpatialArFamily{0.4, SpatialWeights::Cycle, 1.0};
        case 6: return DecayFamily{0.5, 0.0};
        case 7: return BandFamily{1.0, 0.5, 0.9, BandTaper::Triangular};
        case 8: return BlockFamily{BlockFamily::Mode::Size, 1.0, 0.5, 0.9};
        case 9: return DecayFamily{1.0, 0.5};
        case 10: return BlockFamily{BlockFamily::Mode::Count, 3.0, 0.0, 0.5};
        case 11: return FactorFamily{1, 1.0, LoadingLaw::Normal, 1.0, 7};
        case 12: return StarFamily{2.0, 1.0};
        case 13: return EquicorrFamily{1.0, 0.5};
        case 14: return RootEquicorrFamily{1.0};
        default: break;
    }
    throw Error(ErrorKind::InvalidArgument, "no builtin example " + std::to_string(number) + " (valid: 1..14)");
}

CrossSection parse_family(const std::string& text) {
    const auto open = text.find('(');
    std::string name = text.substr(0, open);
    std::vector<std::string> args;
    if (open != std::string::npos) {
        if (text.back() != ')') throw Error(ErrorKind::InvalidArgument, "family '" + text + "': missing ')'");
        args = split_args(text.substr(open + 1, text.size() - open - 2));
    }
    if (name.rfind("example", 0) == 0 && name.size() > 7 && args.empty()) {
        try {
            return builtin_example(std::stoi(name.substr(7)));
        } catch (const Error&) {
            throw;
        } catch (...) {
        }
    }
    if (name == "diagonal") {
        expect_args(args, 0, 2, text);
        DiagonalFamily f;
        if (!args.empty()) f.variance = num(args, 0, text);
        if (args.size() > 1) f.hetero = num(args, 1, text);
        return f;
    }
    if (name == "band") {
        expect_args(args, 2, 4, text);
        BandFamily f;
        if (args.size() == 2) {
            f.width_scale = num(args, 0, text);
            f.width_power = 0.0;
            f.b = num(args, 1, text);
        } else {
            f.width_scale = num(args, 0, text);
            f.width_power = num(args, 1, text);
            f.b = num(args, 2, text);
            if (args.size() == 4) {
                if (args[3] == "flat") f.taper = BandTaper::Flat;
                else if (args[3] == "triangular") f.taper = BandTaper::Triangular;
                else throw Error(ErrorKind::InvalidArgument, "band taper must be flat or triangular");
            }
        }
        return f;
    }
    if (name == "block") {
        expect_args(args, 2, 2, text);
        return BlockFamily{BlockFamily::Mode::Size, num(args, 0, text), 0.0, num(args, 1, text)};
    }
    if (name == "block_count") {
        expect_args(args, 2, 2, text);
        return BlockFamily{BlockFamily::Mode::Count, num(args, 0, text), 0.0, num(args, 1, text)};
    }
    if (name == "block_growing") {
        expect_args(args, 3, 3, text);
        return BlockFamily{BlockFamily::Mode::Size, num(args, 0, text), num(args, 1, text), num(args, 2, text)};
    }
    if (name == "decay") {
        expect_args(args, 1, 2, text);
        return DecayFamily{num(args, 0, text), args.size() > 1 ? num(args, 1, text) : 0.0};
    }
    if (name == "spatial_ar") {
        expect_args(args, 1, 3, text);
        SpatialArFamily f;
        f.rho = num(args, 0, text);
        if (args.size() > 1) {
            if (args[1] == "cycle") f.weights = SpatialWeights::Cycle;
            else if (args[1] == "line") f.weights = SpatialWeights::Line;
            else throw Error(ErrorKind::InvalidArgument, "spatial weights must be cycle or line");
        }
        if (args.size() > 2) f.sigma2 = num(args, 2, text);
        return f;
    }
    if (name == "equicorr" || name == "example13") {
        expect_args(args, 2, 2, text);
        return EquicorrFamily{num(args, 0, text), num(args, 1, text)};
    }
    if (name == "example12") {
        expect_args(args, 1, 2, text);
        return StarFamily{num(args, 0, text), args.size() > 1 ? num(args, 1, text) : 1.0};
    }
    if (name == "example14") {
        expect_args(args, 1, 1, text);
        return RootEquicorrFamily{num(args, 0, text)};
    }
    if (name == "factor") {
        expect_args(args, 1, 5, text);
        FactorFamily f;
        f.m = static_cast<Eigen::Index>(num(args, 0, text));
        if (args.size() > 1) f.exponent = num(args, 1, text);
        if (args.size() > 2) {
            if (args[2] == "normal") f.law = LoadingLaw::Normal;
            else if (args[2] == "uniform") f.law = LoadingLaw::Uniform;
            else if (args[2] == "constant") f.law = LoadingLaw::Constant;
            else throw Error(ErrorKind::InvalidArgument, "loading law must be normal, uniform or constant");
        }
        if (args.size() > 3) f.idio_var = num(args, 3, text);
        if (args.size() > 4) f.seed = static_cast<std::uint64_t>(num(args, 4, text));
        return f;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown covariance family '" + text + "'");
}

std::string family_name(const CrossSection& family) {
    return std::visit(
        [](const auto& f) -> std::string {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, DiagonalFamily>) return "diagonal";
            else if constexpr (std::is_same_v<F, BandFamily>) return "band";
            else if constexpr (std::is_same_v<F, BlockFamily>) return "block";
            else if constexpr (std::is_same_v<F, DecayFamily>) return "decay";
            else if constexpr (std::is_same_v<F, SpatialArFamily>) return "spatial_ar";
            else if constexpr (std::is_same_v<F, EquicorrFamily>) return "equicorr";
            else if constexpr (std::is_same_v<F, StarFamily>) return "example12";
            else if constexpr (std::is_same_v<F, RootEquicorrFamily>) return "example14";
            else return "factor";
        },
        family);
}

namespace {

struct Num {
    double v;
};

std::ostream& operator<<(std::ostream& os, Num n) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, n.v);
    return os.write(buf, ptr - buf);
}

}  // namespace

std::string describe(const CrossSection& family) {
    std::ostringstream os;
    std::visit(
        [&os](const auto& f) {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, DiagonalFamily>) {
                os << "diagonal(" << Num{f.variance} << "," << Num{f.hetero} << ")";
            } else if constexpr (std::is_same_v<F, BandFamily>) {
                os << "band(" << Num{f.width_scale} << "," << Num{f.width_power} << "," << Num{f.b} << ","
                   << (f.taper == BandTaper::Flat ? "flat" : "triangular") << ")";
            } else if constexpr (std::is_same_v<F, BlockFamily>) {
                if (f.mode == BlockFamily::Mode::Count) os << "block_count(" << Num{f.scale} << "," << Num{f.b} << ")";
                else os << "block_growing(" << Num{f.scale} << "," << Num{f.power} << "," << Num{f.b} << ")";
            } else if constexpr (std::is_same_v<F, DecayFamily>) {
                os << "decay(" << Num{f.p} << "," << Num{f.floor} << ")";
            } else if constexpr (std::is_same_v<F, SpatialArFamily>) {
                os << "spatial_ar(" << Num{f.rho} << "," << (f.weights == SpatialWeights::Cycle ? "cycle" : "line") << ","
                   << Num{f.sigma2} << ")";
            } else if constexpr (std::is_same_v<F, EquicorrFamily>) {
                os << "equicorr(" << Num{f.a} << "," << Num{f.b} << ")";
            } else if constexpr (std::is_same_v<F, StarFamily>) {
                os << "example12(" << Num{f.c} << "," << Num{f.a} << ")";
            } else if constexpr (std::is_same_v<F, RootEquicorrFamily>) {
                os << "example14(" << Num{f.a} << ")";
            } else {
                const char* law = f.law == LoadingLaw::Normal ? "normal"
                                  : f.law == LoadingLaw::Uniform ? "uniform"
                                                                 : "constant";
                os << "factor(" << f.m << "," << Num{f.exponent} << "," << law << "," << Num{f.idio_var} << "," << f.seed << ")";
            }
        },
        family);
    return os.str();
}

}  // namespace xsdep
