#pragma once

#include "xsdep/dependence.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <variant>

namespace xsdep {

// Cross-sectional covariance families. Each struct is a recipe that turns a
// dimension N into an N x N covariance matrix.

/// omega_ii = variance * (1 + hetero * cos(i)); off-diagonals zero.
struct DiagonalFamily {
    double variance = 1.0;
    double hetero = 0.0;
};

enum class BandTaper { Flat, Triangular };

/// Unit diagonal, off-diagonal b within |i-j| <= w, w = max(1, floor(scale * N^power)).
/// Triangular taper uses b * (1 - |i-j| / (w + 1)).
struct BandFamily {
    double width_scale = 2.0;
    double width_power = 0.0;
    double b = 0.3;
    BandTaper taper = BandTaper::Flat;
};

/// Block-diagonal equicorrelation: unit diagonal, b inside each block.
/// Size mode: blocks of max(1, floor(scale * N^power)) units (last block may be shorter).
/// Count mode: round(scale) blocks of near-equal size.
struct BlockFamily {
    enum class Mode { Size, Count };
    Mode mode = Mode::Size;
    double scale = 5.0;
    double power = 0.0;
    double b = 0.5;
};

/// Correlation floor + (1 - floor) * (1 + |i-j|)^(-p).
struct DecayFamily {
    double p = 2.0;
    double floor = 0.0;
};

enum class SpatialWeights { Cycle, Line };

/// sigma2 * (I - rho W)^{-1} (I - rho W')^{-1} with row-normalized rook weights.
struct SpatialArFamily {
    double rho = 0.4;
    SpatialWeights weights = SpatialWeights::Cycle;
    double sigma2 = 1.0;
};

/// Diagonal a, off-diagonal b.
struct EquicorrFamily {
    double a = 1.0;
    double b = 0.5;
};

/// Diagonal a; first row/column off-diagonals 1 / (c sqrt(N)); rest zero.
struct StarFamily {
    double c = 2.0;
    double a = 1.0;
};

/// Diagonal a; every off-diagonal 1 / sqrt(N).
struct RootEquicorrFamily {
    double a = 1.0;
};

enum class LoadingLaw { Normal, Uniform, Constant };

/// Lambda Lambda' + idio_var * I with lambda_max(Lambda Lambda') growing like N^exponent.
/// Row i of the raw loadings is drawn from a hash of (seed, i), so loadings nest across N.
struct FactorFamily {
    Eigen::Index m = 1;
    double exponent = 1.0;
    LoadingLaw law = LoadingLaw::Normal;
    double idio_var = 1.0;
    std::uint64_t seed = 7;
};

using CrossSection = std::variant<DiagonalFamily, BandFamily, BlockFamily, DecayFamily, SpatialArFamily,
                                  EquicorrFamily, StarFamily, RootEquicorrFamily, FactorFamily>;

/// Exact covariance at dimension n. Throws NotPSD naming the family.
CovMatrix build_omega(const CrossSection& family, Eigen::Index n);

/// Loadings (N x m) of a factor family; throws SpecMismatch for other families.
Eigen::MatrixXd factor_loadings(const FactorFamily& family, Eigen::Index n);

/// Closure for classify().
CovFamily as_generator(const CrossSection& family);

/// Canonical constructors for the numbered dependence examples (1..14).
CrossSection builtin_example(int number);

/// Text form: diagonal, diagonal(v,h), band(w,b), band(scale,power,b,flat|triangular),
/// block(size,b), block_count(m,b), block_growing(scale,power,b), decay(p), decay(p,floor),
/// spatial_ar(rho,cycle|line[,sigma2]), equicorr(a,b), factor(m), factor(m,exponent,normal|uniform|constant[,idio[,seed]]),
/// example12(c), example13(a,b), example14(a), exampleN for N in 1..14.
CrossSection parse_family(const std::string& text);
/// Canonical text form; parse_family(describe(f)) reproduces f exactly.
std::string describe(const CrossSection& family);

std::string family_name(const CrossSection& family);

}  // namespace xsdep
