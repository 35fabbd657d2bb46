// Acceptance suite: one PASS/FAIL line per criterion.
//
//   xsdep_acceptance            run all criteria
//   xsdep_acceptance 5 7        run a subset
//
// Worker threads come from XSDEP_THREADS (default: hardware concurrency).

#include "cli.hpp"
#include "support.hpp"
#include "xsdep/dependence.hpp"
#include "xsdep/dgp.hpp"
#include "xsdep/error.hpp"
#include "xsdep/estimators.hpp"
#include "xsdep/families.hpp"
#include "xsdep/robust_cov.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

using namespace xsdep;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double time_limit_s;  ///< <= 0: no limit
    std::function<Outcome()> run;
};

int worker_count() {
    if (const char* env = std::getenv("XSDEP_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double scale = b.norm();
    return scale > 0.0 ? (a - b).norm() / scale : (a - b).norm();
}

// ---------------------------------------------------------------------------
// 1. Estimators and zero/one-lag covariance against dense algebra.

struct DenseFit {
    Eigen::VectorXd beta;
    Eigen::MatrixXd residuals;  // N x T
};

/// OLS of y on [X, D] (FE) or [X, 1] (pooled) in the by-time stacking.
DenseFit dense_ols(const PanelData& p, EstimatorKind kind) {
    const auto n = p.n_units(), t = p.n_periods(), k = p.n_regressors();
    const Eigen::MatrixXd d = kind == EstimatorKind::FixedEffect ? testing::unit_dummies_by_time(n, t)
                                                                 : Eigen::MatrixXd::Ones(n * t, 1);
    Eigen::MatrixXd z(n * t, k + d.cols());
    z << testing::stacked_x_by_time(p), d;
    const Eigen::VectorXd y = testing::by_time(p.y());
    const Eigen::VectorXd coef = z.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd e = y - z * coef;
    DenseFit out;
    out.beta = coef.head(k);
    out.residuals = Eigen::Map<const Eigen::MatrixXd>(e.data(), n, t);
    return out;
}

/// (X'MX)^{-1} X'M B M X (X'MX)^{-1} with B's (s, u) block K(|s-u|) e_s e_u'.
Eigen::MatrixXd dense_robust_cov(const PanelData& p, EstimatorKind kind, const Eigen::MatrixXd& e, Eigen::Index trunc) {
    const auto n = p.n_units(), t = p.n_periods();
    const Eigen::MatrixXd d = kind == EstimatorKind::FixedEffect ? testing::unit_dummies_by_time(n, t)
                                                                 : Eigen::MatrixXd::Ones(n * t, 1);
    const Eigen::MatrixXd mx = testing::annihilator(d) * testing::stacked_x_by_time(p);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n * t, n * t);
    for (Eigen::Index s = 0; s < t; ++s)
        for (Eigen::Index u = 0; u < t; ++u) {
            const Eigen::Index lag = std::abs(s - u);
            if (lag > trunc) continue;
            b.block(s * n, u * n, n, n) = kernel_weight(KernelKind::Bartlett, lag, trunc) * e.col(s) * e.col(u).transpose();
        }
    const Eigen::MatrixXd gi = (mx.transpose() * mx).inverse();
    return gi * mx.transpose() * b * mx * gi;
}

Outcome oracle_equivalence() {
    Rng rng(101);
    double worst_beta = 0.0, worst_cov = 0.0;
    int panels = 0;
    for (std::uint64_t seed = 1; panels < 60; ++seed) {
        const auto n = 2 + static_cast<Eigen::Index>(rng.uniform(0.0, 4.0));
        const auto t = 2 + static_cast<Eigen::Index>(rng.uniform(0.0, 7.0));
        const auto k = 1 + static_cast<Eigen::Index>(rng.uniform(0.0, 3.0));
        if (n * (t - 1) <= k) continue;
        const PanelData p = testing::random_panel(n, t, k, seed);
        ++panels;
        for (EstimatorKind kind : {EstimatorKind::FixedEffect, EstimatorKind::Pooled}) {
            const FitResult f = fit(p, kind);
            const DenseFit oracle = dense_ols(p, kind);
            worst_beta = std::max(worst_beta, (f.beta_hat - oracle.beta).cwiseAbs().maxCoeff() /
                                                  std::max(1.0, oracle.beta.cwiseAbs().maxCoeff()));
            const WeightBlocks w = weight_blocks(f);
            for (Eigen::Index trunc : {0, 1}) {
                if (trunc >= t) continue;
                const RobustCov v = trunc == 0 ? cov_cross_section(w, f.residuals)
                                               : cov_kernel(w, f.residuals, KernelKind::Bartlett, Truncation{trunc, {}});
                const Eigen::MatrixXd dense = dense_robust_cov(p, kind, oracle.residuals, trunc);
                // Scale of the summed terms; with T = 2 the within scores vanish exactly.
                double terms = 0.0;
                for (Eigen::Index s = 0; s < t; ++s) terms += w.blocks[static_cast<std::size_t>(s)].norm() * f.residuals.col(s).norm();
                terms *= terms;
                const double gap = dense.norm() > 1e-8 * terms ? rel_err(v.matrix, dense) : (v.matrix - dense).norm() / terms;
                worst_cov = std::max(worst_cov, gap);
            }
        }
    }
    return {worst_beta <= 1e-9 && worst_cov <= 1e-12,
            std::to_string(panels) + " panels, max beta gap " + fmt(worst_beta) + " (tol 1e-9), max cov rel gap " +
                fmt(worst_cov) + " (tol 1e-12)"};
}

// ---------------------------------------------------------------------------
// 2. Norm sandwich.

Outcome norm_sandwich() {
    Rng rng(202);
    int violations = 0;
    double worst = -1.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const auto n = 2 + static_cast<Eigen::Index>(rng.uniform(0.0, 49.0));
        const NormsAtN r = compute_norms(CovMatrix(testing::random_psd(n, rng)));
        const double lower = (r.euclid_scaled - r.max_eig) / r.max_eig;
        const double upper = (r.max_eig - r.max_row_sum) / r.max_row_sum;
        worst = std::max({worst, lower, upper});
        if (lower > 1e-10 || upper > 1e-10) ++violations;
    }
    return {violations == 0, "1000 matrices, " + std::to_string(violations) +
                                 " violations, worst relative excess " + fmt(worst) + " (slack 1e-10)"};
}

// ---------------------------------------------------------------------------
// 3. Factor split round trip.

Outcome factor_round_trip() {
    Rng rng(303);
    double worst = 0.0;
    int count = 0;
    auto check = [&](const CovMatrix& omega) {
        const FactorSplit s = factor_decompose(omega);
        const Eigen::MatrixXd rebuilt = s.loadings * s.loadings.transpose() + s.idio_cov.values();
        worst = std::max(worst, rel_err(rebuilt, omega.values()));
        ++count;
    };
    for (int rep = 0; rep < 200; ++rep) {
        const auto n = 2 + static_cast<Eigen::Index>(rng.uniform(0.0, 49.0));
        check(CovMatrix(testing::random_psd(n, rng)));
    }
    for (int ex = 1; ex <= 14; ++ex)
        for (Eigen::Index n : {25, 50, 100, 200}) check(build_omega(builtin_example(ex), n));
    return {worst <= 1e-8, std::to_string(count) + " matrices, worst relative Frobenius error " + fmt(worst) +
                               " (tol 1e-8)"};
}

// ---------------------------------------------------------------------------
// 4. Builtin family classification.

Outcome classification() {
    const std::vector<Eigen::Index> grid{25, 50, 100, 200, 400, 800};
    const std::map<int, Regime> expected{{1, Regime::Weak},      {2, Regime::Weak},      {3, Regime::Weak},
                                         {4, Regime::Weak},      {5, Regime::Weak},      {6, Regime::Moderate},
                                         {7, Regime::Moderate},  {8, Regime::Moderate},  {14, Regime::Moderate},
                                         {9, Regime::Strong},    {10, Regime::Strong},   {11, Regime::Strong},
                                         {13, Regime::Strong}};
    ClassifyConfig cfg;
    cfg.threads = worker_count();
    std::ostringstream detail;
    bool ok = true;
    std::map<int, DependenceProfile> profiles;
    for (const auto& [ex, want] : expected) {
        profiles.emplace(ex, classify(as_generator(builtin_example(ex)), grid, cfg));
        const auto& p = profiles.at(ex);
        if (p.regime != want) {
            ok = false;
            detail << "ex" << ex << " " << to_string(p.regime) << "(a=" << fmt(p.headline.alpha, 3) << ") want "
                   << to_string(want) << "; ";
        }
    }
    const Regime e13 = profiles.at(13).euclid_scaled.regime;
    const Regime e14 = profiles.at(14).euclid_scaled.regime;
    if (e13 != Regime::Moderate) {
        ok = false;
        detail << "ex13 euclid " << to_string(e13) << " want moderate; ";
    }
    if (e14 != Regime::Weak) {
        ok = false;
        detail << "ex14 euclid " << to_string(e14) << " want weak; ";
    }
    detail << "13 families labelled; ex13 max-eig a=" << fmt(profiles.at(13).headline.alpha, 3)
           << " euclid a=" << fmt(profiles.at(13).euclid_scaled.alpha, 3) << "; ex14 max-eig a="
           << fmt(profiles.at(14).headline.alpha, 3) << " euclid a=" << fmt(profiles.at(14).euclid_scaled.alpha, 3);
    return {ok, detail.str()};
}

// ---------------------------------------------------------------------------
// Shared Monte Carlo designs.

/// Strong dependence: one pervasive factor, first regressor loading on it.
DgpSpec strong_dgp() {
    DgpSpec d;
    d.cross_section = FactorFamily{1, 1.0, LoadingLaw::Normal, 1.0, 7};
    d.x_law = XLaw::LoadingAligned;
    d.beta = Eigen::VectorXd::Ones(1);
    return d;
}

/// Weak dependence: spatial autoregression on a ring.
DgpSpec weak_dgp() {
    DgpSpec d;
    d.cross_section = SpatialArFamily{0.4, SpatialWeights::Cycle, 1.0};
    d.beta = Eigen::VectorXd::Ones(1);
    return d;
}

McConfig mc_config(const DgpSpec& dgp, std::vector<GridCell> grid, std::uint64_t seed) {
    McConfig c;
    c.dgp = dgp;
    c.grid = std::move(grid);
    c.reps = 2000;
    c.seed = seed;
    c.threads = worker_count();
    c.compute_true_variance = false;
    return c;
}

// ---------------------------------------------------------------------------
// 5. Convergence rates.

Outcome rates() {
    std::ostringstream detail;
    bool ok = true;

    const McReport strong =
        run_mc(mc_config(strong_dgp(), {{50, 50}, {50, 100}, {50, 200}, {50, 400}}, 5001));
    const auto st = strong.rate("T");
    const bool st_ok = st && std::abs(st->slope + 0.5) <= 0.1;
    ok = ok && st_ok;
    detail << "strong T-slope " << (st ? fmt(st->slope) : "n/a");

    const McReport weak = run_mc(mc_config(weak_dgp(), {{25, 50}, {50, 100}, {100, 200}, {100, 400}}, 5002));
    const auto wk = weak.rate("NT");
    const bool wk_ok = wk && std::abs(wk->slope + 0.5) <= 0.1;
    ok = ok && wk_ok;
    detail << ", weak NT-slope " << (wk ? fmt(wk->slope) : "n/a") << " (target -0.5 +- 0.1)";

    // Single period, equicorrelated errors, regression through the origin.
    auto one_period = [](XLaw law) {
        DgpSpec d;
        d.cross_section = EquicorrFamily{1.0, 0.5};
        d.x_law = law;
        d.mu_scale = 0.0;
        d.beta = Eigen::VectorXd::Ones(1);
        McConfig c = mc_config(d, {{50, 1}, {800, 1}}, 5003);
        c.estimator = EstimatorKind::NoIntercept;
        const McReport r = run_mc(c);
        return r.cell(800, 1).rmse_total / r.cell(50, 1).rmse_total;
    };
    const double shifted = one_period(XLaw::MeanShift);
    const double centered = one_period(XLaw::Centered);
    ok = ok && shifted > 0.5 && centered < 0.5;
    detail << "; T=1 RMSE(N=800)/RMSE(N=50): uncentered X " << fmt(shifted) << " (want > 0.5), centered X "
           << fmt(centered) << " (want < 0.5)";
    return {ok, detail.str()};
}

// ---------------------------------------------------------------------------
// 6. Wald size.

Outcome wald_size() {
    const McReport strong = run_mc(mc_config(strong_dgp(), {{50, 400}}, 6001));
    const McReport weak = run_mc(mc_config(weak_dgp(), {{25, 400}}, 6002));
    const double s1 = strong.cells.front().size, s2 = weak.cells.front().size;
    auto in_band = [](double s) { return s >= 0.035 && s <= 0.065; };
    return {in_band(s1) && in_band(s2), "strong (50,400) size " + fmt(s1) + ", weak (25,400) size " + fmt(s2) +
                                            " (band [0.035, 0.065], 2000 reps)"};
}

// ---------------------------------------------------------------------------
// 7. Kernel correction under a strong factor with short idiosyncratic memory.

Outcome kernel_versus_zero_lag() {
    DgpSpec d = strong_dgp();
    d.time_memory = TimeDependenceSpec::idio_ma({1.0, 0.5});
    d.fixed_design = true;
    McConfig c = mc_config(d, {{50, 200}}, 7001);
    c.compute_true_variance = true;
    c.cov.method = CovMethod::CrossSection;
    const McReport zero_lag = run_mc(c);
    c.cov.method = CovMethod::Kernel;
    c.cov.kernel = KernelKind::Bartlett;
    c.cov.trunc = Truncation{std::nullopt, DeclaredDependence{}};
    const McReport kernel = run_mc(c);
    const double rz = zero_lag.cells.front().rel_rmse_cov, rk = kernel.cells.front().rel_rmse_cov;
    return {std::isfinite(rz) && std::isfinite(rk) && rk > rz,
            "relative RMSE kernel (Bartlett, C=" + std::to_string(auto_truncation(DeclaredDependence{}, 200)) +
                ") " + fmt(rk) + " vs zero-lag " + fmt(rz)};
}

// ---------------------------------------------------------------------------
// 8. Fourth-moment chain.

Outcome fourth_moment_chain() {
    int samples = 0, violations = 0;
    const std::vector<TimeDependenceSpec> memories{TimeDependenceSpec::none(), TimeDependenceSpec::idio_ma({1.0, 0.7}),
                                                   TimeDependenceSpec::idio_summable(0.5)};
    for (int ex = 1; ex <= 14; ++ex)
        for (Eigen::Index n : {3, 10, 25, 40})
            for (std::size_t m = 0; m < memories.size(); ++m) {
                DgpSpec d;
                d.cross_section = builtin_example(ex);
                d.time_memory = memories[m];
                if (m == 0) {
                    d.error_dist = ErrorDist::StudentT;
                    d.nu = 8.0;
                }
                const auto model = prepare(d, n);
                Rng rng(derive_seed(8000, static_cast<std::uint64_t>(ex), static_cast<std::uint64_t>(n), m));
                const Eigen::MatrixXd e = gen_errors(*model, 300, rng);
                const FourthMomentBound b = fourth_moment_lower_bound(e);
                ++samples;
                if (!(b.trace_vf >= b.lambda_max_vf && b.lambda_max_vf >= b.sum_omega_sq &&
                      b.sum_omega_sq >= b.lambda_max_sq))
                    ++violations;
            }

    DgpSpec gauss;
    gauss.cross_section = DiagonalFamily{1.0, 0.0};
    const auto model = prepare(gauss, 3);
    Rng rng(8001);
    const FourthMomentBound g = fourth_moment_lower_bound(gen_errors(*model, 50000, rng));
    const double wick = 3.0 * 3.0 + 2.0 * 3.0;
    const double gap = std::abs(g.trace_vf / wick - 1.0);
    return {violations == 0 && gap <= 0.02,
            std::to_string(samples) + " samples, " + std::to_string(violations) + " chain violations; Gaussian N=3 " +
                "trace(V_F) " + fmt(g.trace_vf) + " vs " + fmt(wick) + " (gap " + fmt(100.0 * gap, 3) + "%, tol 2%)"};
}

// ---------------------------------------------------------------------------
// 9. Deterministic mc run across worker counts.

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / ("xsdep_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::string cfg = (dir / "config.json").string();
    {
        std::ofstream o(cfg);
        o << R"js({
  "dgp": {"family": "factor(1,0.8)", "time": {"family": "idio_ma", "coeffs": [1, 0.5]},
          "x_law": "loading_aligned", "beta": [1, -0.5], "errors": "student_t", "nu": 10},
  "grid": [[20, 30], [40, 30], [40, 60]],
  "reps": 200,
  "cov": {"method": "kernel", "kernel": "bartlett", "trunc": "auto"},
  "seed": 9001
})js";
    }
    std::ostringstream sink;
    auto run = [&](const std::string& out, const std::string& threads) {
        return cli::dispatch({"mc", "run", cfg, "--out", (dir / out).string(), "--threads", threads}, sink, sink);
    };
    const int c1 = run("a.json", "1"), c2 = run("b.json", "8"), c3 = run("c.json", "1");
    auto slurp = [&](const std::string& name) {
        std::ifstream in(dir / name, std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
    };
    const std::string a = slurp("a.json"), b = slurp("b.json"), c = slurp("c.json");
    fs::remove_all(dir);
    const bool ok = c1 == 0 && c2 == 0 && c3 == 0 && !a.empty() && a == b && a == c;
    return {ok, "exit codes " + std::to_string(c1) + "/" + std::to_string(c2) + "/" + std::to_string(c3) + ", " +
                    std::to_string(a.size()) + "-byte report; 1 vs 8 workers " + (a == b ? "identical" : "differ") +
                    ", repeat " + (a == c ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "estimators and zero/one-lag covariance match dense algebra", 10, oracle_equivalence},
        {2, "euclid_scaled <= max_eig <= max_row_sum on random PSD matrices", 30, norm_sandwich},
        {3, "factor split reconstructs its input", 60, factor_round_trip},
        {4, "builtin families receive their dependence labels", 120, classification},
        {5, "RMSE rates and single-period (in)consistency", 600, rates},
        {6, "robust Wald size near nominal 5%", 600, wald_size},
        {7, "kernel correction is less accurate than zero-lag under short idiosyncratic memory", 0,
         kernel_versus_zero_lag},
        {8, "fourth-moment chain and Gaussian trace(V_F)", 0, fourth_moment_chain},
        {9, "mc run is byte-identical across runs and worker counts", 0, determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    std::cout << "acceptance suite, " << worker_count() << " worker(s)\n";
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.time_limit_s > 0 && secs > c.time_limit_s) {
            o.pass = false;
            o.detail += "; runtime over the " + fmt(c.time_limit_s, 4) + " s budget";
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " -- " << o.detail
                  << " [" << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
