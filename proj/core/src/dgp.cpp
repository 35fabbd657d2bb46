#include "xsdep/dgp.hpp"

#include "xsdep/error.hpp"
#include "xsdep/inference.hpp"
#include "xsdep/parallel.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace xsdep {

std::string to_string(XLaw law) {
    switch (law) {
        case XLaw::Normal: return "normal";
        case XLaw::MeanShift: return "mean_shift";
        case XLaw::Centered: return "centered";
        case XLaw::LoadingAligned: return "loading_aligned";
    }
    return "unknown";
}

std::string to_string(ErrorDist dist) { return dist == ErrorDist::Gaussian ? "gaussian" : "student_t"; }

XLaw parse_x_law(const std::string& text) {
    if (text == "normal") return XLaw::Normal;
    if (text == "mean_shift") return XLaw::MeanShift;
    if (text == "centered") return XLaw::Centered;
    if (text == "loading_aligned") return XLaw::LoadingAligned;
    throw Error(ErrorKind::InvalidArgument,
                "unknown x law '" + text + "' (expected normal|mean_shift|centered|loading_aligned)");
}

ErrorDist parse_error_dist(const std::string& text) {
    if (text == "gaussian") return ErrorDist::Gaussian;
    if (text == "student_t") return ErrorDist::StudentT;
    throw Error(ErrorKind::InvalidArgument, "unknown error distribution '" + text + "' (expected gaussian|student_t)");
}

void DgpSpec::validate() const {
    if (beta.size() < 1 || !beta.allFinite()) throw Error(ErrorKind::InvalidArgument, "beta must be a finite vector, k >= 1");
    if (!(mu_scale >= 0.0) || !std::isfinite(mu_scale)) throw Error(ErrorKind::InvalidArgument, "mu_scale must be >= 0");
    if (!std::isfinite(alignment)) throw Error(ErrorKind::InvalidArgument, "alignment must be finite");
    if (error_dist == ErrorDist::StudentT && !(nu >= 8.0))
        throw Error(ErrorKind::InvalidArgument, "Student-t errors need nu >= 8 (finite fourth-plus moments)");
    time_memory.validate();
    if (time_memory.is_factor() && !std::holds_alternative<FactorFamily>(cross_section))
        throw Error(ErrorKind::SpecMismatch, "factor time memory requires a factor cross-section");
}

std::shared_ptr<const PreparedDgp> prepare(const DgpSpec& spec, Eigen::Index n) {
    spec.validate();
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "N must be >= 2");
    auto out = std::make_shared<PreparedDgp>();
    out->spec = spec;
    out->n = n;
    out->omega = build_omega(spec.cross_section, n);
    if (const auto* f = std::get_if<FactorFamily>(&spec.cross_section)) {
        out->loadings = factor_loadings(*f, n);
        out->sigma = f->idio_var * Eigen::MatrixXd::Identity(n, n);
        out->h_n = std::pow(static_cast<double>(n), f->exponent);
        const Eigen::VectorXd l = out->loadings.col(0);
        out->align_direction = l * std::sqrt(static_cast<double>(n)) / l.norm();
    } else {
        out->sigma = out->omega.values();
        const auto& ev = out->omega.eigenvalues();
        const auto& p = out->omega.eigenvectors();
        out->omega_sqrt = p * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() * p.transpose();
        out->h_n = out->omega.max_eigenvalue();
        Eigen::VectorXd v = p.col(n - 1);
        if (v.sum() < 0.0) v = -v;
        out->align_direction = v * std::sqrt(static_cast<double>(n));
    }
    return out;
}

namespace {

/// Unit-variance innovation source fixed for one panel draw.
class Innovations {
public:
    Innovations(const DgpSpec& spec, Rng& rng) : rng_(rng), t_(spec.error_dist == ErrorDist::StudentT) {
        if (t_) {
            dist_ = std::student_t_distribution<double>(spec.nu);
            scale_ = std::sqrt((spec.nu - 2.0) / spec.nu);
        }
    }
    double operator()() { return t_ ? dist_(rng_.engine()) * scale_ : rng_.normal(); }

private:
    Rng& rng_;
    bool t_;
    std::student_t_distribution<double> dist_;
    double scale_ = 1.0;
};

/// rows x T unit-variance series with the temporal law of `memory` applied
/// (or i.i.d. when `apply` is false).
Eigen::MatrixXd time_series(Eigen::Index rows, Eigen::Index t_count, const TimeDependenceSpec& memory, bool apply,
                            Innovations& draw) {
    Eigen::MatrixXd out(rows, t_count);
    const bool ma = apply && (memory.family == TimeFamily::IdioMA || memory.family == TimeFamily::FactorMA);
    const bool ar = apply && (memory.family == TimeFamily::IdioSummable || memory.family == TimeFamily::FactorSummable);
    if (ma) {
        const auto q = static_cast<Eigen::Index>(memory.ma_coeffs.size()) - 1;
        double ss = 0.0;
        for (double c : memory.ma_coeffs) ss += c * c;
        const double norm = std::sqrt(ss);
        // q presample draws give an exactly stationary start.
        Eigen::MatrixXd xi(rows, t_count + q);
        for (Eigen::Index s = 0; s < t_count + q; ++s)
            for (Eigen::Index i = 0; i < rows; ++i) xi(i, s) = draw();
        for (Eigen::Index t = 0; t < t_count; ++t) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(rows);
            for (Eigen::Index l = 0; l <= q; ++l) acc += memory.ma_coeffs[static_cast<std::size_t>(l)] * xi.col(t + q - l);
            out.col(t) = acc / norm;
        }
    } else if (ar) {
        const double phi = memory.decay;
        const double innov = std::sqrt(1.0 - phi * phi);
        for (Eigen::Index i = 0; i < rows; ++i) out(i, 0) = draw();
        for (Eigen::Index t = 1; t < t_count; ++t)
            for (Eigen::Index i = 0; i < rows; ++i) out(i, t) = phi * out(i, t - 1) + innov * draw();
    } else {
        for (Eigen::Index t = 0; t < t_count; ++t)
            for (Eigen::Index i = 0; i < rows; ++i) out(i, t) = draw();
    }
    return out;
}

}  // namespace

std::vector<Eigen::MatrixXd> gen_design(const PreparedDgp& model, Eigen::Index t_count, Rng& rng) {
    const auto n = model.n;
    const auto& spec = model.spec;
    std::vector<Eigen::MatrixXd> x;
    x.reserve(static_cast<std::size_t>(spec.k()));
    for (Eigen::Index j = 0; j < spec.k(); ++j) {
        Eigen::MatrixXd xj(n, t_count);
        for (Eigen::Index t = 0; t < t_count; ++t)
            for (Eigen::Index i = 0; i < n; ++i) xj(i, t) = rng.normal();
        switch (spec.x_law) {
            case XLaw::Normal: break;
            case XLaw::MeanShift: xj.array() += 1.0; break;
            case XLaw::Centered: xj.rowwise() -= xj.colwise().mean(); break;
            case XLaw::LoadingAligned:
                if (j == 0) {
                    Eigen::RowVectorXd z(t_count);
                    for (Eigen::Index t = 0; t < t_count; ++t) z(t) = rng.normal();
                    xj += spec.alignment * model.align_direction * z;
                }
                break;
        }
        x.push_back(std::move(xj));
    }
    return x;
}

Eigen::MatrixXd gen_errors(const PreparedDgp& model, Eigen::Index t_count, Rng& rng) {
    const auto& memory = model.spec.time_memory;
    Innovations draw(model.spec, rng);
    if (model.has_factors()) {
        const Eigen::MatrixXd f = time_series(model.loadings.cols(), t_count, memory, memory.is_factor(), draw);
        Eigen::MatrixXd u = time_series(model.n, t_count, memory, memory.is_idio(), draw);
        u = model.sigma.diagonal().cwiseSqrt().asDiagonal() * u;
        return model.loadings * f + u;
    }
    const Eigen::MatrixXd eta = time_series(model.n, t_count, memory, memory.is_idio(), draw);
    return model.omega_sqrt * eta;
}

GeneratedPanel gen_panel(const std::shared_ptr<const PreparedDgp>& model, Eigen::Index t_count, std::uint64_t seed,
                         const std::vector<Eigen::MatrixXd>* design) {
    if (t_count < 1) throw Error(ErrorKind::InvalidArgument, "T must be >= 1");
    const auto& spec = model->spec;
    Rng rng(seed);
    std::vector<Eigen::MatrixXd> x = design ? *design : gen_design(*model, t_count, rng);
    if (static_cast<Eigen::Index>(x.size()) != spec.k() || x.front().rows() != model->n || x.front().cols() != t_count)
        throw Error(ErrorKind::InvalidArgument, "design does not match the DGP dimensions");
    Eigen::VectorXd mu(model->n);
    for (Eigen::Index i = 0; i < model->n; ++i) mu(i) = rng.uniform(-spec.mu_scale, spec.mu_scale);
    Eigen::MatrixXd eps = gen_errors(*model, t_count, rng);
    Eigen::MatrixXd y = eps;
    y.colwise() += mu;
    for (Eigen::Index j = 0; j < spec.k(); ++j) y += spec.beta(j) * x[static_cast<std::size_t>(j)];
    return GeneratedPanel{PanelData(std::move(y), std::move(x)), Truth{spec.beta, std::move(mu), model}, std::move(eps)};
}

GeneratedPanel gen_panel(const DgpSpec& spec, Eigen::Index n, Eigen::Index t, std::uint64_t seed) {
    return gen_panel(prepare(spec, n), t, seed);
}

Eigen::MatrixXd true_variance(const PreparedDgp& model, const Design& design) {
    const auto& memory = model.spec.time_memory;
    if (memory.family == TimeFamily::None) return true_variance_cs(design, model.omega);
    const auto m = model.loadings.cols();
    const Autocovariances ac = autocovariances(memory, m, design.n_periods() - 1);
    if (model.has_factors()) return true_variance_mixed(design, memory.family, ac, model.loadings, model.sigma).matrix;
    return true_variance_mixed(design, memory.family, ac, Eigen::MatrixXd(model.n, 0), model.sigma).matrix;
}

// ---------------------------------------------------------------------------

void McConfig::validate() const {
    dgp.validate();
    if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "grid is empty");
    for (const auto& c : grid) {
        if (c.n < 2 || c.t < 1)
            throw Error(ErrorKind::InvalidArgument, "grid cell (" + std::to_string(c.n) + "," + std::to_string(c.t) +
                                                        ") needs N >= 2 and T >= 1");
        if (estimator == EstimatorKind::FixedEffect && c.t < 2)
            throw Error(ErrorKind::InvalidArgument, "fixed effects need T >= 2");
    }
    if (reps < min_reps) throw Error(ErrorKind::InvalidArgument, "reps must be >= " + std::to_string(min_reps));
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be in (0, 1)");
    if (!(failure_tolerance >= 0.0 && failure_tolerance < 1.0))
        throw Error(ErrorKind::InvalidArgument, "failure_tolerance must be in [0, 1)");
    if (threads < 1) throw Error(ErrorKind::InvalidArgument, "threads must be >= 1");
}

const CellStats& McReport::cell(Eigen::Index n, Eigen::Index t) const {
    for (const auto& c : cells)
        if (c.cell.n == n && c.cell.t == t) return c;
    throw Error(ErrorKind::InvalidArgument, "no cell (" + std::to_string(n) + "," + std::to_string(t) + ") in report");
}

std::optional<RateFit> McReport::rate(const std::string& axis) const {
    for (const auto& r : rates)
        if (r.axis == axis) return r;
    return std::nullopt;
}

namespace {

struct RepResult {
    bool ok = false;
    std::string error;
    Eigen::VectorXd beta;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd truth;
    bool reject = false;
    Eigen::VectorXd covered;
    bool psd_repaired = false;
};

struct CellSetup {
    std::shared_ptr<const PreparedDgp> model;
    std::optional<std::vector<Eigen::MatrixXd>> design;
    Eigen::MatrixXd fixed_truth;  ///< empty unless the design is fixed
    std::string setup_error;
};

CellStats aggregate(const McConfig& cfg, const GridCell& cell, const CellSetup& setup,
                    const std::vector<RepResult>& reps) {
    const auto k = cfg.dgp.k();
    const Eigen::VectorXd& beta = cfg.dgp.beta;
    CellStats s;
    s.cell = cell;
    s.reps = static_cast<Eigen::Index>(reps.size());
    s.h_n = setup.model ? setup.model->h_n : std::numeric_limits<double>::quiet_NaN();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    Eigen::Index ok = 0;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(k), sq = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd cov_sum = Eigen::VectorXd::Zero(k), true_sum = Eigen::VectorXd::Zero(k),
                    covered = Eigen::VectorXd::Zero(k);
    double err_sq = 0.0, rejects = 0.0, repaired = 0.0, cov_err = 0.0, true_norm = 0.0;
    bool have_truth = true;
    for (const auto& r : reps) {
        if (!r.ok) {
            ++s.failures;
            ++s.failure_kinds[r.error];
            continue;
        }
        ++ok;
        const Eigen::VectorXd d = r.beta - beta;
        sum += r.beta;
        sq += d.cwiseProduct(d);
        err_sq += d.squaredNorm();
        rejects += r.reject ? 1.0 : 0.0;
        repaired += r.psd_repaired ? 1.0 : 0.0;
        covered += r.covered;
        cov_sum += r.cov.diagonal();
        if (r.truth.size() == 0) {
            have_truth = false;
        } else {
            true_sum += r.truth.diagonal();
            cov_err += (r.cov - r.truth).squaredNorm();
            true_norm += r.truth.norm();
        }
    }
    s.failed = static_cast<double>(s.failures) > cfg.failure_tolerance * static_cast<double>(s.reps);
    if (ok == 0) {
        s.mean_beta = s.sd_beta = s.bias = s.mc_se = s.rmse = s.coverage = s.mean_cov = Eigen::VectorXd::Constant(k, nan);
        s.rmse_total = s.size = s.rel_rmse_cov = s.psd_repaired_rate = nan;
        s.failed = true;
        return s;
    }
    const double r = static_cast<double>(ok);
    s.mean_beta = sum / r;
    s.bias = s.mean_beta - beta;
    s.sd_beta.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        double v = 0.0;
        for (const auto& rep : reps)
            if (rep.ok) v += (rep.beta(j) - s.mean_beta(j)) * (rep.beta(j) - s.mean_beta(j));
        s.sd_beta(j) = ok > 1 ? std::sqrt(v / (r - 1.0)) : nan;
    }
    s.mc_se = s.sd_beta / std::sqrt(r);
    s.rmse = (sq / r).cwiseSqrt();
    s.rmse_total = std::sqrt(err_sq / r);
    s.size = rejects / r;
    s.coverage = covered / r;
    s.psd_repaired_rate = repaired / r;
    s.mean_cov = cov_sum / r;
    if (have_truth && cfg.compute_true_variance) {
        s.mean_true = true_sum / r;
        s.var_ratio = s.mean_cov.cwiseQuotient(s.mean_true);
        s.rel_rmse_cov = std::sqrt(cov_err / r) / (true_norm / r);
    } else {
        s.rel_rmse_cov = nan;
    }
    return s;
}

}  // namespace

McReport run_mc(const McConfig& config) {
    config.validate();
    const auto cells = config.grid.size();
    const auto reps = static_cast<std::size_t>(config.reps);
    const auto k = config.dgp.k();

    // Per-cell setup: model, optional fixed design and its exact variance.
    std::vector<CellSetup> setup(cells);
    parallel_for(cells, config.threads, [&](std::size_t c) {
        const auto& cell = config.grid[c];
        auto& st = setup[c];
        st.model = prepare(config.dgp, cell.n);
        if (config.dgp.fixed_design) {
            Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(cell.n), static_cast<std::uint64_t>(cell.t),
                                kDesignStream));
            st.design = gen_design(*st.model, cell.t, rng);
            if (config.compute_true_variance) {
                try {
                    PanelData shell(Eigen::MatrixXd::Zero(cell.n, cell.t), *st.design);
                    st.fixed_truth = true_variance(*st.model, prepare_design(shell, config.estimator));
                } catch (const Error& e) {
                    st.setup_error = std::string(e.name());
                }
            }
        }
    });

    const LinearRestriction joint = LinearRestriction::all_equal_to(config.dgp.beta);
    const double z_crit = normal_critical(config.alpha / 2.0);
    std::vector<RepResult> results(cells * reps);
    parallel_for(cells * reps, config.threads, [&](std::size_t idx) {
        const std::size_t c = idx / reps;
        const std::size_t rep = idx % reps;
        const auto& cell = config.grid[c];
        const auto& st = setup[c];
        RepResult& out = results[idx];
        if (!st.setup_error.empty()) {
            out.error = st.setup_error;
            return;
        }
        try {
            const auto seed = derive_seed(config.seed, static_cast<std::uint64_t>(cell.n),
                                          static_cast<std::uint64_t>(cell.t), rep);
            const GeneratedPanel gp = gen_panel(st.model, cell.t, seed, st.design ? &*st.design : nullptr);
            const FitResult f = fit(gp.panel, config.estimator);
            const WeightBlocks w = weight_blocks(f);
            const RobustCov cov = estimate_cov(f, w, config.cov);
            const TestResult test = wald(f.beta_hat, cov, joint);
            out.beta = f.beta_hat;
            out.cov = cov.matrix;
            out.psd_repaired = cov.psd_repaired;
            out.reject = test.p_value < config.alpha;
            out.covered.resize(k);
            for (Eigen::Index j = 0; j < k; ++j) {
                const double se = std::sqrt(std::max(cov.matrix(j, j), 0.0));
                out.covered(j) = std::abs(f.beta_hat(j) - config.dgp.beta(j)) <= z_crit * se ? 1.0 : 0.0;
            }
            if (config.compute_true_variance)
                out.truth = st.design ? st.fixed_truth : true_variance(*st.model, f.design);
            out.ok = true;
        } catch (const Error& e) {
            out = RepResult{};
            out.error = std::string(e.name());
        }
    });

    McReport report;
    report.config = config;
    report.cells.reserve(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        const std::vector<RepResult> slice(results.begin() + static_cast<std::ptrdiff_t>(c * reps),
                                           results.begin() + static_cast<std::ptrdiff_t>((c + 1) * reps));
        report.cells.push_back(aggregate(config, config.grid[c], setup[c], slice));
    }
    report.rates = fit_rates(report.cells);
    return report;
}

std::vector<RateFit> fit_rates(const std::vector<CellStats>& cells) {
    std::vector<RateFit> out;
    struct Axis {
        const char* name;
        std::function<double(const GridCell&)> value;
        std::function<bool(const std::vector<const CellStats*>&)> usable;
    };
    auto constant = [](const std::vector<const CellStats*>& use, auto get) {
        for (const auto* c : use)
            if (get(c->cell) != get(use.front()->cell)) return false;
        return true;
    };
    auto get_n = [](const GridCell& g) { return static_cast<double>(g.n); };
    auto get_t = [](const GridCell& g) { return static_cast<double>(g.t); };
    auto get_nt = [](const GridCell& g) { return static_cast<double>(g.n) * static_cast<double>(g.t); };
    const Axis axes[] = {
        {"T", get_t, [&](const auto& u) { return constant(u, get_n) && !constant(u, get_t); }},
        {"N", get_n, [&](const auto& u) { return constant(u, get_t) && !constant(u, get_n); }},
        {"NT", get_nt, [&](const auto& u) { return !constant(u, get_nt); }},
    };
    std::vector<const CellStats*> use;
    for (const auto& c : cells)
        if (!c.failed && c.rmse_total > 0.0 && std::isfinite(c.rmse_total)) use.push_back(&c);
    if (use.size() < 2) return out;
    for (const auto& axis : axes) {
        if (!axis.usable(use)) continue;
        const auto p = static_cast<double>(use.size());
        double mx = 0.0, my = 0.0;
        for (const auto* c : use) {
            mx += std::log(axis.value(c->cell));
            my += std::log(c->rmse_total);
        }
        mx /= p;
        my /= p;
        double sxx = 0.0, sxy = 0.0;
        for (const auto* c : use) {
            const double dx = std::log(axis.value(c->cell)) - mx;
            sxx += dx * dx;
            sxy += dx * (std::log(c->rmse_total) - my);
        }
        RateFit fit;
        fit.axis = axis.name;
        fit.points = static_cast<Eigen::Index>(use.size());
        fit.slope = sxy / sxx;
        if (use.size() > 2) {
            double ssr = 0.0;
            for (const auto* c : use) {
                const double e = std::log(c->rmse_total) - my - fit.slope * (std::log(axis.value(c->cell)) - mx);
                ssr += e * e;
            }
            fit.std_error = std::sqrt(ssr / (p - 2.0) / sxx);
            const boost::math::students_t dist(p - 2.0);
            const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
            fit.ci_low = fit.slope - q * fit.std_error;
            fit.ci_high = fit.slope + q * fit.std_error;
        } else {
            fit.std_error = std::numeric_limits<double>::quiet_NaN();
            fit.ci_low = fit.ci_high = std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(fit);
    }
    return out;
}

}  // namespace xsdep
