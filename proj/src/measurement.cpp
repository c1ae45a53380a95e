#include "mvcool/measurement.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>

#include "mvcool/fit.hpp"
#include "mvcool/protocol.hpp"

namespace mvcool {

RadialModes radial_from_axial_temperature(double nbar_axial, double omega_axial,
                                          RadialModes modes) {
    // kT from the axial Bose occupation, then the exact occupation per mode.
    if (nbar_axial <= 0.0) {
        modes.nbar = {0.0, 0.0};
        return modes;
    }
    const double beta_axial = std::log(1.0 + 1.0 / nbar_axial);  // hbar w_ax / kT
    for (int j = 0; j < 2; ++j) {
        const double x = beta_axial * modes.omega[j] / omega_axial;
        modes.nbar[j] = 1.0 / std::expm1(x);
    }
    return modes;
}

double laguerre(int n, double x) {
    if (n == 0) return 1.0;
    double prev = 1.0, cur = 1.0 - x;
    for (int k = 1; k < n; ++k) {
        double next = ((2.0 * k + 1.0 - x) * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    return cur;
}

double laguerre_assoc(int n, double x) {
    if (n == 0) return 1.0;
    double prev = 1.0, cur = 2.0 - x;
    for (int k = 1; k < n; ++k) {
        double next = ((2.0 * k + 2.0 - x) * cur - (k + 1.0) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    return cur;
}

double rabi_scale(int n1, int n2, const RadialModes& radial) {
    const double x1 = radial.eta[0] * radial.eta[0];
    const double x2 = radial.eta[1] * radial.eta[1];
    return std::exp(-0.5 * (x1 + x2)) * laguerre(n1, x1) * laguerre(n2, x2);
}

double sample_radial_rabi_scale(const RadialModes& radial, CounterRng& rng) {
    const int n1 = rng.thermal_occupation(radial.nbar[0]);
    const int n2 = rng.thermal_occupation(radial.nbar[1]);
    return rabi_scale(n1, n2, radial);
}

namespace {

// Per-mode factors e^{-x/2} L_n(x) with thermal weights, enumerated out to
// 1e-7 tail coverage.
void mode_factors(double nbar, double eta, std::vector<double>& value,
                  std::vector<double>& weight) {
    const double x = eta * eta;
    if (nbar <= 0.0) {
        value = {std::exp(-0.5 * x)};
        weight = {1.0};
        return;
    }
    const double r = nbar / (nbar + 1.0);
    const int n_max = static_cast<int>(std::ceil(std::log(1e-7) / std::log(r))) + 1;
    value.resize(n_max);
    weight.resize(n_max);
    const double damp = std::exp(-0.5 * x);
    double p = 1.0 / (nbar + 1.0), total = 0.0;
    double lprev = 1.0, lcur = 1.0 - x;
    for (int n = 0; n < n_max; ++n) {
        value[n] = damp * (n == 0 ? 1.0 : lcur);
        weight[n] = p;
        total += p;
        p *= r;
        if (n >= 1) {
            double lnext = ((2.0 * n + 1.0 - x) * lcur - n * lprev) / (n + 1.0);
            lprev = lcur;
            lcur = lnext;
        }
    }
    for (auto& w : weight) w /= total;
}

} // namespace

std::vector<std::pair<double, double>> radial_scale_grid(const RadialModes& radial,
                                                         int nodes_per_mode) {
    // Exact product distribution of the two mode factors, collapsed onto
    // value bins (weighted bin means, so low moments are preserved).
    std::vector<double> v1, w1, v2, w2;
    mode_factors(radial.nbar[0], radial.eta[0], v1, w1);
    mode_factors(radial.nbar[1], radial.eta[1], v2, w2);

    double lo = 1e300, hi = -1e300;
    for (double a : v1)
        for (double b : v2) {
            lo = std::min(lo, a * b);
            hi = std::max(hi, a * b);
        }
    const int bins = std::max(64, nodes_per_mode * nodes_per_mode);
    if (hi - lo < 1e-12) return {{0.5 * (lo + hi), 1.0}};
    std::vector<double> mass(bins, 0.0), mean(bins, 0.0);
    const double scale = bins / (hi - lo);
    for (size_t i = 0; i < v1.size(); ++i)
        for (size_t j = 0; j < v2.size(); ++j) {
            const double r = v1[i] * v2[j];
            const double w = w1[i] * w2[j];
            int k = std::min(bins - 1, static_cast<int>((r - lo) * scale));
            mass[k] += w;
            mean[k] += w * r;
        }
    std::vector<std::pair<double, double>> grid;
    for (int k = 0; k < bins; ++k)
        if (mass[k] > 1e-14) grid.push_back({mean[k] / mass[k], mass[k]});
    return grid;
}

namespace {

std::pair<double, double> binomial_ci(double p, int shots) {
    if (shots <= 0) return {p, p};
    const double half = 1.96 * std::sqrt(std::max(p * (1.0 - p), 1e-12) / shots);
    return {std::max(0.0, p - half), std::min(1.0, p + half)};
}

// All-order first-sideband drive generator: the anti-Hermitian A^dag - A with
// <n+1|A^dag|n> = e^{-eta^2/2} L_n^{(1)}(eta^2)/sqrt(n+1); reduces to
// a^dag - a as eta -> 0. Stored as the eigensystem of i(A^dag - A).
struct SdfGenerator {
    Eigen::VectorXd evals;
    Matrix evecs;

    SdfGenerator(int dim, double eta) {
        Matrix araise = Matrix::Zero(dim, dim);
        const double x = eta * eta;
        for (int n = 0; n + 1 < dim; ++n)
            araise(n + 1, n) =
                std::exp(-0.5 * x) * laguerre_assoc(n, x) / std::sqrt(n + 1.0);
        Matrix herm = cplx(0.0, 1.0) * (araise - araise.adjoint());
        Eigen::SelfAdjointEigenSolver<Matrix> es(herm);
        evals = es.eigenvalues();
        evecs = es.eigenvectors();
    }
};

// The eigendecomposition dominates repeated simulate/fit calls; memoize per
// (dim, eta).
std::shared_ptr<const SdfGenerator> sdf_generator(int dim, double eta) {
    static std::mutex mu;
    static std::map<std::pair<int, double>, std::shared_ptr<const SdfGenerator>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_pair(dim, eta);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto gen = std::make_shared<const SdfGenerator>(dim, eta);
    if (cache.size() > 16) cache.clear();
    cache[key] = gen;
    return gen;
}

} // namespace

ReadoutCurve simulate_readout(const FockState& state, const std::vector<double>& alphas,
                              const RadialModes& radial, ReadoutOrder order, int shots,
                              CounterRng& rng, double eta_axial) {
    ReadoutCurve curve;
    curve.alphas = alphas;
    curve.shots = shots;

    std::vector<double> ideal(alphas.size(), 0.0);
    if (order == ReadoutOrder::Leading) {
        std::vector<double> chi = char_real_axis(state, alphas);
        for (size_t i = 0; i < alphas.size(); ++i) ideal[i] = 0.5 * (1.0 + chi[i]);
    }

    std::shared_ptr<const SdfGenerator> gen;
    Vector diag;
    if (order == ReadoutOrder::Full) {
        gen = sdf_generator(state.dim(), eta_axial);
        Matrix basis = gen->evecs.adjoint() * state.rho * gen->evecs;
        diag = basis.diagonal();
    }
    // P(+Z) for drive scale R: (1 + Re Tr(rho exp(-alpha R (A^dag - A))))/2.
    auto prob_full = [&](double alpha, double scale) {
        cplx val = 0.0;
        for (int k = 0; k < state.dim(); ++k)
            val += std::polar(1.0, alpha * scale * gen->evals(k)) * diag(k);
        return std::clamp(0.5 * (1.0 + val.real()), 0.0, 1.0);
    };

    for (size_t i = 0; i < alphas.size(); ++i) {
        double p;
        if (shots > 0) {
            int hits = 0;
            for (int sample = 0; sample < shots; ++sample) {
                double ps;
                if (order == ReadoutOrder::Full)
                    ps = prob_full(alphas[i], sample_radial_rabi_scale(radial, rng));
                else
                    ps = std::clamp(ideal[i], 0.0, 1.0);
                if (rng.uniform() < ps) ++hits;
            }
            p = static_cast<double>(hits) / shots;
        } else {
            if (order == ReadoutOrder::Full) {
                p = 0.0;
                for (const auto& [scale, w] : radial_scale_grid(radial))
                    p += w * prob_full(alphas[i], scale);
            } else {
                p = std::clamp(ideal[i], 0.0, 1.0);
            }
        }
        curve.probs.push_back(p);
        curve.ci.push_back(binomial_ci(p, shots));
    }
    return curve;
}

namespace {

double sigma_for(double p, int shots) {
    if (shots <= 0) return 1e-3;
    return std::max(std::sqrt(std::max(p * (1.0 - p), 0.0) / shots), 0.5 / shots);
}

// Linearized width estimate for the fit seed.
double seed_nbar(const ReadoutCurve& curve) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < curve.alphas.size(); ++i) {
        const double y = 2.0 * curve.probs[i] - 1.0;
        if (y < 0.1 || y > 0.95) continue;
        const double x = curve.alphas[i] * curve.alphas[i];
        num += x * (-std::log(y));
        den += x * x;
    }
    if (den <= 0.0) return 1.0;
    return std::max(0.01, num / den - 0.5);
}

} // namespace

NbarFit fit_nbar(const ReadoutCurve& curve, NbarModel model, const RadialModes& radial,
                 double eta_axial) {
    const size_t npts = curve.alphas.size();
    if (npts < 3) throw DegenerateData("fit_nbar: too few points");
    double lo = *std::min_element(curve.probs.begin(), curve.probs.end());
    double hi = *std::max_element(curve.probs.begin(), curve.probs.end());
    if (hi - lo < 0.02)
        throw DegenerateData("fit_nbar: flat readout curve (contrast < 0.02)");

    const double nbar0 = seed_nbar(curve);

    std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> residuals;
    if (model == NbarModel::Gaussian) {
        residuals = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& r) {
            const double width = std::max(theta(0), 0.0) + 0.5;
            r.resize(npts);
            for (size_t i = 0; i < npts; ++i) {
                const double m =
                    0.5 * (1.0 + std::exp(-curve.alphas[i] * curve.alphas[i] * width));
                r(i) = (curve.probs[i] - m) / sigma_for(curve.probs[i], curve.shots);
            }
        };
    } else {
        // Deterministic radial quadrature around the all-order drive model.
        // Dimension quantized so repeated fits share one eigendecomposition.
        int dim = default_fock_dim(std::max(2.5 * nbar0, 4.0));
        dim = ((dim + 63) / 64) * 64;
        auto gen = sdf_generator(dim, eta_axial);
        auto weights = std::make_shared<Eigen::MatrixXd>(dim, dim);
        for (int n = 0; n < dim; ++n)
            for (int k = 0; k < dim; ++k) (*weights)(n, k) = std::norm(gen->evecs(n, k));
        auto rgrid = radial_scale_grid(radial);
        const double nbar_cap = dim / 16.0 - 1.0;


        residuals = [=, &curve](const Eigen::VectorXd& theta, Eigen::VectorXd& r) {
            const double nbar = std::clamp(theta(0), 1e-4, nbar_cap);
            // omega_k = sum_n p_n |V_nk|^2
            Eigen::VectorXd pvec(dim);
            const double ratio = nbar / (nbar + 1.0);
            double p = 1.0 / (nbar + 1.0), total = 0.0;
            for (int n = 0; n < dim; ++n) {
                pvec(n) = p;
                total += p;
                p *= ratio;
            }
            pvec /= total;
            Eigen::VectorXd omega = weights->transpose() * pvec;
            r.resize(npts);
            for (size_t i = 0; i < npts; ++i) {
                double model_p = 0.0;
                for (const auto& [scale, w] : rgrid) {
                    double re = 0.0;
                    const double theta_i = curve.alphas[i] * scale;
                    for (int k = 0; k < dim; ++k)
                        re += std::cos(theta_i * gen->evals(k)) * omega(k);
                    model_p += w * 0.5 * (1.0 + re);
                }
                r(i) = (curve.probs[i] - model_p) / sigma_for(curve.probs[i], curve.shots);
            }
        };
    }

    // Deterministic coarse grid scan seeds the damped least squares.
    Eigen::VectorXd init(1), rtmp;
    double best = 0.0, best_chi2 = 0.0;
    bool first = true;
    for (double factor : {0.4, 0.55, 0.7, 0.85, 1.0, 1.2, 1.45, 1.75, 2.1}) {
        init << nbar0 * factor;
        residuals(init, rtmp);
        const double chi2 = rtmp.squaredNorm();
        if (first || chi2 < best_chi2) {
            best = init(0);
            best_chi2 = chi2;
            first = false;
        }
    }
    init << best;
    LmResult lm = lm_fit(residuals, init);
    if (!lm.converged) throw FitDidNotConverge("fit_nbar: LM did not converge");
    NbarFit fit;
    fit.nbar = std::max(0.0, lm.params(0));
    fit.ci95 = 1.96 * std::sqrt(std::max(lm.covariance(0, 0), 0.0));
    fit.chi2 = lm.chi2;
    fit.iterations = lm.iterations;
    return fit;
}

double DecayEnvelope::operator()(double t) const {
    double logenv = 0.0;
    if (tau_exp > 0.0) logenv -= t / tau_exp;
    if (tau_gauss > 0.0) logenv -= (t / tau_gauss) * (t / tau_gauss);
    return std::exp(logenv);
}

namespace {

double bsb_rabi(int n, double rabi0, double eta) {
    if (eta <= 0.0) return rabi0 * std::sqrt(n + 1.0);
    const double x = eta * eta;
    return rabi0 * laguerre_assoc(n, x) / std::sqrt(n + 1.0);
}

} // namespace

BsbCurve simulate_bsb(const FockState& state, const std::vector<double>& times,
                      double rabi0, const RadialModes& radial, const DecayEnvelope& decay,
                      CounterRng& rng, int shots, double eta_axial) {
    BsbCurve curve;
    curve.times = times;
    curve.shots = shots;
    curve.rabi0 = rabi0;
    curve.eta = eta_axial;

    const int dim = state.dim();
    std::vector<double> pops(dim), freqs(dim);
    for (int n = 0; n < dim; ++n) {
        pops[n] = std::max(0.0, state.rho(n, n).real());
        freqs[n] = bsb_rabi(n, rabi0, eta_axial);
    }

    auto prob_at = [&](double t, double scale) {
        double osc = 0.0;
        for (int n = 0; n < dim; ++n) osc += pops[n] * std::cos(freqs[n] * scale * t);
        return std::clamp(0.5 * (1.0 + decay(t) * osc), 0.0, 1.0);
    };

    auto rgrid = radial_scale_grid(radial);
    for (double t : times) {
        double p;
        if (shots > 0) {
            int hits = 0;
            for (int sample = 0; sample < shots; ++sample) {
                const double ps = prob_at(t, sample_radial_rabi_scale(radial, rng));
                if (rng.uniform() < ps) ++hits;
            }
            p = static_cast<double>(hits) / shots;
        } else {
            p = 0.0;
            for (const auto& [scale, w] : rgrid) p += w * prob_at(t, scale);
        }
        curve.probs.push_back(p);
        curve.ci.push_back(binomial_ci(p, shots));
    }
    return curve;
}

namespace {

// Thermal-shaped cosine average of the population above the fitted levels:
// the coherent ring-down a high-energy tail contributes near t = 0.
std::vector<double> tail_kernel(const BsbCurve& curve, int max_level, double nbar_tail,
                                const std::vector<double>& times) {
    const double r = nbar_tail / (nbar_tail + 1.0);
    const int n_max = std::max(max_level + 40,
                               static_cast<int>(std::ceil(16.0 * (nbar_tail + 1.0))));
    std::vector<double> weight(n_max + 1, 0.0);
    double total = 0.0;
    double p = std::pow(r, max_level + 1);
    for (int n = max_level + 1; n <= n_max; ++n) {
        weight[n] = p;
        total += p;
        p *= r;
    }
    std::vector<double> kernel(times.size(), 0.0);
    if (total <= 0.0) return kernel;
    for (size_t i = 0; i < times.size(); ++i) {
        double acc = 0.0;
        for (int n = max_level + 1; n <= n_max; ++n)
            acc += weight[n] * std::cos(bsb_rabi(n, curve.rabi0, curve.eta) * times[i]);
        kernel[i] = acc / total;
    }
    return kernel;
}

struct TailDesign {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
};

// Populations sum to one exactly: the tail coefficient is eliminated via
// rho_tail = 1 - sum(rho_n), leaving an NNLS problem in the low levels.
TailDesign tail_design(const BsbCurve& curve, int max_level, double rate_exp,
                       double rate_gauss, const std::vector<double>& kernel,
                       double t_min) {
    std::vector<int> rows;
    for (size_t i = 0; i < curve.times.size(); ++i)
        if (curve.times[i] >= t_min) rows.push_back(static_cast<int>(i));
    TailDesign d;
    d.A.resize(rows.size(), max_level + 1);
    d.b.resize(rows.size());
    for (size_t k = 0; k < rows.size(); ++k) {
        const int i = rows[k];
        const double t = curve.times[i];
        const double env = std::exp(-rate_exp * t - rate_gauss * rate_gauss * t * t);
        const double sigma = sigma_for(curve.probs[i], curve.shots);
        for (int n = 0; n <= max_level; ++n)
            d.A(k, n) = 0.5 * env *
                        (std::cos(bsb_rabi(n, curve.rabi0, curve.eta) * t) - kernel[i]) /
                        sigma;
        d.b(k) = (curve.probs[i] - 0.5 - 0.5 * env * kernel[i]) / sigma;
    }
    return d;
}

double tail_chi2(const BsbCurve& curve, int max_level, double rate_exp, double rate_gauss,
                 const std::vector<double>& kernel, double t_min,
                 Eigen::VectorXd* pops_out) {
    TailDesign d = tail_design(curve, max_level, rate_exp, rate_gauss, kernel, t_min);
    Eigen::VectorXd pops = nnls(d.A, d.b);
    if (pops_out) *pops_out = pops;
    return (d.A * pops - d.b).squaredNorm();
}

TailReport fit_tails_once(const BsbCurve& curve, int max_level, double skip_periods) {
    if (curve.times.size() < static_cast<size_t>(max_level + 4))
        throw DegenerateData("fit_tails: too few points for requested levels");
    if (curve.rabi0 <= 0.0) throw DegenerateData("fit_tails: curve.rabi0 not set");
    const double t_min = skip_periods * 2.0 * 3.14159265358979323846 / curve.rabi0;
    const double t_span =
        *std::max_element(curve.times.begin(), curve.times.end()) -
        *std::min_element(curve.times.begin(), curve.times.end());
    if (t_span <= t_min) throw DegenerateData("fit_tails: curve shorter than skip window");

    // Coordinate descent: envelope rates and the tail temperature outside,
    // non-negative least squares for the populations inside.
    const double rate_hi = 8.0 / std::max(t_span, 1e-12);
    double rate_exp = 0.1 / std::max(t_span, 1e-12);
    double rate_gauss = rate_exp;
    double nbar_tail = std::max(4.0 * (max_level + 1.0), 20.0);
    std::vector<double> kernel = tail_kernel(curve, max_level, nbar_tail, curve.times);
    for (int sweep = 0; sweep < 6; ++sweep) {
        rate_exp = golden_section_min(
            [&](double re) {
                return tail_chi2(curve, max_level, re, rate_gauss, kernel, t_min, nullptr);
            },
            0.0, rate_hi, 1e-4 / t_span);
        rate_gauss = golden_section_min(
            [&](double rg) {
                return tail_chi2(curve, max_level, rate_exp, rg, kernel, t_min, nullptr);
            },
            0.0, rate_hi, 1e-4 / t_span);
        const double log_lo = std::log(max_level + 2.0);
        const double log_hi = std::log(400.0);
        const double best_log = golden_section_min(
            [&](double lg) {
                auto kern = tail_kernel(curve, max_level, std::exp(lg), curve.times);
                return tail_chi2(curve, max_level, rate_exp, rate_gauss, kern, t_min,
                                 nullptr);
            },
            log_lo, log_hi, 1e-3);
        nbar_tail = std::exp(best_log);
        kernel = tail_kernel(curve, max_level, nbar_tail, curve.times);
    }
    Eigen::VectorXd pops;
    const double chi2 =
        tail_chi2(curve, max_level, rate_exp, rate_gauss, kernel, t_min, &pops);
    if (!std::isfinite(chi2)) throw FitDidNotConverge("fit_tails: non-finite objective");

    TailReport report;
    for (int n = 0; n <= max_level; ++n) report.populations.push_back(pops(n));
    report.tail_mass = std::max(0.0, 1.0 - pops.sum());
    report.tau_exp = rate_exp > 0 ? 1.0 / rate_exp : 0.0;
    report.tau_gauss = rate_gauss > 0 ? 1.0 / rate_gauss : 0.0;
    report.nbar_tail = nbar_tail;

    const double f_hi = bsb_rabi(max_level, curve.rabi0, curve.eta);
    const double f_lo = max_level > 0 ? bsb_rabi(max_level - 1, curve.rabi0, curve.eta)
                                      : curve.rabi0;
    report.identifiability_warning =
        std::abs(f_hi - f_lo) * t_span < 3.14159265358979323846;
    return report;
}

} // namespace

TailReport fit_tails(const BsbCurve& curve, int max_level, int bootstrap,
                     std::uint64_t ci_seed, double skip_periods) {
    TailReport report = fit_tails_once(curve, max_level, skip_periods);

    // Parametric bootstrap for the tail-mass CI.
    if (bootstrap > 0 && curve.shots > 0) {
        DecayEnvelope env{report.tau_exp, report.tau_gauss};
        std::vector<double> kernel =
            tail_kernel(curve, max_level, report.nbar_tail, curve.times);
        std::vector<double> fitted(curve.times.size());
        for (size_t i = 0; i < curve.times.size(); ++i) {
            double osc = report.tail_mass * kernel[i];
            for (size_t n = 0; n < report.populations.size(); ++n)
                osc += report.populations[n] *
                       std::cos(bsb_rabi(static_cast<int>(n), curve.rabi0, curve.eta) *
                                curve.times[i]);
            fitted[i] = std::clamp(0.5 + 0.5 * env(curve.times[i]) * osc, 0.0, 1.0);
        }
        std::vector<double> tails;
        CounterRng rng(ci_seed, {0xb007});
        for (int b = 0; b < bootstrap; ++b) {
            BsbCurve resampled = curve;
            for (size_t i = 0; i < fitted.size(); ++i)
                resampled.probs[i] =
                    static_cast<double>(rng.binomial(curve.shots, fitted[i])) / curve.shots;
            try {
                tails.push_back(fit_tails_once(resampled, max_level, skip_periods).tail_mass);
            } catch (const NumericalError&) {
                // skip pathological resamples
            }
        }
        if (tails.size() >= 8) {
            std::sort(tails.begin(), tails.end());
            const auto pick = [&](double q) {
                const double pos = q * (tails.size() - 1);
                const size_t i = static_cast<size_t>(pos);
                const double w = pos - i;
                return i + 1 < tails.size() ? (1.0 - w) * tails[i] + w * tails[i + 1]
                                            : tails[i];
            };
            report.ci = {pick(0.025), pick(0.975)};
        }
    }
    return report;
}

} // namespace mvcool
