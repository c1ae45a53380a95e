#include "mvcool/protocol.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "mvcool/fit.hpp"

namespace mvcool {

namespace {
constexpr double kPi = 3.14159265358979323846;
const cplx kI(0.0, 1.0);
}

ProtocolWorkspace::ProtocolWorkspace(int dim) : dim_(dim) {
    Eigen::SelfAdjointEigenSolver<Matrix> esq(position_op(dim));
    q_evals_ = esq.eigenvalues();
    q_evecs_ = esq.eigenvectors();
    Eigen::SelfAdjointEigenSolver<Matrix> esp(momentum_op(dim));
    p_evals_ = esp.eigenvalues();
    p_evecs_ = esp.eigenvectors();
}

KrausPair ProtocolWorkspace::kraus(Quadrature quad, double epsilon, double alpha) const {
    if (epsilon * epsilon > dim_ / 8.0 || alpha * alpha > dim_ / 8.0)
        throw TruncationTooSmall("build_kraus: displacement amplitude too large for dim");

    const bool pos = (quad == Quadrature::Position);
    const Eigen::VectorXd& evals = pos ? q_evals_ : p_evals_;
    const Matrix& evecs = pos ? q_evecs_ : p_evecs_;

    // cos(2 eps x +- pi/4) applied through the quadrature eigenbasis.
    auto cos_op = [&](double phase) {
        Vector d(dim_);
        for (int k = 0; k < dim_; ++k) d(k) = std::cos(2.0 * epsilon * evals(k) + phase);
        return Matrix(evecs * d.asDiagonal() * evecs.adjoint());
    };
    // Correction displacement in the perpendicular quadrature, built from the
    // same eigensystem: exp(-+2i alpha p) = V_p exp(-+2i alpha lambda) V_p^dag,
    // and exp(-+2i alpha q) likewise for the momentum round.
    const Eigen::VectorXd& corr_evals = pos ? p_evals_ : q_evals_;
    const Matrix& corr_evecs = pos ? p_evecs_ : q_evecs_;
    auto corr_op = [&](double sign) {
        // Position round: D(+-alpha) = exp(-+2i alpha p), sign = +-1.
        // Momentum round: D(-+i alpha) = exp(-+2i alpha q) for outcome +-.
        Vector d(dim_);
        for (int k = 0; k < dim_; ++k)
            d(k) = std::polar(1.0, -2.0 * sign * alpha * corr_evals(k));
        return Matrix(corr_evecs * d.asDiagonal() * corr_evecs.adjoint());
    };

    KrausPair pair;
    pair.quadrature = quad;
    pair.epsilon = epsilon;
    pair.alpha = alpha;
    if (pos) {
        pair.k_plus = corr_op(+1.0) * cos_op(kPi / 4.0);
        pair.k_minus = corr_op(-1.0) * cos_op(-kPi / 4.0);
    } else {
        pair.k_plus = corr_op(+1.0) * cos_op(-kPi / 4.0);
        pair.k_minus = corr_op(-1.0) * cos_op(kPi / 4.0);
    }
    return pair;
}

Matrix ProtocolWorkspace::measurement_observable(double epsilon) const {
    Vector d(dim_);
    for (int k = 0; k < dim_; ++k) d(k) = std::sin(4.0 * epsilon * q_evals_(k));
    return q_evecs_ * d.asDiagonal() * q_evecs_.adjoint();
}

KrausPair build_kraus(Quadrature quad, double epsilon, double alpha, int dim) {
    return ProtocolWorkspace(dim).kraus(quad, epsilon, alpha);
}

double completeness_defect(const KrausPair& pair, int block) {
    Matrix sum = pair.k_plus.adjoint() * pair.k_plus + pair.k_minus.adjoint() * pair.k_minus;
    sum -= Matrix::Identity(sum.rows(), sum.cols());
    return sum.topLeftCorner(block, block).cwiseAbs().maxCoeff();
}

std::pair<double, double> outcome_probabilities(const KrausPair& pair,
                                                const FockState& state) {
    const double p_plus = (pair.k_plus * state.rho * pair.k_plus.adjoint()).trace().real();
    const double p_minus = (pair.k_minus * state.rho * pair.k_minus.adjoint()).trace().real();
    return {p_plus, p_minus};
}

FockState apply_half_round(const FockState& state, const KrausPair& pair) {
    Matrix out = pair.k_plus * state.rho * pair.k_plus.adjoint() +
                 pair.k_minus * state.rho * pair.k_minus.adjoint();
    return {std::move(out)};
}

FockState apply_round(const FockState& state, const ProtocolWorkspace& ws, double eps_q,
                      double alpha_q, double eps_p, double alpha_p,
                      double tail_threshold) {
    FockState mid = apply_half_round(state, ws.kraus(Quadrature::Position, eps_q, alpha_q));
    FockState out = apply_half_round(mid, ws.kraus(Quadrature::Momentum, eps_p, alpha_p));
    if (out.tail_mass() > tail_threshold)
        throw TruncationTooSmall("apply_round: post-state tail mass " +
                                 std::to_string(out.tail_mass()) + " exceeds threshold");
    return out;
}

FockState apply_round(const FockState& state, double eps_q, double alpha_q, double eps_p,
                      double alpha_p, double tail_threshold) {
    ProtocolWorkspace ws(state.dim());
    return apply_round(state, ws, eps_q, alpha_q, eps_p, alpha_p, tail_threshold);
}

namespace {

// A linear combination of displacement operators, sum_j c_j D(d_j).
struct DispTerm {
    cplx c;
    cplx d;
};
using DispOp = std::vector<DispTerm>;

// D(a) D(b) = e^{i Im(a conj(b))} D(a + b)
DispOp compose(const DispOp& lhs, const DispOp& rhs) {
    DispOp out;
    out.reserve(lhs.size() * rhs.size());
    for (const auto& a : lhs)
        for (const auto& b : rhs) {
            const double phase = std::imag(a.d * std::conj(b.d));
            out.push_back({a.c * b.c * std::polar(1.0, phase), a.d + b.d});
        }
    return out;
}

// Kraus operator as a displacement sum: the correction displacement composed
// with the cosine expanded into two exponentials.
DispOp kraus_disp_terms(Quadrature quad, double eps, double alpha, int outcome) {
    const cplx quarter = std::polar(0.5, kPi / 4.0);        // e^{i pi/4}/2
    const cplx quarter_c = std::conj(quarter);
    DispOp corr, cosine;
    if (quad == Quadrature::Position) {
        // K_{q,+-} = D(+-alpha) * [e^{+-i pi/4} D(i eps) + e^{-+i pi/4} D(-i eps)]/2
        corr = {{1.0, cplx(outcome * alpha, 0.0)}};
        if (outcome > 0)
            cosine = {{quarter, cplx(0.0, eps)}, {quarter_c, cplx(0.0, -eps)}};
        else
            cosine = {{quarter_c, cplx(0.0, eps)}, {quarter, cplx(0.0, -eps)}};
    } else {
        // K_{p,+} = D(-i alpha) cos(2 eps p - pi/4), K_{p,-} = D(i alpha) cos(.. + pi/4),
        // with e^{2i eps p} = D(-eps).
        corr = {{1.0, cplx(0.0, -outcome * alpha)}};
        if (outcome > 0)
            cosine = {{quarter_c, cplx(-eps, 0.0)}, {quarter, cplx(eps, 0.0)}};
        else
            cosine = {{quarter, cplx(-eps, 0.0)}, {quarter_c, cplx(eps, 0.0)}};
    }
    return compose(corr, cosine);
}

} // namespace

DisplacementSum expand_round_to_displacement_sum(double eps_q, double alpha_q,
                                                 double eps_p, double alpha_p) {
    DisplacementSum sum;
    for (int nu : {+1, -1}) {
        for (int mu : {+1, -1}) {
            const DispOp left = compose(kraus_disp_terms(Quadrature::Momentum, eps_p, alpha_p, nu),
                                        kraus_disp_terms(Quadrature::Position, eps_q, alpha_q, mu));
            std::vector<DisplacementSum::Term> branch;
            for (const auto& tj : left)
                for (const auto& tk : left) {
                    const cplx coeff = tj.c * std::conj(tk.c);
                    bool merged = false;
                    for (auto& t : branch) {
                        if (t.left == tj.d && t.right == tk.d) {
                            t.coeff += coeff;
                            merged = true;
                            break;
                        }
                    }
                    if (!merged) branch.push_back({coeff, tj.d, tk.d});
                }
            sum.branch_term_counts.push_back(static_cast<int>(branch.size()));
            for (const auto& bt : branch) {
                bool merged = false;
                for (auto& t : sum.terms) {
                    if (t.left == bt.left && t.right == bt.right) {
                        t.coeff += bt.coeff;
                        merged = true;
                        break;
                    }
                }
                if (!merged) sum.terms.push_back(bt);
            }
        }
    }
    return sum;
}

DisplacementSum expand_round_to_displacement_sum(const RoundParams& params) {
    return expand_round_to_displacement_sum(params.epsilon, params.alpha, params.epsilon,
                                            params.alpha);
}

cplx char_func(const DisplacementSum& sum, cplx beta, const ThermalSpec& spec) {
    const double width = spec.nbar + 0.5;
    cplx total = 0.0;
    for (const auto& t : sum.terms) {
        // Tr(D(beta) D(l) rho D(r)^dag) = e^{i phi} e^{-(nbar+1/2)|beta+l-r|^2}
        const cplx ups = beta + t.left - t.right;
        const double phi = -std::imag(t.right * std::conj(beta)) +
                           std::imag(beta * std::conj(t.left)) -
                           std::imag(t.right * std::conj(t.left));
        total += t.coeff * std::polar(1.0, phi) * std::exp(-width * std::norm(ups));
    }
    return total * std::exp(0.5 * std::norm(beta));
}

double mean_occupation_from_char(const DisplacementSum& sum, const ThermalSpec& spec) {
    // Each term is C exp(u b + v b* + w b b*) in (b, b*); the mixed second
    // derivative at 0 is C (u v + w).
    const double width = spec.nbar + 0.5;
    cplx acc = 0.0;
    for (const auto& t : sum.terms) {
        const cplx delta = t.left - t.right;
        const cplx C = t.coeff *
                       std::polar(1.0, -std::imag(t.right * std::conj(t.left))) *
                       std::exp(-width * std::norm(delta));
        const cplx u = 0.5 * (std::conj(t.left) + std::conj(t.right)) - width * std::conj(delta);
        const cplx v = -0.5 * (t.left + t.right) - width * delta;
        const double w = -spec.nbar;
        acc += C * (u * v + w);
    }
    return -acc.real();
}

double quantum_energy(double epsilon, double alpha, const ThermalSpec& spec) {
    const double s2 = spec.s2();
    const double damp = std::exp(-8.0 * epsilon * epsilon * s2);
    const double e2 = 4.0 * epsilon * epsilon;
    const double correction =
        epsilon * epsilon -
        alpha * epsilon * damp * (4.0 * s2 * (std::cos(e2) - 1.0) + std::sin(e2));
    return classical_energy(epsilon, alpha, spec) + 2.0 * correction;
}

double optimal_alpha_given_epsilon(double epsilon, const ThermalSpec& spec) {
    const double s2 = spec.s2();
    const double damp = std::exp(-8.0 * epsilon * epsilon * s2);
    const double e2 = 4.0 * epsilon * epsilon;
    return 0.5 * epsilon * damp * (4.0 * s2 * (1.0 + std::cos(e2)) + std::sin(e2));
}

EpsilonOptimum optimize_epsilon(const ThermalSpec& spec) {
    const double st = std::max(spec.s(), 1.0);
    auto energy_at = [&](double eps) {
        return quantum_energy(eps, optimal_alpha_given_epsilon(eps, spec), spec);
    };
    const double eps_star =
        golden_section_min(energy_at, 1e-4 / st, 4.0 / st, 1e-6 / st, 200);
    EpsilonOptimum opt;
    opt.epsilon = eps_star;
    opt.alpha = optimal_alpha_given_epsilon(eps_star, spec);
    opt.energy = energy_at(eps_star);
    const double initial = 2.0 * spec.s2();
    if (opt.energy >= initial)
        throw NoImprovement("optimize_epsilon: optimum " + std::to_string(opt.energy) +
                            " does not improve on initial " + std::to_string(initial));
    return opt;
}

namespace {

// Tr(D(a) rho) = sum_k e^{-2i a lambda_k} (V^dag rho V)_{kk} with (lambda, V)
// the momentum eigensystem, since D(a) = exp(-2i a p) for real a.
std::vector<double> char_real_axis_impl(const FockState& state,
                                        const std::vector<double>& alphas,
                                        const Eigen::VectorXd& p_evals,
                                        const Matrix& p_evecs) {
    Vector diag = (p_evecs.adjoint() * state.rho * p_evecs).diagonal();
    std::vector<double> out;
    out.reserve(alphas.size());
    for (double a : alphas) {
        cplx val = 0.0;
        for (int k = 0; k < state.dim(); ++k)
            val += std::polar(1.0, -2.0 * a * p_evals(k)) * diag(k);
        out.push_back(val.real());
    }
    return out;
}

double estimate_thermal_fraction_impl(const FockState& state,
                                      const Eigen::VectorXd& p_evals,
                                      const Matrix& p_evecs) {
    const double n_direct = std::max(mean_energy(state).nbar, 1e-4);
    // Sample Re<D(a)> over the range where a thermal Gaussian falls to ~0.2.
    const double a_max = std::sqrt(std::log(5.0) / (n_direct + 0.5));
    std::vector<double> alphas;
    for (int i = 1; i <= 24; ++i) alphas.push_back(a_max * i / 24.0);
    std::vector<double> chi = char_real_axis_impl(state, alphas, p_evals, p_evecs);

    // ln chi = -(nbar + 1/2) a^2: least squares for the slope through origin.
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < alphas.size(); ++i) {
        if (chi[i] < 0.15) continue;
        const double x = alphas[i] * alphas[i];
        num += x * (-std::log(chi[i]));
        den += x * x;
    }
    if (den <= 0.0) return n_direct;
    return std::max(0.0, num / den - 0.5);
}

} // namespace

std::vector<double> ProtocolWorkspace::char_real_axis(
    const FockState& state, const std::vector<double>& alphas) const {
    return char_real_axis_impl(state, alphas, p_evals_, p_evecs_);
}

double ProtocolWorkspace::estimate_thermal_fraction(const FockState& state) const {
    return estimate_thermal_fraction_impl(state, p_evals_, p_evecs_);
}

std::vector<double> char_real_axis(const FockState& state,
                                   const std::vector<double>& alphas) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(momentum_op(state.dim()));
    return char_real_axis_impl(state, alphas, es.eigenvalues(), es.eigenvectors());
}

cplx char_of_state(const FockState& state, cplx beta) {
    DisplacementOperator d = displacement(beta, state.dim());
    return (d.matrix * state.rho).trace();
}

double estimate_nbar_thermal_fraction(const FockState& state) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(momentum_op(state.dim()));
    return estimate_thermal_fraction_impl(state, es.eigenvalues(), es.eigenvectors());
}

namespace {

// Assumed per-round energy contraction when the pitch is scale * eps_o:
// 1 - scale^2 e^{-scale^2} (equals (e-1)/e at scale 1).
double assumed_contraction(double eps_scale) {
    const double s2 = eps_scale * eps_scale;
    return 1.0 - s2 * std::exp(-s2);
}

RoundParams scheduled_params(double nbar_assumed, double eps_scale) {
    ThermalSpec spec{nbar_assumed};
    const double s = spec.s();
    const double eps = eps_scale / (4.0 * s);
    const double alpha = classical_alpha_given_epsilon(eps, spec.s2());
    return RoundParams::make(eps, alpha);
}

} // namespace

ScheduleResult run_schedule(const ThermalSpec& initial, int rounds, ScheduleMode mode,
                            double eps_scale, int dim, double tail_threshold) {
    if (rounds < 0) throw ConfigError("run_schedule: rounds must be >= 0");
    ScheduleResult result;
    const double contraction = assumed_contraction(eps_scale);

    double nbar_assumed = initial.nbar;
    result.nbar_analytic.push_back(nbar_assumed);
    for (int j = 0; j < rounds; ++j) {
        result.params.push_back(scheduled_params(nbar_assumed, eps_scale));
        nbar_assumed *= contraction;
        result.nbar_analytic.push_back(nbar_assumed);
    }

    if (mode == ScheduleMode::Fock) {
        const int n = dim > 0 ? dim : default_fock_dim(initial.nbar);
        ProtocolWorkspace ws(n);
        FockState state = make_thermal(initial, n);
        result.nbar_fock.push_back(ws.estimate_thermal_fraction(state));
        result.energy_fock.push_back(mean_energy(state).energy);
        for (int j = 0; j < rounds; ++j) {
            const RoundParams& p = result.params[j];
            state = apply_round(state, ws, p.epsilon, p.alpha, p.epsilon, p.alpha,
                                tail_threshold);
            result.nbar_fock.push_back(ws.estimate_thermal_fraction(state));
            result.energy_fock.push_back(mean_energy(state).energy);
        }
    }
    return result;
}

std::vector<double> run_adaptive_quantum(const ThermalSpec& initial, int rounds, int dim,
                                         std::vector<double>* direct) {
    const int n = dim > 0 ? dim : default_fock_dim(initial.nbar);
    ProtocolWorkspace ws(n);
    FockState state = make_thermal(initial, n);
    std::vector<double> series{ws.estimate_thermal_fraction(state)};
    if (direct) direct->assign(1, mean_energy(state).nbar);
    for (int j = 0; j < rounds; ++j) {
        const EpsilonOptimum opt = optimize_epsilon(ThermalSpec{series.back()});
        state = apply_round(state, ws, opt.epsilon, opt.alpha, opt.epsilon, opt.alpha);
        series.push_back(ws.estimate_thermal_fraction(state));
        if (direct) direct->push_back(mean_energy(state).nbar);
    }
    return series;
}

} // namespace mvcool
