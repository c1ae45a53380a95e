#pragma once

#include <optional>
#include <vector>

#include "mvcool/fock.hpp"
#include "mvcool/semiclassical.hpp"

namespace mvcool {

enum class Quadrature { Position, Momentum };

// Kraus pair of one quadrature contraction:
//   K_{q,+-} = e^{-+2i alpha p} cos(2 eps q +- pi/4)
// and the momentum pair with the q<->p roles swapped; signs fixed so a
// positive (eps, alpha) pair contracts the measured quadrature.
struct KrausPair {
    Quadrature quadrature;
    double epsilon;
    double alpha;
    Matrix k_plus;
    Matrix k_minus;
};

// Shared eigendecompositions for one truncation dimension; building Kraus
// operators and observables for many (eps, alpha) values reuses these.
class ProtocolWorkspace {
public:
    explicit ProtocolWorkspace(int dim);

    int dim() const { return dim_; }
    KrausPair kraus(Quadrature quad, double epsilon, double alpha) const;
    Matrix measurement_observable(double epsilon) const;  // sin(4 eps q)

    // Re<D(alpha)> along the real axis via the momentum eigensystem
    // (D(alpha) = exp(-2i alpha p)).
    std::vector<double> char_real_axis(const FockState& state,
                                       const std::vector<double>& alphas) const;
    double estimate_thermal_fraction(const FockState& state) const;

private:
    int dim_;
    Eigen::VectorXd q_evals_, p_evals_;
    Matrix q_evecs_, p_evecs_;
};

KrausPair build_kraus(Quadrature quad, double epsilon, double alpha, int dim);

// ||K+^dag K+ + K-^dag K- - I|| restricted to the lowest `block` levels.
double completeness_defect(const KrausPair& pair, int block);

// Outcome probabilities (P(+X|rho), P(-X|rho)) of the modular measurement.
std::pair<double, double> outcome_probabilities(const KrausPair& pair,
                                                const FockState& state);

FockState apply_half_round(const FockState& state, const KrausPair& pair);

// One full round: position contraction then momentum contraction,
//   rho' = sum_{nu,mu} K_{p,nu} K_{q,mu} rho K_{q,mu}^dag K_{p,nu}^dag.
// Throws TruncationTooSmall if the post-state tail mass exceeds the threshold.
FockState apply_round(const FockState& state, double eps_q, double alpha_q,
                      double eps_p, double alpha_p, double tail_threshold = 1e-4);
FockState apply_round(const FockState& state, const ProtocolWorkspace& ws,
                      double eps_q, double alpha_q, double eps_p, double alpha_p,
                      double tail_threshold = 1e-4);

// The round channel written as displacements acting on a thermal state:
//   rho_1 = sum_t coeff_t D(left_t) rho_0 D(right_t)^dag.
// Each of the four outcome branches (nu, mu) expands into 16 terms weighted
// by 1/16 (two displacement exponentials per Kraus cosine on each side);
// the full channel carries the 4x16 terms, merged where amplitudes coincide.
struct DisplacementSum {
    struct Term {
        cplx coeff;
        cplx left;
        cplx right;
    };
    std::vector<Term> terms;
    std::vector<int> branch_term_counts;  // per (nu, mu) branch, after merging
};

DisplacementSum expand_round_to_displacement_sum(double eps_q, double alpha_q,
                                                 double eps_p, double alpha_p);
DisplacementSum expand_round_to_displacement_sum(const RoundParams& params);

// Normal-ordered characteristic function of the post-round state for a
// thermal input: chi(beta) = Tr(D(beta) rho_1) e^{|beta|^2/2}.
cplx char_func(const DisplacementSum& sum, cplx beta, const ThermalSpec& spec);

// <n> = -d^2 chi / (d beta d beta*) at beta = 0, by analytic differentiation
// of the Gaussian terms.
double mean_occupation_from_char(const DisplacementSum& sum, const ThermalSpec& spec);

// Closed-form post-round mean energy, E/(hbar w):
//   E_quantum = E_classical
//             + 2 (eps^2 - alpha eps e^{-8 eps^2 s^2}
//                    (4 s^2 (cos(4 eps^2) - 1) + sin(4 eps^2))).
double quantum_energy(double epsilon, double alpha, const ThermalSpec& spec);

// alpha minimizing the quantum energy at fixed eps:
//   alpha = eps/2 e^{-8 eps^2 s^2} (4 s^2 (1 + cos(4 eps^2)) + sin(4 eps^2)).
double optimal_alpha_given_epsilon(double epsilon, const ThermalSpec& spec);

struct EpsilonOptimum {
    double epsilon;
    double alpha;
    double energy;  // E/(hbar w) after one round
};

// Bounded 1-D minimization of the quantum energy with alpha slaved to the
// closed form above; bracket [1e-4/st, 4/st], st = max(s, 1), golden section
// with absolute tolerance 1e-6/st. Throws NoImprovement if the optimum does
// not beat the initial energy.
EpsilonOptimum optimize_epsilon(const ThermalSpec& spec);

enum class ScheduleMode { Analytic, Fock };

struct ScheduleResult {
    std::vector<double> nbar_analytic;  // semiclassical line, index = round
    std::vector<double> nbar_fock;      // thermal-fraction estimates (Fock mode)
    std::vector<double> energy_fock;    // direct Tr(rho(n+1/2)) (Fock mode)
    std::vector<RoundParams> params;    // schedule actually applied
};

// Multi-round cooling with the per-round parameters chosen by assuming the
// optimal contraction each round (scaled pitch eps = scale * eps_o changes
// the assumed contraction to 1 - scale^2 e^{-scale^2}). In Analytic mode
// only the assumed-thermal line is produced; in Fock mode the true state is
// propagated and nbar is estimated both directly and by a Gaussian fit to
// the characteristic function (the thermal fraction).
ScheduleResult run_schedule(const ThermalSpec& initial, int rounds, ScheduleMode mode,
                            double eps_scale = 1.0, int dim = 0,
                            double tail_threshold = 1e-4);

// Fully adaptive Fock-space cooling: each round re-optimizes (eps, alpha)
// for the current thermal-fraction occupation (the quantity the calibration
// tracks). Returns that estimate after each round (index 0 = initial state);
// `direct` optionally receives the raw <n> series alongside.
std::vector<double> run_adaptive_quantum(const ThermalSpec& initial, int rounds,
                                         int dim = 0,
                                         std::vector<double>* direct = nullptr);

// Gaussian fit of Re<D(alpha)> over a deterministic grid; the "thermal
// fraction" occupation used to compare against the semiclassical line.
double estimate_nbar_thermal_fraction(const FockState& state);

// Re<D(alpha)> sampled along the real axis (used for readout figures and
// the estimator above).
std::vector<double> char_real_axis(const FockState& state,
                                   const std::vector<double>& alphas);

cplx char_of_state(const FockState& state, cplx beta);

} // namespace mvcool
