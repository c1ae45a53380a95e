#pragma once

#include <array>
#include <utility>
#include <vector>

#include "mvcool/fock.hpp"
#include "mvcool/rng.hpp"

namespace mvcool {

// Spectator radial modes; their thermal occupation rescales the drive Rabi
// frequency by prod_j e^{-eta_j^2/2} L_{n_j}(eta_j^2).
struct RadialModes {
    std::array<double, 2> omega{2.0 * 3.14159265358979323846 * 2.4e6,
                                2.0 * 3.14159265358979323846 * 3.2e6};
    std::array<double, 2> eta{0.02, 0.03};
    std::array<double, 2> nbar{0.0, 0.0};
};

// Set radial occupations assuming all modes share the axial temperature.
RadialModes radial_from_axial_temperature(double nbar_axial, double omega_axial,
                                          RadialModes modes = {});

double laguerre(int n, double x);         // L_n(x)
double laguerre_assoc(int n, double x);   // L_n^{(1)}(x)

// Rabi-frequency factor for fixed radial Fock numbers (n1, n2).
double rabi_scale(int n1, int n2, const RadialModes& radial);

// One thermal sample of the factor above.
double sample_radial_rabi_scale(const RadialModes& radial, CounterRng& rng);

// Deterministic (scale, weight) nodes: quantile midpoints of the two thermal
// distributions; used by fit models that must not depend on a sampler.
std::vector<std::pair<double, double>> radial_scale_grid(const RadialModes& radial,
                                                         int nodes_per_mode = 12);

enum class ReadoutOrder { Leading, Full };

struct ReadoutCurve {
    std::vector<double> alphas;
    std::vector<double> probs;
    int shots = 0;  // 0 = noiseless expectation values
    std::vector<std::pair<double, double>> ci;  // 95% binomial
};

// Characteristic-function readout P(+Z) = (1 + Re<D(alpha)>)/2.
// Leading order evaluates that expression directly; Full evolves the
// state-dependent drive with the all-order first-sideband coupling and
// thermal radial Rabi-scale sampling, then adds binomial shot noise.
ReadoutCurve simulate_readout(const FockState& state, const std::vector<double>& alphas,
                              const RadialModes& radial, ReadoutOrder order, int shots,
                              CounterRng& rng, double eta_axial = 0.05);

enum class NbarModel { Gaussian, Full };

struct NbarFit {
    double nbar;
    double ci95;       // half-width
    double chi2;
    int iterations;
};

// Weighted least squares for the thermal occupation. The Gaussian model fits
// (1 + e^{-a^2 (nbar+1/2)})/2; the Full model wraps the all-order readout
// simulation (deterministic radial quadrature) in the fit loop.
NbarFit fit_nbar(const ReadoutCurve& curve, NbarModel model, const RadialModes& radial,
                 double eta_axial = 0.05);

struct DecayEnvelope {
    double tau_exp = 0.0;    // <= 0 disables
    double tau_gauss = 0.0;  // <= 0 disables

    double operator()(double t) const;
};

struct BsbCurve {
    std::vector<double> times;
    std::vector<double> probs;
    int shots = 0;
    double rabi0 = 0.0;   // 0<->1 sideband Rabi frequency (rad/s)
    double eta = 0.05;    // axial Lamb-Dicke parameter
    std::vector<std::pair<double, double>> ci;
};

// Blue-sideband flopping P0(t) = (1 + sum_n rho_nn cos(O_n t))/2 with
// O_n = rabi0 L_n^{(1)}(eta^2)/sqrt(n+1) (reduces to rabi0 sqrt(n+1) at
// eta = 0), radial Rabi-scale averaging and optional decay envelopes.
BsbCurve simulate_bsb(const FockState& state, const std::vector<double>& times,
                      double rabi0, const RadialModes& radial, const DecayEnvelope& decay,
                      CounterRng& rng, int shots, double eta_axial = 0.05);

struct TailReport {
    std::vector<double> populations;  // fitted rho_nn, n = 0..max_level
    double tail_mass = 0.0;           // 1 - sum(populations)
    std::pair<double, double> ci{0.0, 0.0};
    double tau_exp = 0.0;
    double tau_gauss = 0.0;
    double nbar_tail = 0.0;  // fitted effective temperature of the tail shape
    bool identifiability_warning = false;
};

// Fit low Fock-level populations plus exponential/Gaussian envelopes to a
// blue-sideband curve; tail = population missing from the fitted levels.
// Points earlier than skip_periods of the 0<->1 flop are excluded: there the
// high-energy tail has not yet dephased and would masquerade as fitted
// population. CI by parametric bootstrap (seeded, deterministic).
TailReport fit_tails(const BsbCurve& curve, int max_level, int bootstrap = 60,
                     std::uint64_t ci_seed = 7, double skip_periods = 0.0);

} // namespace mvcool
