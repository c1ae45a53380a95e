#pragma once

#include <utility>
#include <vector>

#include "mvcool/fock.hpp"

namespace mvcool {

// Semiclassical Doppler-cooling theory (linearized Lorentzian), mapped onto
// the same dimensionless phase-space units as the modular-variable engine.
struct DopplerConfig {
    double gamma = 0.0;     // natural linewidth (rad/s)
    double detuning = 0.0;  // Delta = nu - nu0 (rad/s)
    double omega = 0.0;     // trap frequency (rad/s)
    double eta = 0.05;      // Lamb-Dicke parameter
    double pe = 0.5;        // excitation probability in (0, 1]
    double tau = 0.0;       // mean absorption waiting time (s); <= 0 -> 2/gamma
};

struct LinearizedProb {
    double probability;    // clamped to [0, 1]
    bool linearization_ok; // |slope * p| < 1
};

// P(-Z|p) ~ Pe (1 + 16 Delta/(Gamma^2+4 Delta^2) eta w p).
LinearizedProb linearized_excitation_prob(double p, const DopplerConfig& cfg);

// Post-cycle energy E/(hbar w) =
//   2 (Pe eta^2 / 2 + s^2 (1 + Pe eta^2 16 w Delta/(Gamma^2+4 Delta^2))).
double doppler_energy_update(const ThermalSpec& spec, const DopplerConfig& cfg);

// Steady state of the update above: nbar + 1/2 = -(Gamma^2+4 Delta^2)/(16 w Delta).
double doppler_steady_state_nbar(const DopplerConfig& cfg);

struct DopplerLimit {
    double detuning;   // -Gamma/2
    double nbar_min;   // Gamma/(4 w) - 1/2
};

// Analytic optimum plus a numerical scan cross-check over the detuning.
DopplerLimit doppler_limit(const DopplerConfig& cfg);
double doppler_limit_scan(const DopplerConfig& cfg, int points = 400);

// The modular-variable pitch matching Doppler's linearized slope (Pe = 1/2):
//   eps = -4 eta w Delta / (Gamma^2 + 4 Delta^2).
double epsilon_equivalent(const DopplerConfig& cfg);

// Steady-state nbar of the classical modular-variable update with eps from
// epsilon_equivalent and alpha = eta (solved with the exponential retained).
double epsilon_equivalent_steady_state_nbar(const DopplerConfig& cfg);

struct AbsorptionStats {
    double tau;      // mean waiting time between absorptions
    double pe_avg;   // (e-1)/e
};

AbsorptionStats absorption_time_stats(const DopplerConfig& cfg);

// Qualitative cooling trajectory: iterate the energy update once per
// absorption cycle of duration tau.
std::vector<double> doppler_cooling_trajectory(const ThermalSpec& initial,
                                               const DopplerConfig& cfg, int cycles);

} // namespace mvcool
