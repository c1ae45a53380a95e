#include "mvcool/doppler.hpp"

#include <algorithm>
#include <cmath>

#include "mvcool/fit.hpp"
#include "mvcool/semiclassical.hpp"

namespace mvcool {

namespace {

double lorentz_slope(const DopplerConfig& cfg) {
    return 16.0 * cfg.detuning / (cfg.gamma * cfg.gamma + 4.0 * cfg.detuning * cfg.detuning);
}

} // namespace

LinearizedProb linearized_excitation_prob(double p, const DopplerConfig& cfg) {
    const double slope = lorentz_slope(cfg) * cfg.eta * cfg.omega;
    LinearizedProb out;
    out.linearization_ok = std::abs(slope * p) < 1.0;
    out.probability = std::clamp(cfg.pe * (1.0 + slope * p), 0.0, 1.0);
    return out;
}

double doppler_energy_update(const ThermalSpec& spec, const DopplerConfig& cfg) {
    const double s2 = spec.s2();
    const double eta2 = cfg.eta * cfg.eta;
    return 2.0 * (0.5 * cfg.pe * eta2 +
                  s2 * (1.0 + cfg.pe * eta2 * cfg.omega * lorentz_slope(cfg)));
}

double doppler_steady_state_nbar(const DopplerConfig& cfg) {
    return -(cfg.gamma * cfg.gamma + 4.0 * cfg.detuning * cfg.detuning) /
               (16.0 * cfg.omega * cfg.detuning) -
           0.5;
}

DopplerLimit doppler_limit(const DopplerConfig& cfg) {
    return {-0.5 * cfg.gamma, cfg.gamma / (4.0 * cfg.omega) - 0.5};
}

double doppler_limit_scan(const DopplerConfig& cfg, int points) {
    // Log-spaced detunings in [-10 Gamma, -Gamma/100]; golden refinement.
    double best_delta = -0.5 * cfg.gamma;
    double best = 1e300;
    for (int i = 0; i < points; ++i) {
        const double mag =
            cfg.gamma * std::pow(10.0, -2.0 + 3.0 * static_cast<double>(i) / (points - 1));
        DopplerConfig c = cfg;
        c.detuning = -mag;
        const double nb = doppler_steady_state_nbar(c);
        if (nb < best) {
            best = nb;
            best_delta = c.detuning;
        }
    }
    auto objective = [&](double delta) {
        DopplerConfig c = cfg;
        c.detuning = delta;
        return doppler_steady_state_nbar(c);
    };
    return golden_section_min(objective, best_delta * 2.0, best_delta * 0.5,
                              1e-9 * cfg.gamma);
}

double epsilon_equivalent(const DopplerConfig& cfg) {
    return -4.0 * cfg.eta * cfg.omega * cfg.detuning /
           (cfg.gamma * cfg.gamma + 4.0 * cfg.detuning * cfg.detuning);
}

double epsilon_equivalent_steady_state_nbar(const DopplerConfig& cfg) {
    // Fixed point of s2 -> alpha^2 + s2 (1 - 8 alpha eps e^{-8 eps^2 s2})
    // with alpha = eta: s2 = eta / (8 eps e^{-8 eps^2 s2}) + eta^2 term folded in.
    const double eps = epsilon_equivalent(cfg);
    if (eps <= 0.0) throw NumericalError("epsilon_equivalent: no cooling at this detuning");
    const double eta = cfg.eta;
    double s2 = eta / (8.0 * eps);  // exponential-free seed
    for (int it = 0; it < 200; ++it) {
        const double damp = std::exp(-8.0 * eps * eps * s2);
        const double next = eta / (8.0 * eps * damp);
        if (std::abs(next - s2) < 1e-14 * next) {
            s2 = next;
            break;
        }
        s2 = next;
    }
    return 2.0 * s2 - 0.5;
}

AbsorptionStats absorption_time_stats(const DopplerConfig& cfg) {
    AbsorptionStats stats;
    stats.tau = cfg.tau > 0.0 ? cfg.tau : 2.0 / cfg.gamma;
    stats.pe_avg = (std::exp(1.0) - 1.0) / std::exp(1.0);
    return stats;
}

std::vector<double> doppler_cooling_trajectory(const ThermalSpec& initial,
                                               const DopplerConfig& cfg, int cycles) {
    std::vector<double> nbars{initial.nbar};
    double nbar = initial.nbar;
    for (int c = 0; c < cycles; ++c) {
        const double energy = doppler_energy_update(ThermalSpec{nbar}, cfg);
        nbar = std::max(0.0, 0.5 * energy - 0.5);
        nbars.push_back(nbar);
    }
    return nbars;
}

} // namespace mvcool
