#pragma once

#include <vector>

#include "mvcool/fock.hpp"
#include "mvcool/measurement.hpp"
#include "mvcool/rng.hpp"

namespace mvcool {

enum class LambDickeOrder { Leading, Full };
enum class PulseIntegrator { Rk4, ExactUnitary };

// One bichromatic pulse realizing a state-dependent displacement via
//   H = hbar eta Omega sigma_{phi_s} (sin(phi_m) q - cos(phi_m) p),
// applied for `duration`, which gives gamma(t) = -eta Omega t e^{i phi_m}/2
// on the +1 eigenbranch of sigma_{phi_s}.
struct DriveConfig {
    double rabi = 2.0 * 3.14159265358979323846 * 50e3;  // Omega (rad/s)
    double lamb_dicke = 0.05;
    double spin_phase = 0.0;      // phi_s: 0 -> X basis, pi/2 -> Y basis
    double motional_phase = 0.0;  // phi_m
    double duration = 0.0;        // s
    double spin_detuning = 0.0;   // rad/s, added as (delta/2) Z
    double motional_detuning = 0.0;  // rad/s, added as delta * n
    LambDickeOrder order = LambDickeOrder::Leading;
};

// Pulse settings realizing U_CD(gamma, P) for the given target displacement;
// the returned duration satisfies eta*rabi*duration/2 == |gamma| exactly.
DriveConfig conditional_displacement_pulse(cplx gamma, double spin_phase, double rabi,
                                           double eta);

struct MainsHarmonic {
    int harmonic = 1;        // multiple of 50 Hz
    double amplitude_hz = 0.0;
    double phase = 0.0;
};

struct RecoilConfig {
    bool enabled = false;
    double eta_854 = 0.0427;       // 729/854 * 0.05
    double eta_397 = 0.0918;       // 729/397 * 0.05
    double beam_angle = 0.7853981633974483;  // absorption projection cos(45 deg)
};

struct NoiseConfig {
    // Non-Markovian spin dephasing, d rho/dt = (g^2/K)(e^{-Kt}-1)[Z,[Z,rho]].
    double spin_dephasing_g = 0.0;  // rad/s
    double spin_dephasing_K = 0.0;  // rad/s
    double osc_coherence_time = 0.0;  // s; <1|rho|0> time constant; 0 = off
    double heating_rate = 0.0;        // quanta/s near the ground state; 0 = off
    std::vector<MainsHarmonic> mains;
    double freq_jitter_sd = 0.0;   // Hz, static per-trajectory axial offset
    double nbar_sd = 0.0;          // initial-temperature spread
    double rabi_rel_sd = 0.0;      // relative Rabi-frequency spread
    double detuning_sd = 0.0;      // rad/s spin-detuning spread
    RecoilConfig recoil;

    bool any_decoherence() const {
        return spin_dephasing_g > 0.0 || osc_coherence_time > 0.0 || heating_rate > 0.0;
    }
    bool any_detuning(double extra = 0.0) const;
};

// Instantaneous axial-frequency modulation from the mains harmonics (rad/s).
double mains_detuning(const std::vector<MainsHarmonic>& mains, double t);

// Time-dependent Lindblad rate of the Eq.-above spin dephasing:
// gamma_s(t) = 2 (g^2/K)(1 - e^{-Kt}); coherence decays as exp(-2 integral).
double spin_dephasing_rate(const NoiseConfig& noise, double t);
double spin_coherence_envelope(const NoiseConfig& noise, double t);

// Joint spin (x) oscillator density matrix; index = s*N + n with s=0 -> |+Z>.
struct JointState {
    Matrix rho;
    int fock_dim = 0;
    double clock = 0.0;     // time since the last spin reset
    double lab_time = 0.0;  // absolute time, for the mains phase

    double trace_real() const { return rho.trace().real(); }
};

JointState make_joint(const FockState& osc);
FockState trace_out_spin(const JointState& state);
double spin_up_population(const JointState& state);

// Master-equation pulse: RK4 over the drive plus the Z, a^dag a and a^dag
// dissipators and the deterministic mains detuning. ExactUnitary is the
// closed-form noise-free limit (rejected if any noise term is active).
// Throws StepTooCoarse when dt_override exceeds the stability bound.
void evolve_pulse(JointState& state, const DriveConfig& drive, const NoiseConfig& noise,
                  PulseIntegrator integrator = PulseIntegrator::Rk4,
                  double dt_override = 0.0);

// Optical-pumping reset: the |-Z> block is returned to |+Z> convolved with
// sampled photon-recoil displacements; the |+Z> block is left unchanged.
void repump(JointState& state, const RecoilConfig& recoil, CounterRng& rng);

enum class NbarEstimator { Direct, ThermalFraction };

struct NoisySetup {
    NoiseConfig noise;
    RadialModes radial;
    double trap_omega = 2.0 * 3.14159265358979323846 * 1.7e6;
    double eta = 0.05;
    double rabi = 2.0 * 3.14159265358979323846 * 50e3;
    double eps_scale = 1.0;
    int dim = 0;  // 0 = heuristic
    PulseIntegrator integrator = PulseIntegrator::Rk4;
    LambDickeOrder order = LambDickeOrder::Leading;
    NbarEstimator estimator = NbarEstimator::Direct;
    int threads = 1;
    int bootstrap = 200;
};

struct NoisySeries {
    std::vector<double> nbar_mean;  // index = round
    std::vector<double> ci_low;
    std::vector<double> ci_high;
    std::vector<std::vector<double>> per_trajectory;
};

// Full experimental sequence: per trajectory, sample the static parameters
// (initial nbar, radial occupancies, Rabi and detuning offsets), then run
// measurement/correction pulses and repumps for each scheduled round.
// Deterministic for a fixed seed regardless of thread count.
NoisySeries run_noisy_experiment(const ThermalSpec& initial, int rounds,
                                 const NoisySetup& setup, int n_trajectories,
                                 std::uint64_t seed);

} // namespace mvcool
