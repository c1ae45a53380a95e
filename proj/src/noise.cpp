#include "mvcool/noise.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <thread>

#include "mvcool/protocol.hpp"
#include "mvcool/semiclassical.hpp"

namespace mvcool {

namespace {
constexpr double kPi = 3.14159265358979323846;
const cplx kI(0.0, 1.0);
}

DriveConfig conditional_displacement_pulse(cplx gamma, double spin_phase, double rabi,
                                           double eta) {
    DriveConfig d;
    d.rabi = rabi;
    d.lamb_dicke = eta;
    d.spin_phase = spin_phase;
    // gamma(t) = -eta Omega t e^{i phi_m}/2, so aim the motional phase at
    // arg(gamma) + pi and set the duration from |gamma|.
    d.motional_phase = std::arg(gamma) + kPi;
    d.duration = 2.0 * std::abs(gamma) / (eta * rabi);
    return d;
}

bool NoiseConfig::any_detuning(double extra) const {
    if (std::abs(extra) > 0.0) return true;
    for (const auto& m : mains)
        if (m.amplitude_hz != 0.0) return true;
    return false;
}

double mains_detuning(const std::vector<MainsHarmonic>& mains, double t) {
    double delta = 0.0;
    for (const auto& m : mains)
        delta += 2.0 * kPi * m.amplitude_hz *
                 std::sin(2.0 * kPi * 50.0 * m.harmonic * t + m.phase);
    return delta;
}

double spin_dephasing_rate(const NoiseConfig& noise, double t) {
    if (noise.spin_dephasing_g <= 0.0) return 0.0;
    const double g = noise.spin_dephasing_g;
    const double K = noise.spin_dephasing_K;
    if (K <= 0.0) return 2.0 * g * g * t;  // pure Gaussian limit
    return 2.0 * (g * g / K) * (1.0 - std::exp(-K * t));
}

double spin_coherence_envelope(const NoiseConfig& noise, double t) {
    if (noise.spin_dephasing_g <= 0.0) return 1.0;
    const double g = noise.spin_dephasing_g;
    const double K = noise.spin_dephasing_K;
    double integral;
    if (K <= 0.0)
        integral = g * g * t * t;
    else
        integral = 2.0 * (g * g / K) * (t - (1.0 - std::exp(-K * t)) / K);
    return std::exp(-2.0 * integral);
}

JointState make_joint(const FockState& osc) {
    const int n = osc.dim();
    JointState js;
    js.fock_dim = n;
    js.rho = Matrix::Zero(2 * n, 2 * n);
    js.rho.topLeftCorner(n, n) = osc.rho;
    return js;
}

FockState trace_out_spin(const JointState& state) {
    const int n = state.fock_dim;
    Matrix rho = state.rho.topLeftCorner(n, n) + state.rho.bottomRightCorner(n, n);
    return {std::move(rho)};
}

double spin_up_population(const JointState& state) {
    const int n = state.fock_dim;
    return state.rho.topLeftCorner(n, n).trace().real();
}

namespace {

// Drive quadrature sin(phi) q - cos(phi) p = (-i/2) e^{i phi} A^dag + h.c.,
// with A the first-sideband coupling (a at leading order; Laguerre-corrected
// matrix elements at full order).
Matrix drive_quadrature(int dim, double phi_m, LambDickeOrder order, double eta) {
    Matrix araise = Matrix::Zero(dim, dim);
    if (order == LambDickeOrder::Leading) {
        for (int n = 0; n + 1 < dim; ++n) araise(n + 1, n) = std::sqrt(n + 1.0);
    } else {
        const double x = eta * eta;
        for (int n = 0; n + 1 < dim; ++n)
            araise(n + 1, n) =
                std::exp(-0.5 * x) * laguerre_assoc(n, x) / std::sqrt(n + 1.0);
    }
    Matrix g = (-0.5 * kI) * std::polar(1.0, phi_m) * araise;
    return g + g.adjoint();
}

Matrix pauli(double phi_s) {
    Matrix s(2, 2);
    s << 0.0, std::polar(1.0, -phi_s), std::polar(1.0, phi_s), 0.0;
    return s;  // cos(phi) X + sin(phi) Y
}

Matrix kron_spin_osc(const Matrix& spin, const Matrix& osc) {
    const int n = static_cast<int>(osc.rows());
    Matrix out(2 * n, 2 * n);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) out.block(i * n, j * n, n, n) = spin(i, j) * osc;
    return out;
}

struct Liouvillian {
    Matrix h_drive;        // spin (x) quadrature coupling, scaled by eta*Omega
    Matrix h_static;       // detuning terms that do not depend on time
    Matrix number_joint;   // I (x) n, for the mains modulation
    Matrix a_dag_joint;
    Matrix z_joint;
    double kappa_dephase = 0.0;
    double gamma_heat = 0.0;
    const NoiseConfig* noise = nullptr;
    double lab_time0 = 0.0;
};

Matrix lindblad_rhs(const Liouvillian& l, const Matrix& rho, double t_clock,
                    double t_lab) {
    Matrix h = l.h_drive + l.h_static;
    if (l.noise && !l.noise->mains.empty())
        h += mains_detuning(l.noise->mains, t_lab) * l.number_joint;
    Matrix rhs = -kI * (h * rho - rho * h);

    const double gs = l.noise ? spin_dephasing_rate(*l.noise, t_clock) : 0.0;
    if (gs > 0.0) {
        // D[Z] rho = Z rho Z - rho (Z^2 = I)
        rhs += gs * (l.z_joint * rho * l.z_joint - rho);
    }
    if (l.kappa_dephase > 0.0) {
        const Matrix n2 = l.number_joint * l.number_joint;
        rhs += l.kappa_dephase * (l.number_joint * rho * l.number_joint -
                                  0.5 * (n2 * rho + rho * n2));
    }
    if (l.gamma_heat > 0.0) {
        const Matrix& ad = l.a_dag_joint;
        const Matrix aad = ad.adjoint() * ad;  // L^dag L = a a^dag
        rhs += l.gamma_heat *
               (ad * rho * ad.adjoint() - 0.5 * (aad * rho + rho * aad));
    }
    return rhs;
}

} // namespace

void evolve_pulse(JointState& state, const DriveConfig& drive, const NoiseConfig& noise,
                  PulseIntegrator integrator, double dt_override) {
    const int n = state.fock_dim;
    if (drive.duration <= 0.0) return;

    if (integrator == PulseIntegrator::ExactUnitary) {
        if (noise.any_decoherence() || noise.any_detuning(drive.spin_detuning) ||
            noise.any_detuning(drive.motional_detuning))
            throw ConfigError("evolve_pulse: exact-unitary integrator requires all "
                              "noise and detunings off");
        // U = exp(-i t eta Omega sigma (x) Q): diagonalize both factors.
        Matrix q = drive_quadrature(n, drive.motional_phase, drive.order, drive.lamb_dicke);
        Eigen::SelfAdjointEigenSolver<Matrix> es(q);
        const double theta = drive.lamb_dicke * drive.rabi * drive.duration;
        Vector phase_p(n), phase_m(n);
        for (int k = 0; k < n; ++k) {
            phase_p(k) = std::polar(1.0, -theta * es.eigenvalues()(k));
            phase_m(k) = std::polar(1.0, theta * es.eigenvalues()(k));
        }
        Matrix u_plus = es.eigenvectors() * phase_p.asDiagonal() * es.eigenvectors().adjoint();
        Matrix u_minus = es.eigenvectors() * phase_m.asDiagonal() * es.eigenvectors().adjoint();
        // sigma_phi eigenvectors: |+-> = (|0> +- e^{i phi}|1>)/sqrt(2)
        Matrix p(2, 2);
        const cplx e = std::polar(1.0, drive.spin_phase);
        p << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), e / std::sqrt(2.0),
            -e / std::sqrt(2.0);
        Matrix u = kron_spin_osc(p.col(0) * p.col(0).adjoint(), u_plus) +
                   kron_spin_osc(p.col(1) * p.col(1).adjoint(), u_minus);
        state.rho = u * state.rho * u.adjoint();
        state.clock += drive.duration;
        state.lab_time += drive.duration;
        return;
    }

    Liouvillian l;
    l.h_drive = drive.lamb_dicke * drive.rabi *
                kron_spin_osc(pauli(drive.spin_phase),
                              drive_quadrature(n, drive.motional_phase, drive.order,
                                               drive.lamb_dicke));
    Matrix z2(2, 2);
    z2 << 1.0, 0.0, 0.0, -1.0;
    Matrix id2 = Matrix::Identity(2, 2);
    l.z_joint = kron_spin_osc(z2, Matrix::Identity(n, n));
    l.number_joint = kron_spin_osc(id2, number_op(n));
    l.a_dag_joint = kron_spin_osc(id2, ladder_op(n).adjoint());
    l.h_static = 0.5 * drive.spin_detuning * l.z_joint +
                 drive.motional_detuning * l.number_joint;
    l.noise = &noise;
    if (noise.osc_coherence_time > 0.0) l.kappa_dephase = 2.0 / noise.osc_coherence_time;
    if (noise.heating_rate > 0.0) l.gamma_heat = noise.heating_rate;

    // Time step: resolve the fastest rate and keep the per-step rotation small.
    double max_rate = drive.lamb_dicke * drive.rabi;
    max_rate = std::max(max_rate, std::abs(drive.spin_detuning));
    max_rate = std::max(max_rate, std::abs(drive.motional_detuning));
    for (const auto& m : noise.mains)
        max_rate = std::max(max_rate, 2.0 * kPi * std::abs(m.amplitude_hz));
    max_rate = std::max(max_rate, spin_dephasing_rate(noise, state.clock + drive.duration));
    max_rate = std::max(max_rate, l.kappa_dephase);
    max_rate = std::max(max_rate, l.gamma_heat);
    const double dt_bound = 1.0 / (50.0 * std::max(max_rate, 1.0 / drive.duration));
    double dt = std::min(dt_bound, drive.duration / 40.0);
    if (dt_override > 0.0) {
        if (dt_override > dt_bound)
            throw StepTooCoarse("evolve_pulse: dt " + std::to_string(dt_override) +
                                " exceeds bound " + std::to_string(dt_bound));
        dt = dt_override;
    }
    const int steps = std::max(1, static_cast<int>(std::ceil(drive.duration / dt)));
    dt = drive.duration / steps;

    const double trace_before = state.trace_real();
    Matrix k1, k2, k3, k4;
    for (int s = 0; s < steps; ++s) {
        const double tc = state.clock;
        const double tl = state.lab_time;
        k1 = lindblad_rhs(l, state.rho, tc, tl);
        k2 = lindblad_rhs(l, state.rho + 0.5 * dt * k1, tc + 0.5 * dt, tl + 0.5 * dt);
        k3 = lindblad_rhs(l, state.rho + 0.5 * dt * k2, tc + 0.5 * dt, tl + 0.5 * dt);
        k4 = lindblad_rhs(l, state.rho + dt * k3, tc + dt, tl + dt);
        state.rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        state.clock += dt;
        state.lab_time += dt;
    }
    if (std::abs(state.trace_real() - trace_before) > 1e-7)
        throw NumericalError("evolve_pulse: trace drifted by " +
                             std::to_string(std::abs(state.trace_real() - trace_before)));

    FockState osc = trace_out_spin(state);
    if (osc.tail_mass() > 1e-3)
        throw TruncationTooSmall("evolve_pulse: oscillator tail mass " +
                                 std::to_string(osc.tail_mass()));
}

namespace {

// Projection of a dipole (sin^2) emission pattern onto the mode axis.
double sample_dipole_projection(CounterRng& rng) {
    // pdf(u) = 3/4 (1 - u^2) on [-1, 1]; rejection against the uniform bound.
    for (int tries = 0; tries < 64; ++tries) {
        const double u = rng.uniform(-1.0, 1.0);
        if (rng.uniform() < 1.0 - u * u) return u;
    }
    return 0.0;
}

} // namespace

void repump(JointState& state, const RecoilConfig& recoil, CounterRng& rng) {
    const int n = state.fock_dim;
    Matrix excited = state.rho.bottomRightCorner(n, n);

    if (recoil.enabled && excited.trace().real() > 1e-14) {
        // One absorbed photon along the beam, one emitted with a dipole
        // pattern; each kick lands at a random motional phase.
        const double kick_abs = recoil.eta_854 * std::cos(recoil.beam_angle);
        const double kick_emit = recoil.eta_397 * sample_dipole_projection(rng);
        const cplx g1 = kI * kick_abs * std::polar(1.0, rng.uniform(0.0, 2.0 * kPi));
        const cplx g2 = kI * kick_emit * std::polar(1.0, rng.uniform(0.0, 2.0 * kPi));
        Matrix d = displacement(g1 + g2, n).matrix;
        excited = d * excited * d.adjoint();
    }

    state.rho.topLeftCorner(n, n) += excited;
    state.rho.bottomRightCorner(n, n).setZero();
    state.rho.topRightCorner(n, n).setZero();
    state.rho.bottomLeftCorner(n, n).setZero();
    state.clock = 0.0;
}

namespace {

struct TrajectoryDraws {
    double nbar0;
    double rabi_scale;
    double spin_detuning;
    double axial_offset;
};

TrajectoryDraws draw_parameters(const ThermalSpec& initial, const NoisySetup& setup,
                                CounterRng& rng) {
    TrajectoryDraws d;
    d.nbar0 = std::max(0.02, rng.gaussian(initial.nbar, setup.noise.nbar_sd));
    d.rabi_scale = sample_radial_rabi_scale(setup.radial, rng) *
                   (1.0 + rng.gaussian(0.0, setup.noise.rabi_rel_sd));
    d.spin_detuning = rng.gaussian(0.0, setup.noise.detuning_sd);
    d.axial_offset = 2.0 * kPi * rng.gaussian(0.0, setup.noise.freq_jitter_sd);
    return d;
}

std::vector<double> run_trajectory(const ThermalSpec& initial, int rounds,
                                   const NoisySetup& setup,
                                   const std::vector<RoundParams>& schedule,
                                   CounterRng rng) {
    const TrajectoryDraws draws = draw_parameters(initial, setup, rng);
    const int dim = setup.dim > 0 ? setup.dim : default_fock_dim(initial.nbar);
    JointState state = make_joint(make_thermal(ThermalSpec{draws.nbar0}, dim));

    auto estimate = [&]() {
        FockState osc = trace_out_spin(state);
        if (setup.estimator == NbarEstimator::ThermalFraction)
            return estimate_nbar_thermal_fraction(osc);
        return mean_energy(osc).nbar;
    };

    std::vector<double> series{estimate()};
    const double rabi_true = setup.rabi * draws.rabi_scale;
    for (int j = 0; j < rounds; ++j) {
        const RoundParams& p = schedule[j];
        // Position contraction: measurement in Y, correction in X; then the
        // same pair rotated to the momentum quadrature; a repump follows each.
        const cplx targets[4] = {cplx(0.0, p.epsilon), cplx(p.alpha, 0.0),
                                 cplx(p.epsilon, 0.0), cplx(0.0, -p.alpha)};
        const double bases[4] = {kPi / 2.0, 0.0, kPi / 2.0, 0.0};
        for (int k = 0; k < 4; ++k) {
            DriveConfig d = conditional_displacement_pulse(targets[k], bases[k],
                                                           setup.rabi, setup.eta);
            d.rabi = rabi_true;  // calibrated duration, fluctuating drive
            d.order = setup.order;
            d.spin_detuning = draws.spin_detuning;
            d.motional_detuning = draws.axial_offset;
            evolve_pulse(state, d, setup.noise, setup.integrator);
            if (k == 1 || k == 3) repump(state, setup.noise.recoil, rng);
        }
        series.push_back(estimate());
    }
    return series;
}

} // namespace

NoisySeries run_noisy_experiment(const ThermalSpec& initial, int rounds,
                                 const NoisySetup& setup, int n_trajectories,
                                 std::uint64_t seed) {
    if (n_trajectories < 1)
        throw ConfigError("run_noisy_experiment: need at least one trajectory");

    // Schedule from the nominal initial occupation, as calibrated in the lab.
    ScheduleResult nominal =
        run_schedule(initial, rounds, ScheduleMode::Analytic, setup.eps_scale);

    std::vector<std::vector<double>> all(n_trajectories);
    const int threads = std::max(1, setup.threads);
    auto worker = [&](int begin, int end) {
        for (int k = begin; k < end; ++k) {
            all[k] = run_trajectory(initial, rounds, setup, nominal.params,
                                    CounterRng(seed, {static_cast<std::uint64_t>(k)}));
        }
    };
    if (threads == 1 || n_trajectories == 1) {
        worker(0, n_trajectories);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n_trajectories + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const int begin = t * chunk;
            const int end = std::min(n_trajectories, begin + chunk);
            if (begin < end) pool.emplace_back(worker, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    NoisySeries out;
    out.per_trajectory = all;
    const int npts = rounds + 1;
    for (int r = 0; r < npts; ++r) {
        double mean = 0.0;
        for (const auto& tr : all) mean += tr[r];
        mean /= n_trajectories;
        out.nbar_mean.push_back(mean);
    }
    // Bootstrap CI over trajectories (ordered, seeded reduction).
    CounterRng boot(seed, {0xc1});
    std::vector<double> resampled(setup.bootstrap);
    for (int r = 0; r < npts; ++r) {
        if (n_trajectories < 2 || setup.bootstrap < 8) {
            out.ci_low.push_back(out.nbar_mean[r]);
            out.ci_high.push_back(out.nbar_mean[r]);
            continue;
        }
        for (int b = 0; b < setup.bootstrap; ++b) {
            double m = 0.0;
            for (int k = 0; k < n_trajectories; ++k) {
                const int pick = static_cast<int>(boot.next_u64() % n_trajectories);
                m += all[pick][r];
            }
            resampled[b] = m / n_trajectories;
        }
        std::sort(resampled.begin(), resampled.end());
        out.ci_low.push_back(resampled[static_cast<size_t>(0.025 * (setup.bootstrap - 1))]);
        out.ci_high.push_back(resampled[static_cast<size_t>(0.975 * (setup.bootstrap - 1))]);
    }
    return out;
}

} // namespace mvcool
