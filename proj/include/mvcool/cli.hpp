#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvcool/doppler.hpp"
#include "mvcool/noise.hpp"
#include "mvcool/semiclassical.hpp"

namespace mvcool::cli {

// Batch experiment description; every field has a default so the resolved
// echo always spells out the full document. Unknown keys are rejected.
struct Config {
    std::string kind = "optimize";
    std::uint64_t seed = 1;
    std::string out = "out";
    int threads = 0;  // 0 -> MVCOOL_THREADS env or 1
    bool dump_trajectories = false;

    double nbar = 10.0;
    int rounds = 10;

    std::string schedule_mode = "auto";  // auto | explicit
    double eps_scale = 1.0;
    std::vector<RoundParams> explicit_rounds;

    double trap_omega = 2.0 * 3.14159265358979323846 * 1.7e6;
    double trap_eta = 0.05;
    double trap_rabi = 2.0 * 3.14159265358979323846 * 50e3;

    int dim = 0;  // 0 = heuristic

    RadialModes radial;
    bool radial_auto = true;  // derive radial nbar from the axial temperature

    NoiseConfig noise;
    int trajectories = 20;
    std::string integrator = "rk4";        // rk4 | exact-unitary
    std::string order = "leading";         // leading | full
    std::string estimator = "direct";      // direct | thermal-fraction

    double readout_alpha_max = 0.0;  // 0 = auto from nbar
    int readout_points = 50;
    int readout_shots = 400;
    std::string readout_order = "full";
    std::string readout_model = "full";
    std::string readout_data;  // CSV path; empty = simulate from `nbar`

    double bsb_tmax = 0.0;  // 0 = auto
    int bsb_points = 200;
    int bsb_shots = 400;
    double bsb_rabi0 = 2.0 * 3.14159265358979323846 * 20e3;
    int bsb_max_level = 4;
    double bsb_tau_exp = 0.0;
    double bsb_tau_gauss = 0.0;
    int bsb_bootstrap = 60;
    std::string bsb_data;

    double doppler_gamma_over_omega = 100.0;
    double doppler_eta = 0.05;
    double doppler_pe = 0.5;
    double doppler_detuning_over_gamma = -0.5;
    int doppler_cycles = 200;
};

Config parse_config(const std::string& json_text);
Config load_config(const std::string& path);
std::string resolved_json(const Config& cfg);

// Executes one experiment; writes resolved_config.json, result files and
// manifest.json under cfg.out. Returns the process exit status (0 ok).
int run(const Config& cfg, bool echo_config);

// Entry point used by the mvcool binary.
int main_entry(int argc, char** argv);

} // namespace mvcool::cli
