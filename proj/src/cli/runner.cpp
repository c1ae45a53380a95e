#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvcool/cli.hpp"
#include "mvcool/measurement.hpp"
#include "mvcool/protocol.hpp"

namespace mvcool::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

struct OutputWriter {
    fs::path dir;
    std::vector<std::string> written;

    explicit OutputWriter(const std::string& out) : dir(out) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw std::ios_base::failure("cannot create output dir: " + out);
    }

    void text(const std::string& name, const std::string& content) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw std::ios_base::failure("cannot open " + (dir / name).string());
        f << content;
        if (!f) throw std::ios_base::failure("write failed: " + (dir / name).string());
        written.push_back(name);
    }

    void csv(const std::string& name, const std::vector<std::string>& header,
             const std::vector<std::vector<double>>& rows) {
        std::string body;
        for (size_t i = 0; i < header.size(); ++i)
            body += (i ? "," : "") + header[i];
        body += "\n";
        for (const auto& row : rows) {
            for (size_t i = 0; i < row.size(); ++i) body += (i ? "," : "") + fmt(row[i]);
            body += "\n";
        }
        text(name, body);
    }
};

int resolve_threads(const Config& cfg) {
    if (cfg.threads > 0) return cfg.threads;
    if (const char* env = std::getenv("MVCOOL_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

RadialModes resolve_radial(const Config& cfg) {
    if (!cfg.radial_auto) return cfg.radial;
    return radial_from_axial_temperature(cfg.nbar, cfg.trap_omega, cfg.radial);
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
    return v;
}

double auto_alpha_max(double nbar) { return 3.0 / std::sqrt(nbar + 0.5); }

// ---- experiment kinds -----------------------------------------------------

void run_optimize(const Config& cfg, OutputWriter& out) {
    ThermalSpec spec{cfg.nbar};
    RoundParams cl = optimal_classical_params(spec);
    const double e0 = 2.0 * spec.s2();
    json j;
    j["nbar"] = cfg.nbar;
    j["s"] = spec.s();
    j["epsilon"] = cl.epsilon;
    j["alpha"] = cl.alpha;
    j["energy_ratio"] = classical_energy(cl.epsilon, cl.alpha, spec) / e0;
    EpsilonOptimum q = optimize_epsilon(spec);
    j["quantum"] = {{"epsilon", q.epsilon},
                    {"alpha", q.alpha},
                    {"energy", q.energy},
                    {"energy_ratio", q.energy / e0}};
    out.text("result.json", j.dump(2) + "\n");
}

void run_cool_classical(const Config& cfg, OutputWriter& out) {
    ThermalSpec spec{cfg.nbar};
    GridDensity fq = gaussian_grid(spec.s());
    GridDensity fp = fq;
    std::vector<std::vector<double>> rows;
    double nbar_assumed = cfg.nbar;
    rows.push_back({0.0, fq.moment(2), fp.moment(2), fq.moment(2) + fp.moment(2)});
    for (int r = 0; r < cfg.rounds; ++r) {
        RoundParams p;
        if (cfg.schedule_mode == "explicit") {
            if (r >= static_cast<int>(cfg.explicit_rounds.size()))
                throw ConfigError("explicit schedule shorter than rounds");
            p = cfg.explicit_rounds[r];
        } else {
            ThermalSpec cur{nbar_assumed};
            p = RoundParams::make(cfg.eps_scale / (4.0 * cur.s()), 0.0);
            p.alpha = classical_alpha_given_epsilon(p.epsilon, cur.s2());
            nbar_assumed *= 1.0 - cfg.eps_scale * cfg.eps_scale *
                                      std::exp(-cfg.eps_scale * cfg.eps_scale);
        }
        fq = bayes_round(fq, p).f1;
        fp = bayes_round(fp, p).f1;
        rows.push_back({static_cast<double>(r + 1), fq.moment(2), fp.moment(2),
                        fq.moment(2) + fp.moment(2)});
    }
    out.csv("result.csv",
            {"round", "var_q (dimensionless)", "var_p (dimensionless)",
             "energy (hbar*omega)"},
            rows);
}

void run_cool_quantum(const Config& cfg, OutputWriter& out) {
    ThermalSpec spec{cfg.nbar};
    ScheduleResult res =
        run_schedule(spec, cfg.rounds, ScheduleMode::Fock, cfg.eps_scale, cfg.dim);
    std::vector<std::vector<double>> rows;
    for (int r = 0; r <= cfg.rounds; ++r)
        rows.push_back({static_cast<double>(r), res.nbar_analytic[r], res.nbar_fock[r],
                        res.energy_fock[r]});
    out.csv("result.csv",
            {"round", "nbar_analytic (dimensionless)", "nbar_fock (dimensionless)",
             "energy (hbar*omega)"},
            rows);
}

NoisySetup noisy_setup(const Config& cfg) {
    NoisySetup setup;
    setup.noise = cfg.noise;
    setup.radial = resolve_radial(cfg);
    setup.trap_omega = cfg.trap_omega;
    setup.eta = cfg.trap_eta;
    setup.rabi = cfg.trap_rabi;
    setup.eps_scale = cfg.eps_scale;
    setup.dim = cfg.dim;
    setup.integrator = cfg.integrator == "exact-unitary" ? PulseIntegrator::ExactUnitary
                                                         : PulseIntegrator::Rk4;
    setup.order = cfg.order == "full" ? LambDickeOrder::Full : LambDickeOrder::Leading;
    setup.estimator = cfg.estimator == "thermal-fraction" ? NbarEstimator::ThermalFraction
                                                          : NbarEstimator::Direct;
    setup.threads = resolve_threads(cfg);
    return setup;
}

void run_cool_noisy(const Config& cfg, OutputWriter& out) {
    NoisySetup setup = noisy_setup(cfg);
    NoisySeries series = run_noisy_experiment(ThermalSpec{cfg.nbar}, cfg.rounds, setup,
                                              cfg.trajectories, cfg.seed);
    std::vector<std::vector<double>> rows;
    for (int r = 0; r <= cfg.rounds; ++r)
        rows.push_back({static_cast<double>(r), series.nbar_mean[r], series.ci_low[r],
                        series.ci_high[r]});
    out.csv("result.csv",
            {"round", "nbar_mean (dimensionless)", "ci_low (dimensionless)",
             "ci_high (dimensionless)"},
            rows);
    if (cfg.dump_trajectories) {
        std::vector<std::vector<double>> traj_rows;
        for (size_t k = 0; k < series.per_trajectory.size(); ++k)
            for (size_t r = 0; r < series.per_trajectory[k].size(); ++r)
                traj_rows.push_back({static_cast<double>(k), static_cast<double>(r),
                                     series.per_trajectory[k][r]});
        out.csv("trajectories.csv",
                {"trajectory", "round", "nbar (dimensionless)"}, traj_rows);
    }
}

ReadoutCurve load_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open data file: " + path);
    ReadoutCurve curve;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double a, p;
        int shots;
        if (std::sscanf(line.c_str(), "%lf,%lf,%d", &a, &p, &shots) != 3)
            throw ConfigError("data file row not 'alpha_or_time,prob,shots': " + line);
        curve.alphas.push_back(a);
        curve.probs.push_back(p);
        curve.shots = shots;
        curve.ci.push_back({p, p});
    }
    return curve;
}

void write_curve_csv(OutputWriter& out, const std::string& name, const char* xname,
                     const std::vector<double>& xs, const std::vector<double>& ps,
                     int shots) {
    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < xs.size(); ++i)
        rows.push_back({xs[i], ps[i], static_cast<double>(shots)});
    out.csv(name, {xname, "prob (dimensionless)", "shots (count)"}, rows);
}

void run_readout_fit(const Config& cfg, OutputWriter& out) {
    RadialModes radial = resolve_radial(cfg);
    ReadoutCurve curve;
    if (!cfg.readout_data.empty()) {
        curve = load_curve_csv(cfg.readout_data);
    } else {
        const int dim = cfg.dim > 0 ? cfg.dim : default_fock_dim(cfg.nbar);
        FockState state = make_thermal(ThermalSpec{cfg.nbar}, dim);
        const double amax = cfg.readout_alpha_max > 0 ? cfg.readout_alpha_max
                                                      : auto_alpha_max(cfg.nbar);
        CounterRng rng(cfg.seed, {0x5df});
        curve = simulate_readout(
            state, linspace(amax / cfg.readout_points, amax, cfg.readout_points), radial,
            cfg.readout_order == "full" ? ReadoutOrder::Full : ReadoutOrder::Leading,
            cfg.readout_shots, rng, cfg.trap_eta);
    }
    write_curve_csv(out, "curve.csv", "alpha (dimensionless)", curve.alphas, curve.probs,
                    curve.shots);
    NbarFit fit = fit_nbar(curve,
                           cfg.readout_model == "full" ? NbarModel::Full : NbarModel::Gaussian,
                           radial, cfg.trap_eta);
    json j;
    j["nbar"] = fit.nbar;
    j["ci95"] = fit.ci95;
    j["chi2"] = fit.chi2;
    j["iterations"] = fit.iterations;
    j["model"] = cfg.readout_model;
    out.text("result.json", j.dump(2) + "\n");
}

void run_bsb_fit(const Config& cfg, OutputWriter& out) {
    RadialModes radial = resolve_radial(cfg);
    BsbCurve curve;
    if (!cfg.bsb_data.empty()) {
        ReadoutCurve raw = load_curve_csv(cfg.bsb_data);
        curve.times = raw.alphas;
        curve.probs = raw.probs;
        curve.shots = raw.shots;
        curve.rabi0 = cfg.bsb_rabi0;
        curve.eta = cfg.trap_eta;
    } else {
        // Cool for the configured rounds, then flop on the end state.
        ScheduleResult sched = run_schedule(ThermalSpec{cfg.nbar}, cfg.rounds,
                                            ScheduleMode::Fock, cfg.eps_scale, cfg.dim);
        const int dim = cfg.dim > 0 ? cfg.dim : default_fock_dim(cfg.nbar);
        ProtocolWorkspace ws(dim);
        FockState state = make_thermal(ThermalSpec{cfg.nbar}, dim);
        for (const auto& p : sched.params)
            state = apply_round(state, ws, p.epsilon, p.alpha, p.epsilon, p.alpha);
        const double tmax = cfg.bsb_tmax > 0 ? cfg.bsb_tmax
                                             : 4.0 * 2.0 * 3.141592653589793 / cfg.bsb_rabi0;
        CounterRng rng(cfg.seed, {0xb5b});
        curve = simulate_bsb(state, linspace(0.0, tmax, cfg.bsb_points), cfg.bsb_rabi0,
                             radial, DecayEnvelope{cfg.bsb_tau_exp, cfg.bsb_tau_gauss}, rng,
                             cfg.bsb_shots, cfg.trap_eta);
    }
    write_curve_csv(out, "curve.csv", "time (s)", curve.times, curve.probs, curve.shots);
    TailReport report = fit_tails(curve, cfg.bsb_max_level, cfg.bsb_bootstrap, cfg.seed);
    json j;
    j["populations"] = report.populations;
    j["tail_mass"] = report.tail_mass;
    j["ci"] = {report.ci.first, report.ci.second};
    j["tau_exp"] = report.tau_exp;
    j["tau_gauss"] = report.tau_gauss;
    j["identifiability_warning"] = report.identifiability_warning;
    out.text("result.json", j.dump(2) + "\n");
}

void run_doppler_compare(const Config& cfg, OutputWriter& out) {
    DopplerConfig dop;
    dop.omega = cfg.trap_omega;
    dop.gamma = cfg.doppler_gamma_over_omega * cfg.trap_omega;
    dop.detuning = cfg.doppler_detuning_over_gamma * dop.gamma;
    dop.eta = cfg.doppler_eta;
    dop.pe = cfg.doppler_pe;

    ThermalSpec spec{cfg.nbar};
    const double e0 = 2.0 * spec.s2();

    DopplerLimit limit = doppler_limit(dop);
    const double mv_eps = epsilon_equivalent(dop);
    const double mv_steady = epsilon_equivalent_steady_state_nbar(dop);
    RoundParams opt = optimal_classical_params(spec);

    std::vector<std::vector<double>> rows;
    // method codes: 0 doppler at configured detuning, 1 doppler at the limit,
    // 2 modular-variable mapped to the Doppler slope, 3 optimal modular round.
    rows.push_back({0.0, doppler_steady_state_nbar(dop),
                    doppler_energy_update(spec, dop) - e0});
    DopplerConfig at_limit = dop;
    at_limit.detuning = limit.detuning;
    rows.push_back({1.0, limit.nbar_min, doppler_energy_update(spec, at_limit) - e0});
    rows.push_back({2.0, mv_steady,
                    classical_energy(mv_eps, dop.eta, spec) - e0});
    rows.push_back({3.0, 0.0, classical_energy(opt.epsilon, opt.alpha, spec) - e0});
    out.csv("result.csv",
            {"method (0=doppler,1=doppler-limit,2=mv-matched,3=mv-optimal)",
             "nbar_steady (dimensionless)", "energy_change (hbar*omega)"},
            rows);

    json j;
    j["doppler"] = {{"detuning", dop.detuning},
                    {"nbar_steady", doppler_steady_state_nbar(dop)}};
    j["doppler_limit"] = {{"detuning", limit.detuning},
                          {"nbar_min", limit.nbar_min},
                          {"detuning_scan", doppler_limit_scan(dop)}};
    j["mv_matched"] = {{"epsilon", mv_eps}, {"nbar_steady", mv_steady}};
    j["absorption"] = {{"tau", absorption_time_stats(dop).tau},
                       {"pe_avg", absorption_time_stats(dop).pe_avg}};
    out.text("result.json", j.dump(2) + "\n");
}

void run_fig2(const Config& cfg, OutputWriter& out) {
    ThermalSpec spec{cfg.nbar};
    RoundParams p = optimal_classical_params(spec);
    GridDensity f0 = gaussian_grid(spec.s());
    BayesRoundResult r = bayes_round(f0, p);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < f0.size(); ++i)
        rows.push_back({f0.x(i), f0.f[i], r.m1_minus.f[i], r.f1.f[i]});
    out.csv("fig2.csv",
            {"q (dimensionless)", "f0 (density)", "m1_minus (density)", "f1 (density)"},
            rows);
}

void run_fig3(const Config& cfg, OutputWriter& out) {
    const std::vector<double> nbar0 = {15.0, 34.0, 51.0};
    std::vector<ScheduleResult> results;
    for (double n0 : nbar0)
        results.push_back(run_schedule(ThermalSpec{n0}, cfg.rounds, ScheduleMode::Fock,
                                       cfg.eps_scale, cfg.dim));
    std::vector<std::vector<double>> rows;
    for (int r = 0; r <= cfg.rounds; ++r) {
        std::vector<double> row{static_cast<double>(r)};
        for (const auto& res : results) {
            row.push_back(res.nbar_fock[r]);
            row.push_back(res.nbar_analytic[r]);
        }
        rows.push_back(row);
    }
    out.csv("fig3.csv",
            {"round", "nbar_fock_15 (dimensionless)", "ref_15 (dimensionless)",
             "nbar_fock_34 (dimensionless)", "ref_34 (dimensionless)",
             "nbar_fock_51 (dimensionless)", "ref_51 (dimensionless)"},
            rows);
}

void run_figS1(const Config& cfg, OutputWriter& out) {
    const double nbar = cfg.nbar;
    RadialModes radial = resolve_radial(cfg);
    const int dim = cfg.dim > 0 ? cfg.dim : default_fock_dim(nbar);
    FockState state = make_thermal(ThermalSpec{nbar}, dim);
    const double amax = cfg.readout_alpha_max > 0 ? cfg.readout_alpha_max
                                                  : 3.0 * auto_alpha_max(nbar);
    std::vector<double> alphas = linspace(amax / cfg.readout_points, amax, cfg.readout_points);
    CounterRng rng(cfg.seed, {0xf51});
    ReadoutCurve lead =
        simulate_readout(state, alphas, radial, ReadoutOrder::Leading, 0, rng, cfg.trap_eta);
    ReadoutCurve full =
        simulate_readout(state, alphas, radial, ReadoutOrder::Full, 0, rng, cfg.trap_eta);
    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < alphas.size(); ++i)
        rows.push_back({alphas[i], lead.probs[i], full.probs[i]});
    out.csv("figS1.csv",
            {"alpha (dimensionless)", "p_leading (dimensionless)",
             "p_full (dimensionless)"},
            rows);
}

void run_figS2(const Config& cfg, OutputWriter& out) {
    const int rounds = cfg.rounds;
    ScheduleResult sched = run_schedule(ThermalSpec{cfg.nbar}, rounds, ScheduleMode::Fock,
                                        cfg.eps_scale, cfg.dim);
    const int dim = cfg.dim > 0 ? cfg.dim : default_fock_dim(cfg.nbar);
    ProtocolWorkspace ws(dim);
    FockState state = make_thermal(ThermalSpec{cfg.nbar}, dim);
    const double amax = cfg.readout_alpha_max > 0 ? cfg.readout_alpha_max : 4.0;
    std::vector<double> alphas = linspace(amax / cfg.readout_points, amax, cfg.readout_points);

    std::vector<std::vector<double>> cols;
    cols.push_back(char_real_axis(state, alphas));
    for (const auto& p : sched.params) {
        state = apply_round(state, ws, p.epsilon, p.alpha, p.epsilon, p.alpha);
        cols.push_back(char_real_axis(state, alphas));
    }
    std::vector<std::string> header{"alpha (dimensionless)"};
    for (int r = 0; r <= rounds; ++r) header.push_back("p_round" + std::to_string(r));
    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < alphas.size(); ++i) {
        std::vector<double> row{alphas[i]};
        for (const auto& c : cols) row.push_back(0.5 * (1.0 + c[i]));
        rows.push_back(row);
    }
    out.csv("figS2.csv", header, rows);
}

void run_figS3(const Config& cfg, OutputWriter& out) {
    const std::vector<double> nbar0 = {15.0, 34.0, 51.0};
    const std::vector<int> rounds = {16, 17, 16};
    RadialModes base = cfg.radial;
    const double tmax =
        cfg.bsb_tmax > 0 ? cfg.bsb_tmax : 4.0 * 2.0 * 3.141592653589793 / cfg.bsb_rabi0;
    std::vector<double> times = linspace(0.0, tmax, cfg.bsb_points);

    std::vector<std::vector<double>> curves;
    for (size_t k = 0; k < nbar0.size(); ++k) {
        ScheduleResult sched = run_schedule(ThermalSpec{nbar0[k]}, rounds[k],
                                            ScheduleMode::Fock, cfg.eps_scale, cfg.dim);
        const int dim = cfg.dim > 0 ? cfg.dim : default_fock_dim(nbar0[k]);
        ProtocolWorkspace ws(dim);
        FockState state = make_thermal(ThermalSpec{nbar0[k]}, dim);
        for (const auto& p : sched.params)
            state = apply_round(state, ws, p.epsilon, p.alpha, p.epsilon, p.alpha);
        RadialModes radial =
            cfg.radial_auto ? radial_from_axial_temperature(nbar0[k], cfg.trap_omega, base)
                            : base;
        CounterRng rng(cfg.seed, {0xf53, k});
        BsbCurve curve = simulate_bsb(state, times, cfg.bsb_rabi0, radial,
                                      DecayEnvelope{cfg.bsb_tau_exp, cfg.bsb_tau_gauss},
                                      rng, 0, cfg.trap_eta);
        curves.push_back(curve.probs);
    }
    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < times.size(); ++i)
        rows.push_back({times[i], curves[0][i], curves[1][i], curves[2][i]});
    out.csv("figS3.csv",
            {"time (s)", "p_15 (dimensionless)", "p_34 (dimensionless)",
             "p_51 (dimensionless)"},
            rows);
}

} // namespace

int run(const Config& cfg, bool echo_config) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string resolved = resolved_json(cfg);
    if (echo_config) std::cout << resolved;

    OutputWriter out(cfg.out);
    out.text("resolved_config.json", resolved);

    if (cfg.kind == "optimize")
        run_optimize(cfg, out);
    else if (cfg.kind == "cool-classical")
        run_cool_classical(cfg, out);
    else if (cfg.kind == "cool-quantum")
        run_cool_quantum(cfg, out);
    else if (cfg.kind == "cool-noisy")
        run_cool_noisy(cfg, out);
    else if (cfg.kind == "readout-fit")
        run_readout_fit(cfg, out);
    else if (cfg.kind == "bsb-fit")
        run_bsb_fit(cfg, out);
    else if (cfg.kind == "doppler-compare")
        run_doppler_compare(cfg, out);
    else if (cfg.kind == "fig2")
        run_fig2(cfg, out);
    else if (cfg.kind == "fig3")
        run_fig3(cfg, out);
    else if (cfg.kind == "figS1")
        run_figS1(cfg, out);
    else if (cfg.kind == "figS2")
        run_figS2(cfg, out);
    else if (cfg.kind == "figS3")
        run_figS3(cfg, out);
    else
        throw ConfigError("unknown kind: " + cfg.kind);

    const auto t1 = std::chrono::steady_clock::now();
    json manifest;
    manifest["kind"] = cfg.kind;
    manifest["seed"] = cfg.seed;
    manifest["version"] = "0.1.0";
    manifest["wall_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    manifest["outputs"] = out.written;
    out.text("manifest.json", manifest.dump(2) + "\n");
    return 0;
}

int main_entry(int argc, char** argv) {
    CLI::App app{"modular-variable laser cooling: simulation and fitting batch runner"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed_override = 0;
    bool seed_given = false;
    std::string out_override;
    int threads_override = 0;
    bool echo = false;

    CLI::App* runcmd = app.add_subcommand("run", "execute one experiment config");
    runcmd->add_option("config", config_path, "JSON experiment config")->required();
    runcmd->add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    runcmd->add_option("--out", out_override, "override the output directory");
    runcmd->add_option("--threads", threads_override, "worker threads (0 = env/default)");
    runcmd->add_flag("--echo-config", echo, "print the resolved config to stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        Config cfg = load_config(config_path);
        if (seed_given) cfg.seed = seed_override;
        if (!out_override.empty()) cfg.out = out_override;
        if (threads_override > 0) cfg.threads = threads_override;
        return run(cfg, echo);
    } catch (const ConfigError& e) {
        std::cerr << "mvcool-error: category=config exit=2 message=\"" << e.what() << "\"\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "mvcool-error: category=numerical exit=3 message=\"" << e.what()
                  << "\"\n";
        return 3;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "mvcool-error: category=io exit=4 message=\"" << e.what() << "\"\n";
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "mvcool-error: category=io exit=4 message=\"" << e.what() << "\"\n";
        return 4;
    }
}

} // namespace mvcool::cli
