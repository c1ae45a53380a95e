#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mvcool/cli.hpp"
#include "mvcool/errors.hpp"

namespace mvcool::cli {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

const std::set<std::string> kKinds = {
    "optimize", "cool-classical", "cool-quantum", "cool-noisy", "readout-fit",
    "bsb-fit",  "doppler-compare", "fig2",        "fig3",       "figS1",
    "figS2",    "figS3"};

} // namespace

Config parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    require_keys(root, "config",
                 {"kind", "seed", "out", "threads", "dump_trajectories", "initial",
                  "rounds", "schedule", "trap", "quantum", "radial", "noise",
                  "trajectories", "integrator", "order", "estimator", "readout", "bsb",
                  "doppler"});

    Config cfg;
    cfg.kind = get_or<std::string>(root, "kind", cfg.kind);
    if (!kKinds.count(cfg.kind)) throw ConfigError("unknown experiment kind '" + cfg.kind + "'");
    cfg.seed = get_or<std::uint64_t>(root, "seed", cfg.seed);
    cfg.out = get_or<std::string>(root, "out", cfg.out);
    cfg.threads = get_or<int>(root, "threads", cfg.threads);
    cfg.dump_trajectories = get_or<bool>(root, "dump_trajectories", cfg.dump_trajectories);
    cfg.rounds = get_or<int>(root, "rounds", cfg.rounds);
    if (cfg.rounds < 0) throw ConfigError("rounds must be >= 0");

    if (root.contains("initial")) {
        const json& j = root["initial"];
        require_keys(j, "initial", {"nbar"});
        cfg.nbar = get_or<double>(j, "nbar", cfg.nbar);
        if (cfg.nbar < 0) throw ConfigError("initial.nbar must be >= 0");
    }
    if (root.contains("schedule")) {
        const json& j = root["schedule"];
        require_keys(j, "schedule", {"mode", "eps_scale", "rounds"});
        cfg.schedule_mode = get_or<std::string>(j, "mode", cfg.schedule_mode);
        cfg.eps_scale = get_or<double>(j, "eps_scale", cfg.eps_scale);
        if (cfg.eps_scale <= 0) throw ConfigError("schedule.eps_scale must be > 0");
        if (cfg.schedule_mode == "explicit") {
            if (!j.contains("rounds")) throw ConfigError("schedule: explicit mode needs rounds");
            for (const auto& r : j["rounds"]) {
                require_keys(r, "schedule.rounds[]", {"epsilon", "alpha", "theta_m", "theta_c"});
                RoundParams p = RoundParams::make(get_or<double>(r, "epsilon", 0.0),
                                                  get_or<double>(r, "alpha", 0.0),
                                                  get_or<double>(r, "theta_m", 1.5707963267948966));
                if (r.contains("theta_c")) p.theta_c = r["theta_c"].get<double>();
                if (p.epsilon <= 0 || p.alpha < 0)
                    throw ConfigError("schedule.rounds[]: need epsilon > 0, alpha >= 0");
                cfg.explicit_rounds.push_back(p);
            }
        } else if (cfg.schedule_mode != "auto") {
            throw ConfigError("schedule.mode must be auto or explicit");
        }
    }
    if (root.contains("trap")) {
        const json& j = root["trap"];
        require_keys(j, "trap", {"omega", "eta", "rabi"});
        cfg.trap_omega = get_or<double>(j, "omega", cfg.trap_omega);
        cfg.trap_eta = get_or<double>(j, "eta", cfg.trap_eta);
        cfg.trap_rabi = get_or<double>(j, "rabi", cfg.trap_rabi);
        if (cfg.trap_omega <= 0 || cfg.trap_eta <= 0 || cfg.trap_rabi <= 0)
            throw ConfigError("trap values must be positive");
    }
    if (root.contains("quantum")) {
        const json& j = root["quantum"];
        require_keys(j, "quantum", {"dim"});
        cfg.dim = get_or<int>(j, "dim", cfg.dim);
        if (cfg.dim < 0) throw ConfigError("quantum.dim must be >= 0");
    }
    if (root.contains("radial")) {
        const json& j = root["radial"];
        require_keys(j, "radial", {"omega", "eta", "nbar"});
        if (j.contains("omega")) {
            auto v = j["omega"].get<std::vector<double>>();
            if (v.size() != 2) throw ConfigError("radial.omega needs two entries");
            cfg.radial.omega = {v[0], v[1]};
        }
        if (j.contains("eta")) {
            auto v = j["eta"].get<std::vector<double>>();
            if (v.size() != 2) throw ConfigError("radial.eta needs two entries");
            cfg.radial.eta = {v[0], v[1]};
        }
        if (j.contains("nbar")) {
            if (j["nbar"].is_string()) {
                if (j["nbar"].get<std::string>() != "auto")
                    throw ConfigError("radial.nbar: expected numbers or \"auto\"");
                cfg.radial_auto = true;
            } else {
                auto v = j["nbar"].get<std::vector<double>>();
                if (v.size() != 2) throw ConfigError("radial.nbar needs two entries");
                cfg.radial.nbar = {v[0], v[1]};
                cfg.radial_auto = false;
            }
        }
        for (double e : cfg.radial.eta)
            if (e < 0) throw ConfigError("radial.eta must be >= 0");
        for (double n : cfg.radial.nbar)
            if (n < 0) throw ConfigError("radial.nbar must be >= 0");
    }
    if (root.contains("noise")) {
        const json& j = root["noise"];
        require_keys(j, "noise",
                     {"spin_dephasing_g", "spin_dephasing_K", "osc_coherence_time",
                      "heating_rate", "mains", "freq_jitter_sd", "nbar_sd", "rabi_rel_sd",
                      "detuning_sd", "recoil"});
        cfg.noise.spin_dephasing_g = get_or<double>(j, "spin_dephasing_g", 0.0);
        cfg.noise.spin_dephasing_K = get_or<double>(j, "spin_dephasing_K", 0.0);
        cfg.noise.osc_coherence_time = get_or<double>(j, "osc_coherence_time", 0.0);
        cfg.noise.heating_rate = get_or<double>(j, "heating_rate", 0.0);
        cfg.noise.freq_jitter_sd = get_or<double>(j, "freq_jitter_sd", 0.0);
        cfg.noise.nbar_sd = get_or<double>(j, "nbar_sd", 0.0);
        cfg.noise.rabi_rel_sd = get_or<double>(j, "rabi_rel_sd", 0.0);
        cfg.noise.detuning_sd = get_or<double>(j, "detuning_sd", 0.0);
        for (double v : {cfg.noise.spin_dephasing_g, cfg.noise.spin_dephasing_K,
                         cfg.noise.osc_coherence_time, cfg.noise.heating_rate,
                         cfg.noise.freq_jitter_sd, cfg.noise.nbar_sd, cfg.noise.rabi_rel_sd,
                         cfg.noise.detuning_sd})
            if (v < 0) throw ConfigError("noise rates must be >= 0");
        if (j.contains("mains")) {
            for (const auto& m : j["mains"]) {
                require_keys(m, "noise.mains[]", {"harmonic", "amplitude_hz", "phase"});
                MainsHarmonic h;
                h.harmonic = get_or<int>(m, "harmonic", 1);
                h.amplitude_hz = get_or<double>(m, "amplitude_hz", 0.0);
                h.phase = get_or<double>(m, "phase", 0.0);
                if (h.harmonic < 1) throw ConfigError("noise.mains[].harmonic must be >= 1");
                cfg.noise.mains.push_back(h);
            }
        }
        if (j.contains("recoil")) {
            const json& r = j["recoil"];
            require_keys(r, "noise.recoil", {"enabled", "eta_854", "eta_397", "beam_angle"});
            cfg.noise.recoil.enabled = get_or<bool>(r, "enabled", false);
            cfg.noise.recoil.eta_854 = get_or<double>(r, "eta_854", cfg.noise.recoil.eta_854);
            cfg.noise.recoil.eta_397 = get_or<double>(r, "eta_397", cfg.noise.recoil.eta_397);
            cfg.noise.recoil.beam_angle =
                get_or<double>(r, "beam_angle", cfg.noise.recoil.beam_angle);
        }
    }
    cfg.trajectories = get_or<int>(root, "trajectories", cfg.trajectories);
    if (cfg.trajectories < 1) throw ConfigError("trajectories must be >= 1");
    cfg.integrator = get_or<std::string>(root, "integrator", cfg.integrator);
    if (cfg.integrator != "rk4" && cfg.integrator != "exact-unitary")
        throw ConfigError("integrator must be rk4 or exact-unitary");
    cfg.order = get_or<std::string>(root, "order", cfg.order);
    if (cfg.order != "leading" && cfg.order != "full")
        throw ConfigError("order must be leading or full");
    cfg.estimator = get_or<std::string>(root, "estimator", cfg.estimator);
    if (cfg.estimator != "direct" && cfg.estimator != "thermal-fraction")
        throw ConfigError("estimator must be direct or thermal-fraction");

    if (root.contains("readout")) {
        const json& j = root["readout"];
        require_keys(j, "readout", {"alpha_max", "points", "shots", "order", "model", "data"});
        cfg.readout_alpha_max = get_or<double>(j, "alpha_max", 0.0);
        cfg.readout_points = get_or<int>(j, "points", cfg.readout_points);
        cfg.readout_shots = get_or<int>(j, "shots", cfg.readout_shots);
        cfg.readout_order = get_or<std::string>(j, "order", cfg.readout_order);
        cfg.readout_model = get_or<std::string>(j, "model", cfg.readout_model);
        cfg.readout_data = get_or<std::string>(j, "data", "");
        if (cfg.readout_points < 3) throw ConfigError("readout.points must be >= 3");
        if (cfg.readout_order != "leading" && cfg.readout_order != "full")
            throw ConfigError("readout.order must be leading or full");
        if (cfg.readout_model != "gaussian" && cfg.readout_model != "full")
            throw ConfigError("readout.model must be gaussian or full");
    }
    if (root.contains("bsb")) {
        const json& j = root["bsb"];
        require_keys(j, "bsb",
                     {"t_max", "points", "shots", "rabi0", "max_level", "tau_exp",
                      "tau_gauss", "bootstrap", "data"});
        cfg.bsb_tmax = get_or<double>(j, "t_max", 0.0);
        cfg.bsb_points = get_or<int>(j, "points", cfg.bsb_points);
        cfg.bsb_shots = get_or<int>(j, "shots", cfg.bsb_shots);
        cfg.bsb_rabi0 = get_or<double>(j, "rabi0", cfg.bsb_rabi0);
        cfg.bsb_max_level = get_or<int>(j, "max_level", cfg.bsb_max_level);
        cfg.bsb_tau_exp = get_or<double>(j, "tau_exp", 0.0);
        cfg.bsb_tau_gauss = get_or<double>(j, "tau_gauss", 0.0);
        cfg.bsb_bootstrap = get_or<int>(j, "bootstrap", cfg.bsb_bootstrap);
        cfg.bsb_data = get_or<std::string>(j, "data", "");
        if (cfg.bsb_points < 8) throw ConfigError("bsb.points must be >= 8");
        if (cfg.bsb_max_level < 0) throw ConfigError("bsb.max_level must be >= 0");
    }
    if (root.contains("doppler")) {
        const json& j = root["doppler"];
        require_keys(j, "doppler",
                     {"gamma_over_omega", "eta", "pe", "detuning_over_gamma", "cycles"});
        cfg.doppler_gamma_over_omega = get_or<double>(j, "gamma_over_omega", 100.0);
        cfg.doppler_eta = get_or<double>(j, "eta", 0.05);
        cfg.doppler_pe = get_or<double>(j, "pe", 0.5);
        cfg.doppler_detuning_over_gamma = get_or<double>(j, "detuning_over_gamma", -0.5);
        cfg.doppler_cycles = get_or<int>(j, "cycles", 200);
        if (cfg.doppler_gamma_over_omega <= 0) throw ConfigError("doppler.gamma_over_omega must be > 0");
        if (cfg.doppler_pe <= 0 || cfg.doppler_pe > 1)
            throw ConfigError("doppler.pe must be in (0, 1]");
    }
    return cfg;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string resolved_json(const Config& cfg) {
    json j;
    j["kind"] = cfg.kind;
    j["seed"] = cfg.seed;
    j["out"] = cfg.out;
    j["threads"] = cfg.threads;
    j["dump_trajectories"] = cfg.dump_trajectories;
    j["initial"] = {{"nbar", cfg.nbar}};
    j["rounds"] = cfg.rounds;
    json sched{{"mode", cfg.schedule_mode}, {"eps_scale", cfg.eps_scale}};
    if (cfg.schedule_mode == "explicit") {
        json rounds = json::array();
        for (const auto& p : cfg.explicit_rounds)
            rounds.push_back({{"epsilon", p.epsilon},
                              {"alpha", p.alpha},
                              {"theta_m", p.theta_m},
                              {"theta_c", p.theta_c}});
        sched["rounds"] = rounds;
    }
    j["schedule"] = sched;
    j["trap"] = {{"omega", cfg.trap_omega}, {"eta", cfg.trap_eta}, {"rabi", cfg.trap_rabi}};
    j["quantum"] = {{"dim", cfg.dim}};
    json radial{{"omega", {cfg.radial.omega[0], cfg.radial.omega[1]}},
                {"eta", {cfg.radial.eta[0], cfg.radial.eta[1]}}};
    if (cfg.radial_auto)
        radial["nbar"] = "auto";
    else
        radial["nbar"] = {cfg.radial.nbar[0], cfg.radial.nbar[1]};
    j["radial"] = radial;
    json mains = json::array();
    for (const auto& m : cfg.noise.mains)
        mains.push_back(
            {{"harmonic", m.harmonic}, {"amplitude_hz", m.amplitude_hz}, {"phase", m.phase}});
    j["noise"] = {{"spin_dephasing_g", cfg.noise.spin_dephasing_g},
                  {"spin_dephasing_K", cfg.noise.spin_dephasing_K},
                  {"osc_coherence_time", cfg.noise.osc_coherence_time},
                  {"heating_rate", cfg.noise.heating_rate},
                  {"mains", mains},
                  {"freq_jitter_sd", cfg.noise.freq_jitter_sd},
                  {"nbar_sd", cfg.noise.nbar_sd},
                  {"rabi_rel_sd", cfg.noise.rabi_rel_sd},
                  {"detuning_sd", cfg.noise.detuning_sd},
                  {"recoil",
                   {{"enabled", cfg.noise.recoil.enabled},
                    {"eta_854", cfg.noise.recoil.eta_854},
                    {"eta_397", cfg.noise.recoil.eta_397},
                    {"beam_angle", cfg.noise.recoil.beam_angle}}}};
    j["trajectories"] = cfg.trajectories;
    j["integrator"] = cfg.integrator;
    j["order"] = cfg.order;
    j["estimator"] = cfg.estimator;
    j["readout"] = {{"alpha_max", cfg.readout_alpha_max}, {"points", cfg.readout_points},
                    {"shots", cfg.readout_shots},         {"order", cfg.readout_order},
                    {"model", cfg.readout_model},         {"data", cfg.readout_data}};
    j["bsb"] = {{"t_max", cfg.bsb_tmax},        {"points", cfg.bsb_points},
                {"shots", cfg.bsb_shots},       {"rabi0", cfg.bsb_rabi0},
                {"max_level", cfg.bsb_max_level}, {"tau_exp", cfg.bsb_tau_exp},
                {"tau_gauss", cfg.bsb_tau_gauss}, {"bootstrap", cfg.bsb_bootstrap},
                {"data", cfg.bsb_data}};
    j["doppler"] = {{"gamma_over_omega", cfg.doppler_gamma_over_omega},
                    {"eta", cfg.doppler_eta},
                    {"pe", cfg.doppler_pe},
                    {"detuning_over_gamma", cfg.doppler_detuning_over_gamma},
                    {"cycles", cfg.doppler_cycles}};
    return j.dump(2) + "\n";
}

} // namespace mvcool::cli
