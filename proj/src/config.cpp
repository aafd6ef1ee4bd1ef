#include "gesense/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gesense::config {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config " + path + ": " + what);
}

double get_number(const ordered_json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

double require_positive(const ordered_json& j, const std::string& path) {
    const double v = get_number(j, path);
    if (!(v > 0.0)) fail(path, "must be positive");
    return v;
}

int get_int(const ordered_json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<int>();
}

// Walk an object with a per-key handler; unknown keys are configuration errors.
template <typename Handler>
void walk(const ordered_json& j, const std::string& path, Handler&& handle) {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : j.items())
        if (!handle(key, value)) fail(path + "/" + key, "unknown key");
}

void parse_drone(const ordered_json& j, const std::string& path, telemetry::DroneParams& d) {
    walk(j, path, [&](const std::string& k, const ordered_json& v) {
        const std::string p = path + "/" + k;
        if (k == "mass") d.mass = require_positive(v, p);
        else if (k == "gravity") d.gravity = require_positive(v, p);
        else if (k == "thrust_coeff") d.thrust_coeff = require_positive(v, p);
        else if (k == "thrust_coeff_from") {
            if (!v.is_object()) fail(p, "expected an object");
            double ct = 0.08, rho = 1.225, dia = 0.051;
            walk(v, p, [&](const std::string& k2, const ordered_json& v2) {
                const std::string p2 = p + "/" + k2;
                if (k2 == "c_t") ct = require_positive(v2, p2);
                else if (k2 == "air_density") rho = require_positive(v2, p2);
                else if (k2 == "diameter") dia = require_positive(v2, p2);
                else return false;
                return true;
            });
            d.thrust_coeff = telemetry::DroneParams::thrust_coeff_from(ct, rho, dia);
        }
        else if (k == "arm_length") d.arm_length = require_positive(v, p);
        else if (k == "torque_coeff") d.torque_coeff = require_positive(v, p);
        else if (k == "inertia_diag") {
            if (!v.is_array() || v.size() != 3) fail(p, "expected an array of 3 numbers");
            for (int i = 0; i < 3; ++i) d.inertia_diag[i] = require_positive(v[i], p);
        }
        else if (k == "propeller_radius") d.propeller_radius = require_positive(v, p);
        else if (k == "pwm_max") d.pwm_max = require_positive(v, p);
        else if (k == "hover_pwm_fraction") {
            d.hover_pwm_fraction = require_positive(v, p);
            if (d.hover_pwm_fraction >= 1.0) fail(p, "must be < 1");
        }
        else return false;
        return true;
    });
}

void parse_vec3(const ordered_json& j, const std::string& path, Eigen::Vector3d& out) {
    if (!j.is_array() || j.size() != 3) fail(path, "expected an array of 3 numbers");
    for (int i = 0; i < 3; ++i) out[i] = get_number(j[i], path);
}

void parse_controller(const ordered_json& j, const std::string& path,
                      sim::ControllerConfig& c) {
    walk(j, path, [&](const std::string& k, const ordered_json& v) {
        const std::string p = path + "/" + k;
        if (k == "kp_pos") parse_vec3(v, p, c.kp_pos);
        else if (k == "kv_pos") parse_vec3(v, p, c.kv_pos);
        else if (k == "ki_z") c.ki_z = get_number(v, p);
        else if (k == "integral_limit") c.integral_limit = require_positive(v, p);
        else if (k == "k_att") c.k_att = require_positive(v, p);
        else if (k == "k_rate") c.k_rate = require_positive(v, p);
        else return false;
        return true;
    });
}

void parse_ground_effect(const ordered_json& j, const std::string& path,
                         sim::GroundEffectModel& g) {
    walk(j, path, [&](const std::string& k, const ordered_json& v) {
        const std::string p = path + "/" + k;
        if (k == "kind") {
            if (!v.is_string()) fail(p, "expected a string");
            const auto s = v.get<std::string>();
            if (s == "none") g.kind = sim::GroundEffectKind::None;
            else if (s == "cheeseman_bennett") g.kind = sim::GroundEffectKind::CheesemanBennett;
            else fail(p, "must be 'none' or 'cheeseman_bennett'");
        }
        else if (k == "jitter_ratio") {
            g.jitter_ratio = get_number(v, p);
            if (g.jitter_ratio < 0.0) fail(p, "must be >= 0");
        }
        else if (k == "lateral_ratio") {
            g.lateral_ratio = get_number(v, p);
            if (g.lateral_ratio < 0.0) fail(p, "must be >= 0");
        }
        else if (k == "band_lo") g.band_lo = require_positive(v, p);
        else if (k == "band_hi") g.band_hi = require_positive(v, p);
        else if (k == "torque_offset_x") g.torque_offset_x = get_number(v, p);
        else if (k == "edge_blend_ratio") {
            g.edge_blend_ratio = get_number(v, p);
            if (g.edge_blend_ratio < 0.0) fail(p, "must be >= 0");
        }
        else if (k == "wake_trail_ratio") {
            g.wake_trail_ratio = get_number(v, p);
            if (g.wake_trail_ratio < 0.0 || g.wake_trail_ratio > 1.0) fail(p, "must be in [0, 1]");
        }
        else return false;
        return true;
    });
    if (!(g.band_lo < g.band_hi)) fail(path + "/band_lo", "must be below band_hi");
}

void parse_scene(const ordered_json& j, const std::string& path, sim::Scene& s) {
    walk(j, path, [&](const std::string& k, const ordered_json& v) {
        if (k != "segments") return false;
        if (!v.is_array() || v.empty()) fail(path + "/segments", "expected a non-empty array");
        s.segments.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::string p = path + "/segments/" + std::to_string(i);
            sim::SurfaceSegment seg;
            walk(v[i], p, [&](const std::string& k2, const ordered_json& v2) {
                const std::string p2 = p + "/" + k2;
                if (k2 == "x_start") seg.x_start = get_number(v2, p2);
                else if (k2 == "x_end") seg.x_end = get_number(v2, p2);
                else if (k2 == "surface_height") seg.surface_height = get_number(v2, p2);
                else if (k2 == "material_gain") {
                    seg.material_gain = get_number(v2, p2);
                    if (seg.material_gain < 0.0) fail(p2, "must be >= 0");
                }
                else return false;
                return true;
            });
            s.segments.push_back(seg);
        }
        return true;
    });
    try {
        s.validate();
    } catch (const ValidationError& e) {
        fail(path, e.what());
    }
}

void parse_mission(const ordered_json& j, const std::string& path, sim::MissionConfig& m,
                   double& clearance) {
    walk(j, path, [&](const std::string& k, const ordered_json& v) {
        const std::string p = path + "/" + k;
        if (k == "speed") m.speed = require_positive(v, p);
        else if (k == "clearance") clearance = require_positive(v, p);
        else if (k == "approach_angle_deg") {
            m.approach_angle_deg = get_number(v, p);
            if (std::abs(m.approach_angle_deg) >= 89.0) fail(p, "must be within (-89, 89)");
        }
        else if (k == "x_start") m.x_start = get_number(v, p);
        else if (k == "duration") m.duration = require_positive(v, p);
        else if (k == "dt") {
            m.dt = require_positive(v, p);
            if (m.dt > 0.02) fail(p, "must be <= 0.02");
        }
        else if (k == "sample_rate") m.sample_rate = require_positive(v, p);
        else if (k == "seed") m.seed = v.get<std::uint64_t>();
        else if (k == "noise") {
            walk(v, p, [&](const std::string& k2, const ordered_json& v2) {
                const std::string p2 = p + "/" + k2;
                if (k2 == "acc_std") m.noise.acc_std = get_number(v2, p2);
                else if (k2 == "gyro_std") m.noise.gyro_std = get_number(v2, p2);
                else return false;
                if (m.noise.acc_std < 0.0 || m.noise.gyro_std < 0.0) fail(p2, "must be >= 0");
                return true;
            });
        }
        else return false;
        return true;
    });
}

void parse_spectral(const ordered_json& j, const std::string& path,
                    spectral::SpectralConfig& s) {
    walk(j, path, [&](const std::string& k, const ordered_json& v) {
        const std::string p = path + "/" + k;
        if (k == "window_size") {
            s.window_size = get_int(v, p);
            if (s.window_size < 2) fail(p, "must be >= 2");
        }
        else if (k == "overlap") {
            s.overlap = get_int(v, p);
            if (s.overlap < 0) fail(p, "must be >= 0");
        }
        else if (k == "band_lo") s.band_lo = get_number(v, p);
        else if (k == "band_hi") s.band_hi = get_number(v, p);
        else if (k == "znorm") {
            if (!v.is_boolean()) fail(p, "expected a boolean");
            s.znorm = v.get<bool>();
        }
        else return false;
        return true;
    });
    if (s.overlap >= s.window_size) fail(path + "/overlap", "must be below window_size");
    if (!(s.band_lo <= s.band_hi)) fail(path + "/band_lo", "must be <= band_hi");
}

void parse_cfar(const ordered_json& j, const std::string& path, physics::CfarConfig& c) {
    walk(j, path, [&](const std::string& k, const ordered_json& v) {
        const std::string p = path + "/" + k;
        if (k == "p_fa") {
            c.p_fa = get_number(v, p);
            if (!(c.p_fa > 0.0 && c.p_fa < 1.0)) fail(p, "must be in (0, 1)");
        }
        else if (k == "leading_window") {
            c.leading_window = get_int(v, p);
            if (c.leading_window < 1) fail(p, "must be >= 1");
        }
        else if (k == "guard_cells") {
            c.guard_cells = get_int(v, p);
            if (c.guard_cells < 0) fail(p, "must be >= 0");
        }
        else return false;
        return true;
    });
}

void parse_nn(const ordered_json& j, const std::string& path, NnConfig& n) {
    walk(j, path, [&](const std::string& k, const ordered_json& v) {
        const std::string p = path + "/" + k;
        if (k == "window") {
            n.window = get_int(v, p);
            if (n.window < 12) fail(p, "must be >= 12");
        }
        else if (k == "epochs") {
            n.epochs = get_int(v, p);
            if (n.epochs < 0) fail(p, "must be >= 0");
        }
        else if (k == "batch_size") {
            n.batch_size = get_int(v, p);
            if (n.batch_size < 1) fail(p, "must be >= 1");
        }
        else if (k == "lambda") {
            n.lambda = get_number(v, p);
            if (n.lambda < 0.0) fail(p, "must be >= 0");
        }
        else if (k == "learning_rate") n.learning_rate = require_positive(v, p);
        else if (k == "momentum") {
            n.momentum = get_number(v, p);
            if (n.momentum < 0.0 || n.momentum >= 1.0) fail(p, "must be in [0, 1)");
        }
        else if (k == "seed") n.seed = v.get<std::uint64_t>();
        else if (k == "train_stride") {
            n.train_stride = get_int(v, p);
            if (n.train_stride < 1) fail(p, "must be >= 1");
        }
        else if (k == "detect_stride") {
            n.detect_stride = get_int(v, p);
            if (n.detect_stride < 1) fail(p, "must be >= 1");
        }
        else return false;
        return true;
    });
}

void parse_compress(const ordered_json& j, const std::string& path, CompressConfig& c) {
    walk(j, path, [&](const std::string& k, const ordered_json& v) {
        const std::string p = path + "/" + k;
        if (k == "target_sparsity") {
            c.target_sparsity = get_number(v, p);
            if (!(c.target_sparsity >= 0.0 && c.target_sparsity < 1.0))
                fail(p, "must be in [0, 1)");
        }
        else if (k == "bits") {
            c.bits = get_int(v, p);
            if (c.bits != 4 && c.bits != 8 && c.bits != 16) fail(p, "must be 4, 8 or 16");
        }
        else if (k == "schedule") {
            walk(v, p, [&](const std::string& k2, const ordered_json& v2) {
                const std::string p2 = p + "/" + k2;
                if (k2 == "s_i") c.schedule.s_i = get_number(v2, p2);
                else if (k2 == "s_f") c.schedule.s_f = get_number(v2, p2);
                else if (k2 == "t_e") c.schedule.t_e = get_int(v2, p2);
                else if (k2 == "p_exp") c.schedule.p_exp = get_number(v2, p2);
                else return false;
                return true;
            });
            try {
                c.schedule.validate();
            } catch (const ValidationError& e) {
                fail(p, e.what());
            }
        }
        else return false;
        return true;
    });
}

void parse_eval(const ordered_json& j, const std::string& path, EvalConfig& e) {
    walk(j, path, [&](const std::string& k, const ordered_json& v) {
        const std::string p = path + "/" + k;
        if (k == "train_flights") {
            e.train_flights = get_int(v, p);
            if (e.train_flights < 1) fail(p, "must be >= 1");
        }
        else if (k == "eval_flights") {
            e.eval_flights = get_int(v, p);
            if (e.eval_flights < 1) fail(p, "must be >= 1");
        }
        else if (k == "heights" || k == "angles") {
            if (!v.is_array() || v.empty()) fail(p, "expected a non-empty array");
            std::vector<double> vals;
            for (const auto& x : v) vals.push_back(get_number(x, p));
            if (k == "heights") {
                for (double h : vals)
                    if (!(h > 0.0)) fail(p, "heights must be positive");
                e.heights = vals;
            } else {
                e.angles = vals;
            }
        }
        else if (k == "max_match_s") e.max_match_s = require_positive(v, p);
        else if (k == "base_seed") e.base_seed = v.get<std::uint64_t>();
        else if (k == "scene") {
            walk(v, p, [&](const std::string& k2, const ordered_json& v2) {
                const std::string p2 = p + "/" + k2;
                if (k2 == "floor_gain") e.scene.floor_gain = get_number(v2, p2);
                else if (k2 == "platform_gain") e.scene.platform_gain = get_number(v2, p2);
                else if (k2 == "platform_height") e.scene.platform_height = get_number(v2, p2);
                else if (k2 == "length") e.scene.length = require_positive(v2, p2);
                else if (k2 == "edge_min_x") e.scene.edge_min_x = get_number(v2, p2);
                else if (k2 == "edge_max_x") e.scene.edge_max_x = get_number(v2, p2);
                else return false;
                return true;
            });
            if (!(e.scene.edge_min_x <= e.scene.edge_max_x))
                fail(p + "/edge_min_x", "must be <= edge_max_x");
        }
        else if (k == "baseline") {
            walk(v, p, [&](const std::string& k2, const ordered_json& v2) {
                const std::string p2 = p + "/" + k2;
                if (k2 == "corr_window") {
                    e.baseline.corr_window = get_int(v2, p2);
                    if (e.baseline.corr_window < 3) fail(p2, "must be >= 3");
                }
                else if (k2 == "smooth_s") e.baseline.smooth_s = require_positive(v2, p2);
                else return false;
                return true;
            });
        }
        else return false;
        return true;
    });
}

}  // namespace

double RunConfig::altitude_for(const sim::Scene& s) const {
    double top = 0.0;
    for (const auto& seg : s.segments) top = std::max(top, seg.surface_height);
    return top + mission_clearance;
}

RunConfig parse_config(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }

    RunConfig cfg;
    // Default scene: floor then a raised platform with a single height edge.
    cfg.scene.segments = {{0.0, 2.5, 0.0, 1.0}, {2.5, 5.0, 0.30, 40.0}};
    cfg.mission.duration = 9.0;
    cfg.mission.x_start = 0.25;

    walk(j, "", [&](const std::string& k, const ordered_json& v) {
        if (k == "drone") parse_drone(v, "/drone", cfg.drone);
        else if (k == "controller") parse_controller(v, "/controller", cfg.controller);
        else if (k == "ground_effect") parse_ground_effect(v, "/ground_effect", cfg.ground_effect);
        else if (k == "scene") parse_scene(v, "/scene", cfg.scene);
        else if (k == "mission") parse_mission(v, "/mission", cfg.mission, cfg.mission_clearance);
        else if (k == "spectral") parse_spectral(v, "/spectral", cfg.spectral);
        else if (k == "cfar") parse_cfar(v, "/cfar", cfg.cfar);
        else if (k == "gate_window_s") {
            cfg.gate_window_s = get_number(v, "/gate_window_s");
            if (cfg.gate_window_s < 0.0) fail("/gate_window_s", "must be >= 0");
        }
        else if (k == "nn") parse_nn(v, "/nn", cfg.nn);
        else if (k == "compress") parse_compress(v, "/compress", cfg.compress);
        else if (k == "eval") parse_eval(v, "/eval", cfg.eval);
        else return false;
        return true;
    });

    try {
        cfg.drone.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("config /drone: ") + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string default_config_json() {
    const RunConfig cfg = parse_config("{}");
    ordered_json j;
    j["drone"] = {{"mass", cfg.drone.mass},
                  {"gravity", cfg.drone.gravity},
                  {"thrust_coeff", cfg.drone.thrust_coeff},
                  {"arm_length", cfg.drone.arm_length},
                  {"torque_coeff", cfg.drone.torque_coeff},
                  {"inertia_diag", {cfg.drone.inertia_diag[0], cfg.drone.inertia_diag[1],
                                    cfg.drone.inertia_diag[2]}},
                  {"propeller_radius", cfg.drone.propeller_radius},
                  {"pwm_max", cfg.drone.pwm_max},
                  {"hover_pwm_fraction", cfg.drone.hover_pwm_fraction}};
    j["controller"] = {{"kp_pos", {cfg.controller.kp_pos[0], cfg.controller.kp_pos[1],
                                   cfg.controller.kp_pos[2]}},
                       {"kv_pos", {cfg.controller.kv_pos[0], cfg.controller.kv_pos[1],
                                   cfg.controller.kv_pos[2]}},
                       {"ki_z", cfg.controller.ki_z},
                       {"integral_limit", cfg.controller.integral_limit},
                       {"k_att", cfg.controller.k_att},
                       {"k_rate", cfg.controller.k_rate}};
    j["ground_effect"] = {
        {"kind", cfg.ground_effect.kind == sim::GroundEffectKind::None ? "none"
                                                                       : "cheeseman_bennett"},
        {"jitter_ratio", cfg.ground_effect.jitter_ratio},
        {"lateral_ratio", cfg.ground_effect.lateral_ratio},
        {"band_lo", cfg.ground_effect.band_lo},
        {"band_hi", cfg.ground_effect.band_hi},
        {"torque_offset_x", cfg.ground_effect.torque_offset_x},
        {"edge_blend_ratio", cfg.ground_effect.edge_blend_ratio},
        {"wake_trail_ratio", cfg.ground_effect.wake_trail_ratio}};
    j["scene"] = {{"segments", ordered_json::array()}};
    for (const auto& s : cfg.scene.segments)
        j["scene"]["segments"].push_back({{"x_start", s.x_start},
                                          {"x_end", s.x_end},
                                          {"surface_height", s.surface_height},
                                          {"material_gain", s.material_gain}});
    j["mission"] = {{"speed", cfg.mission.speed},
                    {"clearance", cfg.mission_clearance},
                    {"approach_angle_deg", cfg.mission.approach_angle_deg},
                    {"x_start", cfg.mission.x_start},
                    {"duration", cfg.mission.duration},
                    {"dt", cfg.mission.dt},
                    {"sample_rate", cfg.mission.sample_rate},
                    {"seed", cfg.mission.seed},
                    {"noise", {{"acc_std", cfg.mission.noise.acc_std},
                               {"gyro_std", cfg.mission.noise.gyro_std}}}};
    j["spectral"] = {{"window_size", cfg.spectral.window_size},
                     {"overlap", cfg.spectral.overlap},
                     {"band_lo", cfg.spectral.band_lo},
                     {"band_hi", cfg.spectral.band_hi},
                     {"znorm", cfg.spectral.znorm}};
    j["cfar"] = {{"p_fa", cfg.cfar.p_fa},
                 {"leading_window", cfg.cfar.leading_window},
                 {"guard_cells", cfg.cfar.guard_cells}};
    j["gate_window_s"] = cfg.gate_window_s;
    j["nn"] = {{"window", cfg.nn.window},
               {"epochs", cfg.nn.epochs},
               {"batch_size", cfg.nn.batch_size},
               {"lambda", cfg.nn.lambda},
               {"learning_rate", cfg.nn.learning_rate},
               {"momentum", cfg.nn.momentum},
               {"seed", cfg.nn.seed},
               {"train_stride", cfg.nn.train_stride},
               {"detect_stride", cfg.nn.detect_stride}};
    j["compress"] = {{"target_sparsity", cfg.compress.target_sparsity},
                     {"bits", cfg.compress.bits},
                     {"schedule", {{"s_i", cfg.compress.schedule.s_i},
                                   {"s_f", cfg.compress.schedule.s_f},
                                   {"t_e", cfg.compress.schedule.t_e},
                                   {"p_exp", cfg.compress.schedule.p_exp}}}};
    j["eval"] = {{"train_flights", cfg.eval.train_flights},
                 {"eval_flights", cfg.eval.eval_flights},
                 {"heights", cfg.eval.heights},
                 {"angles", cfg.eval.angles},
                 {"max_match_s", cfg.eval.max_match_s},
                 {"base_seed", cfg.eval.base_seed},
                 {"scene", {{"floor_gain", cfg.eval.scene.floor_gain},
                            {"platform_gain", cfg.eval.scene.platform_gain},
                            {"platform_height", cfg.eval.scene.platform_height},
                            {"length", cfg.eval.scene.length},
                            {"edge_min_x", cfg.eval.scene.edge_min_x},
                            {"edge_max_x", cfg.eval.scene.edge_max_x}}},
                 {"baseline", {{"corr_window", cfg.eval.baseline.corr_window},
                               {"smooth_s", cfg.eval.baseline.smooth_s}}}};
    return j.dump(1);
}

}  // namespace gesense::config
