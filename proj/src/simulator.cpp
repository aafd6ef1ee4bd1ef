#include "gesense/simulator.hpp"

#include <cmath>
#include <complex>

#include "gesense/physics.hpp"

namespace gesense::sim {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
}

void Scene::validate() const {
    if (segments.empty()) throw ValidationError("scene: no segments");
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        if (!(s.x_end > s.x_start)) throw ValidationError("scene: segment with x_end <= x_start");
        if (s.material_gain < 0.0) throw ValidationError("scene: negative material_gain");
        if (i > 0 && std::abs(s.x_start - segments[i - 1].x_end) > 1e-9)
            throw ValidationError("scene: segments must be contiguous");
    }
}

const SurfaceSegment& Scene::segment_at(double x) const {
    for (const auto& s : segments)
        if (x >= s.x_start && x < s.x_end) return s;
    if (!segments.empty() && std::abs(x - segments.back().x_end) <= 1e-9)
        return segments.back();
    throw SimulationFault("scene: position x=" + std::to_string(x) + " outside scene");
}

Eigen::Matrix4d mixer_matrix(const DroneParams& params) {
    const double kt = params.thrust_coeff;
    const double ktl = kt * params.arm_length;
    const double cq = params.torque_coeff;
    Eigen::Matrix4d h0;
    h0 << kt, kt, kt, kt,
          0.0, ktl, 0.0, -ktl,
          -ktl, 0.0, ktl, 0.0,
          -cq, cq, -cq, cq;
    return h0;
}

Eigen::Vector4d mixer(const Eigen::Vector4d& u, const DroneParams& params) {
    return mixer_matrix(params) * u;
}

QuadrotorState step_dynamics(const QuadrotorState& state, const Eigen::Vector4d& u,
                             const Eigen::Vector3d& f_w, const Eigen::Vector3d& tau_w_body,
                             const DroneParams& params, double dt) {
    if (!(dt > 0.0 && dt <= 0.02)) throw ValidationError("step_dynamics: dt out of (0, 0.02]");
    if (!u.allFinite() || !f_w.allFinite() || !tau_w_body.allFinite() ||
        !state.p.allFinite() || !state.v.allFinite() || !state.omega.allFinite() ||
        !state.R.allFinite())
        throw ValidationError("step_dynamics: non-finite input");

    const Eigen::Vector4d wrench = mixer(u, params);
    const Eigen::Vector3d f_u(0.0, 0.0, wrench[0]);
    const Eigen::Vector3d tau_u = wrench.tail<3>();
    const Eigen::Vector3d g_vec(0.0, 0.0, -params.gravity);
    const Eigen::Matrix3d j = params.inertia();

    QuadrotorState next = state;
    const Eigen::Vector3d a = g_vec + (state.R * f_u + f_w) / params.mass;
    next.v = state.v + dt * a;
    next.p = state.p + dt * next.v;

    const Eigen::Vector3d omega_dot =
        j.inverse() * ((j * state.omega).cross(state.omega) + tau_u + tau_w_body);
    next.omega = state.omega + dt * omega_dot;
    next.R = state.R * physics::rotation_exp(next.omega * dt);
    physics::orthonormalize(next.R);
    return next;
}

double ground_effect_ratio(double clearance, double propeller_radius) {
    const double z = std::max(clearance, propeller_radius / 2.0);
    const double r = propeller_radius / (4.0 * z);
    return 1.0 / (1.0 - r * r) - 1.0;
}

Eigen::Vector3d ground_effect_static(const QuadrotorState& state, const Scene& scene,
                                     double thrust, const GroundEffectModel& model,
                                     const DroneParams& params) {
    if (model.kind == GroundEffectKind::None) return Eigen::Vector3d::Zero();
    const double x = state.p.x();
    const double z = state.p.z();
    const SurfaceSegment& seg = scene.segment_at(x);
    if (z - seg.surface_height <= 0.0)
        throw SimulationFault("ground_effect: at or below surface (x=" + std::to_string(x) +
                              ", z=" + std::to_string(z) + ")");

    auto point_force = [&](const SurfaceSegment& s) {
        const double clearance = std::max(z - s.surface_height, params.propeller_radius / 2.0);
        return thrust * ground_effect_ratio(clearance, params.propeller_radius) *
               s.material_gain;
    };

    if (model.edge_blend_ratio <= 0.0) return {0.0, 0.0, point_force(seg)};

    // Footprint length and trail distance scale with the clearance over the
    // highest surface within reach, so low flight keeps transitions sharp
    // and prompt.
    const double reach = (model.edge_blend_ratio + model.wake_trail_ratio) * z + 1e-6;
    double h_max = seg.surface_height;
    for (const auto& s : scene.segments)
        if (s.x_end > x - reach && s.x_start < x + reach)
            h_max = std::max(h_max, std::min(s.surface_height, z - 1e-6));
    const double clearance_ref = std::max(z - h_max, 1e-6);
    const double footprint = std::max(model.edge_blend_ratio * clearance_ref, 1e-6);

    // Average the per-segment point force over the footprint interval,
    // shifted against the direction of travel by the wake trail (hover
    // keeps a symmetric, unshifted footprint).
    double travel = 0.0;
    if (state.v.x() > 0.01) travel = 1.0;
    else if (state.v.x() < -0.01) travel = -1.0;
    const double shift = travel * model.wake_trail_ratio * clearance_ref;
    const double lo = x - footprint / 2.0 - shift;
    const double hi = x + footprint / 2.0 - shift;
    double fz = 0.0;
    double covered = 0.0;
    for (const auto& s : scene.segments) {
        const double a = std::max(lo, s.x_start);
        const double b = std::min(hi, s.x_end);
        if (b <= a) continue;
        fz += (b - a) * point_force(s);
        covered += b - a;
    }
    // Footprint sticking out past the scene keeps the nearest segment's force.
    if (covered < footprint - 1e-12) fz += (footprint - covered) * point_force(seg);
    return {0.0, 0.0, fz / footprint};
}

GroundEffectSampler::GroundEffectSampler(const GroundEffectModel& model, double step_rate,
                                         Rng rng)
    : model_(model), rng_(rng) {
    // Constant-peak-gain band-pass biquad centred on the jitter band.
    const double f0 = std::sqrt(model.band_lo * model.band_hi);
    const double q = f0 / std::max(model.band_hi - model.band_lo, 1e-6);
    const double w0 = 2.0 * kPi * f0 / step_rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad proto;
    proto.b0 = alpha / a0;
    proto.b1 = 0.0;
    proto.b2 = -alpha / a0;
    proto.a1 = -2.0 * std::cos(w0) / a0;
    proto.a2 = (1.0 - alpha) / a0;
    for (auto& f : filters_) f = proto;

    // White-noise power gain of the filter, so jitter comes out at unit std.
    const int k_steps = 16384;
    double var = 0.0;
    for (int k = 0; k < k_steps; ++k) {
        const double w = kPi * (k + 0.5) / k_steps;
        const std::complex<double> z(std::cos(w), std::sin(w));
        const std::complex<double> zi = 1.0 / z;
        const std::complex<double> h =
            (proto.b0 + proto.b1 * zi + proto.b2 * zi * zi) /
            (1.0 + proto.a1 * zi + proto.a2 * zi * zi);
        var += std::norm(h);
    }
    var /= k_steps;
    unit_gain_ = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> GroundEffectSampler::sample(
    const QuadrotorState& state, const Scene& scene, double thrust,
    const DroneParams& params) {
    double j[3];
    for (int k = 0; k < 3; ++k) j[k] = filters_[k].step(rng_.normal()) * unit_gain_;
    if (model_.kind == GroundEffectKind::None)
        return {Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};

    const Eigen::Vector3d f_static = ground_effect_static(state, scene, thrust, model_, params);
    const double fz = f_static.z();
    const double s = model_.jitter_ratio;
    // The vertical factor is clamped at zero: the rebound airflow adds lift,
    // fluctuating down to nothing but never sucking the vehicle down.
    const Eigen::Vector3d f_w(fz * s * model_.lateral_ratio * j[0],
                              fz * s * model_.lateral_ratio * j[1],
                              fz * std::max(0.0, 1.0 + s * j[2]));

    const Eigen::Vector3d lever(model_.torque_offset_x, 0.0, 0.0);
    const Eigen::Vector3d tau_body = lever.cross(state.R.transpose() * f_w);
    return {f_w, tau_body};
}

namespace {

struct ControllerState {
    double integral_z = 0.0;
    bool thrust_saturated_low = false;
    bool thrust_saturated_high = false;
};

// One controller evaluation: PWM commands for the current state and reference.
Eigen::Vector4d run_controller(const QuadrotorState& state, const Eigen::Vector3d& p_ref,
                               const Eigen::Vector3d& v_ref, const ControllerConfig& cfg,
                               const DroneParams& params, ControllerState& cs, double dt,
                               const Eigen::Matrix4d& mixer_inv) {
    const Eigen::Vector3d e_p = p_ref - state.p;
    const Eigen::Vector3d e_v = v_ref - state.v;

    // Conditional integration: freeze the altitude integral while the thrust
    // command is saturated in the direction the error is pushing, otherwise
    // strong ground-effect bursts wind it up and the unwind digs below the
    // reference.
    const bool sat_low = cs.thrust_saturated_low;
    const bool sat_high = cs.thrust_saturated_high;
    if (!((sat_low && e_p.z() < 0.0) || (sat_high && e_p.z() > 0.0))) {
        cs.integral_z += e_p.z() * dt;
        cs.integral_z = std::clamp(cs.integral_z, -cfg.integral_limit, cfg.integral_limit);
    }

    Eigen::Vector3d a_cmd = cfg.kp_pos.cwiseProduct(e_p) + cfg.kv_pos.cwiseProduct(e_v);
    a_cmd.z() += cfg.ki_z * cs.integral_z;

    Eigen::Vector3d f_des = params.mass * (a_cmd + Eigen::Vector3d(0, 0, params.gravity));
    const double f_floor = 0.05 * params.mass * params.gravity;
    cs.thrust_saturated_low = f_des.z() < f_floor;
    if (cs.thrust_saturated_low) f_des.z() = f_floor;

    const double psi_cmd = f_des.dot(state.R.col(2));
    const double psi_max = 4.0 * params.thrust_coeff * params.actuation_scale();
    cs.thrust_saturated_high = psi_cmd > psi_max;

    // Desired attitude: body z along the desired force, zero yaw.
    const Eigen::Vector3d b3 = f_des.normalized();
    Eigen::Vector3d b2 = b3.cross(Eigen::Vector3d::UnitX());
    b2.normalize();
    const Eigen::Vector3d b1 = b2.cross(b3);
    Eigen::Matrix3d r_des;
    r_des.col(0) = b1;
    r_des.col(1) = b2;
    r_des.col(2) = b3;

    const Eigen::Matrix3d e_mat = r_des.transpose() * state.R - state.R.transpose() * r_des;
    const Eigen::Vector3d e_r(0.5 * e_mat(2, 1), 0.5 * e_mat(0, 2), 0.5 * e_mat(1, 0));
    const Eigen::Vector3d tau_cmd =
        params.inertia() * (-cfg.k_att * e_r - cfg.k_rate * state.omega);

    // Allocate thrust first, then scale the torque contribution uniformly so
    // no rotor leaves [0, u_max]. Scaling keeps the torque direction intact;
    // independent clamping would deliver a corrupted torque and can tumble
    // the vehicle under strong disturbance torques.
    const double u_max = params.actuation_scale();
    Eigen::Vector4d wrench_thrust, wrench_torque;
    wrench_thrust << std::clamp(psi_cmd, 0.0, psi_max), 0.0, 0.0, 0.0;
    wrench_torque << 0.0, tau_cmd;
    const Eigen::Vector4d u_base = mixer_inv * wrench_thrust;
    const Eigen::Vector4d u_tau = mixer_inv * wrench_torque;
    double scale = 1.0;
    for (int i = 0; i < 4; ++i) {
        if (u_tau[i] > 1e-12)
            scale = std::min(scale, (u_max - u_base[i]) / u_tau[i]);
        else if (u_tau[i] < -1e-12)
            scale = std::min(scale, (0.0 - u_base[i]) / u_tau[i]);
    }
    scale = std::clamp(scale, 0.0, 1.0);
    const Eigen::Vector4d u = u_base + scale * u_tau;

    Eigen::Vector4d pwm;
    for (int i = 0; i < 4; ++i) {
        const double ui = std::clamp(u[i], 0.0, u_max);
        pwm[i] = params.pwm_max * std::sqrt(ui / u_max);
    }
    return pwm;
}

}  // namespace

MissionResult fly_mission(const Scene& scene, const DroneParams& params,
                          const ControllerConfig& controller, const MissionConfig& mission,
                          const GroundEffectModel& ge_model) {
    scene.validate();
    params.validate();
    if (!(mission.speed > 0.0)) throw ValidationError("fly_mission: speed must be positive");
    if (!(mission.duration > 0.0)) throw ValidationError("fly_mission: duration must be positive");
    if (std::abs(mission.approach_angle_deg) >= 89.0)
        throw ValidationError("fly_mission: approach angle too steep");
    const double steps_per_sample = 1.0 / (mission.dt * mission.sample_rate);
    const int sample_every = static_cast<int>(std::lround(steps_per_sample));
    if (std::abs(steps_per_sample - sample_every) > 1e-9 || sample_every < 1)
        throw ValidationError("fly_mission: sample_rate must divide the step rate");

    const double angle = mission.approach_angle_deg * kPi / 180.0;
    const double vx = mission.speed * std::cos(angle);
    const double vy = mission.speed * std::sin(angle);

    // Clearance check along the reference path.
    const double z_min = params.propeller_radius / 2.0;
    const double x_final = mission.x_start + vx * mission.duration;
    for (const auto& seg : scene.segments) {
        if (seg.x_end < mission.x_start || seg.x_start > x_final) continue;
        if (mission.altitude - seg.surface_height <= z_min)
            throw ValidationError("fly_mission: altitude too low over segment");
    }
    scene.segment_at(mission.x_start);
    scene.segment_at(x_final);

    Rng root(mission.seed);
    Rng rng_ge = root.fork(0x6a17);
    Rng rng_noise = root.fork(0x5e4e);
    GroundEffectSampler sampler(ge_model, 1.0 / mission.dt, rng_ge);

    QuadrotorState state;
    state.p = {mission.x_start, 0.0, mission.altitude};
    state.v = {vx, vy, 0.0};
    ControllerState cs;
    const Eigen::Matrix4d mixer_inv = mixer_matrix(params).inverse();
    const Eigen::Vector3d g_vec(0.0, 0.0, -params.gravity);

    const int steps = static_cast<int>(std::lround(mission.duration / mission.dt));
    const int n_samples = steps / sample_every + 1;

    MissionResult out;
    out.record.params = params;
    out.record.speed = mission.speed;
    out.record.imu.reserve(n_samples);
    out.record.motors.reserve(n_samples);
    out.trace.t.resize(n_samples);
    out.trace.true_f_w.resize(n_samples, 3);
    out.trace.true_pos.resize(n_samples, 3);
    out.trace.true_att_z.resize(n_samples, 3);

    int sample_idx = 0;
    for (int k = 0; k <= steps; ++k) {
        const double t = k * mission.dt;
        const Eigen::Vector3d p_ref(mission.x_start + vx * t, vy * t, mission.altitude);
        const Eigen::Vector3d v_ref(vx, vy, 0.0);

        if ((state.p - p_ref).norm() > 5.0 || state.omega.norm() > 200.0)
            throw SimulationFault("fly_mission: controller divergence at t=" +
                                  std::to_string(t));

        const Eigen::Vector4d pwm =
            run_controller(state, p_ref, v_ref, controller, params, cs, mission.dt, mixer_inv);
        // Apply exactly the actuation implied by the logged PWM so telemetry
        // consumers can reconstruct the thrust without model mismatch.
        Eigen::Vector4d u;
        const double u_scale = params.actuation_scale();
        for (int i = 0; i < 4; ++i) {
            const double frac = pwm[i] / params.pwm_max;
            u[i] = u_scale * frac * frac;
        }
        const double thrust = params.thrust_coeff * u.sum();

        {
            const auto& seg = scene.segment_at(state.p.x());
            if (state.p.z() - seg.surface_height <= 0.0)
                throw SimulationFault(
                    "fly_mission: below surface t=" + std::to_string(t) + " x=" +
                    std::to_string(state.p.x()) + " z=" + std::to_string(state.p.z()) +
                    " tilt_z=" + std::to_string(state.R(2, 2)) + " omega=" +
                    std::to_string(state.omega.norm()) + " vz=" + std::to_string(state.v.z()));
        }
        const auto [f_w, tau_w_body] = sampler.sample(state, scene, thrust, params);

        if (k % sample_every == 0) {
            const Eigen::Vector3d a_world =
                g_vec + (state.R * Eigen::Vector3d(0, 0, thrust) + f_w) / params.mass;
            const Eigen::Vector3d specific_force = state.R.transpose() * (a_world - g_vec);

            telemetry::ImuSample imu;
            imu.t = t;
            for (int i = 0; i < 3; ++i)
                imu.acc[i] = specific_force[i] + rng_noise.normal(0.0, mission.noise.acc_std);
            for (int i = 0; i < 3; ++i)
                imu.gyro[i] = state.omega[i] + rng_noise.normal(0.0, mission.noise.gyro_std);
            out.record.imu.push_back(imu);
            out.record.motors.push_back({t, pwm});

            out.trace.t[sample_idx] = t;
            out.trace.true_f_w.row(sample_idx) = f_w.transpose();
            out.trace.true_pos.row(sample_idx) = state.p.transpose();
            out.trace.true_att_z.row(sample_idx) = state.R.col(2).transpose();
            ++sample_idx;
        }

        if (k < steps) state = step_dynamics(state, u, f_w, tau_w_body, params, mission.dt);
    }

    // Ground truth from the reference trajectory: tracking error is well
    // below the metric scale, and reference crossings are exact.
    const double t_last = out.record.imu.back().t;
    for (std::size_t i = 0; i + 1 < scene.segments.size(); ++i) {
        const auto& a = scene.segments[i];
        const auto& b = scene.segments[i + 1];
        const double t_cross = (a.x_end - mission.x_start) / vx;
        if (t_cross <= 0.0 || t_cross > t_last) continue;
        telemetry::EdgeEvent ev;
        ev.t = t_cross;
        ev.kind = std::abs(a.surface_height - b.surface_height) > 1e-12
                      ? telemetry::EdgeKind::Height
                      : telemetry::EdgeKind::Material;
        ev.position = mission.speed * t_cross;
        out.record.ground_truth.push_back(ev);
    }
    return out;
}

}  // namespace gesense::sim
