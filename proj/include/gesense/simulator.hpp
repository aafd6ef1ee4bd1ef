#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "gesense/errors.hpp"
#include "gesense/rng.hpp"
#include "gesense/telemetry.hpp"

namespace gesense::sim {

using telemetry::DroneParams;
using telemetry::FlightRecord;

/// Rigid-body state. R is kept orthonormal (re-projected every step).
struct QuadrotorState {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();      ///< world position, m
    Eigen::Vector3d v = Eigen::Vector3d::Zero();      ///< world velocity, m/s
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();  ///< body-to-world attitude
    Eigen::Vector3d omega = Eigen::Vector3d::Zero();  ///< body rates, rad/s
};

/// One horizontal stretch of ground. Segments are contiguous along x; every
/// internal boundary is an edge.
struct SurfaceSegment {
    double x_start = 0.0;
    double x_end = 0.0;
    double surface_height = 0.0;  ///< m
    double material_gain = 1.0;   ///< scales the ground-effect force, >= 0
};

struct Scene {
    std::vector<SurfaceSegment> segments;

    void validate() const;
    const SurfaceSegment& segment_at(double x) const;
};

enum class GroundEffectKind { None, CheesemanBennett };

/// Parametric ground-effect disturbance. The static part follows the
/// in-ground-effect thrust ratio; on top of it rides band-limited jitter
/// whose standard deviation is `jitter_ratio` times the local static force
/// (so stronger ground effect also fluctuates harder, which is what the
/// spectral features key on).
struct GroundEffectModel {
    GroundEffectKind kind = GroundEffectKind::CheesemanBennett;
    double jitter_ratio = 1.0;        ///< fluctuation std relative to static force
    double lateral_ratio = 0.3;       ///< x/y jitter std relative to vertical
    double band_lo = 6.0;             ///< Hz, jitter band
    double band_hi = 8.0;             ///< Hz
    double torque_offset_x = 0.005;   ///< m, body-x lever arm producing tau_w

    /// The wake's ground footprint widens with clearance, so the force blends
    /// across segment boundaries over a length edge_blend_ratio * clearance
    /// (clearance over the highest nearby surface). Higher flight smears the
    /// transition over more track. Zero restores sharp steps.
    double edge_blend_ratio = 0.5;

    /// In forward flight the interaction zone trails the vehicle by
    /// wake_trail_ratio * clearance along the track, so the force responds
    /// late to a boundary and the lag grows with clearance.
    double wake_trail_ratio = 1.0;
};

/// Cascaded controller gains: P position loop with velocity damping and an
/// altitude integrator, PD attitude loop on SO(3).
struct ControllerConfig {
    Eigen::Vector3d kp_pos{30.0, 30.0, 200.0};
    Eigen::Vector3d kv_pos{11.0, 11.0, 30.0};
    double ki_z = 100.0;
    double integral_limit = 0.15; ///< m s
    double k_att = 2000.0;        ///< 1/s^2 (torque = J * (-k_att e_R - k_rate omega))
    double k_rate = 90.0;         ///< 1/s
};

struct SensorNoise {
    double acc_std = 0.05;   ///< m/s^2 per axis
    double gyro_std = 0.01;  ///< rad/s per axis
};

struct MissionConfig {
    double speed = 0.5;            ///< m/s along track
    double altitude = 0.34;        ///< m, absolute flight height
    double approach_angle_deg = 0.0;
    double x_start = 0.0;
    double duration = 8.0;         ///< s
    double dt = 1e-3;              ///< integrator step
    double sample_rate = 100.0;    ///< telemetry rate, Hz
    std::uint64_t seed = 1;
    SensorNoise noise;
};

/// Per-sample truth channels kept alongside the telemetry for oracles.
struct MissionTrace {
    Eigen::VectorXd t;
    Eigen::MatrixXd true_f_w;   ///< [n x 3], N
    Eigen::MatrixXd true_pos;   ///< [n x 3]
    Eigen::MatrixXd true_att_z; ///< [n x 3], body z axis in world frame
};

struct MissionResult {
    FlightRecord record;
    MissionTrace trace;
};

/// Mixer: wrench [Psi, tau_x, tau_y, tau_z] = H0 u for the plus configuration.
Eigen::Matrix4d mixer_matrix(const DroneParams& params);
Eigen::Vector4d mixer(const Eigen::Vector4d& u, const DroneParams& params);

/// One semi-implicit Euler step of the rigid-body dynamics under the given
/// actuation, world-frame disturbance force and body-frame disturbance torque.
QuadrotorState step_dynamics(const QuadrotorState& state, const Eigen::Vector4d& u,
                             const Eigen::Vector3d& f_w, const Eigen::Vector3d& tau_w_body,
                             const DroneParams& params, double dt);

/// In-ground-effect thrust gain 1/(1 - (R/(4z))^2) - 1, with z clamped at
/// R/2 from below. Approaches zero as z grows.
double ground_effect_ratio(double clearance, double propeller_radius);

/// Static (jitter-free) ground-effect force for a state over a scene.
/// Throws SimulationFault when the drone is outside the scene or at/below
/// the surface.
Eigen::Vector3d ground_effect_static(const QuadrotorState& state, const Scene& scene,
                                     double thrust, const GroundEffectModel& model,
                                     const DroneParams& params);

/// Stateful sampler adding the band-limited jitter on top of the static
/// force. One instance per mission; draws from its own RNG stream.
class GroundEffectSampler {
public:
    GroundEffectSampler(const GroundEffectModel& model, double step_rate, Rng rng);

    /// Returns world-frame force and body-frame torque for this step.
    std::pair<Eigen::Vector3d, Eigen::Vector3d> sample(const QuadrotorState& state,
                                                       const Scene& scene, double thrust,
                                                       const DroneParams& params);

private:
    struct Biquad {
        double b0 = 0, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
        double z1 = 0, z2 = 0;
        double step(double x) {
            const double y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            return y;
        }
    };

    GroundEffectModel model_;
    Rng rng_;
    Biquad filters_[3];
    double unit_gain_ = 1.0;  ///< normalises filtered white noise to unit std
};

/// Closed-loop mission: cruise along the track at constant speed and
/// altitude while the ground effect of the scene below disturbs the vehicle.
/// Deterministic for a given seed.
MissionResult fly_mission(const Scene& scene, const DroneParams& params,
                          const ControllerConfig& controller, const MissionConfig& mission,
                          const GroundEffectModel& ge_model);

}  // namespace gesense::sim
