#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

#include "gesense/errors.hpp"

namespace gesense::telemetry {

/// One IMU reading. `acc` is the body-frame specific force in m/s^2 (an
/// accelerometer at rest reads +g on the up axis); `gyro` is the body
/// angular rate in rad/s.
struct ImuSample {
    double t = 0.0;
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    Eigen::Vector3d gyro = Eigen::Vector3d::Zero();
};

/// One motor-command sample. PWM values are dimensionless command units in
/// [0, pwm_max].
struct MotorSample {
    double t = 0.0;
    Eigen::Vector4d pwm = Eigen::Vector4d::Zero();
};

enum class EdgeKind { Height, Material };

/// Ground-truth surface boundary crossing.
struct EdgeEvent {
    double t = 0.0;
    EdgeKind kind = EdgeKind::Height;
    double position = 0.0;  ///< metres along track = speed * t
};

/// Physical drone parameters shared by the flight simulator and the
/// disturbance-force estimator.
struct DroneParams {
    double mass = 0.0356;              ///< kg
    double gravity = 9.81;             ///< m/s^2
    double thrust_coeff = 6.63e-7;     ///< k_T, thrust per unit actuation
    double arm_length = 0.046;         ///< l_r, m
    double torque_coeff = 3.98e-9;     ///< c_Q, yaw torque per unit actuation
    Eigen::Vector3d inertia_diag{1.4e-5, 1.4e-5, 2.17e-5};  ///< kg m^2
    double propeller_radius = 0.0225;  ///< m
    double pwm_max = 65535.0;
    double hover_pwm_fraction = 0.6;   ///< PWM fraction that balances gravity

    Eigen::Matrix3d inertia() const { return inertia_diag.asDiagonal(); }

    /// Actuation scale of the PWM->actuation map W: u_i = u_scale * (pwm_i/pwm_max)^2,
    /// calibrated so that all four motors at the hover PWM fraction produce a
    /// total thrust of mass * gravity.
    double actuation_scale() const {
        return mass * gravity /
               (4.0 * thrust_coeff * hover_pwm_fraction * hover_pwm_fraction);
    }

    /// k_T from measurable propeller quantities: C_T * rho * D^4.
    static double thrust_coeff_from(double c_t, double air_density, double diameter) {
        const double d2 = diameter * diameter;
        return c_t * air_density * d2 * d2;
    }

    void validate() const;
};

/// A complete telemetry log: IMU stream, motor stream, ground-truth edge
/// annotations and the drone/mission metadata needed to interpret them.
struct FlightRecord {
    std::vector<ImuSample> imu;
    std::vector<MotorSample> motors;
    std::vector<EdgeEvent> ground_truth;
    DroneParams params;
    double speed = 0.0;  ///< nominal horizontal speed, m/s

    /// True when both streams share identical, uniformly spaced timestamps.
    bool is_aligned(double tol = 1e-9) const;
};

/// The 9-channel temporal source fed to feature extraction:
/// columns 0-2 acc, 3-5 gyro, 6-8 motor differences (m2-m1, m3-m1, m4-m1).
struct SourceSeries {
    Eigen::VectorXd t;
    Eigen::MatrixXd channels;  ///< [n_samples x 9]
    double sample_rate = 0.0;  ///< Hz
};

/// Parse a telemetry CSV stream. Throws ParseError (with the 1-based line
/// number) on malformed rows and ValidationError on non-monotonic time.
FlightRecord parse_log(std::istream& in);
FlightRecord parse_log_file(const std::string& path);

/// Emit the canonical CSV form (9 significant digits, exact header).
/// emit_log(parse_log(x)) reproduces canonical files byte for byte.
void emit_log(const FlightRecord& record, std::ostream& out);
void emit_log_file(const FlightRecord& record, const std::string& path);

/// Resample both streams onto a common uniform grid at `sample_rate` using
/// linear interpolation. Streams that already share a uniform grid at that
/// rate are returned unchanged. Throws ValidationError for streams with
/// fewer than two samples.
FlightRecord align(const FlightRecord& record, double sample_rate);

/// Build the 9-channel source vector from an aligned record.
SourceSeries build_source_vector(const FlightRecord& record);

/// Format one double exactly as the CSV emitter does (9 significant digits).
std::string format_value(double v);

}  // namespace gesense::telemetry
