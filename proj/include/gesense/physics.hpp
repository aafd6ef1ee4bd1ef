#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <iosfwd>
#include <vector>

#include "gesense/errors.hpp"
#include "gesense/telemetry.hpp"

namespace gesense::physics {

/// CFAR detector parameters. The leading window is the only noise-estimation
/// window (no lagging window), so an alert depends on past samples only.
struct CfarConfig {
    double p_fa = 1e-6;       ///< false-alarm probability, in (0, 1)
    int leading_window = 50;  ///< N, samples
    int guard_cells = 15;     ///< samples between window and the cell under test

    void validate() const;
};

struct CfarResult {
    std::vector<std::uint8_t> alerts;  ///< per sample; warm-up samples are 0
    Eigen::VectorXd thresholds;        ///< alpha * leading mean; +inf during warm-up
};

/// Estimated disturbance force per telemetry sample, with CFAR annotations.
struct DisturbanceSeries {
    Eigen::VectorXd t;
    Eigen::MatrixXd f_w;         ///< [n x 3], N, world frame
    Eigen::VectorXd magnitude;   ///< Euclidean norm of f_w
    std::vector<std::uint8_t> alert;
    Eigen::VectorXd threshold;   ///< CFAR threshold trace over the magnitude
};

/// Attitude handling options for the estimator. The gyro-only attitude drifts
/// over long horizons, so quasi-static stretches (small rates, specific force
/// close to gravity) re-anchor roll and pitch from the mean accelerometer
/// direction.
struct EstimatorOptions {
    bool reanchor = true;
    double reanchor_window_s = 0.5;
    double reanchor_gyro_limit = 0.02;  ///< rad/s, window-mean magnitude
    double reanchor_acc_limit = 0.05;   ///< m/s^2, window-mean |acc| - g
};

/// CFAR threshold factor alpha = N * (P_FA^(-1/N) - 1).
double cfar_alpha(int leading_window, double p_fa);

/// Fast-response CFAR over a non-negative series: for each cell under test
/// the threshold is alpha times the mean of the N samples ending `guard`
/// cells earlier. Throws ValidationError when the series is too short.
CfarResult fr_cfar(const Eigen::VectorXd& x, const CfarConfig& config);

/// Recover the disturbance force from an aligned record: rotate the
/// body-frame specific force to the world, subtract thrust mapped from the
/// motor commands, with attitude integrated from the gyro. Fills alert and
/// threshold from fr_cfar over the magnitude.
DisturbanceSeries estimate_disturbance(const telemetry::FlightRecord& record,
                                       const telemetry::DroneParams& params,
                                       const CfarConfig& cfar = {},
                                       const EstimatorOptions& options = {});

/// Keep only the transitions that have at least one CFAR alert within
/// +-window_s of them.
std::vector<double> gate_detections(const std::vector<double>& transitions,
                                    const DisturbanceSeries& disturbance, double window_s);

/// The CFAR threshold trace over the disturbance magnitude, exposed for the
/// training-time loss. Identical to fr_cfar(disturbance.magnitude).thresholds.
Eigen::VectorXd label_threshold(const DisturbanceSeries& disturbance, const CfarConfig& config);

/// Thrust mapped from PWM commands: Psi = k_T * sum_i u_i with
/// u_i = u_scale * (pwm_i / pwm_max)^2.
double thrust_from_pwm(const Eigen::Vector4d& pwm, const telemetry::DroneParams& params);

/// Skew-symmetric matrix of omega (the body-rate mapping in Rdot = R M(omega)).
Eigen::Matrix3d skew(const Eigen::Vector3d& w);

/// Rotation exp(M(phi)) via the Rodrigues formula.
Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& phi);

/// Project a near-rotation back onto SO(3) (Gram-Schmidt on the columns).
void orthonormalize(Eigen::Matrix3d& r);

/// Dump `t,fwx,fwy,fwz,mag,threshold,alert` rows.
void dump_disturbance_csv(const DisturbanceSeries& d, std::ostream& out);

}  // namespace gesense::physics
