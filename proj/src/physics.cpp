#include "gesense/physics.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "gesense/telemetry.hpp"

namespace gesense::physics {

void CfarConfig::validate() const {
    if (!(p_fa > 0.0 && p_fa < 1.0)) throw ValidationError("cfar: p_fa must be in (0,1)");
    if (leading_window < 1) throw ValidationError("cfar: leading_window must be >= 1");
    if (guard_cells < 0) throw ValidationError("cfar: guard_cells must be >= 0");
}

double cfar_alpha(int leading_window, double p_fa) {
    const double n = leading_window;
    return n * (std::pow(p_fa, -1.0 / n) - 1.0);
}

CfarResult fr_cfar(const Eigen::VectorXd& x, const CfarConfig& config) {
    config.validate();
    const int n_lead = config.leading_window;
    const int guard = config.guard_cells;
    const Eigen::Index n = x.size();
    if (n <= n_lead + guard)
        throw ValidationError("fr_cfar: series length must exceed leading_window + guard_cells");

    const double alpha = cfar_alpha(n_lead, config.p_fa);
    CfarResult res;
    res.alerts.assign(n, 0);
    res.thresholds =
        Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());

    // Rolling sum of the leading window [i - guard - N, i - guard - 1].
    double window_sum = 0.0;
    for (int i = 0; i < n_lead; ++i) window_sum += x[i];
    for (Eigen::Index i = n_lead + guard; i < n; ++i) {
        const double t = alpha * (window_sum / n_lead);
        res.thresholds[i] = t;
        if (x[i] > t) res.alerts[i] = 1;
        const Eigen::Index enter = i - guard;          // joins the window next step
        const Eigen::Index leave = i - guard - n_lead; // leaves it
        window_sum += x[enter] - x[leave];
    }
    return res;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
    Eigen::Matrix3d m;
    m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
    return m;
}

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& phi) {
    const double angle = phi.norm();
    if (angle < 1e-12) return Eigen::Matrix3d::Identity() + skew(phi);
    const Eigen::Matrix3d k = skew(phi / angle);
    return Eigen::Matrix3d::Identity() + std::sin(angle) * k +
           (1.0 - std::cos(angle)) * (k * k);
}

void orthonormalize(Eigen::Matrix3d& r) {
    Eigen::Vector3d b1 = r.col(0).normalized();
    Eigen::Vector3d b2 = (r.col(1) - b1 * b1.dot(r.col(1))).normalized();
    Eigen::Vector3d b3 = b1.cross(b2);
    r.col(0) = b1;
    r.col(1) = b2;
    r.col(2) = b3;
}

double thrust_from_pwm(const Eigen::Vector4d& pwm, const telemetry::DroneParams& params) {
    const double scale = params.actuation_scale();
    double u_sum = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double frac = pwm[i] / params.pwm_max;
        u_sum += scale * frac * frac;
    }
    return params.thrust_coeff * u_sum;
}

namespace {

// Minimal rotation taking the unit vector `from` to `to`.
Eigen::Matrix3d align_rotation(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
    const Eigen::Vector3d axis = from.cross(to);
    const double s = axis.norm();
    const double c = from.dot(to);
    if (s < 1e-12) {
        if (c > 0.0) return Eigen::Matrix3d::Identity();
        // Antiparallel: rotate pi about any perpendicular axis.
        return rotation_exp(Eigen::Vector3d::UnitX() * 3.14159265358979323846);
    }
    return rotation_exp(axis / s * std::atan2(s, c));
}

}  // namespace

DisturbanceSeries estimate_disturbance(const telemetry::FlightRecord& record,
                                       const telemetry::DroneParams& params,
                                       const CfarConfig& cfar,
                                       const EstimatorOptions& options) {
    params.validate();
    if (!record.is_aligned())
        throw ValidationError("estimate_disturbance: record is not aligned");

    const auto n = static_cast<Eigen::Index>(record.imu.size());
    const double dt = record.imu[1].t - record.imu[0].t;
    const Eigen::Vector3d g_vec(0.0, 0.0, -params.gravity);

    DisturbanceSeries out;
    out.t.resize(n);
    out.f_w.resize(n, 3);
    out.magnitude.resize(n);

    const int anchor_len = std::max(1, static_cast<int>(std::lround(
                                            options.reanchor_window_s / dt)));
    Eigen::Vector3d acc_accum = Eigen::Vector3d::Zero();
    Eigen::Vector3d gyro_accum = Eigen::Vector3d::Zero();
    int accum_count = 0;

    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();  // level start
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = record.imu[i];
        const double thrust = thrust_from_pwm(record.motors[i].pwm, params);

        // f_w = m a - m g - R f_u with a = R acc + g, so the gravity terms cancel.
        const Eigen::Vector3d fw =
            r * (params.mass * s.acc - Eigen::Vector3d(0.0, 0.0, thrust));
        out.t[i] = s.t;
        out.f_w.row(i) = fw.transpose();
        out.magnitude[i] = fw.norm();

        if (i + 1 < n) {
            const Eigen::Vector3d w_mid = 0.5 * (s.gyro + record.imu[i + 1].gyro);
            r = r * rotation_exp(w_mid * dt);
            orthonormalize(r);
        }

        if (options.reanchor) {
            acc_accum += s.acc;
            gyro_accum += s.gyro;
            if (++accum_count == anchor_len) {
                const Eigen::Vector3d acc_mean = acc_accum / anchor_len;
                const Eigen::Vector3d gyro_mean = gyro_accum / anchor_len;
                if (gyro_mean.norm() < options.reanchor_gyro_limit &&
                    std::abs(acc_mean.norm() - params.gravity) < options.reanchor_acc_limit &&
                    acc_mean.norm() > 1e-9) {
                    // Quasi-static: level roll/pitch so the mean specific force
                    // points straight up. Yaw is unobservable and reset with it.
                    r = align_rotation(acc_mean.normalized(), Eigen::Vector3d::UnitZ());
                }
                acc_accum.setZero();
                gyro_accum.setZero();
                accum_count = 0;
            }
        }
    }

    const CfarResult c = fr_cfar(out.magnitude, cfar);
    out.alert = c.alerts;
    out.threshold = c.thresholds;
    return out;
}

std::vector<double> gate_detections(const std::vector<double>& transitions,
                                    const DisturbanceSeries& disturbance, double window_s) {
    std::vector<double> alert_times;
    for (Eigen::Index i = 0; i < disturbance.t.size(); ++i)
        if (i < static_cast<Eigen::Index>(disturbance.alert.size()) && disturbance.alert[i])
            alert_times.push_back(disturbance.t[i]);

    std::vector<double> kept;
    for (double tr : transitions) {
        for (double ta : alert_times) {
            if (std::abs(ta - tr) <= window_s) {
                kept.push_back(tr);
                break;
            }
        }
    }
    return kept;
}

Eigen::VectorXd label_threshold(const DisturbanceSeries& disturbance, const CfarConfig& config) {
    return fr_cfar(disturbance.magnitude, config).thresholds;
}

void dump_disturbance_csv(const DisturbanceSeries& d, std::ostream& out) {
    out << "t,fwx,fwy,fwz,mag,threshold,alert\n";
    for (Eigen::Index i = 0; i < d.t.size(); ++i) {
        out << telemetry::format_value(d.t[i]);
        for (int k = 0; k < 3; ++k) out << ',' << telemetry::format_value(d.f_w(i, k));
        out << ',' << telemetry::format_value(d.magnitude[i]) << ','
            << telemetry::format_value(d.threshold[i]) << ','
            << (d.alert.empty() ? 0 : static_cast<int>(d.alert[i])) << '\n';
    }
}

}  // namespace gesense::physics
