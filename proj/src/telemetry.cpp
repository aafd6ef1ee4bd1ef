#include "gesense/telemetry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace gesense::telemetry {

namespace {

constexpr const char* kHeader =
    "t,acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z,m1,m2,m3,m4,gt_edge,edge_kind,speed";
constexpr int kFieldCount = 14;

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view s, std::size_t line_no, const char* field) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad value for " + field +
                         ": '" + std::string(s) + "'");
    if (!std::isfinite(v))
        throw ParseError("line " + std::to_string(line_no) + ": non-finite " + field);
    return v;
}

}  // namespace

void DroneParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ValidationError(std::string("drone parameter must be positive: ") + name);
    };
    positive(mass, "mass");
    positive(gravity, "gravity");
    positive(thrust_coeff, "thrust_coeff");
    positive(arm_length, "arm_length");
    positive(torque_coeff, "torque_coeff");
    positive(propeller_radius, "propeller_radius");
    positive(pwm_max, "pwm_max");
    positive(hover_pwm_fraction, "hover_pwm_fraction");
    for (int i = 0; i < 3; ++i) positive(inertia_diag[i], "inertia_diag");
}

bool FlightRecord::is_aligned(double tol) const {
    if (imu.size() != motors.size() || imu.size() < 2) return false;
    const double dt = imu[1].t - imu[0].t;
    if (!(dt > 0.0)) return false;
    for (std::size_t i = 0; i < imu.size(); ++i) {
        if (std::abs(imu[i].t - motors[i].t) > tol) return false;
        if (i > 0 && std::abs((imu[i].t - imu[i - 1].t) - dt) > tol) return false;
    }
    return true;
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

FlightRecord parse_log(std::istream& in) {
    FlightRecord rec;
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw ParseError("empty input");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHeader)
        throw ParseError("line 1: unexpected header: '" + line + "'");

    double prev_t = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (static_cast<int>(f.size()) != kFieldCount)
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(kFieldCount) + " fields, got " +
                             std::to_string(f.size()));

        ImuSample imu;
        MotorSample mot;
        imu.t = parse_double(f[0], line_no, "t");
        if (!(imu.t > prev_t))
            throw ValidationError("line " + std::to_string(line_no) +
                                  ": non-monotonic time " + std::string(f[0]));
        prev_t = imu.t;
        mot.t = imu.t;
        for (int i = 0; i < 3; ++i) imu.acc[i] = parse_double(f[1 + i], line_no, "acc");
        for (int i = 0; i < 3; ++i) imu.gyro[i] = parse_double(f[4 + i], line_no, "gyro");
        for (int i = 0; i < 4; ++i) {
            mot.pwm[i] = parse_double(f[7 + i], line_no, "pwm");
            if (mot.pwm[i] < 0.0)
                throw ValidationError("line " + std::to_string(line_no) + ": negative pwm");
        }

        const std::string_view gt = f[11];
        if (gt != "0" && gt != "1")
            throw ParseError("line " + std::to_string(line_no) + ": gt_edge must be 0 or 1");
        const std::string_view kind = f[12];
        if (gt == "1" && kind != "h" && kind != "m")
            throw ParseError("line " + std::to_string(line_no) +
                             ": edge_kind must be 'h' or 'm' when gt_edge=1");
        if (gt == "0" && !kind.empty())
            throw ParseError("line " + std::to_string(line_no) +
                             ": edge_kind must be empty when gt_edge=0");
        rec.speed = parse_double(f[13], line_no, "speed");

        if (gt == "1") {
            EdgeEvent ev;
            ev.t = imu.t;
            ev.kind = (kind == "h") ? EdgeKind::Height : EdgeKind::Material;
            ev.position = rec.speed * ev.t;
            rec.ground_truth.push_back(ev);
        }
        rec.imu.push_back(imu);
        rec.motors.push_back(mot);
    }
    return rec;
}

FlightRecord parse_log_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open telemetry file: " + path);
    return parse_log(f);
}

void emit_log(const FlightRecord& record, std::ostream& out) {
    if (record.imu.size() != record.motors.size())
        throw ValidationError("emit_log: imu/motor streams differ in length");
    out << kHeader << '\n';

    // Mark the sample nearest each ground-truth event.
    std::vector<int> edge_of(record.imu.size(), -1);
    for (std::size_t e = 0; e < record.ground_truth.size(); ++e) {
        const double t = record.ground_truth[e].t;
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < record.imu.size(); ++i) {
            const double d = std::abs(record.imu[i].t - t);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        edge_of[best] = static_cast<int>(e);
    }

    for (std::size_t i = 0; i < record.imu.size(); ++i) {
        const auto& s = record.imu[i];
        const auto& m = record.motors[i];
        out << format_value(s.t);
        for (int k = 0; k < 3; ++k) out << ',' << format_value(s.acc[k]);
        for (int k = 0; k < 3; ++k) out << ',' << format_value(s.gyro[k]);
        for (int k = 0; k < 4; ++k) out << ',' << format_value(m.pwm[k]);
        if (edge_of[i] >= 0) {
            const auto& ev = record.ground_truth[edge_of[i]];
            out << ",1," << (ev.kind == EdgeKind::Height ? 'h' : 'm');
        } else {
            out << ",0,";
        }
        out << ',' << format_value(record.speed) << '\n';
    }
}

void emit_log_file(const FlightRecord& record, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open output file: " + path);
    emit_log(record, f);
}

namespace {

// Linear interpolation of a sampled vector-valued series onto query time tq.
// `times` is strictly increasing; tq must lie within [front, back].
template <typename Getter>
Eigen::VectorXd interp_at(const std::vector<double>& times, double tq, Getter get) {
    const auto it = std::upper_bound(times.begin(), times.end(), tq);
    std::size_t hi = static_cast<std::size_t>(it - times.begin());
    if (hi == 0) hi = 1;
    if (hi >= times.size()) hi = times.size() - 1;
    const std::size_t lo = hi - 1;
    const double t0 = times[lo], t1 = times[hi];
    // Exact node hits take the stored value so already-uniform streams pass
    // through unchanged.
    if (std::abs(tq - t0) <= 1e-12 * std::max(1.0, std::abs(t0))) return get(lo);
    if (std::abs(tq - t1) <= 1e-12 * std::max(1.0, std::abs(t1))) return get(hi);
    const double w = (tq - t0) / (t1 - t0);
    Eigen::VectorXd a = get(lo), b = get(hi);
    return a + w * (b - a);
}

}  // namespace

FlightRecord align(const FlightRecord& record, double sample_rate) {
    if (!(sample_rate > 0.0)) throw ValidationError("align: sample_rate must be positive");
    if (record.imu.empty() || record.motors.empty())
        throw ValidationError("align: empty stream");
    if (record.imu.size() < 2 || record.motors.size() < 2)
        throw ValidationError("align: streams need at least two samples");
    if (record.is_aligned()) {
        const double dt = record.imu[1].t - record.imu[0].t;
        if (std::abs(dt - 1.0 / sample_rate) <= 1e-9) return record;
    }

    std::vector<double> t_imu(record.imu.size()), t_mot(record.motors.size());
    for (std::size_t i = 0; i < record.imu.size(); ++i) t_imu[i] = record.imu[i].t;
    for (std::size_t i = 0; i < record.motors.size(); ++i) t_mot[i] = record.motors[i].t;
    for (std::size_t i = 1; i < t_imu.size(); ++i)
        if (!(t_imu[i] > t_imu[i - 1])) throw ValidationError("align: imu time not increasing");
    for (std::size_t i = 1; i < t_mot.size(); ++i)
        if (!(t_mot[i] > t_mot[i - 1])) throw ValidationError("align: motor time not increasing");

    const double t0 = std::max(t_imu.front(), t_mot.front());
    const double t_end = std::min(t_imu.back(), t_mot.back());
    if (!(t_end > t0)) throw ValidationError("align: streams do not overlap in time");
    const double dt = 1.0 / sample_rate;
    const auto n = static_cast<std::size_t>(std::floor((t_end - t0) / dt + 1e-9)) + 1;

    FlightRecord out;
    out.params = record.params;
    out.speed = record.speed;
    out.imu.resize(n);
    out.motors.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double tq = t0 + static_cast<double>(k) * dt;
        auto imu6 = interp_at(
            t_imu, tq,
            [&](std::size_t i) {
                Eigen::VectorXd v(6);
                v << record.imu[i].acc, record.imu[i].gyro;
                return v;
            });
        auto pwm4 = interp_at(
            t_mot, tq, [&](std::size_t i) { return Eigen::VectorXd(record.motors[i].pwm); });
        out.imu[k] = {tq, imu6.head<3>(), imu6.tail<3>()};
        out.motors[k] = {tq, Eigen::Vector4d(pwm4)};
    }
    for (const auto& ev : record.ground_truth)
        if (ev.t >= t0 - 1e-12 && ev.t <= t_end + 1e-12) out.ground_truth.push_back(ev);
    return out;
}

SourceSeries build_source_vector(const FlightRecord& record) {
    if (!record.is_aligned())
        throw ValidationError("build_source_vector: record is not aligned");
    const auto n = static_cast<Eigen::Index>(record.imu.size());
    SourceSeries src;
    src.t.resize(n);
    src.channels.resize(n, 9);
    src.sample_rate = 1.0 / (record.imu[1].t - record.imu[0].t);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = record.imu[i];
        const auto& m = record.motors[i];
        src.t[i] = s.t;
        src.channels(i, 0) = s.acc[0];
        src.channels(i, 1) = s.acc[1];
        src.channels(i, 2) = s.acc[2];
        src.channels(i, 3) = s.gyro[0];
        src.channels(i, 4) = s.gyro[1];
        src.channels(i, 5) = s.gyro[2];
        src.channels(i, 6) = m.pwm[1] - m.pwm[0];
        src.channels(i, 7) = m.pwm[2] - m.pwm[0];
        src.channels(i, 8) = m.pwm[3] - m.pwm[0];
    }
    return src;
}

}  // namespace gesense::telemetry
