#include "gesense/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace gesense::nn {

int surface_state_at(const std::vector<telemetry::EdgeEvent>& events, double t) {
    int state = 0;
    for (const auto& ev : events)
        if (ev.t <= t) state ^= 1;
    return state;
}

std::vector<WindowSample> make_windows(const spectral::FusedFeatureSeries& features,
                                       const physics::DisturbanceSeries& disturbance,
                                       const std::vector<telemetry::EdgeEvent>& events,
                                       int window_h, int stride) {
    if (stride < 1) throw ValidationError("make_windows: stride must be >= 1");
    const Eigen::Index n = features.c.rows();
    if (n < window_h) throw ValidationError("make_windows: feature series shorter than window");
    if (disturbance.t.size() < 2)
        throw ValidationError("make_windows: disturbance series too short");

    const double d_t0 = disturbance.t[0];
    const double d_dt = disturbance.t[1] - disturbance.t[0];
    std::vector<WindowSample> out;
    for (Eigen::Index s = 0; s + window_h <= n; s += stride) {
        WindowSample w;
        w.x = features.c.middleRows(s, window_h);
        w.t = features.frame_times[s + window_h - 1];
        w.y = surface_state_at(events, w.t);
        auto idx = static_cast<Eigen::Index>(std::lround((w.t - d_t0) / d_dt));
        idx = std::clamp<Eigen::Index>(idx, 0, disturbance.t.size() - 1);
        w.f_mag = disturbance.magnitude[idx];
        w.threshold = disturbance.threshold[idx];
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<WindowSample> filter_cfar_consistent(const std::vector<WindowSample>& windows) {
    std::vector<WindowSample> out;
    for (const auto& w : windows)
        if ((w.f_mag >= w.threshold) == (w.y == 1)) out.push_back(w);
    return out;
}

}  // namespace gesense::nn
