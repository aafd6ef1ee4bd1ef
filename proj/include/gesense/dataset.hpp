#pragma once

#include <vector>

#include "gesense/nn.hpp"
#include "gesense/physics.hpp"
#include "gesense/spectral.hpp"
#include "gesense/telemetry.hpp"

namespace gesense::nn {

/// Surface-state label at time t: starts at 0 and flips at every
/// ground-truth edge (0 = reference surface, 1 = target surface).
int surface_state_at(const std::vector<telemetry::EdgeEvent>& events, double t);

/// Cut training windows out of one flight. Each window covers `window_h`
/// consecutive feature frames starting at multiples of `stride`; its label,
/// disturbance magnitude and CFAR threshold are taken at the window-end
/// time (nearest disturbance sample).
std::vector<WindowSample> make_windows(const spectral::FusedFeatureSeries& features,
                                       const physics::DisturbanceSeries& disturbance,
                                       const std::vector<telemetry::EdgeEvent>& events,
                                       int window_h, int stride);

/// Keep only windows whose CFAR state agrees with the label:
/// (f_mag >= threshold) == (y == 1).
std::vector<WindowSample> filter_cfar_consistent(const std::vector<WindowSample>& windows);

}  // namespace gesense::nn
