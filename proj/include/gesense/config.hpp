#pragma once

#include <string>
#include <vector>

#include "gesense/compress.hpp"
#include "gesense/errors.hpp"
#include "gesense/nn.hpp"
#include "gesense/physics.hpp"
#include "gesense/simulator.hpp"
#include "gesense/spectral.hpp"
#include "gesense/telemetry.hpp"

namespace gesense::config {

struct NnConfig {
    int window = 100;
    int epochs = 200;
    int batch_size = 32;
    double lambda = 0.5;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 7;
    int train_stride = 30;
    int detect_stride = 1;
};

struct CompressConfig {
    double target_sparsity = 0.9;
    int bits = 8;
    compress::PruneSchedule schedule;
};

struct EvalSceneConfig {
    double floor_gain = 1.0;
    double platform_gain = 40.0;
    double platform_height = 0.30;  ///< m
    double length = 5.0;            ///< m
    double edge_min_x = 1.75;       ///< randomized edge position range
    double edge_max_x = 3.0;
};

struct BaselineConfig {
    int corr_window = 100;   ///< frames in the sliding Pearson window
    double smooth_s = 0.5;   ///< moving-average span before differentiation
};

struct EvalConfig {
    int train_flights = 200;
    int eval_flights = 30;
    std::vector<double> heights{0.04, 0.09, 0.12};      ///< clearances, m
    std::vector<double> angles{0.0, 10.0, -10.0, 20.0, -20.0};  ///< degrees
    double max_match_s = 1.0;
    std::uint64_t base_seed = 42;
    EvalSceneConfig scene;
    BaselineConfig baseline;
};

/// Full run configuration; every field has a default matching the reference
/// parameterisation, so an empty JSON object is a valid config.
struct RunConfig {
    telemetry::DroneParams drone;
    sim::ControllerConfig controller;
    sim::GroundEffectModel ground_effect;
    sim::Scene scene;  ///< used by the standalone simulate command
    sim::MissionConfig mission;
    double mission_clearance = 0.04;  ///< m above the highest surface on the path
    spectral::SpectralConfig spectral;
    physics::CfarConfig cfar;
    double gate_window_s = 0.25;
    NnConfig nn;
    CompressConfig compress;
    EvalConfig eval;

    /// Mission altitude for a scene: highest surface on the path + clearance.
    double altitude_for(const sim::Scene& s) const;
};

/// Parse and validate a config JSON document. Unknown keys and out-of-range
/// values raise ConfigError with the offending path.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

/// The default configuration serialised as JSON (what an empty config means).
std::string default_config_json();

}  // namespace gesense::config
