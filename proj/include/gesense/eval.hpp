#pragma once

#include <string>
#include <vector>

#include "gesense/config.hpp"
#include "gesense/nn.hpp"
#include "gesense/physics.hpp"
#include "gesense/simulator.hpp"
#include "gesense/spectral.hpp"
#include "gesense/telemetry.hpp"

namespace gesense::eval {

/// One detection matched to one ground-truth edge. The signed error is
/// (gt_t - detected_t) * speed: positive means the edge was reported early.
struct MatchedPair {
    double detected_t = 0.0;
    double gt_t = 0.0;
    double error_m = 0.0;
};

struct FlightScore {
    std::vector<MatchedPair> matched;
    std::vector<double> false_positives;  ///< unmatched detection times
    std::vector<double> missed;           ///< unmatched ground-truth times
};

/// Greedy nearest-first matching within max_match seconds; every ground
/// truth edge is matched at most once.
FlightScore match_and_score(const std::vector<double>& detections,
                            const std::vector<telemetry::EdgeEvent>& ground_truth,
                            double speed, double max_match);

struct ReportSummary {
    int matched = 0;
    int false_positives = 0;
    int missed = 0;
    double mae_m = 0.0;     ///< NaN when nothing matched
    double median_m = 0.0;
    double max_abs_m = 0.0;
};

ReportSummary summarize(const std::vector<FlightScore>& flights);

/// 100 * (1 - mae_pipeline / mae_baseline).
double improvement_pct(const ReportSummary& pipeline, const ReportSummary& baseline);

/// The spectral-correlation reference detector: per-channel STFT total power,
/// summed pairwise Pearson correlation over a trailing window, smoothing,
/// and zero crossings of the discrete second derivative.
std::vector<double> baseline_detect(const telemetry::SourceSeries& source,
                                    const config::BaselineConfig& baseline,
                                    const spectral::SpectralConfig& spectral_cfg);

/// Model trained on freshly simulated flights per the eval config.
struct PipelineModel {
    nn::NetworkModel model;
    nn::TrainResult train_result;
    std::size_t train_windows = 0;
};

PipelineModel train_pipeline(const config::RunConfig& cfg);

/// Everything derived from one simulated flight that the detectors need.
struct FlightData {
    telemetry::FlightRecord record;
    sim::MissionTrace trace;
    telemetry::SourceSeries source;
    spectral::FusedFeatureSeries features;
    physics::DisturbanceSeries disturbance;
};

/// Simulate one eval-scene flight (floor + platform, edge position drawn
/// from the flight seed) and run the feature/physics stages.
FlightData make_flight(const config::RunConfig& cfg, double clearance, double angle_deg,
                       std::uint64_t seed);

/// Pipeline detections for a flight: classifier transitions gated by the
/// disturbance alerts.
std::vector<double> pipeline_detect(const config::RunConfig& cfg, const nn::NetworkModel& model,
                                    const FlightData& flight);

struct PointResult {
    double height_m = 0.0;
    double angle_deg = 0.0;
    std::vector<FlightScore> pipeline;
    std::vector<FlightScore> baseline;
    ReportSummary pipeline_summary;
    ReportSummary baseline_summary;
};

struct ExperimentResult {
    PipelineModel trained;
    PointResult primary;                 ///< first height, zero angle
    std::vector<PointResult> heights;    ///< height sweep at zero angle
    std::vector<PointResult> angles;     ///< angle sweep at the first height
    std::string summary_json;
};

/// Full reproduction run: train, evaluate the primary point, sweep heights
/// and angles, score pipeline vs baseline. Deterministic per config.
ExperimentResult run_experiment(const config::RunConfig& cfg);

/// Write summary.json, per-flight CSV and plot-data CSVs into out_dir.
void write_experiment_outputs(const ExperimentResult& result, const std::string& out_dir);

}  // namespace gesense::eval
