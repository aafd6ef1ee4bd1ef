#include "gesense/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "gesense/dataset.hpp"
#include "gesense/rng.hpp"

namespace gesense::eval {

namespace {

using nlohmann::ordered_json;
using telemetry::format_value;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

FlightScore match_and_score(const std::vector<double>& detections,
                            const std::vector<telemetry::EdgeEvent>& ground_truth,
                            double speed, double max_match) {
    if (!(speed > 0.0)) throw ValidationError("match_and_score: speed must be positive");

    struct Candidate {
        double dist;
        std::size_t det;
        std::size_t gt;
    };
    std::vector<Candidate> cands;
    for (std::size_t d = 0; d < detections.size(); ++d)
        for (std::size_t g = 0; g < ground_truth.size(); ++g) {
            const double dist = std::abs(detections[d] - ground_truth[g].t);
            if (dist <= max_match) cands.push_back({dist, d, g});
        }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.gt != b.gt) return a.gt < b.gt;
        return a.det < b.det;
    });

    std::vector<char> det_used(detections.size(), 0), gt_used(ground_truth.size(), 0);
    FlightScore score;
    for (const auto& c : cands) {
        if (det_used[c.det] || gt_used[c.gt]) continue;
        det_used[c.det] = gt_used[c.gt] = 1;
        MatchedPair m;
        m.detected_t = detections[c.det];
        m.gt_t = ground_truth[c.gt].t;
        m.error_m = (m.gt_t - m.detected_t) * speed;  // positive = early
        score.matched.push_back(m);
    }
    for (std::size_t d = 0; d < detections.size(); ++d)
        if (!det_used[d]) score.false_positives.push_back(detections[d]);
    for (std::size_t g = 0; g < ground_truth.size(); ++g)
        if (!gt_used[g]) score.missed.push_back(ground_truth[g].t);
    std::sort(score.matched.begin(), score.matched.end(),
              [](const MatchedPair& a, const MatchedPair& b) { return a.gt_t < b.gt_t; });
    return score;
}

ReportSummary summarize(const std::vector<FlightScore>& flights) {
    ReportSummary s;
    std::vector<double> abs_errors;
    for (const auto& f : flights) {
        s.matched += static_cast<int>(f.matched.size());
        s.false_positives += static_cast<int>(f.false_positives.size());
        s.missed += static_cast<int>(f.missed.size());
        for (const auto& m : f.matched) abs_errors.push_back(std::abs(m.error_m));
    }
    if (abs_errors.empty()) {
        s.mae_m = s.median_m = s.max_abs_m = kNan;
        return s;
    }
    std::sort(abs_errors.begin(), abs_errors.end());
    double sum = 0.0;
    for (double e : abs_errors) sum += e;
    s.mae_m = sum / static_cast<double>(abs_errors.size());
    const std::size_t n = abs_errors.size();
    s.median_m = n % 2 == 1 ? abs_errors[n / 2]
                            : 0.5 * (abs_errors[n / 2 - 1] + abs_errors[n / 2]);
    s.max_abs_m = abs_errors.back();
    return s;
}

double improvement_pct(const ReportSummary& pipeline, const ReportSummary& baseline) {
    return 100.0 * (1.0 - pipeline.mae_m / baseline.mae_m);
}

std::vector<double> baseline_detect(const telemetry::SourceSeries& source,
                                    const config::BaselineConfig& baseline,
                                    const spectral::SpectralConfig& spectral_cfg) {
    const int n_ch = static_cast<int>(source.channels.cols());
    const double t0 = source.t.size() > 0 ? source.t[0] : 0.0;

    // Per-channel total STFT power per frame.
    Eigen::MatrixXd power;
    Eigen::VectorXd frame_times;
    for (int c = 0; c < n_ch; ++c) {
        const auto spec = spectral::stft(source.channels.col(c), spectral_cfg.window_size,
                                         spectral_cfg.overlap, source.sample_rate, t0);
        if (c == 0) {
            power.resize(spec.power.rows(), n_ch);
            frame_times = spec.frame_times;
        }
        power.col(c) = spec.power.rowwise().sum();
    }

    const Eigen::Index n = power.rows();
    const int w = baseline.corr_window;
    if (n < w + 3) return {};

    // Summed pairwise Pearson correlation over a trailing window, via
    // rolling first/second moments.
    const Eigen::Index n_corr = n - w + 1;
    Eigen::VectorXd corr_sum = Eigen::VectorXd::Zero(n_corr);
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(n_ch);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(n_ch, n_ch);  // includes squares
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::VectorXd row = power.row(k).transpose();
        sums += row;
        cross += row * row.transpose();
        if (k >= w) {
            const Eigen::VectorXd old = power.row(k - w).transpose();
            sums -= old;
            cross -= old * old.transpose();
        }
        if (k >= w - 1) {
            double total = 0.0;
            for (int i = 0; i < n_ch; ++i) {
                const double var_i = cross(i, i) - sums[i] * sums[i] / w;
                if (var_i <= 1e-12) continue;  // degenerate channel: skip its pairs
                for (int j = i + 1; j < n_ch; ++j) {
                    const double var_j = cross(j, j) - sums[j] * sums[j] / w;
                    if (var_j <= 1e-12) continue;
                    const double cov = cross(i, j) - sums[i] * sums[j] / w;
                    total += cov / std::sqrt(var_i * var_j);
                }
            }
            corr_sum[k - w + 1] = total;
        }
    }

    // Centred moving average; only full windows are kept.
    int span = static_cast<int>(std::lround(baseline.smooth_s * source.sample_rate /
                                            (spectral_cfg.window_size - spectral_cfg.overlap)));
    if (span % 2 == 0) ++span;
    span = std::max(span, 3);
    const int half = span / 2;
    if (n_corr < span + 3) return {};
    const Eigen::Index n_smooth = n_corr - span + 1;
    Eigen::VectorXd smooth(n_smooth);
    double acc = corr_sum.head(span).sum();
    smooth[0] = acc / span;
    for (Eigen::Index k = 1; k < n_smooth; ++k) {
        acc += corr_sum[k + span - 1] - corr_sum[k - 1];
        smooth[k] = acc / span;
    }
    // smooth[k] corresponds to corr frame k + half, which is STFT frame
    // k + half + w - 1.
    const auto time_of = [&](Eigen::Index k) {
        return frame_times[k + half + w - 1];
    };

    std::vector<double> detections;
    for (Eigen::Index k = 1; k + 2 < n_smooth; ++k) {
        const double d2a = smooth[k + 1] - 2.0 * smooth[k] + smooth[k - 1];
        const double d2b = smooth[k + 2] - 2.0 * smooth[k + 1] + smooth[k];
        if (d2a * d2b < 0.0) {
            const double frac = d2a / (d2a - d2b);
            const double t = time_of(k) + frac * (time_of(k + 1) - time_of(k));
            detections.push_back(t);
        }
    }
    return detections;
}

namespace {

sim::Scene eval_scene(const config::EvalSceneConfig& sc, double edge_x) {
    sim::Scene scene;
    scene.segments = {{0.0, edge_x, 0.0, sc.floor_gain},
                      {edge_x, sc.length, sc.platform_height, sc.platform_gain}};
    return scene;
}

std::uint64_t flight_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    Rng r(base);
    return r.fork(stream * 7919 + index).next_u64();
}

ordered_json summary_to_json(const ReportSummary& s) {
    return ordered_json{{"matched", s.matched},
                        {"false_positives", s.false_positives},
                        {"missed", s.missed},
                        {"mae_m", s.mae_m},
                        {"median_m", s.median_m},
                        {"max_abs_m", s.max_abs_m}};
}

}  // namespace

FlightData make_flight(const config::RunConfig& cfg, double clearance, double angle_deg,
                       std::uint64_t seed) {
    Rng rng(seed);
    const auto& sc = cfg.eval.scene;
    const double edge_x = rng.uniform(sc.edge_min_x, sc.edge_max_x);

    FlightData fd;
    const sim::Scene scene = eval_scene(sc, edge_x);
    sim::MissionConfig mission = cfg.mission;
    mission.altitude = sc.platform_height + clearance;
    mission.approach_angle_deg = angle_deg;
    mission.seed = rng.next_u64();

    auto result = sim::fly_mission(scene, cfg.drone, cfg.controller, mission,
                                   cfg.ground_effect);
    fd.record = std::move(result.record);
    fd.trace = std::move(result.trace);
    fd.source = telemetry::build_source_vector(fd.record);
    fd.features = spectral::extract_features(fd.source, cfg.spectral);
    fd.disturbance = physics::estimate_disturbance(fd.record, cfg.drone, cfg.cfar);
    return fd;
}

std::vector<double> pipeline_detect(const config::RunConfig& cfg, const nn::NetworkModel& model,
                                    const FlightData& flight) {
    const auto transitions = nn::detect_edges(model, flight.features.c,
                                              flight.features.frame_times,
                                              cfg.nn.detect_stride);
    return physics::gate_detections(transitions, flight.disturbance, cfg.gate_window_s);
}

PipelineModel train_pipeline(const config::RunConfig& cfg) {
    std::vector<nn::WindowSample> windows;
    const double clearance = cfg.eval.heights.front();
    for (int i = 0; i < cfg.eval.train_flights; ++i) {
        const FlightData fd =
            make_flight(cfg, clearance, 0.0, flight_seed(cfg.eval.base_seed, 1, i));
        auto w = nn::make_windows(fd.features, fd.disturbance, fd.record.ground_truth,
                                  cfg.nn.window, cfg.nn.train_stride);
        windows.insert(windows.end(), w.begin(), w.end());
    }

    PipelineModel out;
    out.train_windows = windows.size();
    out.model = nn::make_model(cfg.nn.window, 3, cfg.nn.lambda, cfg.nn.seed);
    const nn::Dataset data = nn::to_dataset(windows);
    nn::fit_input_standardization(out.model, data);
    nn::TrainConfig tc;
    tc.epochs = cfg.nn.epochs;
    tc.batch_size = cfg.nn.batch_size;
    tc.learning_rate = cfg.nn.learning_rate;
    tc.momentum = cfg.nn.momentum;
    tc.seed = cfg.nn.seed;
    out.train_result = nn::train(out.model, data, tc);
    return out;
}

namespace {

PointResult evaluate_point(const config::RunConfig& cfg, const nn::NetworkModel& model,
                           double height, double angle) {
    PointResult pr;
    pr.height_m = height;
    pr.angle_deg = angle;
    for (int i = 0; i < cfg.eval.eval_flights; ++i) {
        const FlightData fd =
            make_flight(cfg, height, angle, flight_seed(cfg.eval.base_seed, 2, i));
        const auto pipeline = pipeline_detect(cfg, model, fd);
        const auto base = baseline_detect(fd.source, cfg.eval.baseline, cfg.spectral);
        pr.pipeline.push_back(match_and_score(pipeline, fd.record.ground_truth,
                                              fd.record.speed, cfg.eval.max_match_s));
        pr.baseline.push_back(match_and_score(base, fd.record.ground_truth, fd.record.speed,
                                              cfg.eval.max_match_s));
    }
    pr.pipeline_summary = summarize(pr.pipeline);
    pr.baseline_summary = summarize(pr.baseline);
    return pr;
}

}  // namespace

ExperimentResult run_experiment(const config::RunConfig& cfg) {
    ExperimentResult res;
    res.trained = train_pipeline(cfg);

    res.primary = evaluate_point(cfg, res.trained.model, cfg.eval.heights.front(), 0.0);
    for (double h : cfg.eval.heights) {
        if (h == cfg.eval.heights.front()) {
            res.heights.push_back(res.primary);
            continue;
        }
        res.heights.push_back(evaluate_point(cfg, res.trained.model, h, 0.0));
    }
    for (double a : cfg.eval.angles) {
        if (a == 0.0) {
            PointResult pr = res.primary;
            pr.angle_deg = 0.0;
            res.angles.push_back(pr);
            continue;
        }
        res.angles.push_back(
            evaluate_point(cfg, res.trained.model, cfg.eval.heights.front(), a));
    }

    ordered_json j;
    j["config"] = {{"base_seed", cfg.eval.base_seed},
                   {"train_flights", cfg.eval.train_flights},
                   {"eval_flights", cfg.eval.eval_flights},
                   {"speed", cfg.mission.speed},
                   {"epochs", cfg.nn.epochs},
                   {"lambda", cfg.nn.lambda}};
    j["model"] = {{"train_windows", res.trained.train_windows},
                  {"epochs_run", res.trained.train_result.epochs_run},
                  {"final_loss", res.trained.train_result.loss_history.empty()
                                     ? kNan
                                     : res.trained.train_result.loss_history.back()},
                  {"final_train_accuracy",
                   res.trained.train_result.accuracy_history.empty()
                       ? kNan
                       : res.trained.train_result.accuracy_history.back()}};
    j["primary"] = {{"height_m", res.primary.height_m},
                    {"angle_deg", res.primary.angle_deg},
                    {"pipeline", summary_to_json(res.primary.pipeline_summary)},
                    {"baseline", summary_to_json(res.primary.baseline_summary)},
                    {"improvement_pct", improvement_pct(res.primary.pipeline_summary,
                                                        res.primary.baseline_summary)}};
    j["heights"] = ordered_json::array();
    for (const auto& p : res.heights)
        j["heights"].push_back({{"height_m", p.height_m},
                                {"pipeline", summary_to_json(p.pipeline_summary)},
                                {"baseline", summary_to_json(p.baseline_summary)}});
    j["angles"] = ordered_json::array();
    for (const auto& p : res.angles)
        j["angles"].push_back({{"angle_deg", p.angle_deg},
                               {"pipeline", summary_to_json(p.pipeline_summary)},
                               {"baseline", summary_to_json(p.baseline_summary)}});
    res.summary_json = j.dump(1);
    return res;
}

void write_experiment_outputs(const ExperimentResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    {
        std::ofstream f(fs::path(out_dir) / "summary.json");
        if (!f) throw ValidationError("cannot write summary.json in " + out_dir);
        f << result.summary_json;
    }

    {
        std::ofstream f(fs::path(out_dir) / "flights.csv");
        f << "group,height_m,angle_deg,flight,method,gt_t,detected_t,error_m,false_positives,"
             "missed\n";
        auto write_point = [&f](const std::string& group, const PointResult& p) {
            auto write_scores = [&](const char* method, const std::vector<FlightScore>& v) {
                for (std::size_t i = 0; i < v.size(); ++i) {
                    const auto& s = v[i];
                    if (s.matched.empty()) {
                        f << group << ',' << format_value(p.height_m) << ','
                          << format_value(p.angle_deg) << ',' << i << ',' << method
                          << ",,,," << s.false_positives.size() << ',' << s.missed.size()
                          << '\n';
                    }
                    for (const auto& m : s.matched) {
                        f << group << ',' << format_value(p.height_m) << ','
                          << format_value(p.angle_deg) << ',' << i << ',' << method << ','
                          << format_value(m.gt_t) << ',' << format_value(m.detected_t) << ','
                          << format_value(m.error_m) << ',' << s.false_positives.size() << ','
                          << s.missed.size() << '\n';
                    }
                }
            };
            write_scores("pipeline", p.pipeline);
            write_scores("baseline", p.baseline);
        };
        write_point("primary", result.primary);
        for (const auto& p : result.heights) write_point("height_sweep", p);
        for (const auto& p : result.angles) write_point("angle_sweep", p);
    }

    auto write_sweep_csv = [&](const std::string& name, const std::vector<PointResult>& pts,
                               bool by_height) {
        std::ofstream f(fs::path(out_dir) / name);
        f << (by_height ? "height_m" : "angle_deg")
          << ",pipeline_mae_m,pipeline_median_m,pipeline_max_abs_m,pipeline_matched,"
             "pipeline_missed,baseline_mae_m\n";
        for (const auto& p : pts) {
            f << format_value(by_height ? p.height_m : p.angle_deg) << ','
              << format_value(p.pipeline_summary.mae_m) << ','
              << format_value(p.pipeline_summary.median_m) << ','
              << format_value(p.pipeline_summary.max_abs_m) << ','
              << p.pipeline_summary.matched << ',' << p.pipeline_summary.missed << ','
              << format_value(p.baseline_summary.mae_m) << '\n';
        }
    };
    write_sweep_csv("error_vs_height.csv", result.heights, true);
    write_sweep_csv("error_vs_angle.csv", result.angles, false);

    {
        std::ofstream f(fs::path(out_dir) / "cdf_points.csv");
        f << "method,abs_error_m,cdf\n";
        auto write_cdf = [&f](const char* method, const std::vector<FlightScore>& flights) {
            std::vector<double> errs;
            for (const auto& s : flights)
                for (const auto& m : s.matched) errs.push_back(std::abs(m.error_m));
            std::sort(errs.begin(), errs.end());
            for (std::size_t i = 0; i < errs.size(); ++i)
                f << method << ',' << format_value(errs[i]) << ','
                  << format_value(static_cast<double>(i + 1) / errs.size()) << '\n';
        };
        write_cdf("pipeline", result.primary.pipeline);
        write_cdf("baseline", result.primary.baseline);
    }
}

}  // namespace gesense::eval
