#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gesense/config.hpp"
#include "gesense/dataset.hpp"
#include "gesense/eval.hpp"
#include "gesense/nn.hpp"
#include "gesense/physics.hpp"
#include "gesense/simulator.hpp"
#include "gesense/spectral.hpp"
#include "gesense/telemetry.hpp"

namespace {

using namespace gesense;

config::RunConfig load_cfg(const std::string& path, std::optional<std::uint64_t> seed) {
    config::RunConfig cfg = config::load_config(path);
    if (seed) {
        cfg.eval.base_seed = *seed;
        cfg.mission.seed = *seed;
    }
    return cfg;
}

// Reconstruct the source/feature/disturbance stages from a telemetry CSV.
eval::FlightData stages_from_csv(const config::RunConfig& cfg, const std::string& path) {
    eval::FlightData fd;
    fd.record = telemetry::parse_log_file(path);
    fd.record.params = cfg.drone;
    fd.record = telemetry::align(fd.record, cfg.mission.sample_rate);
    fd.source = telemetry::build_source_vector(fd.record);
    fd.features = spectral::extract_features(fd.source, cfg.spectral);
    fd.disturbance = physics::estimate_disturbance(fd.record, cfg.drone, cfg.cfar);
    return fd;
}

void dump_features_csv(const spectral::FusedFeatureSeries& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open output file: " + path);
    out << "frame_t,a_s,omega_s,m_s\n";
    for (Eigen::Index i = 0; i < f.frame_times.size(); ++i) {
        out << telemetry::format_value(f.frame_times[i]);
        for (int c = 0; c < 3; ++c) out << ',' << telemetry::format_value(f.c(i, c));
        out << '\n';
    }
}

int cmd_simulate(const config::RunConfig& cfg, const std::string& out_path,
                 const std::string& trace_path) {
    sim::MissionConfig mission = cfg.mission;
    mission.altitude = cfg.altitude_for(cfg.scene);
    const auto result =
        sim::fly_mission(cfg.scene, cfg.drone, cfg.controller, mission, cfg.ground_effect);
    telemetry::emit_log_file(result.record, out_path);
    if (!trace_path.empty()) {
        std::ofstream f(trace_path);
        if (!f) throw ValidationError("cannot open trace file: " + trace_path);
        f << "t,fwx,fwy,fwz,px,py,pz\n";
        for (Eigen::Index i = 0; i < result.trace.t.size(); ++i) {
            f << telemetry::format_value(result.trace.t[i]);
            for (int k = 0; k < 3; ++k)
                f << ',' << telemetry::format_value(result.trace.true_f_w(i, k));
            for (int k = 0; k < 3; ++k)
                f << ',' << telemetry::format_value(result.trace.true_pos(i, k));
            f << '\n';
        }
    }
    std::cout << "wrote " << result.record.imu.size() << " samples to " << out_path << "\n";
    return 0;
}

int cmd_features(const config::RunConfig& cfg, const std::string& in_path,
                 const std::string& out_path) {
    const auto fd = stages_from_csv(cfg, in_path);
    dump_features_csv(fd.features, out_path);
    std::cout << "wrote " << fd.features.frame_times.size() << " frames to " << out_path
              << "\n";
    return 0;
}

int cmd_train(const config::RunConfig& cfg, const std::vector<std::string>& data,
              const std::string& out_path) {
    eval::PipelineModel trained;
    if (data.empty()) {
        trained = eval::train_pipeline(cfg);
    } else {
        std::vector<nn::WindowSample> windows;
        for (const auto& path : data) {
            const auto fd = stages_from_csv(cfg, path);
            auto w = nn::make_windows(fd.features, fd.disturbance, fd.record.ground_truth,
                                      cfg.nn.window, cfg.nn.train_stride);
            windows.insert(windows.end(), w.begin(), w.end());
        }
        trained.train_windows = windows.size();
        trained.model = nn::make_model(cfg.nn.window, 3, cfg.nn.lambda, cfg.nn.seed);
        const nn::Dataset dataset = nn::to_dataset(windows);
        nn::fit_input_standardization(trained.model, dataset);
        nn::TrainConfig tc;
        tc.epochs = cfg.nn.epochs;
        tc.batch_size = cfg.nn.batch_size;
        tc.learning_rate = cfg.nn.learning_rate;
        tc.momentum = cfg.nn.momentum;
        tc.seed = cfg.nn.seed;
        trained.train_result = nn::train(trained.model, dataset, tc);
    }
    nn::save_model(trained.model, out_path);
    std::cout << "trained on " << trained.train_windows << " windows for "
              << trained.train_result.epochs_run << " epochs";
    if (!trained.train_result.accuracy_history.empty())
        std::cout << ", train accuracy "
                  << trained.train_result.accuracy_history.back();
    std::cout << "; saved " << out_path << "\n";
    return 0;
}

int cmd_detect(const config::RunConfig& cfg, const std::string& model_path,
               const std::string& in_path, const std::string& out_path,
               const std::string& features_path, const std::string& disturbance_path) {
    const nn::NetworkModel model = nn::load_model(model_path);
    const auto fd = stages_from_csv(cfg, in_path);
    const auto transitions =
        nn::detect_edges(model, fd.features.c, fd.features.frame_times, cfg.nn.detect_stride);
    const auto gated = physics::gate_detections(transitions, fd.disturbance, cfg.gate_window_s);

    nlohmann::ordered_json j;
    j["transitions"] = transitions;
    j["detections"] = gated;
    j["gate_window_s"] = cfg.gate_window_s;
    std::ofstream out(out_path);
    if (!out) throw ValidationError("cannot open output file: " + out_path);
    out << j.dump(1);

    if (!features_path.empty()) dump_features_csv(fd.features, features_path);
    if (!disturbance_path.empty()) {
        std::ofstream f(disturbance_path);
        if (!f) throw ValidationError("cannot open output file: " + disturbance_path);
        physics::dump_disturbance_csv(fd.disturbance, f);
    }
    std::cout << gated.size() << " detections (" << transitions.size()
              << " raw transitions); wrote " << out_path << "\n";
    return 0;
}

int cmd_compress(const config::RunConfig& cfg, const std::string& model_path,
                 const std::string& out_path, const std::string& report_path) {
    const nn::NetworkModel model = nn::load_model(model_path);
    const auto compact =
        compress::compress_model(model, cfg.compress.target_sparsity, cfg.compress.bits);
    compress::save_compact(compact, out_path);
    const auto report = compress::size_report(compact);
    if (!report_path.empty()) {
        std::ofstream f(report_path);
        if (!f) throw ValidationError("cannot open report file: " + report_path);
        f << compress::size_report_json(report);
    }
    std::cout << "sparsity " << cfg.compress.target_sparsity << ", " << cfg.compress.bits
              << "-bit; " << report.original_bytes << " -> " << report.compact_bytes
              << " bytes (x" << report.realized_ratio << "); wrote " << out_path << "\n";
    return 0;
}

int cmd_eval(const config::RunConfig& cfg, const std::string& out_dir) {
    const auto result = eval::run_experiment(cfg);
    eval::write_experiment_outputs(result, out_dir);
    const auto& p = result.primary;
    std::cout << "primary point: pipeline MAE " << p.pipeline_summary.mae_m
              << " m, baseline MAE " << p.baseline_summary.mae_m << " m, improvement "
              << eval::improvement_pct(p.pipeline_summary, p.baseline_summary)
              << "%\nwrote " << out_dir << "/summary.json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ground-effect edge-detection pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Run configuration JSON")->required();
        sub->add_option("--seed", seed, "Override the run seed");
    };

    std::string out_path, in_path, model_path, trace_path, report_path, out_dir;
    std::string features_path, disturbance_path;
    std::vector<std::string> data_paths;

    auto* simulate = app.add_subcommand("simulate", "Fly one mission, write telemetry CSV");
    add_common(simulate);
    simulate->add_option("--out", out_path, "Telemetry CSV output")->required();
    simulate->add_option("--trace", trace_path, "Optional truth-trace CSV");

    auto* features = app.add_subcommand("features", "Extract fused features from telemetry");
    add_common(features);
    features->add_option("--in", in_path, "Telemetry CSV input")->required();
    features->add_option("--out", out_path, "Feature CSV output")->required();

    auto* train = app.add_subcommand("train", "Train the edge classifier");
    add_common(train);
    train->add_option("--data", data_paths,
                      "Telemetry CSVs to train on (default: simulate per config)");
    train->add_option("--out", out_path, "Model JSON output")->required();

    auto* detect = app.add_subcommand("detect", "Detect edges in one telemetry log");
    add_common(detect);
    detect->add_option("--model", model_path, "Model JSON")->required();
    detect->add_option("--in", in_path, "Telemetry CSV input")->required();
    detect->add_option("--out", out_path, "Detections JSON output")->required();
    detect->add_option("--dump-features", features_path, "Optional feature CSV");
    detect->add_option("--dump-disturbance", disturbance_path, "Optional disturbance CSV");

    auto* compress_cmd = app.add_subcommand("compress", "Prune and quantize a model");
    add_common(compress_cmd);
    compress_cmd->add_option("--model", model_path, "Model JSON")->required();
    compress_cmd->add_option("--out", out_path, "Compact model JSON output")->required();
    compress_cmd->add_option("--report", report_path, "Optional size report JSON");

    auto* eval_cmd = app.add_subcommand("eval", "Full train/evaluate comparison run");
    add_common(eval_cmd);
    eval_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

    auto* defaults = app.add_subcommand("default-config", "Print the default configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (defaults->parsed()) {
            std::cout << gesense::config::default_config_json() << "\n";
            return 0;
        }
        const auto cfg = load_cfg(config_path, seed);
        if (simulate->parsed()) return cmd_simulate(cfg, out_path, trace_path);
        if (features->parsed()) return cmd_features(cfg, in_path, out_path);
        if (train->parsed()) return cmd_train(cfg, data_paths, out_path);
        if (detect->parsed())
            return cmd_detect(cfg, model_path, in_path, out_path, features_path,
                              disturbance_path);
        if (compress_cmd->parsed())
            return cmd_compress(cfg, model_path, out_path, report_path);
        if (eval_cmd->parsed()) return cmd_eval(cfg, out_dir);
    } catch (const gesense::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
