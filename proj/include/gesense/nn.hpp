#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gesense/errors.hpp"
#include "gesense/rng.hpp"

namespace gesense::nn {

/// Convolution over the time axis only (kernel height x 1), valid padding.
/// Weights are stored as [kernel_h * in_channels, out_channels] with row
/// index k * in_channels + ic.
struct ConvLayer {
    int kernel_h = 3;
    int in_channels = 0;
    int out_channels = 0;
    Eigen::MatrixXd w;
    Eigen::VectorXd b;
};

struct DenseLayer {
    Eigen::MatrixXd w;  ///< [in, out]
    Eigen::VectorXd b;
};

/// The tiny edge classifier: conv(16) -> pool -> conv(32) -> pool ->
/// dense(16) -> dense(2, softmax). Input windows are [window_h x 3] fused
/// features, flattened row-major (time, channel).
struct NetworkModel {
    int window_h = 100;
    int width = 3;           ///< feature channels laid out along the conv width
    ConvLayer conv1;
    ConvLayer conv2;
    DenseLayer fc1;
    DenseLayer fc2;
    double lambda = 0.5;     ///< disturbance-loss weight

    /// Per-channel input standardisation (x - offset) / scale applied ahead
    /// of the first convolution; identity until set from a training set.
    Eigen::VectorXd input_offset;
    Eigen::VectorXd input_scale;

    struct Meta {
        std::uint64_t init_seed = 0;
        int epochs_trained = 0;
        double learning_rate = 0.0;
    } meta;

    int flat_size() const;
    std::size_t weight_count() const;  ///< weights only, biases excluded
    std::size_t parameter_count() const;

    /// Visit every parameter tensor (weights first, then biases).
    void for_each_tensor(const std::function<void(Eigen::MatrixXd&)>& fw,
                         const std::function<void(Eigen::VectorXd&)>& fb);
};

/// One training/inference sample.
struct WindowSample {
    Eigen::MatrixXd x;  ///< [window_h x 3]
    int y = 0;          ///< 0 = reference surface, 1 = target surface
    double f_mag = 0.0; ///< disturbance magnitude at the window end
    double threshold = 0.0;
    double t = 0.0;     ///< window end time
};

/// Sample-major dataset: each row of `x` is one flattened window.
struct Dataset {
    Eigen::MatrixXd x;       ///< [n x window_h*3]
    std::vector<int> y;
    Eigen::VectorXd f_mag;
    Eigen::VectorXd threshold;
    Eigen::VectorXd t;

    Eigen::Index size() const { return x.rows(); }
};

Dataset to_dataset(const std::vector<WindowSample>& windows);

/// Fresh model with He-uniform weights (seeded) and zero biases.
NetworkModel make_model(int window_h, int width, double lambda, std::uint64_t seed);

/// Fit the model's input standardisation to the per-channel mean and
/// standard deviation of a training set.
void fit_input_standardization(NetworkModel& model, const Dataset& data);

/// Forward pass for one window; returns the two class probabilities.
/// Throws ValidationError on shape mismatch or non-finite input.
Eigen::Vector2d forward(const NetworkModel& model, const Eigen::MatrixXd& x);

/// Class probabilities for many flattened windows, [n x 2].
Eigen::MatrixXd forward_batch(const NetworkModel& model, const Eigen::MatrixXd& x);

/// Disturbance-informed loss: exp(|y_hat - 1|) - 1 when the force magnitude
/// reaches the threshold, exp(|y_hat|) - 1 otherwise.
double df_loss(double y_hat, double f_mag, double threshold);

/// Binary cross-entropy with the prediction clamped to [1e-7, 1 - 1e-7].
double bce_loss(int y, double y_hat);

/// Mean over the batch of bce + lambda * df.
double total_loss(const NetworkModel& model, const Dataset& batch);

/// Gradient of total_loss with respect to every parameter, same order as
/// for_each_tensor. Exposed for the finite-difference check.
struct Gradients {
    Eigen::MatrixXd conv1_w, conv2_w, fc1_w, fc2_w;
    Eigen::VectorXd conv1_b, conv2_b, fc1_b, fc2_b;
};
Gradients loss_gradients(const NetworkModel& model, const Dataset& batch);

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    double stop_at_train_accuracy = -1.0;  ///< < 0 disables early stopping
};

struct TrainResult {
    std::vector<double> loss_history;      ///< mean loss per epoch
    std::vector<double> accuracy_history;  ///< train accuracy per epoch
    int epochs_run = 0;
};

/// SGD with momentum; deterministic for a given seed. The optional
/// epoch-end hook may mutate the model (used for in-training pruning).
/// Throws TrainingFault when the loss turns non-finite.
TrainResult train(NetworkModel& model, const Dataset& data, const TrainConfig& config,
                  const std::function<void(NetworkModel&, int)>& on_epoch_end = {});

/// Fraction of samples whose argmax class matches the label.
double evaluate_accuracy(const NetworkModel& model, const Dataset& data);

/// Slide windows over the feature series at the given stride, classify each,
/// and report the midpoint time of every class change. `window_times` are
/// the per-frame timestamps; a window's timestamp is its last frame's.
std::vector<double> detect_edges(const NetworkModel& model, const Eigen::MatrixXd& features,
                                 const Eigen::VectorXd& frame_times, int stride);

/// Versioned JSON serialisation.
std::string to_json(const NetworkModel& model);
NetworkModel model_from_json(const std::string& text);
void save_model(const NetworkModel& model, const std::string& path);
NetworkModel load_model(const std::string& path);

}  // namespace gesense::nn
