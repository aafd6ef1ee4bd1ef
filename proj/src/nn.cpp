#include "gesense/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace gesense::nn {

namespace {

constexpr double kProbEps = 1e-7;

struct Dims {
    int h1 = 0;  ///< rows after conv1
    int p1 = 0;  ///< rows after pool1
    int h2 = 0;  ///< rows after conv2
    int p2 = 0;  ///< rows after pool2
    int flat = 0;
};

Dims dims_of(const NetworkModel& m) {
    Dims d;
    d.h1 = m.window_h - (m.conv1.kernel_h - 1);
    d.p1 = d.h1 / 2;
    d.h2 = d.p1 - (m.conv2.kernel_h - 1);
    d.p2 = d.h2 / 2;
    d.flat = d.p2 * m.width * m.conv2.out_channels;
    if (d.h1 < 2 || d.h2 < 2 || d.p2 < 1)
        throw ValidationError("network: window too small for the architecture");
    return d;
}

struct ForwardCache {
    Eigen::MatrixXd col1, a1;                 // conv1 patches / activations
    Eigen::MatrixXd pool1;                    // after pool1
    std::vector<std::uint8_t> pool1_take_hi;  // argmax route
    Eigen::MatrixXd col2, a2;
    Eigen::MatrixXd pool2;
    std::vector<std::uint8_t> pool2_take_hi;
    Eigen::MatrixXd flat;
    Eigen::MatrixXd h_fc1;
    Eigen::MatrixXd probs;  // [B x 2]
};

void relu_inplace(Eigen::MatrixXd& m) { m = m.cwiseMax(0.0); }

// Max-pool pairs of rows within each sample block of `rows_in` rows of
// width `w` (row layout: sample-major, then time, then width).
void pool_rows(const Eigen::MatrixXd& in, int rows_in, int rows_out, int w,
               Eigen::Index batch, Eigen::MatrixXd& out, std::vector<std::uint8_t>& take_hi) {
    out.resize(batch * rows_out * w, in.cols());
    take_hi.assign(static_cast<std::size_t>(out.rows()) * in.cols(), 0);
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (int q = 0; q < rows_out; ++q) {
            for (int x = 0; x < w; ++x) {
                const Eigen::Index lo = (b * rows_in + 2 * q) * w + x;
                const Eigen::Index hi = lo + w;
                const Eigen::Index o = (b * rows_out + q) * w + x;
                for (Eigen::Index c = 0; c < in.cols(); ++c) {
                    const double a = in(lo, c), bv = in(hi, c);
                    if (bv > a) {
                        out(o, c) = bv;
                        take_hi[static_cast<std::size_t>(o) * in.cols() + c] = 1;
                    } else {
                        out(o, c) = a;
                    }
                }
            }
        }
    }
}

void pool_rows_backward(const Eigen::MatrixXd& d_out, int rows_in, int rows_out, int w,
                        Eigen::Index batch, const std::vector<std::uint8_t>& take_hi,
                        Eigen::MatrixXd& d_in) {
    d_in.setZero(batch * rows_in * w, d_out.cols());
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (int q = 0; q < rows_out; ++q) {
            for (int x = 0; x < w; ++x) {
                const Eigen::Index lo = (b * rows_in + 2 * q) * w + x;
                const Eigen::Index o = (b * rows_out + q) * w + x;
                for (Eigen::Index c = 0; c < d_out.cols(); ++c) {
                    const bool hi = take_hi[static_cast<std::size_t>(o) * d_out.cols() + c];
                    d_in(hi ? lo + w : lo, c) += d_out(o, c);
                }
            }
        }
    }
}

// im2col for the time-axis convolution. Input rows are (sample, time, width),
// input has `ch` columns; output row ((b*h_out + r)*w + x), column k*ch + c.
Eigen::MatrixXd im2col(const Eigen::MatrixXd& in, int rows_in, int h_out, int w, int kh,
                       Eigen::Index batch) {
    const int ch = static_cast<int>(in.cols());
    Eigen::MatrixXd col(batch * h_out * w, kh * ch);
    for (Eigen::Index b = 0; b < batch; ++b)
        for (int r = 0; r < h_out; ++r)
            for (int x = 0; x < w; ++x) {
                const Eigen::Index o = (b * h_out + r) * w + x;
                for (int k = 0; k < kh; ++k) {
                    const Eigen::Index src = (b * rows_in + r + k) * w + x;
                    for (int c = 0; c < ch; ++c) col(o, k * ch + c) = in(src, c);
                }
            }
    return col;
}

void col2im_add(const Eigen::MatrixXd& d_col, int rows_in, int h_out, int w, int kh,
                Eigen::Index batch, Eigen::MatrixXd& d_in, int ch) {
    d_in.setZero(batch * rows_in * w, ch);
    for (Eigen::Index b = 0; b < batch; ++b)
        for (int r = 0; r < h_out; ++r)
            for (int x = 0; x < w; ++x) {
                const Eigen::Index o = (b * h_out + r) * w + x;
                for (int k = 0; k < kh; ++k) {
                    const Eigen::Index dst = (b * rows_in + r + k) * w + x;
                    for (int c = 0; c < ch; ++c) d_in(dst, c) += d_col(o, k * ch + c);
                }
            }
}

// Reshape input rows [B x window_h*width] into conv layout rows
// ((b*window_h + t)*width + x) with a single channel column.
Eigen::MatrixXd expand_input(const Eigen::MatrixXd& x, int window_h, int w) {
    Eigen::MatrixXd out(x.rows() * window_h * w, 1);
    for (Eigen::Index b = 0; b < x.rows(); ++b)
        for (int t = 0; t < window_h; ++t)
            for (int c = 0; c < w; ++c)
                out((b * window_h + t) * w + c, 0) = x(b, t * w + c);
    return out;
}

Eigen::MatrixXd standardize(const NetworkModel& m, const Eigen::MatrixXd& x) {
    if (m.input_offset.size() != m.width || m.input_scale.size() != m.width) return x;
    Eigen::MatrixXd out = x;
    for (Eigen::Index col = 0; col < out.cols(); ++col) {
        const Eigen::Index ch = col % m.width;
        out.col(col) = (out.col(col).array() - m.input_offset[ch]) / m.input_scale[ch];
    }
    return out;
}

ForwardCache run_forward(const NetworkModel& m, const Eigen::MatrixXd& x_raw) {
    const Dims d = dims_of(m);
    const Eigen::Index batch = x_raw.rows();
    if (x_raw.cols() != static_cast<Eigen::Index>(m.window_h) * m.width)
        throw ValidationError("forward: input width mismatch");
    if (!x_raw.allFinite()) throw ValidationError("forward: non-finite input");

    ForwardCache c;
    const Eigen::MatrixXd x = standardize(m, x_raw);
    const Eigen::MatrixXd in0 = expand_input(x, m.window_h, m.width);
    c.col1 = im2col(in0, m.window_h, d.h1, m.width, m.conv1.kernel_h, batch);
    c.a1 = (c.col1 * m.conv1.w).rowwise() + m.conv1.b.transpose();
    relu_inplace(c.a1);
    pool_rows(c.a1, d.h1, d.p1, m.width, batch, c.pool1, c.pool1_take_hi);

    c.col2 = im2col(c.pool1, d.p1, d.h2, m.width, m.conv2.kernel_h, batch);
    c.a2 = (c.col2 * m.conv2.w).rowwise() + m.conv2.b.transpose();
    relu_inplace(c.a2);
    pool_rows(c.a2, d.h2, d.p2, m.width, batch, c.pool2, c.pool2_take_hi);

    // Flatten rows (time, width, channel) per sample.
    const int block = d.p2 * m.width;
    c.flat.resize(batch, d.flat);
    const int ch2 = m.conv2.out_channels;
    for (Eigen::Index b = 0; b < batch; ++b)
        for (int rw = 0; rw < block; ++rw)
            for (int ch = 0; ch < ch2; ++ch)
                c.flat(b, rw * ch2 + ch) = c.pool2(b * block + rw, ch);

    c.h_fc1 = (c.flat * m.fc1.w).rowwise() + m.fc1.b.transpose();
    relu_inplace(c.h_fc1);
    Eigen::MatrixXd logits = (c.h_fc1 * m.fc2.w).rowwise() + m.fc2.b.transpose();

    c.probs.resize(batch, 2);
    for (Eigen::Index i = 0; i < batch; ++i) {
        const double mx = std::max(logits(i, 0), logits(i, 1));
        const double e0 = std::exp(logits(i, 0) - mx);
        const double e1 = std::exp(logits(i, 1) - mx);
        c.probs(i, 0) = e0 / (e0 + e1);
        c.probs(i, 1) = e1 / (e0 + e1);
    }
    return c;
}

double sample_loss(double lambda, int y, double p1, double f_mag, double threshold) {
    return bce_loss(y, p1) + lambda * df_loss(p1, f_mag, threshold);
}

// d(total sample loss)/d(p1).
double sample_loss_grad(double lambda, int y, double p1, double f_mag, double threshold) {
    double g = 0.0;
    if (p1 > kProbEps && p1 < 1.0 - kProbEps)
        g += (y == 1) ? -1.0 / p1 : 1.0 / (1.0 - p1);
    const double df_g = (f_mag >= threshold) ? -std::exp(1.0 - p1) : std::exp(p1);
    return g + lambda * df_g;
}

Gradients run_backward(const NetworkModel& m, const ForwardCache& c, const Dataset& batch) {
    const Dims d = dims_of(m);
    const Eigen::Index n = batch.size();

    // Softmax backward from dL/dp1.
    Eigen::MatrixXd d_logits(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double p1 = c.probs(i, 1);
        const double g =
            sample_loss_grad(m.lambda, batch.y[i], p1, batch.f_mag[i], batch.threshold[i]) / n;
        const double gz = g * p1 * c.probs(i, 0);
        d_logits(i, 0) = -gz;
        d_logits(i, 1) = gz;
    }

    Gradients grad;
    grad.fc2_w = c.h_fc1.transpose() * d_logits;
    grad.fc2_b = d_logits.colwise().sum().transpose();
    Eigen::MatrixXd d_h1 = d_logits * m.fc2.w.transpose();
    d_h1 = d_h1.cwiseProduct((c.h_fc1.array() > 0.0).cast<double>().matrix());

    grad.fc1_w = c.flat.transpose() * d_h1;
    grad.fc1_b = d_h1.colwise().sum().transpose();
    Eigen::MatrixXd d_flat = d_h1 * m.fc1.w.transpose();

    // Unflatten.
    const int block = d.p2 * m.width;
    const int ch2 = m.conv2.out_channels;
    Eigen::MatrixXd d_pool2(n * block, ch2);
    for (Eigen::Index b = 0; b < n; ++b)
        for (int rw = 0; rw < block; ++rw)
            for (int ch = 0; ch < ch2; ++ch)
                d_pool2(b * block + rw, ch) = d_flat(b, rw * ch2 + ch);

    Eigen::MatrixXd d_a2;
    pool_rows_backward(d_pool2, d.h2, d.p2, m.width, n, c.pool2_take_hi, d_a2);
    d_a2 = d_a2.cwiseProduct((c.a2.array() > 0.0).cast<double>().matrix());

    grad.conv2_w = c.col2.transpose() * d_a2;
    grad.conv2_b = d_a2.colwise().sum().transpose();
    const Eigen::MatrixXd d_col2 = d_a2 * m.conv2.w.transpose();
    Eigen::MatrixXd d_pool1;
    col2im_add(d_col2, d.p1, d.h2, m.width, m.conv2.kernel_h, n, d_pool1,
               m.conv2.in_channels);

    Eigen::MatrixXd d_a1;
    pool_rows_backward(d_pool1, d.h1, d.p1, m.width, n, c.pool1_take_hi, d_a1);
    d_a1 = d_a1.cwiseProduct((c.a1.array() > 0.0).cast<double>().matrix());

    grad.conv1_w = c.col1.transpose() * d_a1;
    grad.conv1_b = d_a1.colwise().sum().transpose();
    return grad;
}

}  // namespace

int NetworkModel::flat_size() const { return dims_of(*this).flat; }

std::size_t NetworkModel::weight_count() const {
    return static_cast<std::size_t>(conv1.w.size()) + conv2.w.size() + fc1.w.size() +
           fc2.w.size();
}

std::size_t NetworkModel::parameter_count() const {
    return weight_count() + conv1.b.size() + conv2.b.size() + fc1.b.size() + fc2.b.size();
}

void NetworkModel::for_each_tensor(const std::function<void(Eigen::MatrixXd&)>& fw,
                                   const std::function<void(Eigen::VectorXd&)>& fb) {
    fw(conv1.w);
    fw(conv2.w);
    fw(fc1.w);
    fw(fc2.w);
    fb(conv1.b);
    fb(conv2.b);
    fb(fc1.b);
    fb(fc2.b);
}

Dataset to_dataset(const std::vector<WindowSample>& windows) {
    Dataset d;
    if (windows.empty()) return d;
    const auto n = static_cast<Eigen::Index>(windows.size());
    const int window_h = static_cast<int>(windows.front().x.rows());
    const int width = static_cast<int>(windows.front().x.cols());
    d.x.resize(n, window_h * width);
    d.y.resize(n);
    d.f_mag.resize(n);
    d.threshold.resize(n);
    d.t.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = windows[i];
        if (s.x.rows() != window_h || s.x.cols() != width)
            throw ValidationError("to_dataset: inconsistent window shapes");
        for (int t = 0; t < window_h; ++t)
            for (int c = 0; c < width; ++c) d.x(i, t * width + c) = s.x(t, c);
        d.y[i] = s.y;
        d.f_mag[i] = s.f_mag;
        d.threshold[i] = s.threshold;
        d.t[i] = s.t;
    }
    return d;
}

NetworkModel make_model(int window_h, int width, double lambda, std::uint64_t seed) {
    NetworkModel m;
    m.window_h = window_h;
    m.width = width;
    m.lambda = lambda;
    m.meta.init_seed = seed;

    m.conv1 = {3, 1, 16, {}, {}};
    m.conv2 = {3, 16, 32, {}, {}};
    dims_of(m);  // validate the geometry before allocating

    Rng rng(seed);
    auto he_uniform = [&rng](Eigen::MatrixXd& w, int rows, int cols, int fan_in) {
        const double limit = std::sqrt(6.0 / fan_in);
        w.resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-limit, limit);
    };
    he_uniform(m.conv1.w, 3 * 1, 16, 3 * 1);
    m.conv1.b = Eigen::VectorXd::Zero(16);
    he_uniform(m.conv2.w, 3 * 16, 32, 3 * 16);
    m.conv2.b = Eigen::VectorXd::Zero(32);
    const int flat = dims_of(m).flat;
    he_uniform(m.fc1.w, flat, 16, flat);
    m.fc1.b = Eigen::VectorXd::Zero(16);
    he_uniform(m.fc2.w, 16, 2, 16);
    m.fc2.b = Eigen::VectorXd::Zero(2);
    return m;
}

void fit_input_standardization(NetworkModel& model, const Dataset& data) {
    if (data.size() == 0) throw ValidationError("fit_input_standardization: empty dataset");
    model.input_offset = Eigen::VectorXd::Zero(model.width);
    model.input_scale = Eigen::VectorXd::Ones(model.width);
    const Eigen::Index per_ch = data.x.cols() / model.width;
    const auto count = static_cast<double>(data.x.rows() * per_ch);
    for (int ch = 0; ch < model.width; ++ch) {
        double sum = 0.0, sumsq = 0.0;
        for (Eigen::Index col = ch; col < data.x.cols(); col += model.width) {
            sum += data.x.col(col).sum();
            sumsq += data.x.col(col).squaredNorm();
        }
        const double mean = sum / count;
        const double var = sumsq / count - mean * mean;
        model.input_offset[ch] = mean;
        model.input_scale[ch] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
}

Eigen::Vector2d forward(const NetworkModel& model, const Eigen::MatrixXd& x) {
    if (x.rows() != model.window_h || x.cols() != model.width)
        throw ValidationError("forward: expected [" + std::to_string(model.window_h) + " x " +
                              std::to_string(model.width) + "] input");
    Eigen::MatrixXd row(1, model.window_h * model.width);
    for (int t = 0; t < model.window_h; ++t)
        for (int c = 0; c < model.width; ++c) row(0, t * model.width + c) = x(t, c);
    const Eigen::MatrixXd probs = forward_batch(model, row);
    return probs.row(0).transpose();
}

Eigen::MatrixXd forward_batch(const NetworkModel& model, const Eigen::MatrixXd& x) {
    return run_forward(model, x).probs;
}

double df_loss(double y_hat, double f_mag, double threshold) {
    if (f_mag >= threshold) return std::exp(std::abs(y_hat - 1.0)) - 1.0;
    return std::exp(std::abs(y_hat)) - 1.0;
}

double bce_loss(int y, double y_hat) {
    const double p = std::clamp(y_hat, kProbEps, 1.0 - kProbEps);
    return (y == 1) ? -std::log(p) : -std::log(1.0 - p);
}

double total_loss(const NetworkModel& model, const Dataset& batch) {
    if (batch.size() == 0) throw ValidationError("total_loss: empty batch");
    const Eigen::MatrixXd probs = forward_batch(model, batch.x);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < batch.size(); ++i)
        sum += sample_loss(model.lambda, batch.y[i], probs(i, 1), batch.f_mag[i],
                           batch.threshold[i]);
    return sum / static_cast<double>(batch.size());
}

Gradients loss_gradients(const NetworkModel& model, const Dataset& batch) {
    const ForwardCache cache = run_forward(model, batch.x);
    return run_backward(model, cache, batch);
}

TrainResult train(NetworkModel& model, const Dataset& data, const TrainConfig& config,
                  const std::function<void(NetworkModel&, int)>& on_epoch_end) {
    if (data.size() == 0) throw ValidationError("train: empty dataset");
    TrainResult result;
    if (config.epochs <= 0) return result;

    Rng rng(config.seed);
    model.meta.learning_rate = config.learning_rate;

    Gradients vel;
    vel.conv1_w = Eigen::MatrixXd::Zero(model.conv1.w.rows(), model.conv1.w.cols());
    vel.conv2_w = Eigen::MatrixXd::Zero(model.conv2.w.rows(), model.conv2.w.cols());
    vel.fc1_w = Eigen::MatrixXd::Zero(model.fc1.w.rows(), model.fc1.w.cols());
    vel.fc2_w = Eigen::MatrixXd::Zero(model.fc2.w.rows(), model.fc2.w.cols());
    vel.conv1_b = Eigen::VectorXd::Zero(model.conv1.b.size());
    vel.conv2_b = Eigen::VectorXd::Zero(model.conv2.b.size());
    vel.fc1_b = Eigen::VectorXd::Zero(model.fc1.b.size());
    vel.fc2_b = Eigen::VectorXd::Zero(model.fc2.b.size());

    std::vector<Eigen::Index> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with the run RNG keeps batch order reproducible.
        for (Eigen::Index i = data.size() - 1; i > 0; --i) {
            const auto j = static_cast<Eigen::Index>(rng.uniform_index(i + 1));
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0.0;
        Eigen::Index correct = 0;
        for (Eigen::Index start = 0; start < data.size(); start += config.batch_size) {
            const Eigen::Index bs = std::min<Eigen::Index>(config.batch_size,
                                                           data.size() - start);
            Dataset batch;
            batch.x.resize(bs, data.x.cols());
            batch.y.resize(bs);
            batch.f_mag.resize(bs);
            batch.threshold.resize(bs);
            batch.t.resize(bs);
            for (Eigen::Index i = 0; i < bs; ++i) {
                const Eigen::Index src = order[start + i];
                batch.x.row(i) = data.x.row(src);
                batch.y[i] = data.y[src];
                batch.f_mag[i] = data.f_mag[src];
                batch.threshold[i] = data.threshold[src];
                batch.t[i] = data.t[src];
            }

            const ForwardCache cache = run_forward(model, batch.x);
            for (Eigen::Index i = 0; i < bs; ++i) {
                loss_sum += sample_loss(model.lambda, batch.y[i], cache.probs(i, 1),
                                        batch.f_mag[i], batch.threshold[i]);
                const int pred = cache.probs(i, 1) > cache.probs(i, 0) ? 1 : 0;
                if (pred == batch.y[i]) ++correct;
            }
            const Gradients g = run_backward(model, cache, batch);

            auto update = [&](Eigen::MatrixXd& w, Eigen::MatrixXd& v,
                              const Eigen::MatrixXd& gw) {
                v = config.momentum * v - config.learning_rate * gw;
                w += v;
            };
            auto update_b = [&](Eigen::VectorXd& w, Eigen::VectorXd& v,
                                const Eigen::VectorXd& gw) {
                v = config.momentum * v - config.learning_rate * gw;
                w += v;
            };
            update(model.conv1.w, vel.conv1_w, g.conv1_w);
            update(model.conv2.w, vel.conv2_w, g.conv2_w);
            update(model.fc1.w, vel.fc1_w, g.fc1_w);
            update(model.fc2.w, vel.fc2_w, g.fc2_w);
            update_b(model.conv1.b, vel.conv1_b, g.conv1_b);
            update_b(model.conv2.b, vel.conv2_b, g.conv2_b);
            update_b(model.fc1.b, vel.fc1_b, g.fc1_b);
            update_b(model.fc2.b, vel.fc2_b, g.fc2_b);
        }

        const double epoch_loss = loss_sum / static_cast<double>(data.size());
        if (!std::isfinite(epoch_loss))
            throw TrainingFault("train: loss diverged at epoch " + std::to_string(epoch));
        const double epoch_acc = static_cast<double>(correct) / data.size();
        result.loss_history.push_back(epoch_loss);
        result.accuracy_history.push_back(epoch_acc);
        result.epochs_run = epoch + 1;
        model.meta.epochs_trained += 1;

        if (on_epoch_end) on_epoch_end(model, epoch);
        if (config.stop_at_train_accuracy >= 0.0 &&
            epoch_acc >= config.stop_at_train_accuracy)
            break;
    }
    return result;
}

double evaluate_accuracy(const NetworkModel& model, const Dataset& data) {
    if (data.size() == 0) throw ValidationError("evaluate_accuracy: empty dataset");
    Eigen::Index correct = 0;
    const Eigen::Index chunk = 256;
    for (Eigen::Index start = 0; start < data.size(); start += chunk) {
        const Eigen::Index bs = std::min(chunk, data.size() - start);
        const Eigen::MatrixXd probs =
            forward_batch(model, data.x.middleRows(start, bs));
        for (Eigen::Index i = 0; i < bs; ++i) {
            const int pred = probs(i, 1) > probs(i, 0) ? 1 : 0;
            if (pred == data.y[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / data.size();
}

std::vector<double> detect_edges(const NetworkModel& model, const Eigen::MatrixXd& features,
                                 const Eigen::VectorXd& frame_times, int stride) {
    if (stride < 1) throw ValidationError("detect_edges: stride must be >= 1");
    if (features.cols() != model.width)
        throw ValidationError("detect_edges: feature width mismatch");
    const Eigen::Index n = features.rows();
    if (n < model.window_h) throw ValidationError("detect_edges: series shorter than window");

    std::vector<Eigen::Index> starts;
    for (Eigen::Index s = 0; s + model.window_h <= n; s += stride) starts.push_back(s);

    Eigen::MatrixXd x(static_cast<Eigen::Index>(starts.size()),
                      model.window_h * model.width);
    for (std::size_t i = 0; i < starts.size(); ++i)
        for (int t = 0; t < model.window_h; ++t)
            for (int c = 0; c < model.width; ++c)
                x(static_cast<Eigen::Index>(i), t * model.width + c) =
                    features(starts[i] + t, c);

    const Eigen::MatrixXd probs = forward_batch(model, x);
    std::vector<double> transitions;
    int prev_class = probs(0, 1) > probs(0, 0) ? 1 : 0;
    double prev_time = frame_times[starts[0] + model.window_h - 1];
    for (std::size_t i = 1; i < starts.size(); ++i) {
        const int cls = probs(static_cast<Eigen::Index>(i), 1) >
                                probs(static_cast<Eigen::Index>(i), 0)
                            ? 1
                            : 0;
        const double time = frame_times[starts[i] + model.window_h - 1];
        if (cls != prev_class) transitions.push_back(0.5 * (prev_time + time));
        prev_class = cls;
        prev_time = time;
    }
    return transitions;
}

namespace {

using nlohmann::ordered_json;

ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
    return arr;
}

Eigen::MatrixXd matrix_from_json(const ordered_json& arr, Eigen::Index rows,
                                 Eigen::Index cols) {
    if (static_cast<Eigen::Index>(arr.size()) != rows * cols)
        throw ParseError("model: weight array size mismatch");
    Eigen::MatrixXd m(rows, cols);
    Eigen::Index i = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = arr[i++].get<double>();
    return m;
}

Eigen::VectorXd vector_from_json(const ordered_json& arr, Eigen::Index n) {
    if (static_cast<Eigen::Index>(arr.size()) != n)
        throw ParseError("model: bias array size mismatch");
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = arr[i].get<double>();
    return v;
}

}  // namespace

std::string to_json(const NetworkModel& m) {
    ordered_json j;
    j["format"] = "gesense-model";
    j["version"] = 1;
    j["window_h"] = m.window_h;
    j["width"] = m.width;
    j["lambda"] = m.lambda;
    if (m.input_offset.size() == m.width && m.input_scale.size() == m.width) {
        j["input_offset"] = matrix_to_json(m.input_offset);
        j["input_scale"] = matrix_to_json(m.input_scale);
    }
    j["meta"] = {{"init_seed", m.meta.init_seed},
                 {"epochs_trained", m.meta.epochs_trained},
                 {"learning_rate", m.meta.learning_rate}};
    j["layers"] = ordered_json::array();
    auto conv_json = [](const ConvLayer& l) {
        return ordered_json{{"type", "conv"},
                            {"kernel_h", l.kernel_h},
                            {"in", l.in_channels},
                            {"out", l.out_channels},
                            {"w", matrix_to_json(l.w)},
                            {"b", matrix_to_json(l.b)}};
    };
    auto dense_json = [](const DenseLayer& l) {
        return ordered_json{{"type", "dense"},
                            {"in", l.w.rows()},
                            {"out", l.w.cols()},
                            {"w", matrix_to_json(l.w)},
                            {"b", matrix_to_json(l.b)}};
    };
    j["layers"].push_back(conv_json(m.conv1));
    j["layers"].push_back(conv_json(m.conv2));
    j["layers"].push_back(dense_json(m.fc1));
    j["layers"].push_back(dense_json(m.fc2));
    return j.dump(1);
}

NetworkModel model_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("model: invalid JSON: ") + e.what());
    }
    if (j.value("format", "") != "gesense-model" || j.value("version", 0) != 1)
        throw ParseError("model: unsupported format or version");

    NetworkModel m;
    m.window_h = j.at("window_h").get<int>();
    m.width = j.at("width").get<int>();
    m.lambda = j.at("lambda").get<double>();
    if (j.contains("input_offset")) {
        m.input_offset = vector_from_json(j.at("input_offset"), m.width);
        m.input_scale = vector_from_json(j.at("input_scale"), m.width);
    }
    if (j.contains("meta")) {
        m.meta.init_seed = j["meta"].value("init_seed", 0ULL);
        m.meta.epochs_trained = j["meta"].value("epochs_trained", 0);
        m.meta.learning_rate = j["meta"].value("learning_rate", 0.0);
    }
    const auto& layers = j.at("layers");
    if (layers.size() != 4) throw ParseError("model: expected 4 layers");

    auto read_conv = [](const ordered_json& l, ConvLayer& out) {
        out.kernel_h = l.at("kernel_h").get<int>();
        out.in_channels = l.at("in").get<int>();
        out.out_channels = l.at("out").get<int>();
        out.w = matrix_from_json(l.at("w"),
                                 static_cast<Eigen::Index>(out.kernel_h) * out.in_channels,
                                 out.out_channels);
        out.b = vector_from_json(l.at("b"), out.out_channels);
    };
    auto read_dense = [](const ordered_json& l, DenseLayer& out) {
        const auto in = l.at("in").get<Eigen::Index>();
        const auto out_n = l.at("out").get<Eigen::Index>();
        out.w = matrix_from_json(l.at("w"), in, out_n);
        out.b = vector_from_json(l.at("b"), out_n);
    };
    read_conv(layers[0], m.conv1);
    read_conv(layers[1], m.conv2);
    read_dense(layers[2], m.fc1);
    read_dense(layers[3], m.fc2);
    dims_of(m);
    return m;
}

void save_model(const NetworkModel& model, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open model file for writing: " + path);
    f << to_json(model);
}

NetworkModel load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open model file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace gesense::nn
