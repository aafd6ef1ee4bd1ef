#include "gesense/spectral.hpp"

#include <cmath>

namespace gesense::spectral {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

struct FramePlan {
    int hop = 0;
    Eigen::Index n_frames = 0;
    int n_bins = 0;
};

FramePlan plan_frames(Eigen::Index n_samples, int window_size, int overlap) {
    if (window_size < 1) throw ValidationError("stft: window_size must be >= 1");
    if (overlap < 0 || overlap >= window_size)
        throw ValidationError("stft: overlap must satisfy 0 <= overlap < window_size");
    if (n_samples < window_size)
        throw ValidationError("stft: signal shorter than one window");
    FramePlan p;
    p.hop = window_size - overlap;
    p.n_frames = (n_samples - window_size) / p.hop + 1;
    p.n_bins = window_size / 2 + 1;
    return p;
}

// Windowed frame matrix [n_frames x window_size].
Eigen::MatrixXd windowed_frames(const Eigen::VectorXd& signal, int window_size, int hop,
                                Eigen::Index n_frames) {
    const Eigen::VectorXd w = hann_window(window_size);
    Eigen::MatrixXd frames(n_frames, window_size);
    for (Eigen::Index k = 0; k < n_frames; ++k)
        frames.row(k) = signal.segment(k * hop, window_size).cwiseProduct(w).transpose();
    return frames;
}

// Real DFT basis: cos and sin matrices [window_size x n_bins].
void dft_basis(int n, int n_bins, Eigen::MatrixXd& cosb, Eigen::MatrixXd& sinb) {
    cosb.resize(n, n_bins);
    sinb.resize(n, n_bins);
    for (int k = 0; k < n_bins; ++k) {
        const double wk = 2.0 * kPi * k / n;
        for (int t = 0; t < n; ++t) {
            cosb(t, k) = std::cos(wk * t);
            sinb(t, k) = std::sin(wk * t);
        }
    }
}

}  // namespace

Eigen::VectorXd hann_window(int n) {
    Eigen::VectorXd w(n);
    if (n == 1) {
        w[0] = 1.0;
        return w;
    }
    for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / (n - 1)));
    return w;
}

Spectrogram stft(const Eigen::VectorXd& signal, int window_size, int overlap,
                 double sample_rate, double t0) {
    const FramePlan p = plan_frames(signal.size(), window_size, overlap);
    const Eigen::MatrixXd frames = windowed_frames(signal, window_size, p.hop, p.n_frames);

    Eigen::MatrixXd cosb, sinb;
    dft_basis(window_size, p.n_bins, cosb, sinb);
    const Eigen::MatrixXd re = frames * cosb;
    const Eigen::MatrixXd im = frames * sinb;

    Spectrogram spec;
    spec.window_size = window_size;
    spec.overlap = overlap;
    spec.power = re.cwiseAbs2() + im.cwiseAbs2();
    // One-sided scaling: bin sum per frame equals the windowed-frame energy.
    for (int k = 0; k < p.n_bins; ++k) {
        const bool shared = (k == 0) || (window_size % 2 == 0 && k == p.n_bins - 1);
        spec.power.col(k) *= (shared ? 1.0 : 2.0) / window_size;
    }
    spec.bin_freqs.resize(p.n_bins);
    for (int k = 0; k < p.n_bins; ++k) spec.bin_freqs[k] = k * sample_rate / window_size;
    spec.frame_times.resize(p.n_frames);
    const double centre = (window_size - 1) / 2.0;
    for (Eigen::Index k = 0; k < p.n_frames; ++k)
        spec.frame_times[k] = t0 + (k * p.hop + centre) / sample_rate;
    return spec;
}

ComplexSpectra stft_complex(const Eigen::VectorXd& signal, int window_size, int overlap,
                            double sample_rate) {
    const FramePlan p = plan_frames(signal.size(), window_size, overlap);
    const Eigen::MatrixXd frames = windowed_frames(signal, window_size, p.hop, p.n_frames);
    Eigen::MatrixXd cosb, sinb;
    dft_basis(window_size, p.n_bins, cosb, sinb);
    ComplexSpectra out;
    out.re = frames * cosb;
    out.im = -(frames * sinb);  // X_k = sum x cos - j sum x sin
    out.bin_freqs.resize(p.n_bins);
    for (int k = 0; k < p.n_bins; ++k) out.bin_freqs[k] = k * sample_rate / window_size;
    return out;
}

BandPowerSeries band_power(const Spectrogram& spec, double f_lo, double f_hi) {
    if (!(f_lo <= f_hi)) throw ValidationError("band_power: f_lo must be <= f_hi");
    std::vector<int> bins;
    for (int k = 0; k < spec.bin_freqs.size(); ++k)
        if (spec.bin_freqs[k] >= f_lo && spec.bin_freqs[k] <= f_hi) bins.push_back(k);
    if (bins.empty()) throw ValidationError("band_power: no bins in band");

    BandPowerSeries out;
    out.f_lo = f_lo;
    out.f_hi = f_hi;
    out.frame_times = spec.frame_times;
    out.values = Eigen::VectorXd::Zero(spec.power.rows());
    for (int k : bins) out.values += spec.power.col(k);
    return out;
}

Eigen::VectorXd ccs_fuse(const std::vector<BandPowerSeries>& series) {
    if (series.empty()) throw ValidationError("ccs_fuse: no input series");
    const Eigen::Index n = series.front().values.size();
    for (const auto& s : series)
        if (s.values.size() != n) throw ValidationError("ccs_fuse: length mismatch");
    if (series.size() == 1) return series.front().values;

    Eigen::VectorXd prod = series.front().values;
    for (std::size_t i = 1; i < series.size(); ++i)
        prod = prod.cwiseProduct(series[i].values);
    return prod.cwiseSqrt();
}

FusedFeatureSeries extract_features(const telemetry::SourceSeries& source,
                                    const SpectralConfig& config) {
    if (source.channels.cols() != 9)
        throw ValidationError("extract_features: expected 9 channels");
    const double t0 = source.t.size() > 0 ? source.t[0] : 0.0;

    std::vector<BandPowerSeries> per_channel(9);
    for (int c = 0; c < 9; ++c) {
        Eigen::VectorXd x = source.channels.col(c);
        if (config.znorm) {
            const double mean = x.mean();
            x.array() -= mean;
            const double sd = std::sqrt(x.squaredNorm() / x.size());
            if (sd > 1e-12) x /= sd;
        }
        const Spectrogram spec =
            stft(x, config.window_size, config.overlap, source.sample_rate, t0);
        per_channel[c] = band_power(spec, config.band_lo, config.band_hi);
    }

    FusedFeatureSeries out;
    out.frame_times = per_channel[0].frame_times;
    out.c.resize(per_channel[0].values.size(), 3);
    for (int g = 0; g < 3; ++g) {
        std::vector<BandPowerSeries> group{per_channel[3 * g], per_channel[3 * g + 1],
                                           per_channel[3 * g + 2]};
        out.c.col(g) = ccs_fuse(group);
    }
    return out;
}

}  // namespace gesense::spectral
