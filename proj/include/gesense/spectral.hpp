#pragma once

#include <Eigen/Core>
#include <vector>

#include "gesense/errors.hpp"
#include "gesense/telemetry.hpp"

namespace gesense::spectral {

/// Short-time spectrum of one channel. `power` holds one-sided power per
/// frame and bin, scaled so that the per-frame bin sum equals the energy of
/// the windowed frame (windowed Parseval).
struct Spectrogram {
    Eigen::MatrixXd power;        ///< [n_frames x n_bins], >= 0
    Eigen::VectorXd frame_times;  ///< s, centre of each analysis window
    Eigen::VectorXd bin_freqs;    ///< Hz
    int window_size = 0;
    int overlap = 0;
};

/// Per-frame power summed over one frequency band.
struct BandPowerSeries {
    Eigen::VectorXd values;  ///< >= 0, one per frame
    double f_lo = 0.0;
    double f_hi = 0.0;
    Eigen::VectorXd frame_times;
};

/// The fused 3-channel feature stream fed to the classifier. Column order:
/// acceleration group, angular-rate group, motor-difference group.
struct FusedFeatureSeries {
    Eigen::MatrixXd c;  ///< [n_frames x 3], non-negative
    Eigen::VectorXd frame_times;
};

struct SpectralConfig {
    int window_size = 199;
    int overlap = 198;
    double band_lo = 6.0;  ///< Hz
    double band_hi = 8.0;  ///< Hz
    bool znorm = true;     ///< per-channel z-score over the record before the STFT
};

/// Hann-windowed STFT magnitude-squared. Frame k covers samples
/// [k*hop, k*hop + window_size); its timestamp is the window centre.
/// Throws ValidationError when the signal is shorter than one window or
/// the overlap is out of range.
Spectrogram stft(const Eigen::VectorXd& signal, int window_size, int overlap,
                 double sample_rate, double t0 = 0.0);

/// Complex one-sided spectra of the same frames (unscaled DFT values), used
/// by cross-spectrum computations. Returns per-frame matrices [n_frames x n_bins].
struct ComplexSpectra {
    Eigen::MatrixXd re;
    Eigen::MatrixXd im;
    Eigen::VectorXd bin_freqs;
};
ComplexSpectra stft_complex(const Eigen::VectorXd& signal, int window_size, int overlap,
                            double sample_rate);

/// Sum of power over bins whose centre frequency lies in [f_lo, f_hi].
/// Throws ValidationError when the band contains no bins.
BandPowerSeries band_power(const Spectrogram& spec, double f_lo, double f_hi);

/// Cascaded cross-spectrum fusion of one sensor group: per frame the square
/// root of the product of the inputs. A single input passes through
/// unchanged. Throws ValidationError on length mismatch or empty input.
Eigen::VectorXd ccs_fuse(const std::vector<BandPowerSeries>& series);

/// Full feature pipeline: optional per-channel z-normalisation, STFT, band
/// power, per-group fusion of {acc}, {gyro}, {motor differences}.
FusedFeatureSeries extract_features(const telemetry::SourceSeries& source,
                                    const SpectralConfig& config);

/// Symmetric Hann window of the given length.
Eigen::VectorXd hann_window(int n);

}  // namespace gesense::spectral
