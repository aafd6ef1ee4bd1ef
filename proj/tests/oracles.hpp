#pragma once

// Independent reference implementations used only to check the production
// code. Each one recomputes a result through a different route than the
// module under test.

#include <Eigen/Core>
#include <cmath>
#include <complex>
#include <vector>

namespace oracles {

/// Dense 4x4 matrix-vector product written out longhand.
inline Eigen::Vector4d matvec4(const Eigen::Matrix4d& m, const Eigen::Vector4d& v) {
    Eigen::Vector4d out;
    for (int r = 0; r < 4; ++r) {
        double acc = 0.0;
        for (int c = 0; c < 4; ++c) acc += m(r, c) * v[c];
        out[r] = acc;
    }
    return out;
}

/// Naive windowed DFT of one frame: X_k = sum_t w[t] x[t] e^{-i 2 pi k t / n}.
inline std::vector<std::complex<double>> dft_frame(const Eigen::VectorXd& frame,
                                                   const Eigen::VectorXd& window) {
    const int n = static_cast<int>(frame.size());
    const int bins = n / 2 + 1;
    std::vector<std::complex<double>> out(bins);
    for (int k = 0; k < bins; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (int t = 0; t < n; ++t) {
            const double ang = -2.0 * M_PI * k * t / n;
            acc += window[t] * frame[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

/// Central finite difference of a scalar function of one coordinate.
template <typename F>
double central_difference(F&& f, double& coord, double h) {
    const double saved = coord;
    coord = saved + h;
    const double up = f();
    coord = saved - h;
    const double down = f();
    coord = saved;
    return (up - down) / (2.0 * h);
}

/// Sort-based pruning reference: the k-th smallest magnitude and the
/// indices strictly below it.
inline std::pair<double, std::vector<int>> prune_reference(const std::vector<double>& weights,
                                                           double target) {
    std::vector<double> mags;
    mags.reserve(weights.size());
    for (double w : weights) mags.push_back(std::abs(w));
    std::vector<double> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    const auto k = static_cast<std::size_t>(std::floor(target * sorted.size()));
    const double theta = sorted[std::min(k, sorted.size() - 1)];
    std::vector<int> zeroed;
    for (std::size_t i = 0; i < mags.size(); ++i)
        if (k > 0 && mags[i] < theta) zeroed.push_back(static_cast<int>(i));
    return {theta, zeroed};
}

}  // namespace oracles
