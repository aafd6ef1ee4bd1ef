#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "gesense/errors.hpp"
#include "gesense/nn.hpp"

namespace gesense::compress {

/// Polynomial sparsity schedule rising from s_i at step 0 to s_f at step t_e.
struct PruneSchedule {
    double s_i = 0.0;
    double s_f = 0.9;
    long t_e = 1;
    double p_exp = 3.0;

    void validate() const;
};

/// Target sparsity at training step t_i:
/// s_f + (s_i - s_f) * (1 - t_i/t_e)^p, clamped to s_f beyond t_e.
double sparsity_at(const PruneSchedule& schedule, long t_i);

struct QuantParams {
    double scale = 1.0;   ///< S > 0
    long zero_point = 0;  ///< Z
    int bits = 8;
};

struct QuantizedTensor {
    std::vector<std::int32_t> q;
    QuantParams params;
};

/// Affine per-tensor quantization: S = (max - min)/(2^b - 1),
/// Z = round(-min/S), q = clamp(round(r/S) + Z, 0, 2^b - 1). A constant
/// tensor gets S = 1 (documented special case).
QuantizedTensor quantize(const Eigen::VectorXd& tensor, int bits);

Eigen::VectorXd dequantize(const QuantizedTensor& qt);

/// Pruned-and-quantized model: masked float weights, per-tensor masks and
/// integer weight blobs. Biases are kept dense in float.
struct CompactModel {
    nn::NetworkModel base;                       ///< weights masked to zero
    std::vector<std::vector<std::uint8_t>> masks;  ///< per weight tensor, row-major
    std::vector<QuantizedTensor> quantized;        ///< per weight tensor
    double target_sparsity = 0.0;
    std::size_t nonzero_weights = 0;
};

/// Global magnitude pruning: the threshold is the |w| value at the target
/// quantile across every weight tensor (conv and dense); entries strictly
/// below it are zeroed and masked. Biases are not pruned.
CompactModel prune(const nn::NetworkModel& model, double target_sparsity);

/// Quantize every (pruned) weight tensor of a CompactModel in place.
void quantize_model(CompactModel& model, int bits);

/// prune + quantize in one call.
CompactModel compress_model(const nn::NetworkModel& model, double target_sparsity, int bits);

/// Model with the dequantized masked weights, for accuracy evaluation.
nn::NetworkModel reconstruct(const CompactModel& model);

/// Idealized compression ratio 32 / ((1 - s_f) * b).
double compression_ratio(double s_f, int bits);

/// Size accounting for the sparse storage model: nonzero weights at b bits
/// plus a presence bitmap, biases kept at 32-bit float.
struct SizeReport {
    std::size_t total_weights = 0;
    std::size_t nonzero_weights = 0;
    std::size_t bias_count = 0;
    std::size_t original_bytes = 0;
    std::size_t compact_bytes = 0;
    double idealized_ratio = 0.0;  ///< CR formula at the achieved sparsity
    double realized_ratio = 0.0;   ///< original_bytes / compact_bytes
};
SizeReport size_report(const CompactModel& model);
std::string size_report_json(const SizeReport& report);

/// Versioned JSON with base64 integer blobs.
std::string to_json(const CompactModel& model);
CompactModel compact_from_json(const std::string& text);
void save_compact(const CompactModel& model, const std::string& path);
CompactModel load_compact(const std::string& path);

}  // namespace gesense::compress
