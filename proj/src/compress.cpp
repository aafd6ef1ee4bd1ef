#include "gesense/compress.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gesense::compress {

namespace {

using nlohmann::ordered_json;

std::vector<Eigen::MatrixXd*> weight_tensors(nn::NetworkModel& m) {
    return {&m.conv1.w, &m.conv2.w, &m.fc1.w, &m.fc2.w};
}

std::vector<const Eigen::MatrixXd*> weight_tensors(const nn::NetworkModel& m) {
    return {&m.conv1.w, &m.conv2.w, &m.fc1.w, &m.fc2.w};
}

const char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t v = bytes[i] << 16;
        if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
        if (i + 2 < bytes.size()) v |= bytes[i + 2];
        out.push_back(kB64Chars[(v >> 18) & 63]);
        out.push_back(kB64Chars[(v >> 12) & 63]);
        out.push_back(i + 1 < bytes.size() ? kB64Chars[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < bytes.size() ? kB64Chars[v & 63] : '=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw ParseError("compact model: bad base64 character");
    };
    if (text.size() % 4 != 0) throw ParseError("compact model: bad base64 length");
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pads = 0;
        for (int k = 0; k < 4; ++k) {
            vals[k] = value_of(text[i + k]);
            if (vals[k] < 0) {
                vals[k] = 0;
                ++pads;
            }
        }
        const std::uint32_t v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
        out.push_back((v >> 16) & 0xff);
        if (pads < 2) out.push_back((v >> 8) & 0xff);
        if (pads < 1) out.push_back(v & 0xff);
    }
    return out;
}

std::vector<std::uint8_t> pack_values(const std::vector<std::int32_t>& q, int bits) {
    std::vector<std::uint8_t> bytes;
    if (bits == 8) {
        for (auto v : q) bytes.push_back(static_cast<std::uint8_t>(v));
    } else if (bits == 16) {
        for (auto v : q) {
            bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
            bytes.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
        }
    } else {  // 4-bit: two values per byte, low nibble first
        for (std::size_t i = 0; i < q.size(); i += 2) {
            std::uint8_t b = static_cast<std::uint8_t>(q[i] & 0xf);
            if (i + 1 < q.size()) b |= static_cast<std::uint8_t>((q[i + 1] & 0xf) << 4);
            bytes.push_back(b);
        }
    }
    return bytes;
}

std::vector<std::int32_t> unpack_values(const std::vector<std::uint8_t>& bytes, int bits,
                                        std::size_t count) {
    std::vector<std::int32_t> q;
    q.reserve(count);
    if (bits == 8) {
        for (std::size_t i = 0; i < count; ++i) q.push_back(bytes.at(i));
    } else if (bits == 16) {
        for (std::size_t i = 0; i < count; ++i)
            q.push_back(bytes.at(2 * i) | (bytes.at(2 * i + 1) << 8));
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint8_t b = bytes.at(i / 2);
            q.push_back(i % 2 == 0 ? (b & 0xf) : (b >> 4));
        }
    }
    return q;
}

}  // namespace

void PruneSchedule::validate() const {
    if (!(s_i >= 0.0 && s_i <= s_f && s_f < 1.0))
        throw ValidationError("prune schedule: need 0 <= s_i <= s_f < 1");
    if (t_e < 1) throw ValidationError("prune schedule: t_e must be >= 1");
    if (!(p_exp > 0.0)) throw ValidationError("prune schedule: p_exp must be positive");
}

double sparsity_at(const PruneSchedule& schedule, long t_i) {
    schedule.validate();
    if (t_i < 0) throw ValidationError("sparsity_at: t_i must be >= 0");
    if (t_i > schedule.t_e) return schedule.s_f;
    const double frac = 1.0 - static_cast<double>(t_i) / static_cast<double>(schedule.t_e);
    return schedule.s_f + (schedule.s_i - schedule.s_f) * std::pow(frac, schedule.p_exp);
}

QuantizedTensor quantize(const Eigen::VectorXd& tensor, int bits) {
    if (bits != 4 && bits != 8 && bits != 16)
        throw ValidationError("quantize: bits must be 4, 8 or 16");
    if (tensor.size() == 0) throw ValidationError("quantize: empty tensor");
    if (!tensor.allFinite()) throw ValidationError("quantize: non-finite tensor");

    const double lo = tensor.minCoeff();
    const double hi = tensor.maxCoeff();
    const long q_max = (1L << bits) - 1;

    QuantizedTensor out;
    out.params.bits = bits;
    if (hi > lo) {
        out.params.scale = (hi - lo) / static_cast<double>(q_max);
        out.params.zero_point = std::llround(-lo / out.params.scale);
    } else {
        // Constant tensor: scale 1 keeps the formulas total.
        out.params.scale = 1.0;
        out.params.zero_point = std::llround(-lo);
    }
    out.q.resize(tensor.size());
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
        const long q = std::llround(tensor[i] / out.params.scale) + out.params.zero_point;
        out.q[i] = static_cast<std::int32_t>(std::clamp(q, 0L, q_max));
    }
    return out;
}

Eigen::VectorXd dequantize(const QuantizedTensor& qt) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(qt.q.size()));
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out[i] = qt.params.scale * (qt.q[i] - qt.params.zero_point);
    return out;
}

CompactModel prune(const nn::NetworkModel& model, double target_sparsity) {
    if (!(target_sparsity >= 0.0 && target_sparsity < 1.0))
        throw ValidationError("prune: target sparsity must be in [0, 1)");

    CompactModel out;
    out.base = model;
    out.target_sparsity = target_sparsity;

    auto tensors = weight_tensors(out.base);
    std::vector<double> magnitudes;
    for (const auto* w : tensors)
        for (Eigen::Index i = 0; i < w->size(); ++i)
            magnitudes.push_back(std::abs(w->data()[i]));
    std::sort(magnitudes.begin(), magnitudes.end());

    const auto n = magnitudes.size();
    const auto k = static_cast<std::size_t>(std::floor(target_sparsity * n));
    const double theta = magnitudes[std::min(k, n - 1)];

    out.masks.clear();
    out.nonzero_weights = 0;
    for (auto* w : tensors) {
        std::vector<std::uint8_t> mask(w->size(), 1);
        // Row-major mask order to match the serialized weight order.
        Eigen::Index idx = 0;
        for (Eigen::Index r = 0; r < w->rows(); ++r)
            for (Eigen::Index c = 0; c < w->cols(); ++c, ++idx) {
                if (k > 0 && std::abs((*w)(r, c)) < theta) {
                    (*w)(r, c) = 0.0;
                    mask[idx] = 0;
                } else {
                    ++out.nonzero_weights;
                }
            }
        out.masks.push_back(std::move(mask));
    }
    return out;
}

void quantize_model(CompactModel& model, int bits) {
    model.quantized.clear();
    for (const auto* w : weight_tensors(std::as_const(model.base))) {
        Eigen::VectorXd flat(w->size());
        Eigen::Index idx = 0;
        for (Eigen::Index r = 0; r < w->rows(); ++r)
            for (Eigen::Index c = 0; c < w->cols(); ++c) flat[idx++] = (*w)(r, c);
        model.quantized.push_back(quantize(flat, bits));
    }
}

CompactModel compress_model(const nn::NetworkModel& model, double target_sparsity, int bits) {
    CompactModel out = prune(model, target_sparsity);
    quantize_model(out, bits);
    return out;
}

nn::NetworkModel reconstruct(const CompactModel& model) {
    nn::NetworkModel out = model.base;
    if (model.quantized.empty()) return out;
    auto tensors = weight_tensors(out);
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const Eigen::VectorXd flat = dequantize(model.quantized[t]);
        Eigen::Index idx = 0;
        for (Eigen::Index r = 0; r < tensors[t]->rows(); ++r)
            for (Eigen::Index c = 0; c < tensors[t]->cols(); ++c, ++idx)
                (*tensors[t])(r, c) = model.masks[t][idx] ? flat[idx] : 0.0;
    }
    return out;
}

double compression_ratio(double s_f, int bits) {
    if (!(s_f >= 0.0 && s_f < 1.0)) throw ValidationError("compression_ratio: bad sparsity");
    if (bits <= 0) throw ValidationError("compression_ratio: bits must be positive");
    return 32.0 / ((1.0 - s_f) * bits);
}

SizeReport size_report(const CompactModel& model) {
    SizeReport rep;
    auto tensors = weight_tensors(std::as_const(model.base));
    for (const auto* w : tensors) rep.total_weights += w->size();
    rep.nonzero_weights = model.nonzero_weights;
    rep.bias_count = model.base.parameter_count() - model.base.weight_count();

    const int bits = model.quantized.empty() ? 32 : model.quantized.front().params.bits;
    rep.original_bytes = 4 * (rep.total_weights + rep.bias_count);
    const std::size_t weight_bits = rep.nonzero_weights * bits + rep.total_weights;
    rep.compact_bytes = (weight_bits + 7) / 8 + 4 * rep.bias_count;

    const double achieved =
        1.0 - static_cast<double>(rep.nonzero_weights) / rep.total_weights;
    rep.idealized_ratio = compression_ratio(achieved, bits);
    rep.realized_ratio =
        static_cast<double>(rep.original_bytes) / static_cast<double>(rep.compact_bytes);
    return rep;
}

std::string size_report_json(const SizeReport& rep) {
    ordered_json j;
    j["total_weights"] = rep.total_weights;
    j["nonzero_weights"] = rep.nonzero_weights;
    j["bias_count"] = rep.bias_count;
    j["original_bytes"] = rep.original_bytes;
    j["compact_bytes"] = rep.compact_bytes;
    j["idealized_ratio"] = rep.idealized_ratio;
    j["realized_ratio"] = rep.realized_ratio;
    return j.dump(1);
}

std::string to_json(const CompactModel& model) {
    ordered_json j;
    j["format"] = "gesense-compact-model";
    j["version"] = 1;
    j["target_sparsity"] = model.target_sparsity;
    j["nonzero_weights"] = model.nonzero_weights;
    j["base"] = ordered_json::parse(nn::to_json(model.base));
    j["masks"] = ordered_json::array();
    for (const auto& mask : model.masks) j["masks"].push_back(base64_encode(mask));
    j["quantized"] = ordered_json::array();
    for (const auto& qt : model.quantized) {
        j["quantized"].push_back(
            ordered_json{{"bits", qt.params.bits},
                         {"scale", qt.params.scale},
                         {"zero_point", qt.params.zero_point},
                         {"count", qt.q.size()},
                         {"data", base64_encode(pack_values(qt.q, qt.params.bits))}});
    }
    return j.dump(1);
}

CompactModel compact_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("compact model: invalid JSON: ") + e.what());
    }
    if (j.value("format", "") != "gesense-compact-model" || j.value("version", 0) != 1)
        throw ParseError("compact model: unsupported format or version");

    CompactModel m;
    m.target_sparsity = j.at("target_sparsity").get<double>();
    m.nonzero_weights = j.at("nonzero_weights").get<std::size_t>();
    m.base = nn::model_from_json(j.at("base").dump());
    for (const auto& mask : j.at("masks"))
        m.masks.push_back(base64_decode(mask.get<std::string>()));
    for (const auto& qt : j.at("quantized")) {
        QuantizedTensor t;
        t.params.bits = qt.at("bits").get<int>();
        t.params.scale = qt.at("scale").get<double>();
        t.params.zero_point = qt.at("zero_point").get<long>();
        const auto count = qt.at("count").get<std::size_t>();
        t.q = unpack_values(base64_decode(qt.at("data").get<std::string>()), t.params.bits,
                            count);
        m.quantized.push_back(std::move(t));
    }
    return m;
}

void save_compact(const CompactModel& model, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open output file: " + path);
    f << to_json(model);
}

CompactModel load_compact(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open compact model file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return compact_from_json(ss.str());
}

}  // namespace gesense::compress
