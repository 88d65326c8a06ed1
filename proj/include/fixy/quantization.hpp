#pragma once

// 8-bit symmetric weight quantization, pruning policies, batch-norm register
// encoding and the accumulator-to-activation quantizer Q.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixy/errors.hpp"

namespace fixy {

enum class Granularity { per_tensor, per_channel };

/// int8 tensor with symmetric scale(s); zero point is always 0 and -128 is
/// never produced. Groups are contiguous runs of `group_size` values (one
/// group per output channel for per-channel quantization).
struct QuantTensor {
    std::vector<std::int8_t> values;
    std::vector<double> scales; ///< one per group
    std::size_t group_size = 0;
    std::vector<std::uint8_t> removed; ///< 1 where pruning removed the weight

    std::size_t size() const { return values.size(); }
    std::size_t groups() const { return scales.size(); }
    double scale_of(std::size_t i) const { return scales[i / group_size]; }
    double dequantize(std::size_t i) const { return values[i] * scale_of(i); }
    bool operator==(const QuantTensor&) const = default;
};

QuantTensor quantize_weights(std::span<const float> tensor, Granularity g, std::size_t channels = 1);

/// Round half away from zero.
std::int64_t round_half_away(double v);

struct PrunePolicy {
    enum class Kind { exact_zero, magnitude_below, target_sparsity } kind = Kind::exact_zero;
    int threshold = 0;    ///< magnitude_below: remove |v| < threshold
    double sparsity = 0.0; ///< target_sparsity: fraction to remove

    static PrunePolicy exact_zero() { return {}; }
    static PrunePolicy magnitude_below(int t) { return {Kind::magnitude_below, t, 0.0}; }
    static PrunePolicy target(double s) { return {Kind::target_sparsity, 0, s}; }
};

struct PruneReport {
    std::int64_t kept = 0;
    std::int64_t removed_zero = 0;
    std::int64_t removed_small = 0;
    double sparsity = 0.0;
    int threshold_used = 0; ///< largest magnitude removed

    std::int64_t total() const { return kept + removed_zero + removed_small; }
};

nlohmann::json to_json(const PruneReport& r);

std::pair<QuantTensor, PruneReport> prune_weights(const QuantTensor& q, const PrunePolicy& policy);

/// Prune a list of tensors jointly (model-wide sparsity). Ties in magnitude
/// are broken by (tensor order, index) ascending.
PruneReport prune_weights(std::vector<QuantTensor>& tensors, const PrunePolicy& policy);

/// Per-channel batch-norm registers: y ~= (acc + bias[c]) * mantissa[c] / 2^exponent.
/// `bias` lives in the accumulator domain; `exponent` is shared by all
/// channels. real_scale/real_bias keep the unencoded fold for inspection.
struct BnRegisters {
    std::vector<std::int16_t> mantissa;
    int exponent = 0;
    std::vector<std::int32_t> bias;
    std::vector<double> real_scale;
    std::vector<double> real_bias;

    std::size_t channels() const { return mantissa.size(); }
    std::size_t register_count() const { return mantissa.size() + bias.size(); }
    double dequantized_scale(std::size_t c) const;
    bool operator==(const BnRegisters&) const = default;
};

inline constexpr int kBnMantissaBits = 16;
inline constexpr int kBnMaxExponent = 31;

/// Fold batch-norm statistics into a per-channel affine map and encode it.
/// `acc_scale[c]` is the real value of one accumulator LSB of channel c and
/// `conv_bias` the real-valued convolution bias; both default to identity.
BnRegisters fold_bn(std::span<const float> gamma, std::span<const float> beta,
                    std::span<const float> mean, std::span<const float> var, double eps,
                    std::span<const double> acc_scale = {}, std::span<const float> conv_bias = {});

/// Registers for a channel-wise identity (no batch norm): scale 1 per acc LSB
/// scaled by acc_scale, bias from conv_bias.
BnRegisters identity_bn(std::span<const double> acc_scale, std::span<const float> conv_bias);

struct QParams {
    int right_shift = 0;
    int output_bits = 8;
    bool output_signed = false;

    std::int64_t lo() const { return output_signed ? -(std::int64_t{1} << (output_bits - 1)) : 0; }
    std::int64_t hi() const {
        return output_signed ? (std::int64_t{1} << (output_bits - 1)) - 1 : (std::int64_t{1} << output_bits) - 1;
    }
    bool operator==(const QParams&) const = default;
};

/// v / 2^shift rounded half away from zero.
std::int64_t shift_round(std::int64_t v, int shift);

/// Saturating right-shift quantizer from the wide BN output to an 8-bit activation.
std::int32_t apply_q(std::int64_t acc, const QParams& q);

/// Smallest right shift such that at most `max_saturated_fraction` of the
/// calibration values saturate.
QParams calibrate_q(std::span<const std::int64_t> values, bool output_signed,
                    double max_saturated_fraction = 0.001);

/// Value of the BN stage before Q: (acc + bias) * mantissa.
inline std::int64_t bn_apply(std::int64_t acc, const BnRegisters& bn, std::size_t c) {
    return (acc + bn.bias[c]) * bn.mantissa[c];
}

} // namespace fixy
