#include "fixy/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fixy {

std::int64_t round_half_away(double v) {
    return static_cast<std::int64_t>(v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5));
}

QuantTensor quantize_weights(std::span<const float> tensor, Granularity g, std::size_t channels) {
    if (tensor.empty()) throw DataError("cannot quantize an empty tensor");
    for (float v : tensor)
        if (!std::isfinite(v)) throw DataError("tensor contains NaN or Inf");
    const std::size_t groups = g == Granularity::per_tensor ? 1 : channels;
    if (groups == 0 || tensor.size() % groups != 0)
        throw DataError("tensor of " + std::to_string(tensor.size()) + " values does not split into " +
                        std::to_string(groups) + " channels");

    QuantTensor q;
    q.group_size = tensor.size() / groups;
    q.values.resize(tensor.size());
    q.removed.assign(tensor.size(), 0);
    for (std::size_t gi = 0; gi < groups; ++gi) {
        const auto group = tensor.subspan(gi * q.group_size, q.group_size);
        double max_abs = 0.0;
        for (float v : group) max_abs = std::max(max_abs, static_cast<double>(std::fabs(v)));
        const double scale = max_abs > 0.0 ? max_abs / 127.0 : 1.0;
        q.scales.push_back(scale);
        for (std::size_t i = 0; i < group.size(); ++i) {
            const auto r = std::clamp<std::int64_t>(round_half_away(group[i] / scale), -127, 127);
            q.values[gi * q.group_size + i] = static_cast<std::int8_t>(r);
        }
    }
    return q;
}

nlohmann::json to_json(const PruneReport& r) {
    return {{"kept", r.kept},
            {"removed_zero", r.removed_zero},
            {"removed_small", r.removed_small},
            {"sparsity", r.sparsity},
            {"threshold_used", r.threshold_used}};
}

namespace {

struct Slot {
    std::size_t tensor;
    std::size_t index;
    int magnitude;
};

void finish(PruneReport& r) {
    const auto total = r.total();
    r.sparsity = total > 0 ? static_cast<double>(r.removed_zero + r.removed_small) / total : 0.0;
}

void remove(QuantTensor& t, std::size_t i, PruneReport& r) {
    if (t.values[i] == 0) ++r.removed_zero;
    else ++r.removed_small;
    r.threshold_used = std::max(r.threshold_used, std::abs(int{t.values[i]}));
    t.values[i] = 0;
    t.removed[i] = 1;
}

} // namespace

PruneReport prune_weights(std::vector<QuantTensor>& tensors, const PrunePolicy& policy) {
    if (policy.kind == PrunePolicy::Kind::magnitude_below && (policy.threshold < 0 || policy.threshold > 127))
        throw ParameterError("magnitude threshold must be in [0,127]");
    if (policy.kind == PrunePolicy::Kind::target_sparsity && !(policy.sparsity >= 0.0 && policy.sparsity < 1.0))
        throw ParameterError("target sparsity must be in [0,1)");

    PruneReport r;
    std::vector<Slot> slots;
    for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
        auto& t = tensors[ti];
        if (t.removed.size() != t.values.size()) t.removed.assign(t.values.size(), 0);
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            if (t.removed[i]) { // already pruned upstream
                ++r.removed_zero;
                continue;
            }
            slots.push_back({ti, i, std::abs(int{t.values[i]})});
        }
    }

    std::int64_t to_remove = 0;
    switch (policy.kind) {
    case PrunePolicy::Kind::exact_zero:
    case PrunePolicy::Kind::magnitude_below: {
        const int cut = policy.kind == PrunePolicy::Kind::exact_zero ? 1 : policy.threshold;
        for (const auto& s : slots) {
            if (s.magnitude < cut || s.magnitude == 0) remove(tensors[s.tensor], s.index, r);
            else ++r.kept;
        }
        finish(r);
        return r;
    }
    case PrunePolicy::Kind::target_sparsity: {
        const auto total = static_cast<std::int64_t>(slots.size()) + r.removed_zero;
        to_remove = static_cast<std::int64_t>(std::ceil(policy.sparsity * static_cast<double>(total) - 1e-9));
        to_remove = std::max<std::int64_t>(0, to_remove - r.removed_zero);
        break;
    }
    }
    // Stable sort keeps (tensor order, index) ascending among equal magnitudes.
    std::stable_sort(slots.begin(), slots.end(),
                     [](const Slot& a, const Slot& b) { return a.magnitude < b.magnitude; });
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto& s = slots[k];
        // Exact zeros carry no hardware, so they always go.
        if (static_cast<std::int64_t>(k) < to_remove || s.magnitude == 0) remove(tensors[s.tensor], s.index, r);
        else ++r.kept;
    }
    finish(r);
    return r;
}

std::pair<QuantTensor, PruneReport> prune_weights(const QuantTensor& q, const PrunePolicy& policy) {
    std::vector<QuantTensor> one{q};
    auto report = prune_weights(one, policy);
    return {std::move(one.front()), report};
}

double BnRegisters::dequantized_scale(std::size_t c) const {
    return std::ldexp(static_cast<double>(mantissa[c]), -exponent);
}

namespace {

BnRegisters encode(std::vector<double> mult, std::vector<double> bias_real) {
    BnRegisters r;
    const std::size_t n = mult.size();
    double max_abs = 0.0;
    for (double v : mult) max_abs = std::max(max_abs, std::fabs(v));
    constexpr double kMaxMantissa = (1 << (kBnMantissaBits - 1)) - 1;
    if (max_abs * 1.0 > kMaxMantissa + 0.5)
        throw NumericError("batch-norm scale " + std::to_string(max_abs) + " exceeds the register range");
    int e = 0;
    if (max_abs > 0.0) {
        while (e < kBnMaxExponent && std::ldexp(max_abs, e + 1) <= kMaxMantissa + 0.5 - 1e-12) ++e;
    }
    r.exponent = e;
    r.mantissa.resize(n);
    r.bias.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
        const auto m = std::clamp<std::int64_t>(round_half_away(std::ldexp(mult[c], e)), -32767, 32767);
        r.mantissa[c] = static_cast<std::int16_t>(m);
        double b = 0.0;
        if (mult[c] != 0.0) b = bias_real[c] / mult[c];
        if (std::fabs(b) > 2147483647.0) throw NumericError("batch-norm bias exceeds the 32-bit accumulator domain");
        r.bias[c] = static_cast<std::int32_t>(round_half_away(b));
    }
    return r;
}

} // namespace

BnRegisters fold_bn(std::span<const float> gamma, std::span<const float> beta, std::span<const float> mean,
                    std::span<const float> var, double eps, std::span<const double> acc_scale,
                    std::span<const float> conv_bias) {
    const std::size_t n = gamma.size();
    if (beta.size() != n || mean.size() != n || var.size() != n)
        throw ParameterError("batch-norm vectors must share one length");
    if (!acc_scale.empty() && acc_scale.size() != n) throw ParameterError("acc_scale length mismatch");
    if (!conv_bias.empty() && conv_bias.size() != n) throw ParameterError("conv_bias length mismatch");

    std::vector<double> scale(n), bias(n), mult(n), bias_out(n);
    for (std::size_t c = 0; c < n; ++c) {
        if (var[c] < 0) throw NumericError("negative batch-norm variance");
        const double denom = static_cast<double>(var[c]) + eps;
        if (denom <= 0.0) throw NumericError("batch-norm var + eps is zero");
        const double s = gamma[c] / std::sqrt(denom);
        scale[c] = s;
        bias[c] = beta[c] - s * mean[c];
        const double lsb = acc_scale.empty() ? 1.0 : acc_scale[c];
        const double cb = conv_bias.empty() ? 0.0 : conv_bias[c];
        mult[c] = s * lsb;
        bias_out[c] = s * cb + bias[c];
    }
    BnRegisters r = encode(mult, bias_out);
    r.real_scale = std::move(scale);
    r.real_bias = std::move(bias);
    return r;
}

BnRegisters identity_bn(std::span<const double> acc_scale, std::span<const float> conv_bias) {
    const std::size_t n = acc_scale.size();
    std::vector<float> ones(n, 1.0f), zeros(n, 0.0f);
    return fold_bn(ones, zeros, zeros, ones, 0.0, acc_scale, conv_bias);
}

std::int64_t shift_round(std::int64_t v, int shift) {
    if (shift <= 0) return v;
    const std::int64_t half = std::int64_t{1} << (shift - 1);
    const std::int64_t mag = v < 0 ? -v : v;
    const std::int64_t r = (mag + half) >> shift;
    return v < 0 ? -r : r;
}

std::int32_t apply_q(std::int64_t acc, const QParams& q) {
    return static_cast<std::int32_t>(std::clamp(shift_round(acc, q.right_shift), q.lo(), q.hi()));
}

QParams calibrate_q(std::span<const std::int64_t> values, bool output_signed, double max_saturated_fraction) {
    QParams q;
    q.output_signed = output_signed;
    const auto budget = static_cast<std::int64_t>(std::floor(max_saturated_fraction * values.size()));
    for (int s = 0; s <= 31; ++s) {
        q.right_shift = s;
        std::int64_t saturated = 0;
        for (auto v : values) {
            // Negative values clamping to 0 after ReLU is rectification, not saturation.
            const auto unclamped = shift_round(v, s);
            if (unclamped > q.hi() || (output_signed && unclamped < q.lo())) ++saturated;
        }
        if (saturated <= budget) return q;
    }
    return q;
}

} // namespace fixy
