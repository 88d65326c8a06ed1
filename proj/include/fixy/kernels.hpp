#pragma once

// Bit-exact evaluation of one datapath stage. The serial kernel is the
// reference; the OpenMP kernel must produce identical bytes.

#include <algorithm>
#include <limits>

#include "fixy/fixed_datapath.hpp"
#include "fixy/tensor.hpp"

namespace fixy {

/// Top/left zero padding of a stage (TF-style SAME, zero for VALID).
std::pair<int, int> stage_padding(const DatapathStage& s);

inline void check_width(std::int64_t v, int bits, const DatapathStage& s, const char* what) {
    if (!fits_bits(v, bits))
        throw OverflowError(s.layer_id + ": " + what + " value " + std::to_string(v) + " exceeds " +
                            std::to_string(bits) + " bits");
}

/// Value of channel c ahead of the Q stage: (acc + bias) * mantissa, after
/// ReLU. `fetch(dy, dx, ch, v)` stores the window value at offset (dy, dx) of
/// channel ch and returns false for padding.
template <typename Fetch>
std::int64_t evaluate_pre_q(const DatapathStage& s, int c, Fetch&& fetch) {
    if (s.kind == StageKind::maxpool) {
        std::int32_t best = std::numeric_limits<std::int32_t>::min();
        bool any = false;
        for (int dy = 0; dy < s.kh; ++dy)
            for (int dx = 0; dx < s.kw; ++dx) {
                std::int32_t v = 0;
                if (fetch(dy, dx, c, v)) {
                    best = any ? std::max(best, v) : v;
                    any = true;
                }
            }
        return any ? best : 0;
    }
    const std::size_t base = static_cast<std::size_t>(c) * s.taps;
    std::int64_t acc = 0;
    for (std::size_t t = 0; t < s.taps; ++t) {
        const ShiftAddPlan& plan = s.plans[base + t];
        if (plan.is_pruned) continue;
        const auto [dy, dx] = s.tap_offset(t);
        std::int32_t x = 0;
        if (!fetch(dy, dx, s.tap_channel(c, t), x)) continue;
        const std::int64_t p = evaluate(plan, x);
        check_width(p, s.precision.product_bits[base + t], s, "product");
        acc += p;
    }
    const int acc_bits = s.precision.acc_bits_per_channel[c];
    check_width(acc, acc_bits, s, "accumulator");
    const std::int64_t biased = acc + s.bn.bias[c];
    check_width(biased, acc_bits, s, "biased accumulator");
    std::int64_t y = biased * s.bn.mantissa[c];
    check_width(y, s.precision.bn_product_bits[c], s, "batch-norm product");
    if (s.relu) y = std::max<std::int64_t>(y, 0);
    return y;
}

template <typename Fetch>
std::int32_t evaluate_output(const DatapathStage& s, int c, Fetch&& fetch) {
    if (s.kind == StageKind::maxpool) return static_cast<std::int32_t>(evaluate_pre_q(s, c, fetch));
    return apply_q(evaluate_pre_q(s, c, fetch), s.q);
}

/// Functional evaluation of a whole feature map.
Activations run_stage_serial(const DatapathStage& s, const Activations& in);
Activations run_stage_parallel(const DatapathStage& s, const Activations& in);

/// Pre-Q values of every output, used to calibrate the Q stage.
std::vector<std::int64_t> collect_pre_q(const DatapathStage& s, const Activations& in);

/// Rejects activations outside the stage's declared input range.
void check_input_range(const DatapathStage& s, const Activations& in);

} // namespace fixy
