#pragma once

// Fixed-weight datapath: CSD shift-add scalers, carry-save adder tree
// descriptors, static bit-width analysis and per-stage cost counts.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixy/model_ir.hpp"
#include "fixy/quantization.hpp"

namespace fixy {

struct CsdDigit {
    int position = 0; ///< bit index
    int sign = 1;     ///< +1 or -1

    bool operator==(const CsdDigit&) const = default;
};

/// Signed digits ordered by descending position.
using CsdDigits = std::vector<CsdDigit>;

/// Canonical signed-digit (non-adjacent form) encoding of w. Requires |w| < 2^31.
CsdDigits csd_encode(std::int64_t w);
std::int64_t csd_value(const CsdDigits& d);

struct ShiftAddPlan {
    int weight = 0;
    CsdDigits terms;
    int adder_count = 0;
    bool is_pruned = false;

    bool operator==(const ShiftAddPlan&) const = default;
};

ShiftAddPlan plan_scaler(int w, bool pruned = false);

/// w * x computed only with shifts, adds and subtracts of x.
inline std::int64_t evaluate(const ShiftAddPlan& plan, std::int64_t x) {
    std::int64_t acc = 0;
    for (const auto& d : plan.terms) {
        const std::int64_t shifted = x * (std::int64_t{1} << d.position);
        acc = d.sign > 0 ? acc + shifted : acc - shifted;
    }
    return acc;
}

struct Range {
    std::int64_t lo = 0;
    std::int64_t hi = 0;

    bool contains(std::int64_t v) const { return v >= lo && v <= hi; }
    bool operator==(const Range&) const = default;
};

/// Smallest two's-complement width holding every value of r (at least 1).
int twos_complement_bits(Range r);
inline bool fits_bits(std::int64_t v, int bits) {
    if (bits >= 63) return true;
    const std::int64_t lim = std::int64_t{1} << (bits - 1);
    return v >= -lim && v < lim;
}

inline constexpr int kAccumulatorCapBits = 32;

/// Static bit-widths of one stage. Weight layout is [channel][tap].
struct PrecisionMap {
    Range input_range;
    std::vector<int> product_bits;        ///< per scaler; 0 for pruned taps
    std::vector<Range> acc_range;         ///< per output channel, includes the BN bias add
    std::vector<int> acc_bits_per_channel;
    int acc_bits = 1;                     ///< max over channels
    std::vector<int> bn_product_bits;     ///< per channel: (acc + bias) * mantissa

    bool operator==(const PrecisionMap&) const = default;
};

/// Interval analysis over exact weight values. `taps` is the number of
/// weights per output channel; `bias` (optional) is the BN bias added in the
/// accumulator domain. Throws OverflowError when an accumulator needs more
/// than 32 bits.
PrecisionMap analyze_precision(const QuantTensor& weights, std::size_t taps, Range input_range,
                               std::span<const std::int32_t> bias = {},
                               std::span<const std::int16_t> bn_mantissa = {});

/// Input that drives channel `c` to the top (or bottom) of its accumulator range.
std::vector<std::int64_t> extreme_input(const QuantTensor& weights, std::size_t taps, std::size_t c,
                                        Range input_range, bool maximize);

struct AdderTree {
    int leaves = 0;
    int depth = 0;

    bool operator==(const AdderTree&) const = default;
};

AdderTree make_tree(int leaves);

enum class StageKind { conv, depthwise, pointwise, maxpool };
std::string_view to_string(StageKind k);

/// One fully-parallel datapath stage: scalers, CS tree, BN, ReLU, Q.
struct DatapathStage {
    std::string layer_id;
    StageKind kind = StageKind::conv;
    int kh = 1, kw = 1, stride = 1;
    Padding pad = Padding::same;
    Shape3 in_shape, out_shape;
    QuantTensor weights;              ///< [out][taps]; empty for maxpool
    std::size_t taps = 0;             ///< weights per output channel
    std::vector<ShiftAddPlan> plans;  ///< one per weight
    std::vector<AdderTree> trees;     ///< one per output channel
    BnRegisters bn;
    bool relu = false;
    QParams q;
    PrecisionMap precision;
    double input_scale = 1.0;  ///< real value of one input LSB
    double output_scale = 1.0; ///< real value of one output LSB
    bool tap_enabled = false;  ///< stage output exposed as a secondary pipeline output
    int unit = 0;              ///< 1-based CONV unit this stage belongs to

    int in_channels() const { return in_shape.c; }
    int out_channels() const { return out_shape.c; }
    /// Input channel feeding tap t of output channel c.
    int tap_channel(int c, std::size_t t) const;
    /// Window offsets (dy, dx) of tap t.
    std::pair<int, int> tap_offset(std::size_t t) const;
};

struct StageInputs {
    Layer layer;
    Shape3 in_shape;
    QuantTensor weights;
    PruneReport prune;
    BnRegisters bn;
    bool relu = true;
    QParams q;
    Range input_range{0, 255};
    double input_scale = 1.0;
};

DatapathStage build_stage(const StageInputs& in);

/// Maxpool stage (comparators only, no arithmetic).
DatapathStage build_pool_stage(const Layer& layer, Shape3 in_shape, Range input_range, double input_scale);

struct HwCost {
    std::int64_t scaler_adders = 0;
    std::int64_t tree_adders = 0;
    std::int64_t adders = 0;
    std::int64_t flop_bits = 0;
    std::int64_t effective_ops_per_cycle = 0; ///< 2 * non-pruned MACs per output pixel
    std::int64_t nominal_ops_per_cycle = 0;   ///< 2 * all MACs per output pixel
    std::int64_t comparators = 0;             ///< maxpool only

    HwCost& operator+=(const HwCost& o);
};

inline constexpr int kAdderLevelsPerRegister = 4;

HwCost stage_cost(const DatapathStage& stage);

nlohmann::json to_json(const DatapathStage& stage);
DatapathStage stage_from_json(const nlohmann::json& j);

} // namespace fixy
