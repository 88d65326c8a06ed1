#include "fixy/fixed_datapath.hpp"

#include <algorithm>
#include <cmath>

namespace fixy {

int twos_complement_bits(Range r) {
    for (int b = 1; b < 64; ++b)
        if (fits_bits(r.lo, b) && fits_bits(r.hi, b)) return b;
    return 64;
}

namespace {

Range product_range(std::int64_t w, Range x) {
    const std::int64_t a = w * x.lo, b = w * x.hi;
    return {std::min(a, b), std::max(a, b)};
}

} // namespace

PrecisionMap analyze_precision(const QuantTensor& weights, std::size_t taps, Range input_range,
                               std::span<const std::int32_t> bias, std::span<const std::int16_t> bn_mantissa) {
    if (taps == 0 || weights.size() % taps != 0) throw ShapeError("weight count is not a multiple of the tap count");
    const std::size_t channels = weights.size() / taps;
    if (!bias.empty() && bias.size() != channels) throw ShapeError("bias length does not match channel count");
    if (!bn_mantissa.empty() && bn_mantissa.size() != channels)
        throw ShapeError("mantissa length does not match channel count");

    PrecisionMap p;
    p.input_range = input_range;
    p.product_bits.assign(weights.size(), 0);
    for (std::size_t c = 0; c < channels; ++c) {
        Range acc{0, 0};
        for (std::size_t t = 0; t < taps; ++t) {
            const std::size_t i = c * taps + t;
            const int w = weights.values[i];
            if (w == 0) continue;
            const Range pr = product_range(w, input_range);
            p.product_bits[i] = twos_complement_bits(pr);
            acc.lo += pr.lo;
            acc.hi += pr.hi;
        }
        if (!bias.empty()) {
            acc.lo = std::min(acc.lo, acc.lo + bias[c]);
            acc.hi = std::max(acc.hi, acc.hi + bias[c]);
        }
        const int bits = twos_complement_bits(acc);
        if (bits > kAccumulatorCapBits)
            throw OverflowError("channel " + std::to_string(c) + " accumulator needs " + std::to_string(bits) +
                                " bits (cap " + std::to_string(kAccumulatorCapBits) + ")");
        p.acc_range.push_back(acc);
        p.acc_bits_per_channel.push_back(bits);
        p.acc_bits = std::max(p.acc_bits, bits);
        if (!bn_mantissa.empty())
            p.bn_product_bits.push_back(twos_complement_bits(product_range(bn_mantissa[c], acc)));
    }
    return p;
}

std::vector<std::int64_t> extreme_input(const QuantTensor& weights, std::size_t taps, std::size_t c,
                                        Range input_range, bool maximize) {
    std::vector<std::int64_t> x(taps);
    for (std::size_t t = 0; t < taps; ++t) {
        const int w = weights.values[c * taps + t];
        const bool high = maximize ? w > 0 : w < 0;
        x[t] = high ? input_range.hi : input_range.lo;
    }
    return x;
}

AdderTree make_tree(int leaves) {
    AdderTree t{leaves, 0};
    for (int n = leaves; n > 1; n = (n + 1) / 2) ++t.depth;
    return t;
}

std::string_view to_string(StageKind k) {
    switch (k) {
    case StageKind::conv: return "conv";
    case StageKind::depthwise: return "depthwise";
    case StageKind::pointwise: return "pointwise";
    case StageKind::maxpool: return "maxpool";
    }
    return "?";
}

namespace {

StageKind parse_stage_kind(std::string_view s) {
    for (auto k : {StageKind::conv, StageKind::depthwise, StageKind::pointwise, StageKind::maxpool})
        if (to_string(k) == s) return k;
    throw ParseError("unknown stage kind '" + std::string(s) + "'");
}

StageKind stage_kind_of(LayerKind k) {
    switch (k) {
    case LayerKind::conv2d: return StageKind::conv;
    case LayerKind::depthwise_conv2d: return StageKind::depthwise;
    case LayerKind::pointwise_conv2d: return StageKind::pointwise;
    case LayerKind::maxpool: return StageKind::maxpool;
    default: throw UnsupportedOpError("layer kind " + std::string(to_string(k)) + " has no datapath stage");
    }
}

void check_window(const Layer& l) {
    if (l.kh != l.kw) throw UnsupportedOpError(l.id + ": non-square kernels are not supported");
    if (l.kh != 1 && l.kh != 3 && l.kh != 5 && l.kh != 7)
        throw UnsupportedOpError(l.id + ": kernel size " + std::to_string(l.kh) + " not in {1,3,5,7}");
    if (l.stride != 1 && l.stride != 2)
        throw UnsupportedOpError(l.id + ": stride " + std::to_string(l.stride) + " not in {1,2}");
}

Shape3 out_shape_of(const Layer& l, Shape3 in, int out_ch) {
    auto dim = [&](int n) {
        if (l.pad == Padding::same) return (n + l.stride - 1) / l.stride;
        return (n - l.kh) / l.stride + 1;
    };
    return {dim(in.h), dim(in.w), out_ch};
}

void finish_plans(DatapathStage& s) {
    s.plans.clear();
    s.trees.clear();
    s.plans.reserve(s.weights.size());
    for (std::size_t i = 0; i < s.weights.size(); ++i) {
        const bool removed = !s.weights.removed.empty() && s.weights.removed[i];
        s.plans.push_back(plan_scaler(s.weights.values[i], removed));
    }
    for (int c = 0; c < s.out_channels(); ++c) {
        int leaves = 0;
        for (std::size_t t = 0; t < s.taps; ++t)
            if (!s.plans[c * s.taps + t].is_pruned) ++leaves;
        s.trees.push_back(make_tree(leaves));
    }
}

} // namespace

int DatapathStage::tap_channel(int c, std::size_t t) const {
    switch (kind) {
    case StageKind::conv: return static_cast<int>(t / static_cast<std::size_t>(kh * kw));
    case StageKind::pointwise: return static_cast<int>(t);
    default: return c;
    }
}

std::pair<int, int> DatapathStage::tap_offset(std::size_t t) const {
    if (kind == StageKind::pointwise) return {0, 0};
    const int r = static_cast<int>(t % static_cast<std::size_t>(kh * kw));
    return {r / kw, r % kw};
}

DatapathStage build_stage(const StageInputs& in) {
    const Layer& l = in.layer;
    DatapathStage s;
    s.layer_id = l.id;
    s.kind = stage_kind_of(l.kind);
    if (s.kind == StageKind::maxpool) throw ConstructionError(l.id + ": use build_pool_stage for maxpool");
    check_window(l);
    if (in.in_shape.c != l.in_ch) throw ShapeError(l.id + ": input channels do not match the layer");
    s.kh = l.kh;
    s.kw = l.kw;
    s.stride = l.stride;
    s.pad = l.pad;
    s.in_shape = in.in_shape;
    s.out_shape = out_shape_of(l, in.in_shape, l.out_ch);
    if (s.out_shape.h <= 0 || s.out_shape.w <= 0) throw ShapeError(l.id + ": empty output");
    s.taps = s.kind == StageKind::conv        ? static_cast<std::size_t>(l.kh * l.kw * l.in_ch)
             : s.kind == StageKind::depthwise ? static_cast<std::size_t>(l.kh * l.kw)
                                              : static_cast<std::size_t>(l.in_ch);
    if (in.weights.size() != s.taps * static_cast<std::size_t>(l.out_ch))
        throw ShapeError(l.id + ": expected " + std::to_string(s.taps * l.out_ch) + " weights, got " +
                         std::to_string(in.weights.size()));
    if (in.bn.channels() != static_cast<std::size_t>(l.out_ch))
        throw ShapeError(l.id + ": batch-norm register count does not match output channels");
    s.weights = in.weights;
    if (s.weights.removed.size() != s.weights.size()) s.weights.removed.assign(s.weights.size(), 0);
    s.bn = in.bn;
    s.relu = in.relu;
    s.q = in.q;
    s.input_scale = in.input_scale;
    s.output_scale = std::ldexp(1.0, s.q.right_shift - s.bn.exponent);
    s.precision = analyze_precision(s.weights, s.taps, in.input_range, s.bn.bias, s.bn.mantissa);
    finish_plans(s);
    return s;
}

DatapathStage build_pool_stage(const Layer& layer, Shape3 in_shape, Range input_range, double input_scale) {
    if (layer.kind != LayerKind::maxpool) throw ConstructionError(layer.id + ": not a maxpool layer");
    check_window(layer);
    DatapathStage s;
    s.layer_id = layer.id;
    s.kind = StageKind::maxpool;
    s.kh = layer.kh;
    s.kw = layer.kw;
    s.stride = layer.stride;
    s.pad = layer.pad;
    s.in_shape = in_shape;
    s.out_shape = out_shape_of(layer, in_shape, in_shape.c);
    s.taps = static_cast<std::size_t>(layer.kh * layer.kw);
    s.input_scale = input_scale;
    s.output_scale = input_scale;
    s.q.output_signed = input_range.lo < 0;
    s.precision.input_range = input_range;
    s.precision.acc_bits = twos_complement_bits(input_range);
    return s;
}

HwCost& HwCost::operator+=(const HwCost& o) {
    scaler_adders += o.scaler_adders;
    tree_adders += o.tree_adders;
    adders += o.adders;
    flop_bits += o.flop_bits;
    effective_ops_per_cycle += o.effective_ops_per_cycle;
    nominal_ops_per_cycle += o.nominal_ops_per_cycle;
    comparators += o.comparators;
    return *this;
}

HwCost stage_cost(const DatapathStage& s) {
    HwCost h;
    const int n = s.out_channels();
    if (s.kind == StageKind::maxpool) {
        h.comparators = static_cast<std::int64_t>(s.kh * s.kw - 1) * n;
        h.flop_bits = static_cast<std::int64_t>(s.q.output_bits) * n;
        return h;
    }
    for (const auto& p : s.plans) {
        h.scaler_adders += p.adder_count;
        if (!p.is_pruned) h.effective_ops_per_cycle += 2;
    }
    h.nominal_ops_per_cycle = 2 * static_cast<std::int64_t>(s.plans.size());
    for (int c = 0; c < n; ++c) {
        const AdderTree& t = s.trees[c];
        if (t.leaves > 1) h.tree_adders += t.leaves - 1;
        for (int level = kAdderLevelsPerRegister; level < t.depth; level += kAdderLevelsPerRegister) {
            const std::int64_t nodes = (t.leaves + (1 << level) - 1) >> level;
            h.flop_bits += nodes * s.precision.acc_bits;
        }
    }
    h.flop_bits += static_cast<std::int64_t>(s.q.output_bits) * n;
    h.adders = h.scaler_adders + h.tree_adders;
    return h;
}

nlohmann::json to_json(const DatapathStage& s) {
    nlohmann::json j;
    j["layer_id"] = s.layer_id;
    j["kind"] = std::string(to_string(s.kind));
    j["kernel"] = s.kh;
    j["stride"] = s.stride;
    j["pad"] = std::string(to_string(s.pad));
    j["in_shape"] = {s.in_shape.h, s.in_shape.w, s.in_shape.c};
    j["out_shape"] = {s.out_shape.h, s.out_shape.w, s.out_shape.c};
    j["taps"] = s.taps;
    j["input_range"] = {s.precision.input_range.lo, s.precision.input_range.hi};
    j["input_scale"] = s.input_scale;
    j["output_scale"] = s.output_scale;
    j["relu"] = s.relu;
    j["tap_enabled"] = s.tap_enabled;
    j["unit"] = s.unit;
    j["q"] = {{"right_shift", s.q.right_shift}, {"output_bits", s.q.output_bits}, {"signed", s.q.output_signed}};
    if (s.kind != StageKind::maxpool) {
        j["weights"] = {{"values", s.weights.values},
                        {"scales", s.weights.scales},
                        {"group_size", s.weights.group_size},
                        {"removed", s.weights.removed}};
        j["bn"] = {{"mantissa", s.bn.mantissa},
                   {"exponent", s.bn.exponent},
                   {"bias", s.bn.bias},
                   {"real_scale", s.bn.real_scale},
                   {"real_bias", s.bn.real_bias}};
        j["acc_bits"] = s.precision.acc_bits;
    }
    return j;
}

DatapathStage stage_from_json(const nlohmann::json& j) {
    try {
        Layer l;
        l.id = j.at("layer_id").get<std::string>();
        const StageKind kind = parse_stage_kind(j.at("kind").get<std::string>());
        l.kind = kind == StageKind::conv        ? LayerKind::conv2d
                 : kind == StageKind::depthwise ? LayerKind::depthwise_conv2d
                 : kind == StageKind::pointwise ? LayerKind::pointwise_conv2d
                                                : LayerKind::maxpool;
        l.kh = l.kw = j.at("kernel").get<int>();
        l.stride = j.at("stride").get<int>();
        l.pad = j.at("pad").get<std::string>() == "valid" ? Padding::valid : Padding::same;
        const auto is = j.at("in_shape"), os = j.at("out_shape");
        const Shape3 in{is.at(0).get<int>(), is.at(1).get<int>(), is.at(2).get<int>()};
        l.in_ch = in.c;
        l.out_ch = os.at(2).get<int>();
        const Range range{j.at("input_range").at(0).get<std::int64_t>(), j.at("input_range").at(1).get<std::int64_t>()};
        const double input_scale = j.at("input_scale").get<double>();

        DatapathStage s;
        if (kind == StageKind::maxpool) {
            s = build_pool_stage(l, in, range, input_scale);
        } else {
            StageInputs si;
            si.layer = l;
            si.in_shape = in;
            const auto& w = j.at("weights");
            si.weights.values = w.at("values").get<std::vector<std::int8_t>>();
            si.weights.scales = w.at("scales").get<std::vector<double>>();
            si.weights.group_size = w.at("group_size").get<std::size_t>();
            si.weights.removed = w.at("removed").get<std::vector<std::uint8_t>>();
            const auto& b = j.at("bn");
            si.bn.mantissa = b.at("mantissa").get<std::vector<std::int16_t>>();
            si.bn.exponent = b.at("exponent").get<int>();
            si.bn.bias = b.at("bias").get<std::vector<std::int32_t>>();
            si.bn.real_scale = b.at("real_scale").get<std::vector<double>>();
            si.bn.real_bias = b.at("real_bias").get<std::vector<double>>();
            si.relu = j.at("relu").get<bool>();
            const auto& q = j.at("q");
            si.q = {q.at("right_shift").get<int>(), q.at("output_bits").get<int>(), q.at("signed").get<bool>()};
            si.input_range = range;
            si.input_scale = input_scale;
            s = build_stage(si);
        }
        s.tap_enabled = j.value("tap_enabled", false);
        s.unit = j.value("unit", 0);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed stage description: ") + e.what());
    }
}

} // namespace fixy
