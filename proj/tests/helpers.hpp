#pragma once

// Small model builders and reference oracles shared by the unit tests and
// the acceptance suite.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fixy/model_ir.hpp"
#include "fixy/pipeline.hpp"
#include "fixy/preset.hpp"

namespace fixy::testing {

struct UnitSpec {
    LayerKind kind = LayerKind::conv2d;
    int k = 3;
    int stride = 1;
    int out = 4; ///< ignored for depthwise
    Padding pad = Padding::same;
    bool bn = true;
    bool relu = true;
    int pool = 0; ///< kernel of a stride-2 maxpool after the unit, 0 = none
};

inline Model chain_model(InputSpec input, const std::vector<UnitSpec>& units, std::uint64_t seed) {
    Model m;
    m.name = "chain";
    m.input = input;
    std::mt19937_64 rng(seed);
    int ch = input.c;
    int idx = 0;
    for (const auto& u : units) {
        const std::string base = "u" + std::to_string(idx++);
        const int out = u.kind == LayerKind::depthwise_conv2d ? ch : u.out;
        m.layers.push_back({base, u.kind, u.k, u.k, u.stride, u.pad, ch, out, 1e-3});
        LayerTensors t;
        const int fan_in = u.k * u.k * (u.kind == LayerKind::depthwise_conv2d ? 1 : ch);
        std::normal_distribution<float> he(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
        t.weights.resize(static_cast<std::size_t>(fan_in) * out);
        for (auto& w : t.weights) w = he(rng);
        t.bias.assign(static_cast<std::size_t>(out), 0.0f);
        m.weight_store.emplace(base, std::move(t));
        if (u.bn) {
            m.layers.push_back({base + "_bn", LayerKind::batch_norm, 1, 1, 1, Padding::same, out, out, 1e-3});
            LayerTensors b;
            std::uniform_real_distribution<float> g(0.5f, 1.5f), be(-0.2f, 0.2f), mu(-0.1f, 0.1f), v(0.5f, 2.0f);
            for (int c = 0; c < out; ++c) {
                b.gamma.push_back(g(rng));
                b.beta.push_back(be(rng));
                b.mean.push_back(mu(rng));
                b.var.push_back(v(rng));
            }
            m.weight_store.emplace(base + "_bn", std::move(b));
        }
        if (u.relu) m.layers.push_back({base + "_relu", LayerKind::relu, 1, 1, 1, Padding::same, out, out, 1e-3});
        if (u.pool > 0)
            m.layers.push_back({base + "_pool", LayerKind::maxpool, u.pool, u.pool, 2, Padding::same, out, out, 1e-3});
        ch = out;
    }
    validate_model(m);
    return m;
}

/// Random chain of 1-3 units over an input of at most 32x32x8.
inline Model random_chain(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dim(4, 32), ch(1, 8), nunits(1, 3), kk(0, 2), coin(0, 1), kind(0, 2),
        pool(0, 5);
    InputSpec in{dim(rng), dim(rng), ch(rng), 8};
    std::vector<UnitSpec> units;
    int h = in.h, w = in.w;
    const int n = nunits(rng);
    for (int i = 0; i < n; ++i) {
        UnitSpec u;
        const int kinds[] = {1, 3, 5};
        u.k = kinds[kk(rng)];
        u.stride = coin(rng) ? 2 : 1;
        u.out = ch(rng);
        const int k = kind(rng);
        u.kind = k == 0 ? LayerKind::conv2d : k == 1 ? LayerKind::depthwise_conv2d : LayerKind::pointwise_conv2d;
        if (u.kind == LayerKind::pointwise_conv2d) {
            u.k = 1;
            u.stride = 1;
        }
        u.pad = coin(rng) && h >= u.k + 2 && w >= u.k + 2 ? Padding::valid : Padding::same;
        u.bn = coin(rng);
        auto out_dim = [&](int d) { return u.pad == Padding::same ? (d + u.stride - 1) / u.stride : (d - u.k) / u.stride + 1; };
        h = out_dim(h);
        w = out_dim(w);
        if (pool(rng) == 0 && h >= 3 && w >= 3) {
            u.pool = 3;
            h = (h + 1) / 2;
            w = (w + 1) / 2;
        }
        units.push_back(u);
    }
    return chain_model(in, units, rng());
}

/// Freezes every unit of the model.
inline FixedPipeline freeze_all(const Model& m, PrunePolicy prune = PrunePolicy::exact_zero(), int calib = 2,
                                std::uint64_t seed = 1) {
    const ShapedModel shaped = infer_shapes(m);
    FreezeOptions fo;
    fo.n_fixed = conv_unit_count(m);
    fo.prune = prune;
    fo.calibration_images = calib;
    fo.seed = seed;
    return freeze(shaped, fo);
}

/// A stage with explicit int8 weights ([out][taps]) whose output is the raw
/// accumulator.
inline DatapathStage make_stage(LayerKind kind, int k, int stride, Shape3 in, int out_ch,
                                const std::vector<std::int8_t>& w, Range input_range = {0, 255},
                                Padding pad = Padding::same) {
    StageInputs si;
    si.layer = {"s", kind, k, k, stride, pad, in.c, kind == LayerKind::depthwise_conv2d ? in.c : out_ch, 1e-3};
    si.in_shape = in;
    si.weights.values = w;
    si.weights.group_size = w.size();
    si.weights.scales = {1.0};
    si.weights.removed.assign(w.size(), 0);
    for (std::size_t i = 0; i < w.size(); ++i) si.weights.removed[i] = w[i] == 0;
    const std::vector<double> ones(static_cast<std::size_t>(si.layer.out_ch), 1.0);
    si.bn = identity_bn(ones, {});
    si.relu = false;
    si.q.output_signed = true;
    si.q.output_bits = 32;
    si.q.right_shift = si.bn.exponent; // output = accumulator
    si.input_range = input_range;
    return build_stage(si);
}

inline Activations random_image(Shape3 s, std::mt19937_64& rng) {
    Activations a(s);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& v : a.data) v = d(rng);
    return a;
}

/// Direct six-loop convolution with TF-style SAME/VALID padding.
/// Weights [out][in][kh][kw] for conv, [ch][kh][kw] for depthwise.
inline RealMap naive_conv(const RealMap& in, const Layer& l, const std::vector<float>& w) {
    const int oh = l.pad == Padding::same ? (in.shape.h + l.stride - 1) / l.stride : (in.shape.h - l.kh) / l.stride + 1;
    const int ow = l.pad == Padding::same ? (in.shape.w + l.stride - 1) / l.stride : (in.shape.w - l.kw) / l.stride + 1;
    int pt = 0, pl = 0;
    if (l.pad == Padding::same) {
        pt = std::max((oh - 1) * l.stride + l.kh - in.shape.h, 0) / 2;
        pl = std::max((ow - 1) * l.stride + l.kw - in.shape.w, 0) / 2;
    }
    const bool dw = l.kind == LayerKind::depthwise_conv2d;
    RealMap out({oh, ow, l.out_ch});
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            for (int o = 0; o < l.out_ch; ++o) {
                double acc = 0;
                for (int i = 0; i < (dw ? 1 : l.in_ch); ++i)
                    for (int ky = 0; ky < l.kh; ++ky)
                        for (int kx = 0; kx < l.kw; ++kx) {
                            const int iy = y * l.stride + ky - pt, ix = x * l.stride + kx - pl;
                            if (iy < 0 || ix < 0 || iy >= in.shape.h || ix >= in.shape.w) continue;
                            const int ic = dw ? o : i;
                            const std::size_t wi = dw ? (static_cast<std::size_t>(o) * l.kh + ky) * l.kw + kx
                                                      : ((static_cast<std::size_t>(o) * l.in_ch + i) * l.kh + ky) * l.kw + kx;
                            acc += static_cast<double>(w[wi]) * in.at(iy, ix, ic);
                        }
                out.at(y, x, o) = static_cast<float>(acc);
            }
    return out;
}

/// A shipped preset with its design space, fitted cost model and accuracy table.
struct Study {
    Preset preset;
    ShapedModel shaped;
    DesignSpace space;
    CostModel cm;
    AccuracyTable accuracy;

    const Scenario& scenario(const std::string& name) const {
        for (const auto& s : preset.scenarios)
            if (s.name == name) return s;
        throw ParameterError("no scenario " + name);
    }
};

inline Study load_study(const std::string& preset_file) {
    Study s;
    s.preset = load_preset(std::string(FIXY_PRESET_DIR) + "/" + preset_file);
    s.shaped = infer_shapes(load_model(s.preset.model));
    s.space = preset_design_space(s.preset, s.shaped);
    s.cm = calibrate_anchors(s.space, s.preset.anchors, load_cost_model(s.preset.priors_path));
    s.accuracy = load_accuracy_table(s.preset.accuracy_csv);
    return s;
}

} // namespace fixy::testing
