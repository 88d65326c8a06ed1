#include "fixy/pipeline.hpp"

#include <algorithm>
#include <random>

#include "fixy/kernels.hpp"

namespace fixy {

FixedPipeline assemble_pipeline(std::string name, InputSpec input, std::vector<DatapathStage> stages) {
    FixedPipeline p;
    p.model_name = std::move(name);
    p.input = input;
    Shape3 shape = input.shape();
    for (const auto& s : stages) {
        if (s.in_shape != shape)
            throw ShapeError(s.layer_id + ": expects input " + to_string(s.in_shape) + ", chain provides " +
                             to_string(shape));
        p.buffers.push_back(plan_line_buffer(s));
        shape = s.out_shape;
    }
    p.stages = std::move(stages);
    p.schedule = schedule_pipeline(input.shape(), p.buffers);
    return p;
}

std::vector<Activations> synthetic_images(Shape3 shape, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> px(0, 255);
    std::vector<Activations> out;
    for (int i = 0; i < count; ++i) {
        Activations a(shape);
        for (auto& v : a.data) v = px(rng);
        out.push_back(std::move(a));
    }
    return out;
}

namespace {

struct Group {
    std::size_t conv = 0;
    std::ptrdiff_t bn = -1;
    bool relu = false;
    int unit = 0;
};

std::vector<Group> group_layers(const Model& m, std::size_t end) {
    const auto starts = conv_unit_starts(m);
    std::vector<Group> groups;
    int unit = 0;
    for (std::size_t i = 0; i < end; ++i) {
        const Layer& l = m.layers[i];
        if (std::find(starts.begin(), starts.end(), i) != starts.end()) ++unit;
        if (is_conv(l.kind) || l.kind == LayerKind::maxpool) {
            groups.push_back({i, -1, false, unit});
        } else if (groups.empty()) {
            throw ConstructionError(l.id + ": " + std::string(to_string(l.kind)) + " has no preceding convolution");
        } else if (l.kind == LayerKind::batch_norm) {
            auto& g = groups.back();
            if (g.bn >= 0 || g.relu || m.layers[g.conv].kind == LayerKind::maxpool)
                throw ConstructionError(l.id + ": batch_norm must directly follow a convolution");
            g.bn = static_cast<std::ptrdiff_t>(i);
        } else if (l.kind == LayerKind::relu) {
            auto& g = groups.back();
            if (g.relu || m.layers[g.conv].kind == LayerKind::maxpool)
                throw ConstructionError(l.id + ": relu must follow a convolution or batch_norm");
            g.relu = true;
        }
    }
    return groups;
}

std::size_t channels_of(const Layer& l) { return static_cast<std::size_t>(l.out_ch); }

} // namespace

FixedPipeline freeze(const ShapedModel& shaped, const FreezeOptions& opts, const std::vector<Activations>& calibration) {
    const Model& m = shaped.model;
    const ModelSplit split = split_model(shaped, opts.n_fixed);
    const auto groups = group_layers(m, split.layer_boundary);
    for (int t : opts.taps)
        if (t < 1 || t > opts.n_fixed)
            throw ParameterError("tap " + std::to_string(t) + " outside the fixed units 1.." +
                                 std::to_string(opts.n_fixed));
    if (m.input.bits != 8) throw UnsupportedOpError("only 8-bit input images are supported");

    std::vector<QuantTensor> weights;
    std::vector<std::size_t> conv_groups;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const Layer& l = m.layers[groups[gi].conv];
        if (l.kind == LayerKind::maxpool) continue;
        weights.push_back(quantize_weights(m.tensors(l.id).weights, opts.granularity, channels_of(l)));
        conv_groups.push_back(gi);
    }
    const PruneReport prune = prune_weights(weights, opts.prune);

    std::vector<Activations> acts =
        calibration.empty() ? synthetic_images(m.input.shape(), opts.calibration_images, opts.seed) : calibration;
    for (const auto& a : acts)
        if (a.shape != m.input.shape())
            throw ShapeError("calibration image " + to_string(a.shape) + " does not match input " +
                             to_string(m.input.shape()));

    std::vector<DatapathStage> stages;
    Shape3 shape = m.input.shape();
    Range range{0, 255};
    double scale = 1.0;
    std::size_t wi = 0;
    for (const auto& g : groups) {
        const Layer& l = m.layers[g.conv];
        DatapathStage stage;
        if (l.kind == LayerKind::maxpool) {
            stage = build_pool_stage(l, shape, range, scale);
        } else {
            const LayerTensors& t = m.tensors(l.id);
            StageInputs in;
            in.layer = l;
            in.in_shape = shape;
            in.weights = weights[wi++];
            in.relu = g.relu;
            in.input_range = range;
            in.input_scale = scale;
            std::vector<double> acc_scale(channels_of(l));
            for (std::size_t c = 0; c < acc_scale.size(); ++c)
                acc_scale[c] = scale * in.weights.scales[in.weights.groups() == 1 ? 0 : c];
            if (g.bn >= 0) {
                const Layer& bl = m.layers[static_cast<std::size_t>(g.bn)];
                const LayerTensors& b = m.tensors(bl.id);
                in.bn = fold_bn(b.gamma, b.beta, b.mean, b.var, bl.bn_eps, acc_scale, t.bias);
            } else {
                in.bn = identity_bn(acc_scale, t.bias);
            }
            in.q = QParams{in.bn.exponent, 8, !g.relu};
            if (!acts.empty()) {
                const DatapathStage probe = build_stage(in);
                std::vector<std::int64_t> values;
                for (const auto& a : acts) {
                    auto v = collect_pre_q(probe, a);
                    values.insert(values.end(), v.begin(), v.end());
                }
                // Dead outputs: keep the uncalibrated Q.
                const bool signal = std::any_of(values.begin(), values.end(),
                                                [&](std::int64_t v) { return g.relu ? v > 0 : v != 0; });
                if (signal) in.q = calibrate_q(values, !g.relu);
            }
            stage = build_stage(in);
        }
        stage.unit = g.unit;
        stage.tap_enabled = std::find(opts.taps.begin(), opts.taps.end(), g.unit) != opts.taps.end();
        for (auto& a : acts) a = run_stage_parallel(stage, a);
        shape = stage.out_shape;
        range = {stage.q.lo(), stage.q.hi()};
        if (stage.kind == StageKind::maxpool) range = stage.precision.input_range;
        scale = stage.output_scale;
        stages.push_back(std::move(stage));
    }
    // A tap marks the last stage of its unit.
    for (std::size_t i = 0; i + 1 < stages.size(); ++i)
        if (stages[i].tap_enabled && groups[i].unit == groups[i + 1].unit) {
            stages[i].tap_enabled = false;
            stages[i + 1].tap_enabled = true;
        }

    auto p = assemble_pipeline(m.name, m.input, std::move(stages));
    p.n_fixed = opts.n_fixed;
    p.prune = prune;
    return p;
}

nlohmann::json to_json(const FixedPipeline& p) {
    nlohmann::json stages = nlohmann::json::array(), buffers = nlohmann::json::array();
    for (const auto& s : p.stages) stages.push_back(to_json(s));
    for (const auto& b : p.buffers) buffers.push_back(to_json(b));
    return {{"format", "fixyforge-pipeline"},
            {"version", 1},
            {"model", p.model_name},
            {"input", {{"h", p.input.h}, {"w", p.input.w}, {"c", p.input.c}, {"bits", p.input.bits}}},
            {"n_fixed", p.n_fixed},
            {"prune", to_json(p.prune)},
            {"stages", stages},
            {"buffers", buffers},
            {"schedule", to_json(p.schedule)}};
}

FixedPipeline pipeline_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "fixyforge-pipeline")
            throw ParseError("not a pipeline description");
        const auto& in = j.at("input");
        const InputSpec input{in.at("h").get<int>(), in.at("w").get<int>(), in.at("c").get<int>(),
                              in.at("bits").get<int>()};
        std::vector<DatapathStage> stages;
        for (const auto& s : j.at("stages")) stages.push_back(stage_from_json(s));
        auto p = assemble_pipeline(j.at("model").get<std::string>(), input, std::move(stages));
        p.n_fixed = j.at("n_fixed").get<int>();
        const auto& pr = j.at("prune");
        p.prune.kept = pr.at("kept").get<std::int64_t>();
        p.prune.removed_zero = pr.at("removed_zero").get<std::int64_t>();
        p.prune.removed_small = pr.at("removed_small").get<std::int64_t>();
        p.prune.sparsity = pr.at("sparsity").get<double>();
        p.prune.threshold_used = pr.at("threshold_used").get<int>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed pipeline description: ") + e.what());
    }
}

} // namespace fixy
