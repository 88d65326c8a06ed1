#include "fixy/simulator.hpp"

#include <cmath>
#include <cstdlib>

#include "fixy/kernels.hpp"

namespace fixy {

namespace {

int pad_before(int n, int k, int s, Padding p) {
    if (p == Padding::valid) return 0;
    const int out = (n + s - 1) / s;
    return std::max(0, (out - 1) * s + k - n) / 2;
}

RealMap conv_ref(const Layer& l, const LayerTensors& t, const RealMap& in, Shape3 out_shape) {
    RealMap out(out_shape);
    const int pt = pad_before(in.shape.h, l.kh, l.stride, l.pad);
    const int pl = pad_before(in.shape.w, l.kw, l.stride, l.pad);
    const bool dw = l.kind == LayerKind::depthwise_conv2d;
    const int cin = in.shape.c;
    for (int oy = 0; oy < out_shape.h; ++oy)
        for (int ox = 0; ox < out_shape.w; ++ox)
            for (int co = 0; co < out_shape.c; ++co) {
                double acc = t.bias.empty() ? 0.0 : t.bias[co];
                for (int dy = 0; dy < l.kh; ++dy)
                    for (int dx = 0; dx < l.kw; ++dx) {
                        const int y = oy * l.stride - pt + dy, x = ox * l.stride - pl + dx;
                        if (y < 0 || y >= in.shape.h || x < 0 || x >= in.shape.w) continue;
                        if (dw) {
                            acc += static_cast<double>(t.weights[(co * l.kh + dy) * l.kw + dx]) * in.at(y, x, co);
                            continue;
                        }
                        for (int ci = 0; ci < cin; ++ci)
                            acc += static_cast<double>(t.weights[((co * cin + ci) * l.kh + dy) * l.kw + dx]) *
                                   in.at(y, x, ci);
                    }
                out.at(oy, ox, co) = static_cast<float>(acc);
            }
    return out;
}

RealMap pool_ref(const Layer& l, const RealMap& in, Shape3 out_shape) {
    RealMap out(out_shape);
    const int pt = pad_before(in.shape.h, l.kh, l.stride, l.pad);
    const int pl = pad_before(in.shape.w, l.kw, l.stride, l.pad);
    for (int oy = 0; oy < out_shape.h; ++oy)
        for (int ox = 0; ox < out_shape.w; ++ox)
            for (int c = 0; c < out_shape.c; ++c) {
                float best = -INFINITY;
                for (int dy = 0; dy < l.kh; ++dy)
                    for (int dx = 0; dx < l.kw; ++dx) {
                        const int y = oy * l.stride - pt + dy, x = ox * l.stride - pl + dx;
                        if (y < 0 || y >= in.shape.h || x < 0 || x >= in.shape.w) continue;
                        best = std::max(best, in.at(y, x, c));
                    }
                out.at(oy, ox, c) = best;
            }
    return out;
}

} // namespace

RealMap run_reference(const ShapedModel& shaped, const RealMap& image, std::size_t layer_end) {
    if (image.shape != shaped.input_shape)
        throw ShapeError("image " + to_string(image.shape) + " does not match model input " +
                         to_string(shaped.input_shape));
    const Model& m = shaped.model;
    layer_end = std::min(layer_end, m.layers.size());
    RealMap x = image;
    for (std::size_t i = 0; i < layer_end; ++i) {
        const Layer& l = m.layers[i];
        const Shape3 os = shaped.activation_shapes[i];
        switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::depthwise_conv2d:
        case LayerKind::pointwise_conv2d: x = conv_ref(l, m.tensors(l.id), x, os); break;
        case LayerKind::maxpool: x = pool_ref(l, x, os); break;
        case LayerKind::relu:
            for (auto& v : x.data) v = std::max(v, 0.0f);
            break;
        case LayerKind::batch_norm: {
            const LayerTensors& t = m.tensors(l.id);
            for (std::size_t k = 0; k < x.data.size(); ++k) {
                const std::size_t c = k % static_cast<std::size_t>(x.shape.c);
                const double s = t.gamma[c] / std::sqrt(static_cast<double>(t.var[c]) + l.bn_eps);
                x.data[k] = static_cast<float>(s * (x.data[k] - t.mean[c]) + t.beta[c]);
            }
            break;
        }
        }
    }
    return x;
}

Model with_quantized_weights(const Model& m, const FixedPipeline& p) {
    Model out = m;
    for (const auto& s : p.stages) {
        if (s.kind == StageKind::maxpool) continue;
        auto& w = out.weight_store.at(s.layer_id).weights;
        if (w.size() != s.weights.size()) throw ShapeError(s.layer_id + ": weight count mismatch");
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(s.weights.dequantize(i));
    }
    return out;
}

SimResult run_fixed(const FixedPipeline& p, const Activations& image, const FixedSimOptions& opts) {
    if (image.shape != p.input.shape())
        throw ShapeError("image " + to_string(image.shape) + " does not match pipeline input " +
                         to_string(p.input.shape()));
    SimResult r;
    Activations x = image;
    for (const auto& s : p.stages) {
        x = opts.parallel ? run_stage_parallel(s, x) : run_stage_serial(s, x);
        if (opts.snapshots) r.snapshots.push_back(x);
        if (s.tap_enabled) r.taps.push_back({s.layer_id, x});
    }
    r.output = std::move(x);
    return r;
}

DiffReport compare_outputs(const Activations& a, const Activations& b, std::int64_t tol) {
    if (a.shape != b.shape) throw ShapeError("cannot compare " + to_string(a.shape) + " with " + to_string(b.shape));
    DiffReport d;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const std::int64_t diff = std::llabs(static_cast<std::int64_t>(a.data[i]) - b.data[i]);
        d.max_abs = std::max(d.max_abs, diff);
        sum += static_cast<double>(diff);
        if (diff > tol) {
            if (d.first_mismatch < 0) d.first_mismatch = static_cast<std::int64_t>(i);
            ++d.mismatches;
        }
    }
    d.mean_abs = a.data.empty() ? 0.0 : sum / a.data.size();
    d.pass = d.mismatches == 0;
    return d;
}

} // namespace fixy
