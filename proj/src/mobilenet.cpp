#include <cmath>
#include <random>

#include "fixy/model_ir.hpp"

namespace fixy {

int scale_channels(int channels, double alpha) {
    const int rounded = static_cast<int>(std::lround(channels * alpha / 8.0)) * 8;
    return std::max(8, rounded);
}

namespace {

// Standard MobileNetV1 body: (pointwise output channels, depthwise stride).
constexpr std::pair<int, int> kBlocks[] = {
    {64, 1},  {128, 2}, {128, 1}, {256, 2}, {256, 1}, {512, 2},  {512, 1},
    {512, 1}, {512, 1}, {512, 1}, {512, 1}, {1024, 2}, {1024, 1},
};

class Builder {
public:
    explicit Builder(Model& m) : m_(m) {}

    void conv(const std::string& id, LayerKind kind, int k, int stride, int in, int out) {
        m_.layers.push_back({id, kind, k, k, stride, Padding::same, in, out, 1e-3});
    }
    void bn_relu(const std::string& base, int ch) {
        m_.layers.push_back({base + "_bn", LayerKind::batch_norm, 1, 1, 1, Padding::same, ch, ch, 1e-3});
        m_.layers.push_back({base + "_relu", LayerKind::relu, 1, 1, 1, Padding::same, ch, ch, 1e-3});
    }

private:
    Model& m_;
};

void fill_random(Model& m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& l : m.layers) {
        LayerTensors t;
        if (is_conv(l.kind)) {
            const int fan_in = l.kh * l.kw * (l.kind == LayerKind::depthwise_conv2d ? 1 : l.in_ch);
            std::normal_distribution<float> he(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
            const std::size_t n = l.kind == LayerKind::depthwise_conv2d
                                      ? static_cast<std::size_t>(l.kh * l.kw * l.out_ch)
                                      : static_cast<std::size_t>(l.kh * l.kw * l.in_ch * l.out_ch);
            t.weights.resize(n);
            for (auto& w : t.weights) w = he(rng);
            t.bias.assign(static_cast<std::size_t>(l.out_ch), 0.0f);
        } else if (l.kind == LayerKind::batch_norm) {
            std::uniform_real_distribution<float> g(0.5f, 1.5f), b(-0.2f, 0.2f), mu(-0.1f, 0.1f), v(0.5f, 2.0f);
            for (int c = 0; c < l.out_ch; ++c) {
                t.gamma.push_back(g(rng));
                t.beta.push_back(b(rng));
                t.mean.push_back(mu(rng));
                t.var.push_back(v(rng));
            }
        } else {
            continue;
        }
        m.weight_store.emplace(l.id, std::move(t));
    }
}

} // namespace

Model build_mobilenet(double alpha, InputSpec input, const WeightSource& source) {
    if (alpha != 0.25 && alpha != 0.5 && alpha != 0.75 && alpha != 1.0)
        throw ParameterError("unsupported width multiplier " + std::to_string(alpha) +
                             " (expected 0.25, 0.5, 0.75 or 1.0)");
    if (input.c <= 0 || input.h <= 0 || input.w <= 0) throw ParameterError("input dimensions must be positive");

    Model m;
    char name[32];
    std::snprintf(name, sizeof name, "mobilenet_v1_%.2f", alpha);
    m.name = name;
    m.input = input;
    m.head_classes = 1000;

    Builder b(m);
    int ch = scale_channels(32, alpha);
    b.conv("conv1", LayerKind::conv2d, 3, 2, input.c, ch);
    b.bn_relu("conv1", ch);
    int idx = 2;
    for (const auto& [out, stride] : kBlocks) {
        const int oc = scale_channels(out, alpha);
        const std::string base = "block" + std::to_string(idx++);
        b.conv(base + "_dw", LayerKind::depthwise_conv2d, 3, stride, ch, ch);
        b.bn_relu(base + "_dw", ch);
        b.conv(base + "_pw", LayerKind::pointwise_conv2d, 1, 1, ch, oc);
        b.bn_relu(base + "_pw", oc);
        ch = oc;
    }

    if (source.kind == WeightSource::Kind::random_seeded) {
        fill_random(m, source.seed);
        validate_model(m);
        return m;
    }
    // Bind a blob laid out the way serialize_model lays out this topology.
    Model shell = m;
    fill_random(shell, 0);
    auto ser = serialize_model(shell);
    return parse_model(ser.manifest, source.blob);
}

} // namespace fixy
