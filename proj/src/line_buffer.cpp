#include "fixy/line_buffer.hpp"

namespace fixy {

namespace {

int same_pad_before(int n, int k, int s) {
    const int out = (n + s - 1) / s;
    const int total = std::max(0, (out - 1) * s + k - n);
    return total / 2;
}

} // namespace

LineBufferSpec plan_line_buffer(const Layer& layer, Shape3 in_shape, int bits) {
    if (layer.kh != 1 && layer.kh != 3 && layer.kh != 5 && layer.kh != 7)
        throw UnsupportedOpError(layer.id + ": kernel size " + std::to_string(layer.kh) + " not in {1,3,5,7}");
    if (layer.kw != layer.kh) throw UnsupportedOpError(layer.id + ": non-square kernels are not supported");
    if (layer.stride != 1 && layer.stride != 2)
        throw UnsupportedOpError(layer.id + ": stride " + std::to_string(layer.stride) + " not in {1,2}");
    if (bits <= 0) throw ParameterError("activation bits must be positive");

    LineBufferSpec s;
    s.kernel_h = layer.kh;
    s.kernel_w = layer.kw;
    s.stride = layer.stride;
    s.width = in_shape.w;
    s.height = in_shape.h;
    s.channels = in_shape.c;
    s.bits = bits;
    if (layer.pad == Padding::same) {
        s.pad_top = same_pad_before(in_shape.h, layer.kh, layer.stride);
        s.pad_left = same_pad_before(in_shape.w, layer.kw, layer.stride);
    }
    if (layer.kh > 1) {
        s.bank_count = layer.kh + 1;
        s.bank_depth = in_shape.w;
        s.word_bits = in_shape.c * bits;
    }
    return s;
}

LineBufferSpec plan_line_buffer(const DatapathStage& stage) {
    Layer l;
    l.id = stage.layer_id;
    l.kh = stage.kh;
    l.kw = stage.kw;
    l.stride = stage.stride;
    l.pad = stage.pad;
    const bool signed_in = stage.precision.input_range.lo < 0;
    const int bits = twos_complement_bits(stage.precision.input_range) - (signed_in ? 0 : 1);
    auto s = plan_line_buffer(l, stage.in_shape, std::max(bits, 8));
    s.tap_enabled = stage.tap_enabled;
    return s;
}

Bandwidth sram_bandwidth(const LineBufferSpec& spec) {
    if (!spec.buffered()) return {1.0, 1.0};
    return {static_cast<double>(spec.kernel_h), static_cast<double>(spec.kernel_h) * spec.kernel_w};
}

PipelineSchedule schedule_pipeline(Shape3 input, const std::vector<LineBufferSpec>& buffers) {
    PipelineSchedule p;
    p.input_pixels = static_cast<std::int64_t>(input.h) * input.w;
    double rate = 1.0;
    std::int64_t done = p.input_pixels;
    for (const auto& b : buffers) {
        StageTiming t;
        rate /= static_cast<double>(b.stride) * b.stride;
        t.rate = rate;
        t.fill_latency = b.fill_latency();
        done += t.fill_latency;
        t.done_cycle = done;
        const auto bw = sram_bandwidth(b);
        t.sram_reads_per_output = b.buffered() ? bw.reads_per_output : 0.0;
        t.sram_writes_per_output = b.buffered() ? static_cast<double>(b.stride) * b.stride : 0.0;
        p.stages.push_back(t);
    }
    p.frame_cycles = done;
    return p;
}

nlohmann::json to_json(const LineBufferSpec& s) {
    return {{"kernel", {s.kernel_h, s.kernel_w}},
            {"stride", s.stride},
            {"width", s.width},
            {"height", s.height},
            {"channels", s.channels},
            {"bits", s.bits},
            {"bank_count", s.bank_count},
            {"bank_depth", s.bank_depth},
            {"word_bits", s.word_bits},
            {"sram_bits", s.sram_bits()},
            {"shift_register_bits", s.shift_register_bits()},
            {"fill_latency", s.fill_latency()},
            {"pad", {s.pad_top, s.pad_left}},
            {"tap_enabled", s.tap_enabled}};
}

nlohmann::json to_json(const PipelineSchedule& s) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& t : s.stages)
        stages.push_back({{"rate", t.rate},
                          {"fill_latency", t.fill_latency},
                          {"done_cycle", t.done_cycle},
                          {"sram_reads_per_output", t.sram_reads_per_output},
                          {"sram_writes_per_output", t.sram_writes_per_output}});
    return {{"input_pixels", s.input_pixels}, {"frame_cycles", s.frame_cycles}, {"stages", stages}};
}

} // namespace fixy
