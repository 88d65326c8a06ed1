#pragma once

// Inter-stage line buffers (K+1 single-port SRAM banks plus a K x K window
// shift register) and the analytic pipeline schedule.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "fixy/fixed_datapath.hpp"

namespace fixy {

struct LineBufferSpec {
    int kernel_h = 1, kernel_w = 1;
    int stride = 1;
    int width = 0;  ///< input image width in pixels
    int height = 0; ///< input image height
    int channels = 0;
    int bits = 8;
    int bank_count = 0;  ///< K_h + 1, or 0 when no buffer is needed
    int bank_depth = 0;  ///< words per bank
    int word_bits = 0;   ///< C * bits
    int pad_top = 0, pad_left = 0;
    bool tap_enabled = false;

    bool buffered() const { return bank_count > 0; }
    std::int64_t sram_bits() const { return static_cast<std::int64_t>(bank_count) * bank_depth * word_bits; }
    std::int64_t shift_register_bits() const {
        return buffered() ? static_cast<std::int64_t>(kernel_h) * kernel_w * channels * bits : 0;
    }
    /// Cycles between the upstream stream ending and this stage finishing.
    std::int64_t fill_latency() const {
        return buffered() ? static_cast<std::int64_t>(kernel_h - 1) * width + kernel_w : 0;
    }
    bool operator==(const LineBufferSpec&) const = default;
};

LineBufferSpec plan_line_buffer(const Layer& layer, Shape3 in_shape, int bits);
LineBufferSpec plan_line_buffer(const DatapathStage& stage);

struct Bandwidth {
    double reads_per_output = 0;       ///< words read from SRAM per output pixel
    double naive_reads_per_output = 0; ///< without the shift register
    double ratio() const { return reads_per_output > 0 ? naive_reads_per_output / reads_per_output : 1.0; }
};

Bandwidth sram_bandwidth(const LineBufferSpec& spec);

struct StageTiming {
    double rate = 1.0;            ///< output pixels per cycle
    std::int64_t fill_latency = 0;
    std::int64_t done_cycle = 0;  ///< cycle by which the stage has emitted everything
    double sram_reads_per_output = 0;
    double sram_writes_per_output = 0;
};

struct PipelineSchedule {
    std::int64_t input_pixels = 0;
    std::vector<StageTiming> stages;
    std::int64_t frame_cycles = 0;

    double frame_seconds(double clock_hz) const { return frame_cycles / clock_hz; }
};

PipelineSchedule schedule_pipeline(Shape3 input, const std::vector<LineBufferSpec>& buffers);

nlohmann::json to_json(const LineBufferSpec& s);
nlohmann::json to_json(const PipelineSchedule& s);

} // namespace fixy
