#pragma once

// Lowering of the fixed part of a model into a chain of datapath stages
// with line buffers and a schedule.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixy/fixed_datapath.hpp"
#include "fixy/line_buffer.hpp"
#include "fixy/model_ir.hpp"
#include "fixy/tensor.hpp"

namespace fixy {

struct FixedPipeline {
    std::string model_name;
    InputSpec input;
    int n_fixed = 0;
    std::vector<DatapathStage> stages;
    std::vector<LineBufferSpec> buffers; ///< one per stage
    PipelineSchedule schedule;
    PruneReport prune;

    Shape3 output_shape() const { return stages.empty() ? input.shape() : stages.back().out_shape; }
    double output_scale() const { return stages.empty() ? 1.0 : stages.back().output_scale; }
};

/// Derives buffers and the schedule from the stage chain and checks that
/// consecutive stages agree on shapes.
FixedPipeline assemble_pipeline(std::string name, InputSpec input, std::vector<DatapathStage> stages);

struct FreezeOptions {
    int n_fixed = 0;
    PrunePolicy prune = PrunePolicy::exact_zero();
    Granularity granularity = Granularity::per_channel;
    std::vector<int> taps; ///< CONV unit numbers (1-based) exposed as secondary outputs
    /// Synthetic calibration images when none are supplied. With 0 the Q
    /// stages are not calibrated (output LSB = 1.0); enough for cost estimates.
    int calibration_images = 2;
    std::uint64_t seed = 1;
};

/// Random 8-bit images used when no calibration set is supplied.
std::vector<Activations> synthetic_images(Shape3 shape, int count, std::uint64_t seed);

/// Quantize, prune and lower the first n_fixed CONV units. Each Q stage is
/// calibrated on the activations produced by the already-frozen stages.
FixedPipeline freeze(const ShapedModel& shaped, const FreezeOptions& opts,
                     const std::vector<Activations>& calibration = {});

nlohmann::json to_json(const FixedPipeline& p);
FixedPipeline pipeline_from_json(const nlohmann::json& j);

} // namespace fixy
