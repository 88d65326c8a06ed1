#pragma once

// Golden float reference, bit-exact functional simulation of a frozen
// pipeline, and a cycle-accurate model of the line-buffer schedule.

#include <cstdint>
#include <string>
#include <vector>

#include "fixy/model_ir.hpp"
#include "fixy/pipeline.hpp"

namespace fixy {

/// Float convolution / batch-norm / ReLU / maxpool over layers [0, layer_end).
RealMap run_reference(const ShapedModel& shaped, const RealMap& image, std::size_t layer_end = SIZE_MAX);

/// Copy of the model whose fixed convolutions carry the pipeline's
/// quantized-then-dequantized weights.
Model with_quantized_weights(const Model& m, const FixedPipeline& p);

struct TapOutput {
    std::string layer_id;
    Activations values;
};

struct SimResult {
    Activations output;
    std::vector<Activations> snapshots; ///< per stage, when requested
    std::vector<TapOutput> taps;
    std::int64_t cycle_count = -1;      ///< cycle-accurate mode only
};

struct FixedSimOptions {
    bool parallel = true;
    bool snapshots = false;
};

SimResult run_fixed(const FixedPipeline& p, const Activations& image, const FixedSimOptions& opts = {});

struct StageCounters {
    std::int64_t ticks = 0;
    std::int64_t emissions = 0;
    std::int64_t sram_reads = 0;  ///< words
    std::int64_t sram_writes = 0; ///< words
    std::int64_t steady_reads = 0;     ///< reads attributed to steady-state emissions
    std::int64_t steady_emissions = 0; ///< interior emissions that are not first in their row
    std::int64_t done_cycle = 0;

    double steady_reads_per_output() const {
        return steady_emissions > 0 ? static_cast<double>(steady_reads) / steady_emissions : 0.0;
    }
};

struct CycleStats {
    std::int64_t cycle_count = 0;
    std::vector<StageCounters> stages;
};

/// Streams the image one pixel per cycle through every stage's banks and
/// shift register. Throws SimulationError on a single-port bank conflict or
/// a missing output.
SimResult run_cycle_accurate(const FixedPipeline& p, const Activations& image, CycleStats* stats = nullptr);

struct DiffReport {
    std::int64_t max_abs = 0;
    double mean_abs = 0.0;
    std::int64_t first_mismatch = -1; ///< flat index of the first element beyond tol
    std::int64_t mismatches = 0;
    bool pass = true;
};

DiffReport compare_outputs(const Activations& a, const Activations& b, std::int64_t tol = 0);

} // namespace fixy
