#pragma once

// Verilog-2001 generation for a frozen pipeline: one module per datapath
// stage, a shared line-buffer template, a top module, and a self-checking
// testbench driven by vectors from the cycle-accurate simulator.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixy/pipeline.hpp"
#include "fixy/tensor.hpp"

namespace fixy {

struct EmitFile {
    std::string path; ///< relative to the output root
    std::string text;
};

struct VectorFile {
    std::string path;
    std::vector<std::uint8_t> bytes;
};

struct EmitBundle {
    std::vector<EmitFile> rtl; ///< line buffer, stages in order, top last
    EmitFile testbench;
    std::vector<VectorFile> vectors;
    nlohmann::json manifest;
};

/// Legal Verilog identifier derived from s (non-word characters become '_').
std::string verilog_identifier(std::string_view s);

std::string stage_module_name(const DatapathStage& s, std::size_t index);

/// Pipeline registers inside a stage's adder trees (all channels are
/// balanced to the deepest one); the stage latency is this plus one.
int stage_register_levels(const DatapathStage& s);

std::string emit_line_buffer_module();
std::string emit_stage_module(const DatapathStage& s, const LineBufferSpec& b, const std::string& name);

/// RTL for the whole pipeline. Deterministic: a pure function of `p`.
EmitBundle emit_verilog(const FixedPipeline& p);

/// Adds tb/tb_top.v and stimulus/expected vectors to `bundle`. Expected
/// outputs come from run_cycle_accurate, which must agree with the
/// functional simulator first.
void emit_testbench(EmitBundle& bundle, const FixedPipeline& p, const std::vector<Activations>& images);

/// Writes rtl/, tb/, vectors/ and manifest.json under `root`.
void write_bundle(const EmitBundle& bundle, const std::filesystem::path& root);

/// Binary +/- operators found in the scaler (`assign sc_`) and adder-tree
/// (`assign tr_`) assignments of an emitted stage.
struct OperatorAudit {
    std::int64_t scaler_ops = 0;
    std::int64_t tree_ops = 0;
};

OperatorAudit audit_operators(const std::string& stage_text);

/// True if the text loads or declares memory contents from a file or an
/// initializer ($readmemh/$readmemb or an `initial` block writing an array).
bool has_weight_memory(const std::string& text);

} // namespace fixy
