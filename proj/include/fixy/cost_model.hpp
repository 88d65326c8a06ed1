#pragma once

// Structural cost features of a frozen pipeline and a calibratable model
// mapping them to FFE area, throughput and energy.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixy/pipeline.hpp"

namespace fixy {

inline constexpr double kClockHz = 810e6;

/// Counts summed over stages [0, stage_end) of a pipeline.
struct FfeFeatures {
    std::int64_t scaler_adders = 0;
    std::int64_t tree_adders = 0;
    std::int64_t flop_bits = 0;     ///< tree/output registers plus window shift registers
    std::int64_t sram_bits = 0;
    std::int64_t effective_ops = 0; ///< per frame, non-pruned
    std::int64_t nominal_ops = 0;   ///< per frame, 2 * MACs
    std::int64_t sram_access_bits = 0; ///< per frame, reads + writes
    std::int64_t frame_cycles = 0;

    std::int64_t adders() const { return scaler_adders + tree_adders; }
};

/// Area always covers the whole pipeline; activity covers stages
/// [0, active_stages) so layers beyond a tap point are clock-gated.
FfeFeatures ffe_features(const FixedPipeline& p, std::size_t active_stages = SIZE_MAX);

struct Residual {
    std::string anchor;
    double target = 0.0;
    double fitted = 0.0;
    double relative() const { return target != 0.0 ? (fitted - target) / target : 0.0; }
};

struct CostModel {
    // Relative weights inside each coefficient group (priors, not fitted).
    double scaler_adder_weight = 1.0;
    double tree_adder_weight = 1.5;
    double flop_bit_weight = 0.1;
    double sram_access_weight = 1.0;

    // Fitted group scales.
    double area_logic_mm2 = 0.0;  ///< per weighted logic unit
    double area_sram_mm2 = 0.0;   ///< per SRAM bit
    double energy_dynamic_pj = 0.0; ///< per effective op (and weighted SRAM access bit)
    double energy_static_pj = 0.0;  ///< per adder per cycle while the FFE is active

    double clock_hz = kClockHz;
    bool calibrated = false;
    std::vector<Residual> area_residuals;
    std::vector<Residual> energy_residuals;

    double area_per_scaler_adder() const { return area_logic_mm2 * scaler_adder_weight; }
    double area_per_tree_adder() const { return area_logic_mm2 * tree_adder_weight; }
    double area_per_flop_bit() const { return area_logic_mm2 * flop_bit_weight; }
    double area_per_sram_bit() const { return area_sram_mm2; }
    double energy_per_effective_op() const { return energy_dynamic_pj; }
    double energy_per_sram_access_bit() const { return energy_dynamic_pj * sram_access_weight; }

    double logic_units(const FfeFeatures& f) const;
    double dynamic_units(const FfeFeatures& f) const;
    double static_units(const FfeFeatures& f) const;
};

nlohmann::json to_json(const CostModel& cm);
CostModel cost_model_from_json(const nlohmann::json& j);
CostModel load_cost_model(const std::string& path);

struct FfeEstimate {
    double area_mm2 = 0.0;
    double tops = 0.0;  ///< nominal ops at the FFE's own frame rate
    double watts = 0.0;
    double energy_per_frame_j = 0.0;
    double frame_seconds = 0.0;
    std::int64_t nominal_ops = 0;
};

/// Throws CalibrationError when the model has not been calibrated.
FfeEstimate estimate_ffe(const FfeFeatures& f, const CostModel& cm);
FfeEstimate estimate_ffe(const FixedPipeline& p, const CostModel& cm, std::size_t active_stages = SIZE_MAX);

struct CalibrationAnchor {
    std::string label;
    int n_fixed = 0;
    FfeFeatures features;
    double ffe_area_mm2 = 0.0;       ///< published total area minus the NVDLA area
    double ffe_energy_per_frame_j = 0.0;
};

/// Least-squares fit of the area and energy group scales. Needs at least two
/// anchors with distinct fixed-layer counts and must yield positive scales.
CostModel calibrate(const std::vector<CalibrationAnchor>& anchors, CostModel priors = {});

} // namespace fixy
