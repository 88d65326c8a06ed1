#pragma once

// Programmable-accelerator configurations and fixed + programmable system composition.

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fixy/cost_model.hpp"
#include "fixy/model_ir.hpp"

namespace fixy {

struct NvdlaSpec {
    std::string config;
    int macs = 0;
    int buffer_kb = 0;
    double area_mm2 = 0.0;
    double tops = 0.0;
    double tops_per_w = 0.0;
    std::vector<std::string> fields; ///< the row exactly as stored

    std::string row() const; ///< comma-joined stored fields
};

/// Parse a table with header config,macs,buffer_kb,area_mm2,tops,tops_per_w.
std::vector<NvdlaSpec> parse_nvdla_table(std::string_view csv);
/// The built-in six-row table (compiled from data/nvdla_configs.csv).
const std::vector<NvdlaSpec>& nvdla_table();
std::string_view nvdla_table_text();
NvdlaSpec nvdla_lookup(std::string_view config);

/// NVDLA performance at an arbitrary area: piecewise-linear in area between
/// published rows, extended linearly past the end rows.
struct Baseline {
    double area_mm2 = 0.0;
    double tops = 0.0;
    double tops_per_w = 0.0;
};
Baseline iso_area_baseline(double area_mm2);

struct SystemPpa {
    double area_mm2 = 0.0;
    double ffe_area_mm2 = 0.0;
    double nvdla_area_mm2 = 0.0;
    double tops = 0.0;
    double tops_per_w = 0.0;
    double frame_seconds = 0.0;
    double ffe_seconds = 0.0;
    double nvdla_seconds = 0.0;
    double ffe_energy_j = 0.0;
    double nvdla_energy_j = 0.0;
    double total_ops = 0.0;
    double ffe_ops = 0.0;
    double nvdla_ops = 0.0;
    double implied_utilization = 1.0; ///< NVDLA busy fraction at the system frame rate
    bool ffe_bound = false;           ///< the FFE sets the frame time

    double ffe_ops_share() const { return total_ops > 0 ? ffe_ops / total_ops : 0.0; }
    double ffe_energy_share() const {
        const double e = ffe_energy_j + nvdla_energy_j;
        return e > 0 ? ffe_energy_j / e : 0.0;
    }
};

/// How the FFE frame time enters the system frame time.
/// cycle_model: max(FFE frame time from the line-buffer schedule, NVDLA time).
/// hidden: the FFE is assumed never to bind, so the NVDLA time alone sets the
/// frame rate.
enum class FfeTiming { cycle_model, hidden };
FfeTiming parse_ffe_timing(std::string_view s);
std::string_view to_string(FfeTiming t);

/// Total ops = 2 * feature MACs (the classifier head is not modeled). The
/// programmable part runs at nv.tops * utilization; the FFE is clock-gated
/// when idle.
SystemPpa compose_system(const ModelSplit& split, const FfeEstimate& ffe, const NvdlaSpec& nv,
                         double utilization = 1.0, FfeTiming timing = FfeTiming::cycle_model);

nlohmann::json to_json(const SystemPpa& s);

} // namespace fixy
