#pragma once

// Run configurations shared by the CLI and the acceptance suite: where the
// model comes from, calibration anchors and exploration scenarios.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixy/explorer.hpp"

namespace fixy {

struct ModelSource {
    std::string builtin = "mobilenet_v1"; ///< used when manifest_path is empty
    double alpha = 0.25;
    InputSpec input{224, 224, 3, 8};
    std::uint64_t seed = 42;
    std::string manifest_path;
    std::string weights_path;
};

Model load_model(const ModelSource& src);

/// A published system point used to fit the cost model.
struct AnchorSpec {
    int n_fixed = 0;
    std::string config;
    double area_mm2 = 0.0;
    double tops_per_w = 0.0;
};

struct Scenario {
    std::string name;
    Constraints constraints;
};

struct Preset {
    std::string name;
    ModelSource model;
    double sparsity = 0.5;
    std::vector<int> candidates;
    std::vector<int> taps;
    FfeTiming timing = FfeTiming::cycle_model;
    std::vector<AnchorSpec> anchors;
    std::vector<Scenario> scenarios;
    std::string accuracy_csv; ///< resolved path
    std::string priors_path;  ///< resolved path; empty = built-in priors
};

/// Relative paths inside the preset are resolved against `base_dir`, then
/// against the data directory.
Preset parse_preset(const nlohmann::json& j, const std::string& base_dir);
Preset load_preset(const std::string& path);

/// A file in the shipped data directory.
std::string data_path(const std::string& name);

/// FFE variants for every candidate and anchor n (deduplicated, ascending).
DesignSpace preset_design_space(const Preset& p, const ShapedModel& shaped);

CostModel calibrate_anchors(const DesignSpace& space, const std::vector<AnchorSpec>& anchors,
                            const CostModel& priors);

} // namespace fixy
