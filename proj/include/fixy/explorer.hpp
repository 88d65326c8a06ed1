#pragma once

// Design-space exploration over (fixed CONV units x NVDLA configuration)
// under area and transfer-accuracy constraints.

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fixy/cost_model.hpp"
#include "fixy/system_model.hpp"

namespace fixy {

struct AccuracyRow {
    int fixed_layers = 0;
    bool adaptive_bn = false;
    std::vector<std::string> fields; ///< raw cells, byte-equal to the file
    std::vector<double> accuracy;    ///< one per dataset column
};

struct AccuracyTable {
    std::vector<std::string> datasets; ///< accuracy columns in file order
    std::vector<AccuracyRow> rows;
    std::string source_task = "imagenet"; ///< excluded from drop constraints

    /// Adaptive-BN row for n when present, else the first row for n.
    const AccuracyRow* find(int n_fixed) const;
    std::vector<int> fixed_layer_values() const;
};

AccuracyTable parse_accuracy_table(std::string_view csv);
AccuracyTable load_accuracy_table(const std::string& path);

/// FNV-1a 64-bit digest, used to pin shipped data files.
std::uint64_t fnv1a64(std::string_view bytes);

struct FfeOption {
    int n_fixed = 0;
    ModelSplit split;
    FfeFeatures features;                 ///< every stage active
    std::map<int, FfeFeatures> tap_features; ///< stages of units <= t active
    std::map<int, ModelSplit> tap_splits;
    PruneReport prune;
};

struct DesignSpace {
    ShapedModel model;
    std::vector<FfeOption> options; ///< ascending n_fixed

    const FfeOption& option(int n_fixed) const;
};

/// Freezes one pipeline per n (uncalibrated Q; structure only) and records
/// features for every shallower tap in `tap_points`.
DesignSpace build_design_space(const ShapedModel& shaped, const std::vector<int>& n_values,
                               const FreezeOptions& base, const std::vector<int>& tap_points = {});

/// Anchor targets from a published system row: FFE area = total - NVDLA area;
/// FFE energy per frame = total energy - NVDLA energy for the programmable ops.
CalibrationAnchor make_anchor(const FfeOption& opt, const NvdlaSpec& nv, double total_area_mm2,
                              double total_tops_per_w);

enum class Priority { throughput, efficiency };
Priority parse_priority(std::string_view s);
std::string_view to_string(Priority p);

struct Constraints {
    double area_budget_mm2 = std::numeric_limits<double>::infinity();
    std::optional<double> max_accuracy_drop; ///< percentage points vs the n=0 row
    Priority priority = Priority::throughput;
    bool allow_taps = false;
    std::vector<int> candidates;           ///< n_fixed values; empty = every n in the accuracy table
    std::vector<std::string> configs;      ///< empty = all six
    FfeTiming timing = FfeTiming::cycle_model;
};

struct DatasetBinding {
    std::string dataset;
    int tap = 0; ///< FFE depth this dataset uses
    std::string accuracy; ///< raw cell of the bound row
    double drop = 0.0;
    SystemPpa ppa;
};

struct DesignPoint {
    int n_fixed = 0;
    std::string config;
    SystemPpa ppa;           ///< whole FFE in use
    Baseline baseline;       ///< iso-area NVDLA
    double improve_tops = 0.0;
    double improve_topspw = 0.0;
    double avg_tops = 0.0;   ///< over datasets, honouring tap bindings
    double avg_topspw = 0.0;
    std::vector<DatasetBinding> bindings;
    std::vector<std::string> accuracy; ///< raw cells of the n_fixed row
    bool feasible = true;
    std::vector<std::string> violations;

    double metric(Priority p) const { return p == Priority::throughput ? avg_tops : avg_topspw; }
};

struct ExploreResult {
    std::vector<DesignPoint> points; ///< every evaluated point, grid order
    std::vector<std::size_t> pareto; ///< indices of non-dominated feasible points
    std::optional<std::size_t> best;
    std::vector<std::string> binding_constraints; ///< set when nothing is feasible
};

ExploreResult pareto_explore(const DesignSpace& space, const CostModel& cm, const Constraints& c,
                             const AccuracyTable& table);

/// True when a is at least as good as b in both TOPS and TOPS/W and better in one.
bool dominates(const DesignPoint& a, const DesignPoint& b);

} // namespace fixy
