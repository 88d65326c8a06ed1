// fixyforge: freeze, simulate, emit, estimate and explore fixed-weight
// feature extractors. Artifacts go to --out; structured logs go to stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fixy/emitter.hpp"
#include "fixy/pipeline.hpp"
#include "fixy/preset.hpp"
#include "fixy/report.hpp"
#include "fixy/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fixy;

namespace {

bool g_quiet = false;

void log_event(const char* level, const std::string& event, json fields = json::object()) {
    if (g_quiet && std::string_view(level) == "info") return;
    json line = {{"level", level}, {"event", event}};
    line.update(fields);
    std::cerr << line.dump() << "\n";
}

/// Bad command-line input detected after parsing; exits with code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
}

struct ModelOpts {
    std::string manifest, weights, builtin = "mobilenet_v1", input;
    double alpha = 0.25;
    std::string preset;
};

void add_model_options(CLI::App* sub, ModelOpts& m) {
    sub->add_option("--model", m.manifest, "Model manifest JSON")->check(CLI::ExistingFile);
    sub->add_option("--weights", m.weights, "Weight blob for --model")->check(CLI::ExistingFile);
    sub->add_option("--builtin", m.builtin, "Builtin topology when no manifest is given")
        ->check(CLI::IsMember({"mobilenet_v1"}));
    sub->add_option("--alpha", m.alpha, "Width multiplier of the builtin model")
        ->check(CLI::IsMember({0.25, 0.5, 0.75, 1.0}));
    sub->add_option("--input", m.input, "Input shape HxWxC of the builtin model (default 224x224x3)");
    sub->add_option("--preset", m.preset, "Preset JSON (model, anchors, scenarios)")->check(CLI::ExistingFile);
}

InputSpec parse_input(const std::string& s) {
    InputSpec in{224, 224, 3, 8};
    if (s.empty()) return in;
    char x1 = 0, x2 = 0;
    std::istringstream ss(s);
    if (!(ss >> in.h >> x1 >> in.w >> x2 >> in.c) || x1 != 'x' || x2 != 'x' || in.h <= 0 || in.w <= 0 || in.c <= 0)
        throw UsageError("--input expects HxWxC, got '" + s + "'");
    return in;
}

ModelSource model_source(const ModelOpts& m, const Preset* preset, std::uint64_t seed) {
    ModelSource src = preset ? preset->model : ModelSource{};
    if (!m.manifest.empty()) {
        if (m.weights.empty()) throw UsageError("--model needs --weights");
        src.manifest_path = m.manifest;
        src.weights_path = m.weights;
        return src;
    }
    if (!preset) {
        src.builtin = m.builtin;
        src.alpha = m.alpha;
        src.input = parse_input(m.input);
        src.seed = seed;
    } else if (!m.input.empty()) {
        src.input = parse_input(m.input);
    }
    return src;
}

PrunePolicy prune_policy(double sparsity, int below) {
    if (below > 0 && sparsity > 0) throw UsageError("--sparsity and --prune-below are exclusive");
    if (below > 0) return PrunePolicy::magnitude_below(below);
    if (sparsity > 0) return PrunePolicy::target(sparsity);
    return PrunePolicy::exact_zero();
}

Activations load_image(const std::string& path, Shape3 shape) {
    const auto ext = fs::path(path).extension().string();
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
    return read_raw_u8(path, shape);
}

std::vector<Activations> load_images(const std::vector<std::string>& paths, Shape3 shape) {
    std::vector<Activations> out;
    for (const auto& p : paths) {
        out.push_back(load_image(p, shape));
        if (out.back().shape != shape)
            throw ShapeError("image '" + p + "' is " + to_string(out.back().shape) + ", pipeline expects " +
                             to_string(shape));
    }
    return out;
}

json split_json(const ModelSplit& s) {
    return {{"n_fixed", s.split_index},
            {"layer_boundary", s.layer_boundary},
            {"adaptive_bn", s.adaptive_bn},
            {"fixed_ops_fraction", s.fixed_ops_fraction},
            {"fixed_mac_fraction", s.fixed_mac_fraction},
            {"fixed_macs", s.fixed_macs},
            {"programmable_macs", s.programmable_macs}};
}

json cost_json(const FixedPipeline& p) {
    json stages = json::array();
    HwCost total;
    for (const auto& s : p.stages) {
        const HwCost c = stage_cost(s);
        total += c;
        stages.push_back({{"layer_id", s.layer_id},
                          {"scaler_adders", c.scaler_adders},
                          {"tree_adders", c.tree_adders},
                          {"flop_bits", c.flop_bits},
                          {"comparators", c.comparators},
                          {"acc_bits", s.precision.acc_bits},
                          {"effective_ops_per_cycle", c.effective_ops_per_cycle},
                          {"nominal_ops_per_cycle", c.nominal_ops_per_cycle}});
    }
    return {{"stages", stages},
            {"total", {{"scaler_adders", total.scaler_adders},
                       {"tree_adders", total.tree_adders},
                       {"adders", total.adders},
                       {"flop_bits", total.flop_bits},
                       {"comparators", total.comparators}}}};
}

CostModel load_priors(const Preset* preset) {
    if (preset && !preset->priors_path.empty()) return load_cost_model(preset->priors_path);
    return load_cost_model(data_path("cost_model_priors.json"));
}

// ---------------------------------------------------------------- freeze

struct FreezeArgs {
    ModelOpts model;
    int n_fixed = 0;
    double sparsity = 0.0;
    int prune_below = 0;
    std::vector<int> taps;
    std::vector<std::string> images;
    int calib_images = 2;
    std::string out = "out";
};

int cmd_freeze(const FreezeArgs& a, std::uint64_t seed) {
    std::optional<Preset> preset;
    if (!a.model.preset.empty()) preset = load_preset(a.model.preset);
    const Model m = load_model(model_source(a.model, preset ? &*preset : nullptr, seed));
    const ShapedModel shaped = infer_shapes(m);
    if (a.n_fixed < 0 || a.n_fixed > conv_unit_count(m))
        throw UsageError("--n-fixed must be in [0, " + std::to_string(conv_unit_count(m)) + "]");
    FreezeOptions fo;
    fo.n_fixed = a.n_fixed;
    fo.prune = prune_policy(a.sparsity, a.prune_below);
    fo.taps = a.taps;
    fo.calibration_images = a.calib_images;
    fo.seed = seed;
    const auto calib = load_images(a.images, m.input.shape());
    const FixedPipeline p = freeze(shaped, fo, calib);
    const ModelSplit split = split_model(shaped, a.n_fixed);
    if (p.stages.empty()) log_event("warning", "empty_pipeline", {{"n_fixed", a.n_fixed}});

    const fs::path out(a.out);
    write_json(out / "pipeline.json", to_json(p));
    write_json(out / "prune_report.json", to_json(p.prune));
    write_json(out / "split.json", split_json(split));
    write_json(out / "schedule.json", to_json(p.schedule));
    write_json(out / "stage_costs.json", cost_json(p));
    log_event("info", "freeze", {{"model", m.name},
                                 {"n_fixed", a.n_fixed},
                                 {"stages", p.stages.size()},
                                 {"sparsity", p.prune.sparsity},
                                 {"fixed_ops_fraction", split.fixed_ops_fraction},
                                 {"frame_cycles", p.schedule.frame_cycles},
                                 {"out", out.string()}});
    return 0;
}

// ---------------------------------------------------------------- sim

struct SimArgs {
    std::string pipeline;
    std::vector<std::string> images;
    std::string mode = "both";
    std::string out = "out";
};

FixedPipeline load_pipeline(const std::string& path) { return pipeline_from_json(read_json(path)); }

void write_dump(const fs::path& base, const Activations& t, const FixedPipeline& p) {
    write_text(base.string() + ".bin", to_bytes(t));
    const bool sgn = !p.stages.empty() && p.stages.back().q.output_signed;
    write_json(base.string() + ".json", {{"shape", {t.shape.h, t.shape.w, t.shape.c}},
                                         {"layout", "hwc"},
                                         {"signed", sgn},
                                         {"scale", p.output_scale()}});
}

int cmd_sim(const SimArgs& a) {
    const FixedPipeline p = load_pipeline(a.pipeline);
    const auto images = load_images(a.images, p.input.shape());
    const fs::path out(a.out);
    json runs = json::array();
    int failures = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string stem = fs::path(a.images[i]).stem().string();
        json r = {{"image", a.images[i]}};
        std::optional<SimResult> fun, cyc;
        if (a.mode != "cycles") {
            fun = run_fixed(p, images[i]);
            write_dump(out / (stem + ".functional"), fun->output, p);
        }
        if (a.mode != "functional") {
            CycleStats stats;
            cyc = run_cycle_accurate(p, images[i], &stats);
            write_dump(out / (stem + ".cycles"), cyc->output, p);
            r["cycle_count"] = cyc->cycle_count;
            r["schedule_cycles"] = p.schedule.frame_cycles;
            json st = json::array();
            for (std::size_t k = 0; k < stats.stages.size(); ++k)
                st.push_back({{"layer_id", p.stages[k].layer_id},
                              {"emissions", stats.stages[k].emissions},
                              {"sram_reads", stats.stages[k].sram_reads},
                              {"sram_writes", stats.stages[k].sram_writes},
                              {"steady_reads_per_output", stats.stages[k].steady_reads_per_output()},
                              {"done_cycle", stats.stages[k].done_cycle}});
            r["stages"] = st;
        }
        if (fun && cyc) {
            const DiffReport d = compare_outputs(fun->output, cyc->output, 0);
            r["match"] = d.pass;
            r["mismatches"] = d.mismatches;
            if (!d.pass) ++failures;
        }
        runs.push_back(r);
    }
    write_json(out / "sim.json", {{"pipeline", a.pipeline}, {"mode", a.mode}, {"runs", runs}});
    log_event(failures ? "error" : "info", "sim",
              {{"images", images.size()}, {"mode", a.mode}, {"mismatched_images", failures}});
    if (failures) throw SimulationError(std::to_string(failures) + " image(s) differ between functional and cycle runs");
    return 0;
}

// ---------------------------------------------------------------- emit

struct EmitArgs {
    std::string pipeline;
    std::vector<std::string> images;
    int vectors = 1;
    std::string out = "out";
};

int cmd_emit(const EmitArgs& a, std::uint64_t seed) {
    const FixedPipeline p = load_pipeline(a.pipeline);
    auto images = load_images(a.images, p.input.shape());
    if (images.empty()) {
        if (a.vectors < 1) throw UsageError("--vectors must be at least 1 without --images");
        images = synthetic_images(p.input.shape(), a.vectors, seed);
    }
    EmitBundle b = emit_verilog(p);
    emit_testbench(b, p, images);
    write_bundle(b, a.out);
    log_event("info", "emit", {{"rtl_files", b.rtl.size()}, {"vectors", b.vectors.size()}, {"out", a.out}});
    return 0;
}

// ---------------------------------------------------------------- calibrate / ppa

struct CalArgs {
    ModelOpts model;
    std::vector<std::string> anchors; ///< n:config:area:topsw
    double sparsity = -1;
    std::string out = "out";
};

std::vector<AnchorSpec> parse_anchors(const std::vector<std::string>& specs) {
    std::vector<AnchorSpec> out;
    for (const auto& s : specs) {
        AnchorSpec a;
        std::istringstream ss(s);
        std::string n, cfg, area, eff;
        if (!std::getline(ss, n, ':') || !std::getline(ss, cfg, ':') || !std::getline(ss, area, ':') ||
            !std::getline(ss, eff))
            throw UsageError("--anchor expects N:CONFIG:AREA_MM2:TOPS_PER_W, got '" + s + "'");
        try {
            a.n_fixed = std::stoi(n);
            a.area_mm2 = std::stod(area);
            a.tops_per_w = std::stod(eff);
        } catch (const std::exception&) {
            throw UsageError("malformed anchor '" + s + "'");
        }
        a.config = cfg;
        out.push_back(a);
    }
    return out;
}

struct Context {
    std::optional<Preset> preset;
    ShapedModel shaped;
    DesignSpace space;
    CostModel cm;
};

/// Loads the model, builds the FFE variants and obtains a calibrated cost
/// model (from --cost-model, or by fitting the anchors).
Context make_context(const ModelOpts& mo, std::uint64_t seed, double sparsity, std::vector<int> candidates,
                     std::vector<int> taps, const std::string& cost_model, std::vector<AnchorSpec> anchors) {
    Context c;
    if (!mo.preset.empty()) c.preset = load_preset(mo.preset);
    Preset p = c.preset ? *c.preset : Preset{};
    p.model = model_source(mo, c.preset ? &*c.preset : nullptr, seed);
    if (sparsity >= 0) p.sparsity = sparsity;
    else if (!c.preset) p.sparsity = 0.0;
    if (!candidates.empty()) {
        p.candidates = candidates;
        for (auto& s : p.scenarios) s.constraints.candidates = candidates;
    }
    if (!taps.empty()) p.taps = taps;
    if (!anchors.empty()) p.anchors = anchors;
    if (cost_model.empty() && p.anchors.size() < 2)
        throw UsageError("need --cost-model, a preset with anchors, or at least two --anchor values");
    if (!cost_model.empty()) p.anchors.clear();
    const Model m = load_model(p.model);
    c.shaped = infer_shapes(m);
    c.space = preset_design_space(p, c.shaped);
    c.cm = cost_model.empty() ? calibrate_anchors(c.space, p.anchors, load_priors(c.preset ? &*c.preset : nullptr))
                              : load_cost_model(cost_model);
    if (!c.cm.calibrated) throw CalibrationError("cost model '" + cost_model + "' is not calibrated");
    c.preset = p;
    return c;
}

int cmd_calibrate(const CalArgs& a, std::uint64_t seed) {
    const auto anchors = parse_anchors(a.anchors);
    std::vector<int> ns;
    for (const auto& x : anchors) ns.push_back(x.n_fixed);
    Context c = make_context(a.model, seed, a.sparsity, ns, {}, "", anchors);
    write_json(fs::path(a.out) / "cost_model.json", to_json(c.cm));
    json res = json::array();
    for (const auto& r : c.cm.area_residuals) res.push_back({{"anchor", r.anchor}, {"relative", r.relative()}});
    log_event("info", "calibrate", {{"anchors", c.preset->anchors.size()}, {"area_residuals", res}, {"out", a.out}});
    return 0;
}

struct PpaArgs {
    ModelOpts model;
    int n_fixed = 0;
    double sparsity = -1;
    std::string cost_model;
    std::vector<std::string> configs;
    std::string timing = "cycle";
    std::string out = "out";
};

int cmd_ppa(const PpaArgs& a, std::uint64_t seed) {
    Context c = make_context(a.model, seed, a.sparsity, {a.n_fixed}, {}, a.cost_model, {});
    const FfeTiming timing = parse_ffe_timing(a.timing);
    const FfeOption& opt = c.space.option(a.n_fixed);
    const FfeEstimate ffe = estimate_ffe(opt.features, c.cm);
    std::vector<std::string> configs = a.configs;
    if (configs.empty())
        for (const auto& row : nvdla_table()) configs.push_back(row.config);
    json systems = json::array();
    std::ostringstream csv;
    csv << "n_fixed,config,area_mm2,tops,tops_per_w,ffe_area_mm2,ffe_bound\n";
    for (const auto& id : configs) {
        const NvdlaSpec nv = nvdla_lookup(id);
        const SystemPpa s = compose_system(opt.split, ffe, nv, 1.0, timing);
        json j = to_json(s);
        j["config"] = id;
        systems.push_back(j);
        char line[160];
        std::snprintf(line, sizeof line, "%d,%s,%.2f,%.2f,%.2f,%.3f,%s\n", a.n_fixed, id.c_str(), s.area_mm2, s.tops,
                      s.tops_per_w, s.ffe_area_mm2, s.ffe_bound ? "true" : "false");
        csv << line;
    }
    const fs::path out(a.out);
    write_json(out / "ppa.json", {{"n_fixed", a.n_fixed},
                                  {"ffe_timing", std::string(to_string(timing))},
                                  {"split", split_json(opt.split)},
                                  {"ffe",
                                   {{"area_mm2", ffe.area_mm2},
                                    {"tops", ffe.tops},
                                    {"watts", ffe.watts},
                                    {"energy_per_frame_j", ffe.energy_per_frame_j},
                                    {"frame_seconds", ffe.frame_seconds}}},
                                  {"systems", systems},
                                  {"cost_model", to_json(c.cm)}});
    write_text(out / "ppa.csv", csv.str());
    log_event("info", "ppa", {{"n_fixed", a.n_fixed}, {"ffe_area_mm2", ffe.area_mm2}, {"ffe_tops", ffe.tops},
                              {"ffe_watts", ffe.watts}, {"out", out.string()}});
    return 0;
}

// ---------------------------------------------------------------- explore

struct ExploreArgs {
    ModelOpts model;
    double sparsity = -1;
    std::string cost_model;
    std::optional<double> budget;
    std::optional<double> max_drop;
    std::string priority;
    std::string accuracy;
    std::vector<int> candidates;
    std::vector<std::string> configs;
    std::vector<int> taps;
    bool allow_taps = false;
    std::string timing;
    std::vector<std::string> scenarios;
    std::string out = "out";
};

json point_summary(const std::string& scenario, const DesignPoint& p) {
    return {{"scenario", scenario},
            {"n_fixed", p.n_fixed},
            {"config", p.config},
            {"area_mm2", p.ppa.area_mm2},
            {"tops", p.ppa.tops},
            {"tops_per_w", p.ppa.tops_per_w},
            {"avg_tops", p.avg_tops},
            {"avg_tops_per_w", p.avg_topspw},
            {"improve_tops", p.improve_tops},
            {"improve_topspw", p.improve_topspw},
            {"baseline", {{"area_mm2", p.baseline.area_mm2}, {"tops", p.baseline.tops}, {"tops_per_w", p.baseline.tops_per_w}}}};
}

int cmd_explore(const ExploreArgs& a, std::uint64_t seed) {
    Context c = make_context(a.model, seed, a.sparsity, a.candidates, a.taps, a.cost_model, {});
    const Preset& p = *c.preset;
    const AccuracyTable table = load_accuracy_table(a.accuracy.empty() ? p.accuracy_csv.empty()
                                                                              ? data_path("accuracy_mobilenet025.csv")
                                                                              : p.accuracy_csv
                                                                        : a.accuracy);
    const bool overrides = a.budget || a.max_drop || !a.priority.empty() || a.allow_taps || !a.configs.empty();
    std::vector<Scenario> runs;
    if (p.scenarios.empty() || overrides) {
        Scenario s{"cli", {}};
        if (!p.scenarios.empty() && a.scenarios.size() == 1)
            for (const auto& x : p.scenarios)
                if (x.name == a.scenarios.front()) s = x;
        s.constraints.candidates = p.candidates;
        s.constraints.timing = p.timing;
        if (a.budget) s.constraints.area_budget_mm2 = *a.budget;
        if (a.max_drop) s.constraints.max_accuracy_drop = *a.max_drop;
        if (!a.priority.empty()) s.constraints.priority = parse_priority(a.priority);
        if (a.allow_taps) s.constraints.allow_taps = true;
        if (!a.configs.empty()) s.constraints.configs = a.configs;
        runs.push_back(s);
    } else {
        for (const auto& s : p.scenarios)
            if (a.scenarios.empty() || std::find(a.scenarios.begin(), a.scenarios.end(), s.name) != a.scenarios.end())
                runs.push_back(s);
        if (runs.empty()) throw UsageError("no preset scenario matches --scenario");
    }
    if (!a.timing.empty())
        for (auto& s : runs) s.constraints.timing = parse_ffe_timing(a.timing);

    const fs::path out(a.out);
    json selection = json::array();
    std::ostringstream sel_csv;
    sel_csv << "scenario," << kReportCsvHeader << "\n";
    int infeasible = 0;
    for (const auto& s : runs) {
        const ExploreResult r = pareto_explore(c.space, c.cm, s.constraints, table);
        const fs::path dir = runs.size() == 1 ? out : out / s.name;
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        emit_report(r.points, ReportFormat::csv, (dir / "report.csv").string());
        emit_report(r.points, ReportFormat::json, (dir / "report.json").string());
        emit_report(r.points, ReportFormat::svg, (dir / "report.svg").string());
        std::vector<DesignPoint> front;
        for (auto i : r.pareto) front.push_back(r.points[i]);
        if (!front.empty()) emit_report(front, ReportFormat::csv, (dir / "pareto.csv").string());
        if (!r.best) {
            ++infeasible;
            selection.push_back({{"scenario", s.name}, {"feasible", false}, {"binding_constraints", r.binding_constraints}});
            log_event("error", "infeasible", {{"scenario", s.name}, {"binding_constraints", r.binding_constraints}});
            continue;
        }
        const DesignPoint& best = r.points[*r.best];
        json j = point_summary(s.name, best);
        j["feasible"] = true;
        j["ffe_timing"] = std::string(to_string(s.constraints.timing));
        json b = json::array();
        for (const auto& d : best.bindings) b.push_back({{"dataset", d.dataset}, {"tap", d.tap}, {"accuracy", d.accuracy}});
        j["bindings"] = b;
        selection.push_back(j);
        sel_csv << s.name << "," << report_csv({best}).substr(std::string(kReportCsvHeader).size() + 1);
        log_event("info", "selected", {{"scenario", s.name},
                                       {"n_fixed", best.n_fixed},
                                       {"config", best.config},
                                       {"area_mm2", best.ppa.area_mm2},
                                       {"improve_tops", best.improve_tops},
                                       {"improve_topspw", best.improve_topspw}});
    }
    write_json(out / "selection.json", {{"preset", p.name}, {"cost_model", to_json(c.cm)}, {"scenarios", selection}});
    write_text(out / "selection.csv", sel_csv.str());
    if (infeasible) {
        std::cerr << "fixyforge: " << infeasible << " scenario(s) have no feasible design point\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fixyforge: fixed-weight CNN feature-extractor compiler"};
    app.require_subcommand(1);
    std::uint64_t seed = 1;
    app.add_option("--seed", seed, "Seed for builtin weights and synthetic images")->capture_default_str();
    app.add_flag("-q,--quiet", g_quiet, "Only log warnings and errors");

    FreezeArgs fa;
    auto* freeze_cmd = app.add_subcommand("freeze", "Quantize, prune and lower the first N CONV units");
    add_model_options(freeze_cmd, fa.model);
    freeze_cmd->add_option("--n-fixed", fa.n_fixed, "CONV units to fix")->required();
    freeze_cmd->add_option("--sparsity", fa.sparsity, "Model-wide target sparsity of the fixed weights")
        ->check(CLI::Range(0.0, 0.999));
    freeze_cmd->add_option("--prune-below", fa.prune_below, "Remove int8 weights with |w| below this")
        ->check(CLI::Range(0, 127));
    freeze_cmd->add_option("--taps", fa.taps, "CONV units exposed as secondary outputs");
    freeze_cmd->add_option("--images", fa.images, "Calibration images (PGM/PPM or raw HWC bytes)")
        ->check(CLI::ExistingFile);
    freeze_cmd->add_option("--calib-images", fa.calib_images, "Synthetic calibration images when --images is absent")
        ->check(CLI::Range(0, 1000));
    freeze_cmd->add_option("--out", fa.out, "Output directory");

    SimArgs sa;
    auto* sim_cmd = app.add_subcommand("sim", "Run the functional and/or cycle-accurate simulator");
    sim_cmd->add_option("--pipeline", sa.pipeline, "pipeline.json from freeze")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--images", sa.images, "Input images")->required()->expected(1, -1)->check(CLI::ExistingFile);
    sim_cmd->add_option("--mode", sa.mode, "functional, cycles or both")
        ->check(CLI::IsMember({"functional", "cycles", "both"}));
    sim_cmd->add_option("--out", sa.out, "Output directory");

    EmitArgs ea;
    auto* emit_cmd = app.add_subcommand("emit", "Emit Verilog, testbench and vectors");
    emit_cmd->add_option("--pipeline", ea.pipeline, "pipeline.json from freeze")->required()->check(CLI::ExistingFile);
    emit_cmd->add_option("--images", ea.images, "Stimulus images")->check(CLI::ExistingFile);
    emit_cmd->add_option("--vectors", ea.vectors, "Synthetic stimulus images when --images is absent");
    emit_cmd->add_option("--out", ea.out, "Output directory");

    CalArgs ca;
    auto* cal_cmd = app.add_subcommand("calibrate", "Fit the cost model to published system points");
    add_model_options(cal_cmd, ca.model);
    cal_cmd->add_option("--anchor", ca.anchors, "N:CONFIG:AREA_MM2:TOPS_PER_W (repeatable)");
    cal_cmd->add_option("--sparsity", ca.sparsity, "Target sparsity of the fixed weights")->check(CLI::Range(0.0, 0.999));
    cal_cmd->add_option("--out", ca.out, "Output directory");

    PpaArgs pa;
    auto* ppa_cmd = app.add_subcommand("ppa", "Estimate FFE and system PPA for one split");
    add_model_options(ppa_cmd, pa.model);
    ppa_cmd->add_option("--n-fixed", pa.n_fixed, "CONV units fixed")->required();
    ppa_cmd->add_option("--sparsity", pa.sparsity, "Target sparsity of the fixed weights")->check(CLI::Range(0.0, 0.999));
    ppa_cmd->add_option("--cost-model", pa.cost_model, "Calibrated cost model JSON")->check(CLI::ExistingFile);
    ppa_cmd->add_option("--config", pa.configs, "NVDLA configurations (default all)");
    ppa_cmd->add_option("--ffe-timing", pa.timing, "cycle or hidden")->check(CLI::IsMember({"cycle", "hidden"}));
    ppa_cmd->add_option("--out", pa.out, "Output directory");

    ExploreArgs xa;
    auto* exp_cmd = app.add_subcommand("explore", "Search (n_fixed, NVDLA config) under constraints");
    add_model_options(exp_cmd, xa.model);
    exp_cmd->add_option("--sparsity", xa.sparsity, "Target sparsity of the fixed weights")->check(CLI::Range(0.0, 0.999));
    exp_cmd->add_option("--cost-model", xa.cost_model, "Calibrated cost model JSON")->check(CLI::ExistingFile);
    exp_cmd->add_option("--budget-mm2", xa.budget, "Total area budget")->check(CLI::PositiveNumber);
    exp_cmd->add_option("--max-acc-drop", xa.max_drop, "Largest accuracy drop per dataset, in points")
        ->check(CLI::NonNegativeNumber);
    exp_cmd->add_option("--priority", xa.priority, "tops or topspw")
        ->check(CLI::IsMember({"tops", "topspw", "throughput", "efficiency"}));
    exp_cmd->add_option("--accuracy", xa.accuracy, "Accuracy table CSV")->check(CLI::ExistingFile);
    exp_cmd->add_option("--candidates", xa.candidates, "n_fixed values to consider")->delimiter(',');
    exp_cmd->add_option("--configs", xa.configs, "NVDLA configurations to consider")->delimiter(',');
    exp_cmd->add_option("--taps", xa.taps, "Tap points available to datasets")->delimiter(',');
    exp_cmd->add_flag("--allow-taps", xa.allow_taps, "Let each dataset bind to a shallower tap");
    exp_cmd->add_option("--ffe-timing", xa.timing, "cycle or hidden")->check(CLI::IsMember({"cycle", "hidden"}));
    exp_cmd->add_option("--scenario", xa.scenarios, "Preset scenario(s) to run");
    exp_cmd->add_option("--out", xa.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*freeze_cmd) return cmd_freeze(fa, seed);
        if (*sim_cmd) return cmd_sim(sa);
        if (*emit_cmd) return cmd_emit(ea, seed);
        if (*cal_cmd) return cmd_calibrate(ca, seed);
        if (*ppa_cmd) return cmd_ppa(pa, seed);
        if (*exp_cmd) return cmd_explore(xa, seed);
    } catch (const UsageError& e) {
        std::cerr << "fixyforge: " << e.what() << "\n";
        return 2;
    } catch (const fixy::Error& e) {
        log_event("error", e.kind(), {{"message", e.what()}});
        return 1;
    } catch (const std::exception& e) {
        log_event("error", "internal", {{"message", e.what()}});
        return 1;
    }
    return 2;
}
