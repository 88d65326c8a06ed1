#include "fixy/preset.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fixy {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string resolve(const std::string& p, const std::string& base_dir) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    const fs::path local = fs::path(base_dir) / p;
    if (fs::exists(local)) return local.string();
    return data_path(p);
}

Constraints parse_constraints(const nlohmann::json& j, const Preset& p) {
    Constraints c;
    c.candidates = p.candidates;
    c.timing = p.timing;
    if (j.contains("budget_mm2")) c.area_budget_mm2 = j.at("budget_mm2").get<double>();
    if (j.contains("max_acc_drop")) c.max_accuracy_drop = j.at("max_acc_drop").get<double>();
    if (j.contains("priority")) c.priority = parse_priority(j.at("priority").get<std::string>());
    c.allow_taps = j.value("allow_taps", false);
    if (j.contains("configs")) c.configs = j.at("configs").get<std::vector<std::string>>();
    if (j.contains("candidates")) c.candidates = j.at("candidates").get<std::vector<int>>();
    if (j.contains("ffe_timing")) c.timing = parse_ffe_timing(j.at("ffe_timing").get<std::string>());
    return c;
}

} // namespace

std::string data_path(const std::string& name) {
    if (const char* env = std::getenv("FIXY_DATA_DIR"); env && *env) return (fs::path(env) / name).string();
    return (fs::path(FIXY_DATA_DIR) / name).string();
}

Model load_model(const ModelSource& src) {
    if (!src.manifest_path.empty()) {
        if (src.weights_path.empty()) throw ParameterError("a model manifest needs a weights blob");
        return parse_model(read_file(src.manifest_path), read_file(src.weights_path));
    }
    if (src.builtin != "mobilenet_v1") throw ParameterError("unknown builtin model '" + src.builtin + "'");
    WeightSource ws;
    ws.seed = src.seed;
    return build_mobilenet(src.alpha, src.input, ws);
}

Preset parse_preset(const nlohmann::json& j, const std::string& base_dir) {
    try {
        Preset p;
        p.name = j.value("name", "");
        if (j.contains("model")) {
            const auto& m = j.at("model");
            p.model.builtin = m.value("builtin", p.model.builtin);
            p.model.alpha = m.value("alpha", p.model.alpha);
            p.model.seed = m.value("seed", p.model.seed);
            if (m.contains("input")) {
                const auto in = m.at("input").get<std::vector<int>>();
                if (in.size() != 3) throw ParseError("model.input must be [h, w, c]");
                p.model.input = {in[0], in[1], in[2], 8};
            }
            if (m.contains("manifest")) p.model.manifest_path = resolve(m.at("manifest").get<std::string>(), base_dir);
            if (m.contains("weights")) p.model.weights_path = resolve(m.at("weights").get<std::string>(), base_dir);
        }
        p.sparsity = j.value("sparsity", p.sparsity);
        if (j.contains("candidates")) p.candidates = j.at("candidates").get<std::vector<int>>();
        if (j.contains("taps")) p.taps = j.at("taps").get<std::vector<int>>();
        if (j.contains("ffe_timing")) p.timing = parse_ffe_timing(j.at("ffe_timing").get<std::string>());
        p.accuracy_csv = resolve(j.value("accuracy_csv", std::string("accuracy_mobilenet025.csv")), base_dir);
        if (j.contains("priors")) p.priors_path = resolve(j.at("priors").get<std::string>(), base_dir);
        if (j.contains("anchors"))
            for (const auto& a : j.at("anchors"))
                p.anchors.push_back({a.at("n_fixed").get<int>(), a.at("config").get<std::string>(),
                                     a.at("area_mm2").get<double>(), a.at("tops_per_w").get<double>()});
        if (j.contains("scenarios"))
            for (const auto& s : j.at("scenarios")) p.scenarios.push_back({s.at("name").get<std::string>(), parse_constraints(s, p)});
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed preset: ") + e.what());
    }
}

Preset load_preset(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return parse_preset(nlohmann::json::parse(text), fs::path(path).parent_path().string());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("preset '" + path + "': " + e.what());
    }
}

DesignSpace preset_design_space(const Preset& p, const ShapedModel& shaped) {
    std::set<int> ns(p.candidates.begin(), p.candidates.end());
    for (const auto& a : p.anchors) ns.insert(a.n_fixed);
    for (const auto& s : p.scenarios) ns.insert(s.constraints.candidates.begin(), s.constraints.candidates.end());
    if (ns.empty())
        for (int n = 0; n <= conv_unit_count(shaped.model); ++n) ns.insert(n);
    FreezeOptions fo;
    fo.prune = p.sparsity > 0 ? PrunePolicy::target(p.sparsity) : PrunePolicy::exact_zero();
    fo.seed = p.model.seed;
    return build_design_space(shaped, {ns.begin(), ns.end()}, fo, p.taps);
}

CostModel calibrate_anchors(const DesignSpace& space, const std::vector<AnchorSpec>& anchors, const CostModel& priors) {
    std::vector<CalibrationAnchor> cal;
    for (const auto& a : anchors)
        cal.push_back(make_anchor(space.option(a.n_fixed), nvdla_lookup(a.config), a.area_mm2, a.tops_per_w));
    return calibrate(cal, priors);
}

} // namespace fixy
