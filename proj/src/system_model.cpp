#include "fixy/system_model.hpp"

#include <algorithm>
#include <sstream>

#include "nvdla_table.inc"

namespace fixy {

std::string NvdlaSpec::row() const {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + fields[i];
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("bad number '" + s + "' in " + what);
    }
}

} // namespace

std::vector<NvdlaSpec> parse_nvdla_table(std::string_view csv) {
    std::stringstream in{std::string(csv)};
    std::string line;
    if (!std::getline(in, line) || line != "config,macs,buffer_kb,area_mm2,tops,tops_per_w")
        throw ParseError("NVDLA table header mismatch");
    std::vector<NvdlaSpec> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 6) throw ParseError("NVDLA row '" + line + "' does not have 6 fields");
        NvdlaSpec s;
        s.config = f[0];
        s.macs = static_cast<int>(to_double(f[1], "macs"));
        s.buffer_kb = static_cast<int>(to_double(f[2], "buffer_kb"));
        s.area_mm2 = to_double(f[3], "area_mm2");
        s.tops = to_double(f[4], "tops");
        s.tops_per_w = to_double(f[5], "tops_per_w");
        s.fields = std::move(f);
        rows.push_back(std::move(s));
    }
    if (rows.empty()) throw ParseError("NVDLA table is empty");
    return rows;
}

std::string_view nvdla_table_text() { return kNvdlaTableCsv; }

const std::vector<NvdlaSpec>& nvdla_table() {
    static const std::vector<NvdlaSpec> table = parse_nvdla_table(kNvdlaTableCsv);
    return table;
}

NvdlaSpec nvdla_lookup(std::string_view config) {
    for (const auto& r : nvdla_table())
        if (r.config == config) return r;
    throw ParameterError("unknown NVDLA configuration '" + std::string(config) + "' (expected A-F)");
}

Baseline iso_area_baseline(double area) {
    auto rows = nvdla_table();
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.area_mm2 < b.area_mm2; });
    std::size_t i = 0;
    while (i + 2 < rows.size() && area > rows[i + 1].area_mm2) ++i;
    const auto& a = rows[i];
    const auto& b = rows[i + 1];
    const double t = (area - a.area_mm2) / (b.area_mm2 - a.area_mm2);
    return {area, a.tops + t * (b.tops - a.tops), a.tops_per_w + t * (b.tops_per_w - a.tops_per_w)};
}

FfeTiming parse_ffe_timing(std::string_view s) {
    if (s == "cycle" || s == "cycle_model") return FfeTiming::cycle_model;
    if (s == "hidden") return FfeTiming::hidden;
    throw ParameterError("FFE timing must be cycle or hidden, got '" + std::string(s) + "'");
}

std::string_view to_string(FfeTiming t) { return t == FfeTiming::cycle_model ? "cycle" : "hidden"; }

SystemPpa compose_system(const ModelSplit& split, const FfeEstimate& ffe, const NvdlaSpec& nv, double utilization,
                         FfeTiming timing) {
    if (!(utilization > 0.0 && utilization <= 1.0)) throw ParameterError("utilization must be in (0,1]");
    SystemPpa s;
    const double feature_macs =
        static_cast<double>(split.fixed_macs) + static_cast<double>(split.programmable_part.feature_macs());
    s.total_ops = 2.0 * feature_macs;
    s.nvdla_ops = 2.0 * static_cast<double>(split.programmable_part.feature_macs());
    s.ffe_ops = s.total_ops - s.nvdla_ops;
    s.ffe_area_mm2 = ffe.area_mm2;
    s.nvdla_area_mm2 = nv.area_mm2;
    s.area_mm2 = ffe.area_mm2 + nv.area_mm2;
    s.ffe_seconds = ffe.frame_seconds;
    s.nvdla_seconds = s.nvdla_ops / (nv.tops * 1e12 * utilization);
    s.frame_seconds = s.nvdla_seconds;
    if (timing == FfeTiming::cycle_model && s.ffe_seconds > s.nvdla_seconds) {
        s.frame_seconds = s.ffe_seconds;
        s.ffe_bound = true;
    }
    if (s.frame_seconds == 0) s.frame_seconds = s.ffe_seconds;
    s.ffe_energy_j = ffe.energy_per_frame_j;
    s.nvdla_energy_j = s.nvdla_ops / (nv.tops_per_w * 1e12);
    if (s.frame_seconds > 0) {
        s.tops = s.total_ops / s.frame_seconds / 1e12;
        s.implied_utilization = s.nvdla_seconds * utilization / s.frame_seconds;
    }
    const double energy = s.ffe_energy_j + s.nvdla_energy_j;
    if (energy > 0) s.tops_per_w = s.total_ops / energy / 1e12;
    return s;
}

nlohmann::json to_json(const SystemPpa& s) {
    return {{"area_mm2", s.area_mm2},
            {"ffe_area_mm2", s.ffe_area_mm2},
            {"nvdla_area_mm2", s.nvdla_area_mm2},
            {"tops", s.tops},
            {"tops_per_w", s.tops_per_w},
            {"frame_seconds", s.frame_seconds},
            {"ffe_seconds", s.ffe_seconds},
            {"nvdla_seconds", s.nvdla_seconds},
            {"ffe_energy_j", s.ffe_energy_j},
            {"nvdla_energy_j", s.nvdla_energy_j},
            {"total_ops", s.total_ops},
            {"ffe_ops", s.ffe_ops},
            {"nvdla_ops", s.nvdla_ops},
            {"ffe_ops_share", s.ffe_ops_share()},
            {"ffe_energy_share", s.ffe_energy_share()},
            {"implied_utilization", s.implied_utilization},
            {"ffe_bound", s.ffe_bound}};
}

} // namespace fixy
