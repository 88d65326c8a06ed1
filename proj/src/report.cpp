#include "fixy/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace fixy {

namespace {

std::string num(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

std::string report_csv(const std::vector<DesignPoint>& points) {
    std::ostringstream os;
    os << kReportCsvHeader << '\n';
    for (const auto& p : points)
        os << p.n_fixed << ',' << p.config << ',' << num(p.ppa.area_mm2, 2) << ',' << num(p.ppa.tops, 2) << ','
           << num(p.ppa.tops_per_w, 2) << ',' << num(p.improve_tops, 2) << ',' << num(p.improve_topspw, 2) << ','
           << (p.feasible ? "true" : "false") << '\n';
    return os.str();
}

nlohmann::json report_json(const std::vector<DesignPoint>& points) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : points) {
        nlohmann::json bindings = nlohmann::json::array();
        for (const auto& b : p.bindings)
            bindings.push_back({{"dataset", b.dataset},
                                {"tap", b.tap},
                                {"accuracy", b.accuracy},
                                {"drop", b.drop},
                                {"tops", b.ppa.tops},
                                {"tops_per_w", b.ppa.tops_per_w}});
        arr.push_back({{"n_fixed", p.n_fixed},
                       {"config", p.config},
                       {"system", to_json(p.ppa)},
                       {"baseline", {{"area_mm2", p.baseline.area_mm2},
                                     {"tops", p.baseline.tops},
                                     {"tops_per_w", p.baseline.tops_per_w}}},
                       {"improve_tops", p.improve_tops},
                       {"improve_topspw", p.improve_topspw},
                       {"avg_tops", p.avg_tops},
                       {"avg_topspw", p.avg_topspw},
                       {"accuracy", p.accuracy},
                       {"bindings", bindings},
                       {"feasible", p.feasible},
                       {"violations", p.violations}});
    }
    return arr;
}

std::string report_svg(const std::vector<DesignPoint>& points) {
    constexpr double kW = 420, kH = 300, kPad = 50;
    double max_area = 0, max_tops = 0, max_eff = 0;
    std::map<int, std::vector<const DesignPoint*>> series;
    for (const auto& p : points) {
        max_area = std::max(max_area, p.ppa.area_mm2);
        max_tops = std::max(max_tops, p.ppa.tops);
        max_eff = std::max(max_eff, p.ppa.tops_per_w);
        series[p.n_fixed].push_back(&p);
    }
    for (auto& [n, s] : series)
        std::sort(s.begin(), s.end(), [](auto a, auto b) { return a->ppa.area_mm2 < b->ppa.area_mm2; });
    max_area = max_area > 0 ? max_area * 1.05 : 1;
    max_tops = max_tops > 0 ? max_tops * 1.05 : 1;
    max_eff = max_eff > 0 ? max_eff * 1.05 : 1;
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * kW << "\" height=\"" << kH << "\">\n";
    for (int panel = 0; panel < 2; ++panel) {
        const double x0 = panel * kW;
        const double ymax = panel == 0 ? max_tops : max_eff;
        os << "<g id=\"" << (panel == 0 ? "tops" : "tops_per_w") << "\">\n";
        os << "<text x=\"" << x0 + kW / 2 << "\" y=\"20\" text-anchor=\"middle\">"
           << (panel == 0 ? "TOPS" : "TOPS/W") << " vs area (mm2)</text>\n";
        os << "<line x1=\"" << x0 + kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << x0 + kW - 10 << "\" y2=\""
           << kH - kPad << "\" stroke=\"black\"/>\n";
        os << "<line x1=\"" << x0 + kPad << "\" y1=\"30\" x2=\"" << x0 + kPad << "\" y2=\"" << kH - kPad
           << "\" stroke=\"black\"/>\n";
        int ci = 0;
        for (const auto& [n, s] : series) {
            const char* color = colors[ci++ % 10];
            os << "<polyline class=\"series\" data-n-fixed=\"" << n << "\" fill=\"none\" stroke=\"" << color
               << "\" points=\"";
            for (std::size_t i = 0; i < s.size(); ++i) {
                const double v = panel == 0 ? s[i]->ppa.tops : s[i]->ppa.tops_per_w;
                const double x = x0 + kPad + s[i]->ppa.area_mm2 / max_area * (kW - kPad - 10);
                const double y = kH - kPad - v / ymax * (kH - kPad - 30);
                os << (i ? " " : "") << num(x, 1) << ',' << num(y, 1);
            }
            os << "\"/>\n";
        }
        os << "</g>\n";
    }
    os << "</svg>\n";
    return os.str();
}

ReportFormat parse_report_format(std::string_view s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    if (s == "svg") return ReportFormat::svg;
    throw ParameterError("report format must be csv, json or svg");
}

void emit_report(const std::vector<DesignPoint>& points, ReportFormat format, const std::string& path) {
    if (points.empty()) throw ParameterError("no design points to report");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    switch (format) {
    case ReportFormat::csv: out << report_csv(points); break;
    case ReportFormat::json: out << report_json(points).dump(2) << '\n'; break;
    case ReportFormat::svg: out << report_svg(points); break;
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

} // namespace fixy
