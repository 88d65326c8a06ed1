#pragma once

// Design-point reports: CSV with a fixed column order, JSON and an SVG chart.

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixy/explorer.hpp"

namespace fixy {

inline constexpr const char* kReportCsvHeader =
    "n_fixed,config,area_mm2,tops,tops_per_w,improve_tops,improve_topspw,feasible";

std::string report_csv(const std::vector<DesignPoint>& points);
nlohmann::json report_json(const std::vector<DesignPoint>& points);
/// Two panels (TOPS and TOPS/W against area), one polyline per n_fixed.
std::string report_svg(const std::vector<DesignPoint>& points);

enum class ReportFormat { csv, json, svg };
ReportFormat parse_report_format(std::string_view s);

/// Writes the report; throws ParameterError on an empty list and IoError on failure.
void emit_report(const std::vector<DesignPoint>& points, ReportFormat format, const std::string& path);

} // namespace fixy
