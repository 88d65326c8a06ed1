#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fixy/explorer.hpp"
#include "fixy/report.hpp"
#include "helpers.hpp"

using namespace fixy;

namespace {

const fixy::testing::Study& study() {
    static const auto s = fixy::testing::load_study("pareto_configs.json");
    return s;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_SUITE("ppa") {

TEST_CASE("nvdla rows are stored verbatim") {
    std::istringstream in(slurp(data_path("nvdla_configs.csv")));
    std::string line;
    std::getline(in, line);
    std::size_t i = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        REQUIRE(i < nvdla_table().size());
        CHECK(nvdla_table()[i].row() == line);
        CHECK(nvdla_lookup(line.substr(0, 1)).row() == line);
        ++i;
    }
    CHECK(i == 6);
    CHECK(nvdla_table_text() == slurp(data_path("nvdla_configs.csv")));
}

TEST_CASE("published configurations") {
    const auto c = nvdla_lookup("C");
    CHECK(c.macs == 256);
    CHECK(c.buffer_kb == 256);
    CHECK(c.area_mm2 == 1.00);
    CHECK(c.tops == 0.358);
    CHECK(c.tops_per_w == 5.6);
    CHECK(nvdla_lookup("A").row() == "A,64,128,0.55,0.056,2.0");
    CHECK(nvdla_lookup("F").row() == "F,2048,512,3.30,2.095,5.4");
    CHECK_THROWS_AS(nvdla_lookup("G"), ParameterError);
    CHECK_THROWS_AS(parse_nvdla_table("a,b\n1,2\n"), ParseError);
}

TEST_CASE("iso-area baseline") {
    // Baseline columns of the published system table.
    const double rows[][3] = {{2.59, 1.66, 5.83}, {3.48, 2.21, 5.29}, {1.79, 1.15, 6.31},
                              {2.68, 1.71, 5.77}, {3.08, 1.96, 5.53}};
    for (const auto& r : rows) {
        CAPTURE(r[0]);
        const auto b = iso_area_baseline(r[0]);
        CHECK(std::abs(b.tops - r[1]) <= 0.006);
        CHECK(std::abs(b.tops_per_w - r[2]) <= 0.006);
    }
    for (const auto& row : nvdla_table()) {
        CHECK(iso_area_baseline(row.area_mm2).tops == doctest::Approx(row.tops));
        CHECK(iso_area_baseline(row.area_mm2).tops_per_w == doctest::Approx(row.tops_per_w));
    }
}

TEST_CASE("no fixed layers is the bare accelerator") {
    const auto& s = study();
    const auto& opt = s.space.option(0);
    const auto e = nvdla_lookup("E");
    for (auto t : {FfeTiming::cycle_model, FfeTiming::hidden}) {
        const auto sys = compose_system(opt.split, estimate_ffe(opt.features, s.cm), e, 1.0, t);
        CHECK(sys.area_mm2 == e.area_mm2);
        CHECK(sys.tops == doctest::Approx(e.tops).epsilon(1e-12));
        CHECK(sys.tops_per_w == doctest::Approx(e.tops_per_w).epsilon(1e-12));
        CHECK(sys.ffe_area_mm2 == 0.0);
    }
}

TEST_CASE("calibration") {
    const auto& s = study();
    CHECK(s.cm.calibrated);
    for (const auto& r : s.cm.area_residuals) CHECK(std::abs(r.relative()) <= 0.01);
    for (const auto& r : s.cm.energy_residuals) CHECK(std::abs(r.relative()) <= 0.01);
    const auto one = std::vector<AnchorSpec>{s.preset.anchors.front()};
    CHECK_THROWS_AS(calibrate_anchors(s.space, one, CostModel{}), CalibrationError);
    const auto same = std::vector<AnchorSpec>{s.preset.anchors.front(), s.preset.anchors.front()};
    CHECK_THROWS_AS(calibrate_anchors(s.space, same, CostModel{}), CalibrationError);
    CHECK_THROWS_AS(estimate_ffe(s.space.option(7).features, CostModel{}), CalibrationError);
    const auto back = cost_model_from_json(to_json(s.cm));
    CHECK(back.area_logic_mm2 == s.cm.area_logic_mm2);
    CHECK(back.energy_static_pj == s.cm.energy_static_pj);
}

TEST_CASE("anchor FFE areas") {
    const auto& s = study();
    CHECK(estimate_ffe(s.space.option(7).features, s.cm).area_mm2 == doctest::Approx(0.79).epsilon(0.01));
    CHECK(estimate_ffe(s.space.option(11).features, s.cm).area_mm2 == doctest::Approx(1.68).epsilon(0.01));
    CHECK(estimate_ffe(s.space.option(4).features, s.cm).area_mm2 == doctest::Approx(0.38).epsilon(0.15));
}

TEST_CASE("FFE area grows with depth") {
    const auto& s = study();
    double prev = -1;
    for (const auto& opt : s.space.options) {
        const double a = estimate_ffe(opt.features, s.cm).area_mm2;
        CHECK(a > prev);
        prev = a;
    }
}

TEST_CASE("efficiency grows with depth at a fixed configuration") {
    const auto& s = study();
    for (const auto& cfg : {"C", "D", "E"}) {
        double prev = 0;
        for (const auto& opt : s.space.options) {
            const auto sys = compose_system(opt.split, estimate_ffe(opt.features, s.cm), nvdla_lookup(cfg), 1.0,
                                            FfeTiming::hidden);
            CHECK(sys.tops_per_w > prev);
            prev = sys.tops_per_w;
        }
    }
}

TEST_CASE("FFE frame time against the programmable part") {
    const auto& s = study();
    const auto& opt = s.space.option(7);
    const auto ffe = estimate_ffe(opt.features, s.cm);
    const auto cyc = compose_system(opt.split, ffe, nvdla_lookup("E"), 1.0, FfeTiming::cycle_model);
    const auto hid = compose_system(opt.split, ffe, nvdla_lookup("E"), 1.0, FfeTiming::hidden);
    // One pixel per cycle at 224x224 and 810 MHz is about 62 us before fills.
    CHECK(ffe.frame_seconds == doctest::Approx(opt.features.frame_cycles / kClockHz));
    CHECK(opt.features.frame_cycles > 224 * 224);
    CHECK(cyc.ffe_seconds > cyc.nvdla_seconds);
    CHECK(cyc.ffe_bound);
    CHECK(cyc.frame_seconds == cyc.ffe_seconds);
    CHECK_FALSE(hid.ffe_bound);
    CHECK(hid.frame_seconds == hid.nvdla_seconds);
    CHECK(hid.tops > cyc.tops);
}

TEST_CASE("accuracy table") {
    const std::string text = slurp(data_path("accuracy_mobilenet025.csv"));
    CHECK(fnv1a64(text) == 0x028b4f35a8e00976ULL);
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    const auto t = parse_accuracy_table(text);
    CHECK(t.datasets.size() == 7);
    CHECK(t.rows.size() == 7);
    REQUIRE(t.find(7) != nullptr);
    CHECK(t.find(7)->adaptive_bn);
    CHECK(t.find(7)->fields[2] == "44.3");
    CHECK(t.find(14)->fields[2] == "97.0");
    CHECK(t.find(5) == nullptr);
    CHECK_THROWS_AS(parse_accuracy_table("a,b\n"), DataError);
    CHECK_THROWS_AS(parse_accuracy_table("fixed_layers,adaptive_bn,fixed_ops_pct,x\n0,Q,0,1\n"), DataError);
}

TEST_CASE("pareto set matches brute force") {
    const auto& s = study();
    for (const auto& sc : s.preset.scenarios) {
        CAPTURE(sc.name);
        const auto r = pareto_explore(s.space, s.cm, sc.constraints, s.accuracy);
        CHECK(r.points.size() == sc.constraints.candidates.size() * 6);
        std::set<std::size_t> want;
        for (std::size_t i = 0; i < r.points.size(); ++i) {
            const auto& p = r.points[i];
            if (!p.feasible) continue;
            bool beaten = false;
            for (const auto& q : r.points)
                if (q.feasible && q.avg_tops >= p.avg_tops && q.avg_topspw >= p.avg_topspw &&
                    (q.avg_tops > p.avg_tops || q.avg_topspw > p.avg_topspw))
                    beaten = true;
            if (!beaten) want.insert(i);
        }
        CHECK(std::set<std::size_t>(r.pareto.begin(), r.pareto.end()) == want);
        REQUIRE(r.best);
        const auto pr = sc.constraints.priority;
        for (const auto& p : r.points)
            if (p.feasible) CHECK(p.metric(pr) <= r.points[*r.best].metric(pr));
        CHECK(want.count(*r.best) == 1);
    }
}

TEST_CASE("infeasible budget") {
    const auto& s = study();
    Constraints c = s.scenario("tops_2mm2").constraints;
    c.area_budget_mm2 = 0.5;
    const auto r = pareto_explore(s.space, s.cm, c, s.accuracy);
    CHECK_FALSE(r.best);
    CHECK(r.pareto.empty());
    REQUIRE(r.binding_constraints.size() == 1);
    CHECK(r.binding_constraints[0].find("area budget") != std::string::npos);
}

TEST_CASE("reports") {
    const auto& s = study();
    const auto r = pareto_explore(s.space, s.cm, s.scenario("tops_4mm2").constraints, s.accuracy);
    const auto csv = report_csv(r.points);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == kReportCsvHeader);
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == r.points.size());
    const auto j = report_json(r.points);
    REQUIRE(j.size() == r.points.size());
    CHECK(j[0].at("n_fixed") == r.points[0].n_fixed);
    CHECK(j[0].at("config") == r.points[0].config);
    const auto svg = report_svg(r.points);
    CHECK(svg.rfind("<svg", 0) == 0);
    std::size_t polylines = 0;
    for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++polylines;
    std::set<int> ns;
    for (const auto& p : r.points) ns.insert(p.n_fixed);
    CHECK(polylines == 2 * ns.size());
    CHECK_THROWS_AS(emit_report({}, ReportFormat::csv, "/tmp/x.csv"), ParameterError);
    CHECK_THROWS_AS(parse_report_format("pdf"), ParameterError);
}

}
