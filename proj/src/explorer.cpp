#include "fixy/explorer.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace fixy {

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    return out;
}

double parse_number(const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw DataError("accuracy table: bad number '" + s + "'");
    return v;
}

} // namespace

AccuracyTable parse_accuracy_table(std::string_view csv) {
    std::stringstream in{std::string(csv)};
    std::string line;
    if (!std::getline(in, line)) throw DataError("accuracy table is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_fields(line);
    if (header.size() < 4 || header[0] != "fixed_layers" || header[1] != "adaptive_bn" ||
        header[2] != "fixed_ops_pct")
        throw DataError("accuracy table header must start with fixed_layers,adaptive_bn,fixed_ops_pct");
    AccuracyTable t;
    t.datasets.assign(header.begin() + 3, header.end());
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f.size() != header.size())
            throw DataError("accuracy row '" + line + "' has " + std::to_string(f.size()) + " fields, expected " +
                            std::to_string(header.size()));
        AccuracyRow r;
        r.fixed_layers = static_cast<int>(parse_number(f[0]));
        if (f[1] != "Y" && f[1] != "N") throw DataError("adaptive_bn must be Y or N, got '" + f[1] + "'");
        r.adaptive_bn = f[1] == "Y";
        parse_number(f[2]);
        for (std::size_t i = 3; i < f.size(); ++i) r.accuracy.push_back(parse_number(f[i]));
        r.fields = std::move(f);
        t.rows.push_back(std::move(r));
    }
    if (t.rows.empty()) throw DataError("accuracy table has no rows");
    return t;
}

AccuracyTable load_accuracy_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open accuracy table '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_accuracy_table(ss.str());
}

const AccuracyRow* AccuracyTable::find(int n) const {
    const AccuracyRow* first = nullptr;
    for (const auto& r : rows) {
        if (r.fixed_layers != n) continue;
        if (r.adaptive_bn) return &r;
        if (!first) first = &r;
    }
    return first;
}

std::vector<int> AccuracyTable::fixed_layer_values() const {
    std::set<int> s;
    for (const auto& r : rows) s.insert(r.fixed_layers);
    return {s.begin(), s.end()};
}

const FfeOption& DesignSpace::option(int n) const {
    for (const auto& o : options)
        if (o.n_fixed == n) return o;
    throw ParameterError("design space has no option with " + std::to_string(n) + " fixed units");
}

DesignSpace build_design_space(const ShapedModel& shaped, const std::vector<int>& n_values, const FreezeOptions& base,
                               const std::vector<int>& tap_points) {
    DesignSpace ds;
    ds.model = shaped;
    std::set<int> ns(n_values.begin(), n_values.end());
    for (int n : ns) {
        FfeOption o;
        o.n_fixed = n;
        o.split = split_model(shaped, n);
        FreezeOptions fo = base;
        fo.n_fixed = n;
        fo.taps.clear();
        fo.calibration_images = 0;
        const FixedPipeline p = freeze(shaped, fo, {});
        o.features = ffe_features(p);
        o.prune = p.prune;
        for (int t : tap_points) {
            if (t < 0 || t >= n) continue;
            std::size_t active = 0;
            while (active < p.stages.size() && p.stages[active].unit <= t) ++active;
            o.tap_features[t] = ffe_features(p, active);
            o.tap_splits.emplace(t, split_model(shaped, t));
        }
        ds.options.push_back(std::move(o));
    }
    return ds;
}

CalibrationAnchor make_anchor(const FfeOption& opt, const NvdlaSpec& nv, double total_area, double total_topspw) {
    CalibrationAnchor a;
    a.label = std::to_string(opt.n_fixed) + nv.config;
    a.n_fixed = opt.n_fixed;
    a.features = opt.features;
    a.ffe_area_mm2 = total_area - nv.area_mm2;
    const double total_ops = 2.0 * static_cast<double>(opt.split.fixed_macs + opt.split.programmable_part.feature_macs());
    const double prog_ops = 2.0 * static_cast<double>(opt.split.programmable_part.feature_macs());
    a.ffe_energy_per_frame_j = total_ops / (total_topspw * 1e12) - prog_ops / (nv.tops_per_w * 1e12);
    if (!(a.ffe_area_mm2 > 0) || !(a.ffe_energy_per_frame_j > 0))
        throw CalibrationError("anchor " + a.label + " leaves no area or energy for the FFE");
    return a;
}

Priority parse_priority(std::string_view s) {
    if (s == "tops" || s == "throughput") return Priority::throughput;
    if (s == "topspw" || s == "efficiency") return Priority::efficiency;
    throw ParameterError("priority must be tops or topspw, got '" + std::string(s) + "'");
}

std::string_view to_string(Priority p) { return p == Priority::throughput ? "tops" : "topspw"; }

bool dominates(const DesignPoint& a, const DesignPoint& b) {
    return a.avg_tops >= b.avg_tops && a.avg_topspw >= b.avg_topspw &&
           (a.avg_tops > b.avg_tops || a.avg_topspw > b.avg_topspw);
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::fixed << v;
    return os.str();
}

} // namespace

ExploreResult pareto_explore(const DesignSpace& space, const CostModel& cm, const Constraints& c,
                             const AccuracyTable& table) {
    std::vector<int> candidates = c.candidates.empty() ? table.fixed_layer_values() : c.candidates;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    std::vector<NvdlaSpec> configs;
    if (c.configs.empty()) configs = nvdla_table();
    else
        for (const auto& id : c.configs) configs.push_back(nvdla_lookup(id));

    const AccuracyRow* base = table.find(0);
    if (c.max_accuracy_drop && !base) throw DataError("accuracy table has no baseline row with 0 fixed layers");
    std::vector<std::size_t> columns; // dataset columns subject to the drop constraint
    for (std::size_t i = 0; i < table.datasets.size(); ++i)
        if (table.datasets[i] != table.source_task) columns.push_back(i);
    const auto table_ns = table.fixed_layer_values();

    ExploreResult res;
    bool any_area = false, any_accuracy = false;
    for (int n : candidates) {
        const AccuracyRow* row = table.find(n);
        if (!row) throw DataError("accuracy table has no row for " + std::to_string(n) + " fixed layers");
        const FfeOption& opt = space.option(n);
        for (const auto& nv : configs) {
            DesignPoint pt;
            pt.n_fixed = n;
            pt.config = nv.config;
            pt.accuracy.assign(row->fields.begin() + 3, row->fields.end());
            const FfeEstimate full = estimate_ffe(opt.features, cm);
            pt.ppa = compose_system(opt.split, full, nv, 1.0, c.timing);
            pt.baseline = iso_area_baseline(pt.ppa.area_mm2);
            pt.improve_tops = pt.ppa.tops / pt.baseline.tops;
            pt.improve_topspw = pt.ppa.tops_per_w / pt.baseline.tops_per_w;

            bool accuracy_ok = true;
            double sum_tops = 0.0, sum_topspw = 0.0;
            for (std::size_t col : columns) {
                DatasetBinding b;
                b.dataset = table.datasets[col];
                b.tap = n;
                const AccuracyRow* bound = row;
                if (c.max_accuracy_drop) {
                    auto drop_of = [&](const AccuracyRow* r) { return base->accuracy[col] - r->accuracy[col]; };
                    if (drop_of(row) > *c.max_accuracy_drop + 1e-9) {
                        bound = nullptr;
                        if (c.allow_taps)
                            for (auto it = table_ns.rbegin(); it != table_ns.rend(); ++it) {
                                if (*it >= n || (*it > 0 && !opt.tap_features.count(*it))) continue;
                                const AccuracyRow* r = table.find(*it);
                                if (drop_of(r) <= *c.max_accuracy_drop + 1e-9) {
                                    bound = r;
                                    b.tap = *it;
                                    break;
                                }
                            }
                        if (!bound) {
                            accuracy_ok = false;
                            pt.violations.push_back("accuracy drop on " + b.dataset + " = " + fmt(drop_of(row)) +
                                                    " > " + fmt(*c.max_accuracy_drop));
                            bound = row;
                        }
                    }
                    b.drop = drop_of(bound);
                }
                b.accuracy = bound->fields[3 + col];
                if (b.tap == n) {
                    b.ppa = pt.ppa;
                } else if (b.tap == 0) {
                    FfeEstimate gated;
                    gated.area_mm2 = full.area_mm2;
                    b.ppa = compose_system(split_model(space.model, 0), gated, nv, 1.0, c.timing);
                } else {
                    FfeEstimate e = estimate_ffe(opt.tap_features.at(b.tap), cm);
                    e.area_mm2 = full.area_mm2;
                    b.ppa = compose_system(opt.tap_splits.at(b.tap), e, nv, 1.0, c.timing);
                }
                sum_tops += b.ppa.tops;
                sum_topspw += b.ppa.tops_per_w;
                pt.bindings.push_back(std::move(b));
            }
            if (columns.empty() || !c.max_accuracy_drop) {
                pt.avg_tops = pt.ppa.tops;
                pt.avg_topspw = pt.ppa.tops_per_w;
            } else {
                pt.avg_tops = sum_tops / static_cast<double>(columns.size());
                pt.avg_topspw = sum_topspw / static_cast<double>(columns.size());
            }
            const bool area_ok = pt.ppa.area_mm2 <= c.area_budget_mm2 + 1e-9;
            if (!area_ok)
                pt.violations.insert(pt.violations.begin(), "area " + fmt(pt.ppa.area_mm2) + " mm2 > budget " +
                                                                fmt(c.area_budget_mm2));
            any_area = any_area || area_ok;
            any_accuracy = any_accuracy || accuracy_ok;
            pt.feasible = area_ok && accuracy_ok;
            res.points.push_back(std::move(pt));
        }
    }

    for (std::size_t i = 0; i < res.points.size(); ++i) {
        const auto& p = res.points[i];
        if (!p.feasible) continue;
        bool dominated = false;
        for (const auto& q : res.points)
            if (q.feasible && dominates(q, p)) {
                dominated = true;
                break;
            }
        if (!dominated) res.pareto.push_back(i);
        if (!res.best) {
            res.best = i;
            continue;
        }
        const auto& b = res.points[*res.best];
        const double mp = p.metric(c.priority), mb = b.metric(c.priority);
        if (mp > mb || (mp == mb && (p.ppa.area_mm2 < b.ppa.area_mm2 ||
                                     (p.ppa.area_mm2 == b.ppa.area_mm2 && p.n_fixed < b.n_fixed))))
            res.best = i;
    }
    if (!res.best) {
        if (!any_area) res.binding_constraints.push_back("area budget " + fmt(c.area_budget_mm2) + " mm2");
        if (!any_accuracy && c.max_accuracy_drop)
            res.binding_constraints.push_back("max accuracy drop " + fmt(*c.max_accuracy_drop) + "%");
        if (res.binding_constraints.empty())
            res.binding_constraints.push_back("area budget and accuracy drop jointly");
    }
    return res;
}

} // namespace fixy
