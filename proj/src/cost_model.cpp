#include "fixy/cost_model.hpp"

#include <fstream>
#include <set>

#include <Eigen/Dense>

namespace fixy {

FfeFeatures ffe_features(const FixedPipeline& p, std::size_t active_stages) {
    FfeFeatures f;
    active_stages = std::min(active_stages, p.stages.size());
    for (std::size_t i = 0; i < p.stages.size(); ++i) {
        const auto& s = p.stages[i];
        const auto& b = p.buffers[i];
        const HwCost c = stage_cost(s);
        f.scaler_adders += c.scaler_adders;
        f.tree_adders += c.tree_adders;
        f.flop_bits += c.flop_bits + b.shift_register_bits();
        f.sram_bits += b.sram_bits();
        if (i >= active_stages) continue;
        const auto outputs = static_cast<std::int64_t>(s.out_shape.h) * s.out_shape.w;
        const auto inputs = static_cast<std::int64_t>(s.in_shape.h) * s.in_shape.w;
        f.effective_ops += c.effective_ops_per_cycle * outputs;
        f.nominal_ops += c.nominal_ops_per_cycle * outputs;
        if (b.buffered()) f.sram_access_bits += inputs * (b.kernel_h + 1) * b.word_bits;
    }
    if (active_stages > 0) f.frame_cycles = p.schedule.frame_cycles;
    return f;
}

double CostModel::logic_units(const FfeFeatures& f) const {
    return scaler_adder_weight * f.scaler_adders + tree_adder_weight * f.tree_adders + flop_bit_weight * f.flop_bits;
}
double CostModel::dynamic_units(const FfeFeatures& f) const {
    return static_cast<double>(f.effective_ops) + sram_access_weight * f.sram_access_bits;
}
double CostModel::static_units(const FfeFeatures& f) const {
    return static_cast<double>(f.adders()) * f.frame_cycles;
}

namespace {

nlohmann::json residuals_json(const std::vector<Residual>& rs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : rs) a.push_back({{"anchor", r.anchor}, {"target", r.target}, {"fitted", r.fitted}});
    return a;
}

std::vector<Residual> residuals_from(const nlohmann::json& a) {
    std::vector<Residual> rs;
    for (const auto& r : a)
        rs.push_back({r.at("anchor").get<std::string>(), r.at("target").get<double>(), r.at("fitted").get<double>()});
    return rs;
}

} // namespace

nlohmann::json to_json(const CostModel& cm) {
    return {{"priors",
             {{"scaler_adder", cm.scaler_adder_weight},
              {"tree_adder", cm.tree_adder_weight},
              {"flop_bit", cm.flop_bit_weight},
              {"sram_access_bit", cm.sram_access_weight}}},
            {"clock_hz", cm.clock_hz},
            {"calibrated", cm.calibrated},
            {"area_logic_mm2", cm.area_logic_mm2},
            {"area_sram_mm2", cm.area_sram_mm2},
            {"energy_dynamic_pj", cm.energy_dynamic_pj},
            {"energy_static_pj", cm.energy_static_pj},
            {"coefficients",
             {{"area_per_scaler_adder_mm2", cm.area_per_scaler_adder()},
              {"area_per_tree_adder_mm2", cm.area_per_tree_adder()},
              {"area_per_flop_bit_mm2", cm.area_per_flop_bit()},
              {"area_per_sram_bit_mm2", cm.area_per_sram_bit()},
              {"energy_per_effective_op_pj", cm.energy_per_effective_op()},
              {"energy_per_sram_access_bit_pj", cm.energy_per_sram_access_bit()},
              {"energy_per_adder_cycle_pj", cm.energy_static_pj}}},
            {"area_residuals", residuals_json(cm.area_residuals)},
            {"energy_residuals", residuals_json(cm.energy_residuals)}};
}

CostModel cost_model_from_json(const nlohmann::json& j) {
    try {
        CostModel cm;
        if (j.contains("priors")) {
            const auto& p = j.at("priors");
            cm.scaler_adder_weight = p.value("scaler_adder", cm.scaler_adder_weight);
            cm.tree_adder_weight = p.value("tree_adder", cm.tree_adder_weight);
            cm.flop_bit_weight = p.value("flop_bit", cm.flop_bit_weight);
            cm.sram_access_weight = p.value("sram_access_bit", cm.sram_access_weight);
        }
        cm.clock_hz = j.value("clock_hz", kClockHz);
        cm.calibrated = j.value("calibrated", false);
        cm.area_logic_mm2 = j.value("area_logic_mm2", 0.0);
        cm.area_sram_mm2 = j.value("area_sram_mm2", 0.0);
        cm.energy_dynamic_pj = j.value("energy_dynamic_pj", 0.0);
        cm.energy_static_pj = j.value("energy_static_pj", 0.0);
        if (j.contains("area_residuals")) cm.area_residuals = residuals_from(j.at("area_residuals"));
        if (j.contains("energy_residuals")) cm.energy_residuals = residuals_from(j.at("energy_residuals"));
        for (double w : {cm.scaler_adder_weight, cm.tree_adder_weight, cm.flop_bit_weight, cm.sram_access_weight})
            if (!(w > 0)) throw ParameterError("cost-model priors must be positive");
        if (cm.calibrated)
            for (double v : {cm.area_logic_mm2, cm.area_sram_mm2, cm.energy_dynamic_pj, cm.energy_static_pj})
                if (!(v > 0)) throw CalibrationError("calibrated cost model has a non-positive coefficient");
        return cm;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed cost model: ") + e.what());
    }
}

CostModel load_cost_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cost model '" + path + "'");
    try {
        return cost_model_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("cost model '" + path + "': " + e.what());
    }
}

FfeEstimate estimate_ffe(const FfeFeatures& f, const CostModel& cm) {
    if (!cm.calibrated) throw CalibrationError("cost model is not calibrated");
    FfeEstimate e;
    if (f.frame_cycles == 0 && f.adders() == 0 && f.sram_bits == 0) return e;
    e.area_mm2 = cm.area_logic_mm2 * cm.logic_units(f) + cm.area_sram_mm2 * f.sram_bits;
    e.nominal_ops = f.nominal_ops;
    if (f.frame_cycles > 0) {
        e.frame_seconds = f.frame_cycles / cm.clock_hz;
        e.energy_per_frame_j =
            (cm.energy_dynamic_pj * cm.dynamic_units(f) + cm.energy_static_pj * cm.static_units(f)) * 1e-12;
        e.tops = f.nominal_ops / e.frame_seconds / 1e12;
        e.watts = e.energy_per_frame_j / e.frame_seconds;
    }
    return e;
}

FfeEstimate estimate_ffe(const FixedPipeline& p, const CostModel& cm, std::size_t active_stages) {
    if (p.stages.empty()) {
        if (!cm.calibrated) throw CalibrationError("cost model is not calibrated");
        return {};
    }
    return estimate_ffe(ffe_features(p, active_stages), cm);
}

CostModel calibrate(const std::vector<CalibrationAnchor>& anchors, CostModel cm) {
    std::set<int> distinct;
    for (const auto& a : anchors) distinct.insert(a.n_fixed);
    if (distinct.size() < 2)
        throw CalibrationError("calibration needs at least two anchors with distinct fixed-layer counts (got " +
                               std::to_string(distinct.size()) + ")");

    const auto n = static_cast<Eigen::Index>(anchors.size());
    Eigen::MatrixXd area(n, 2), energy(n, 2);
    Eigen::VectorXd area_t(n), energy_t(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& a = anchors[static_cast<std::size_t>(i)];
        area(i, 0) = cm.logic_units(a.features);
        area(i, 1) = static_cast<double>(a.features.sram_bits);
        area_t(i) = a.ffe_area_mm2;
        energy(i, 0) = cm.dynamic_units(a.features);
        energy(i, 1) = cm.static_units(a.features);
        energy_t(i) = a.ffe_energy_per_frame_j * 1e12;
    }
    auto solve = [](const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const char* what) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        if (qr.rank() < 2) throw CalibrationError(std::string(what) + " calibration is underdetermined");
        return Eigen::VectorXd(qr.solve(b));
    };
    const Eigen::VectorXd xa = solve(area, area_t, "area");
    const Eigen::VectorXd xe = solve(energy, energy_t, "energy");
    if (!(xa(0) > 0 && xa(1) > 0))
        throw CalibrationError("area fit gave non-positive coefficients (logic " + std::to_string(xa(0)) +
                               ", sram " + std::to_string(xa(1)) + ")");
    if (!(xe(0) > 0 && xe(1) > 0))
        throw CalibrationError("energy fit gave non-positive coefficients (dynamic " + std::to_string(xe(0)) +
                               ", static " + std::to_string(xe(1)) + ")");
    cm.area_logic_mm2 = xa(0);
    cm.area_sram_mm2 = xa(1);
    cm.energy_dynamic_pj = xe(0);
    cm.energy_static_pj = xe(1);
    cm.calibrated = true;
    cm.area_residuals.clear();
    cm.energy_residuals.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& label = anchors[static_cast<std::size_t>(i)].label;
        cm.area_residuals.push_back({label, area_t(i), area.row(i).dot(xa)});
        cm.energy_residuals.push_back({label, energy_t(i) * 1e-12, energy.row(i).dot(xe) * 1e-12});
    }
    return cm;
}

} // namespace fixy
