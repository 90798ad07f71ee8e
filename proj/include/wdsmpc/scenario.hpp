#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wdsmpc/common.hpp"
#include "wdsmpc/network.hpp"
#include "wdsmpc/objective.hpp"

namespace wdsmpc {

/// One self-contained case: network, objective weights, demand/tariff
/// series and the initial previous input. Levels at time zero live in the
/// tanks' level_init.
struct Scenario {
    std::string name;
    NetworkModel model;
    Weights weights;
    Mat demand;  // n_d x series length, m^3/hr, hourly samples
    Vec tariff;  // series length, currency/kWh
    Vec u_prev_init;

    int series_length() const { return static_cast<int>(tariff.size()); }
};

/// Shortest decimal string that round-trips the double exactly.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline uint64_t fnv1a(const std::string& bytes, uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Synthetic default scenario ("default-2tank")
//
// One reservoir feeding two parallel district branches: pump i lifts
// reservoir water into tank i, valve i releases stored water to district
// i's metered offtake node. Both offtakes draw the constant contracted
// rate d1; the diurnal patterns d2 and d3 are served straight from the
// tanks through gravity lines. Constant node draws keep the per-step node
// balance attainable for rate-blocked controllers; the time variability
// that drives the storage decisions enters through d2, d3 and the tariff.
// ---------------------------------------------------------------------------

inline constexpr double kDefaultNodeDemand = 35.0;  // m^3/hr per offtake

/// Diurnal district demand, morning and evening peaks (m^3/hr).
inline double default_demand_pattern1(int hour) {
    const double tau = static_cast<double>(hour % 24);
    const double pi = 3.14159265358979323846;
    return 28.0 + 8.0 * std::sin(2.0 * pi * (tau - 9.0) / 24.0) +
           6.0 * std::exp(-(tau - 8.0) * (tau - 8.0) / 4.0) +
           5.0 * std::exp(-(tau - 19.0) * (tau - 19.0) / 6.0);
}

/// Evening-heavy district demand (m^3/hr).
inline double default_demand_pattern2(int hour) {
    const double tau = static_cast<double>(hour % 24);
    const double pi = 3.14159265358979323846;
    return 20.0 + 6.0 * std::sin(2.0 * pi * (tau - 12.0) / 24.0) +
           6.0 * std::exp(-(tau - 20.0) * (tau - 20.0) / 5.0);
}

/// Three-level peak / shoulder / off-peak tariff (currency per kWh).
inline double default_tariff(int hour) {
    const int tau = hour % 24;
    if (tau <= 6 || tau == 23) return 0.08;
    if (tau >= 17 && tau <= 21) return 0.30;
    return 0.14;
}

inline Scenario make_default_scenario(int hours = 120) {
    Scenario sc;
    sc.name = "default-2tank";

    sc.model.tanks = {
        {"tank1", 200.0, 1.0, 6.0, 3.5, 3.5},
        {"tank2", 200.0, 1.0, 6.0, 3.5, 3.5},
    };
    PumpCurve curve;
    curve.head_coeffs = {-0.0009, -0.02, 60.0};
    curve.eff_coeffs = {-0.00008, 0.012, 0.35};  // peaks at 0.80 near 75 m^3/hr
    curve.eta_floor = 0.05;
    sc.model.pumps = {{2, curve}, {3, curve}};

    sc.model.bounds.flow_min = Vec::Zero(4);
    sc.model.bounds.flow_max = Vec::Constant(4, 150.0);

    // u = [qv1 qv2 qp1 qp2]: pump i fills tank i, valve i drains it.
    sc.model.tank_input_map = Mat{{-1.0, 0.0, 1.0, 0.0}, {0.0, -1.0, 0.0, 1.0}};
    // d2 and d3 are drawn straight from the tanks through gravity lines.
    sc.model.tank_disturbance_map = Mat{{0.0, -1.0, 0.0}, {0.0, 0.0, -1.0}};
    // One metered offtake node per district, both contracted at d1.
    sc.model.node_input_map = Mat{{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}};
    sc.model.node_disturbance_map = Mat{{-1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}};

    sc.weights = Weights{1.0, 0.15, 0.01, 1e4};

    sc.demand.resize(3, hours);
    sc.tariff.resize(hours);
    for (int h = 0; h < hours; ++h) {
        sc.demand(0, h) = kDefaultNodeDemand;
        sc.demand(1, h) = default_demand_pattern1(h);
        sc.demand(2, h) = default_demand_pattern2(h);
        sc.tariff(h) = default_tariff(h);
    }

    // Previous input balancing the offtakes, pumps near their mean duty.
    sc.u_prev_init = Vec{{35.0, 35.0, 64.0, 56.0}};
    return sc;
}

// ---------------------------------------------------------------------------
// CSV series
// ---------------------------------------------------------------------------

/// Reads `hour,v1[,v2,...]` with a header row and contiguous 0-based hours.
/// Returns one row per value column.
inline Mat read_series_csv(const std::filesystem::path& path, int expected_columns) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open series file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ScenarioError(path.string() + ": empty file");

    std::vector<std::vector<double>> rows;
    int hour = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ScenarioError(path.string() + ": cannot parse '" + cell + "' as a number");
            }
        }
        if (static_cast<int>(row.size()) != expected_columns + 1)
            throw ScenarioError(path.string() + ": expected " + std::to_string(expected_columns + 1) +
                                " columns, got " + std::to_string(row.size()));
        if (static_cast<int>(std::lround(row[0])) != hour)
            throw ScenarioError(path.string() + ": hours must be contiguous from 0, got " + cell);
        rows.push_back(row);
        ++hour;
    }
    if (rows.empty()) throw ScenarioError(path.string() + ": no data rows");

    Mat series(expected_columns, static_cast<int>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < expected_columns; ++c)
            series(c, static_cast<int>(r)) = rows[r][static_cast<size_t>(c) + 1];
    return series;
}

inline void write_series_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                             const Mat& series) {
    std::ofstream out(path);
    if (!out) throw ScenarioError("cannot write series file " + path.string());
    out << "hour";
    for (const std::string& n : names) out << "," << n;
    out << "\n";
    for (int h = 0; h < series.cols(); ++h) {
        out << h;
        for (int c = 0; c < series.rows(); ++c) out << "," << format_double(series(c, h));
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Scenario JSON
// ---------------------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known) throw ScenarioError("unknown key '" + it.key() + "' in " + where);
    }
}

inline Mat matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ScenarioError(where + " must be a non-empty nested array");
    const auto cols = j.front().size();
    Mat m(static_cast<int>(j.size()), static_cast<int>(cols));
    for (size_t r = 0; r < j.size(); ++r) {
        if (j[r].size() != cols) throw ScenarioError(where + " rows have inconsistent lengths");
        for (size_t c = 0; c < cols; ++c) m(static_cast<int>(r), static_cast<int>(c)) = j[r][c].get<double>();
    }
    return m;
}

inline json matrix_to_json(const Mat& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

inline Vec vector_from_json(const json& j) {
    Vec v(static_cast<int>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
    return v;
}

inline json vector_to_json(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

} // namespace detail

/// Extra checks beyond validate_model: series, weights and initial data.
inline std::vector<std::string> validate_scenario(const Scenario& sc) {
    std::vector<std::string> v = validate_model(sc.model);
    if (sc.demand.rows() != sc.model.n_d())
        v.push_back("demand series must have one row per disturbance channel");
    if (sc.demand.cols() != sc.tariff.size())
        v.push_back("demand and tariff series lengths differ");
    if (sc.tariff.size() > 0 && sc.tariff.minCoeff() <= 0.0)
        v.push_back("tariff prices must all be positive");
    if (sc.u_prev_init.size() != sc.model.n_u())
        v.push_back("initial u_prev must have one entry per input channel");
    if (!(sc.weights.economic >= 0.0 && sc.weights.safety >= 0.0 && sc.weights.smoothness >= 0.0))
        v.push_back("objective weights must be nonnegative");
    if (!(sc.weights.slack > std::max({sc.weights.economic, sc.weights.safety, sc.weights.smoothness})))
        v.push_back("slack weight must exceed every objective weight");
    return v;
}

inline nlohmann::json scenario_to_json(const Scenario& sc, const std::string& demand_csv = "demand.csv",
                                       const std::string& tariff_csv = "tariff.csv") {
    using detail::matrix_to_json;
    using detail::vector_to_json;
    nlohmann::json j;
    j["name"] = sc.name;
    j["tanks"] = nlohmann::json::array();
    for (const TankParams& t : sc.model.tanks)
        j["tanks"].push_back({{"name", t.name},
                              {"area", t.area},
                              {"level_min", t.level_min},
                              {"level_max", t.level_max},
                              {"level_ref", t.level_ref}});
    j["pumps"] = nlohmann::json::array();
    for (const PumpSpec& p : sc.model.pumps)
        j["pumps"].push_back({{"channel", p.channel},
                              {"head_coeffs", {p.curve.head_coeffs[0], p.curve.head_coeffs[1], p.curve.head_coeffs[2]}},
                              {"eff_coeffs", {p.curve.eff_coeffs[0], p.curve.eff_coeffs[1], p.curve.eff_coeffs[2]}},
                              {"eta_floor", p.curve.eta_floor}});
    j["bounds"] = {{"flow_min", vector_to_json(sc.model.bounds.flow_min)},
                   {"flow_max", vector_to_json(sc.model.bounds.flow_max)}};
    j["topology"] = {{"tank_input_map", matrix_to_json(sc.model.tank_input_map)},
                     {"tank_disturbance_map", matrix_to_json(sc.model.tank_disturbance_map)},
                     {"node_input_map", matrix_to_json(sc.model.node_input_map)},
                     {"node_disturbance_map", matrix_to_json(sc.model.node_disturbance_map)}};
    j["initial"] = {{"levels", vector_to_json(sc.model.level_init())},
                    {"u_prev", vector_to_json(sc.u_prev_init)}};
    j["weights"] = {{"economic", sc.weights.economic},
                    {"safety", sc.weights.safety},
                    {"smoothness", sc.weights.smoothness},
                    {"slack", sc.weights.slack}};
    j["profiles"] = {{"demand_csv", demand_csv}, {"tariff_csv", tariff_csv}};
    return j;
}

/// Writes scenario.json plus the demand/tariff CSVs into dir.
inline void save_scenario(const Scenario& sc, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "scenario.json");
    if (!out) throw ScenarioError("cannot write " + (dir / "scenario.json").string());
    out << scenario_to_json(sc).dump(2) << "\n";

    std::vector<std::string> dnames;
    for (int c = 0; c < sc.model.n_d(); ++c) dnames.push_back("d" + std::to_string(c + 1));
    write_series_csv(dir / "demand.csv", dnames, sc.demand);
    write_series_csv(dir / "tariff.csv", {"price"}, sc.tariff.transpose());
}

/// Loads and structurally checks a scenario; throws ScenarioError with the
/// parse location or the first offending key on malformed input. Model
/// invariant violations are reported by validate_scenario, not here.
inline Scenario load_scenario(const std::filesystem::path& json_path) {
    using detail::json;
    using detail::matrix_from_json;
    using detail::reject_unknown_keys;
    using detail::vector_from_json;

    std::ifstream in(json_path);
    if (!in) throw ScenarioError("cannot open scenario file " + json_path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ScenarioError("scenario parse error in " + json_path.string() + ": " + e.what());
    }

    try {
        reject_unknown_keys(j, {"name", "tanks", "pumps", "bounds", "topology", "initial", "weights", "profiles"},
                            "scenario");
        Scenario sc;
        sc.name = j.at("name").get<std::string>();

        const json& initial = j.at("initial");
        reject_unknown_keys(initial, {"levels", "u_prev"}, "initial");
        const Vec levels = vector_from_json(initial.at("levels"));

        int ti = 0;
        for (const json& tj : j.at("tanks")) {
            reject_unknown_keys(tj, {"name", "area", "level_min", "level_max", "level_ref"}, "tanks[]");
            TankParams t;
            t.name = tj.at("name").get<std::string>();
            t.area = tj.at("area").get<double>();
            t.level_min = tj.at("level_min").get<double>();
            t.level_max = tj.at("level_max").get<double>();
            t.level_ref = tj.at("level_ref").get<double>();
            if (ti >= levels.size()) throw ScenarioError("initial.levels has fewer entries than tanks");
            t.level_init = levels(ti++);
            sc.model.tanks.push_back(t);
        }
        if (ti != levels.size()) throw ScenarioError("initial.levels has more entries than tanks");

        for (const json& pj : j.at("pumps")) {
            reject_unknown_keys(pj, {"channel", "head_coeffs", "eff_coeffs", "eta_floor"}, "pumps[]");
            PumpSpec p;
            p.channel = pj.at("channel").get<int>();
            for (int i = 0; i < 3; ++i) {
                p.curve.head_coeffs[static_cast<size_t>(i)] = pj.at("head_coeffs").at(static_cast<size_t>(i)).get<double>();
                p.curve.eff_coeffs[static_cast<size_t>(i)] = pj.at("eff_coeffs").at(static_cast<size_t>(i)).get<double>();
            }
            p.curve.eta_floor = pj.at("eta_floor").get<double>();
            sc.model.pumps.push_back(p);
        }

        const json& bounds = j.at("bounds");
        reject_unknown_keys(bounds, {"flow_min", "flow_max"}, "bounds");
        sc.model.bounds.flow_min = vector_from_json(bounds.at("flow_min"));
        sc.model.bounds.flow_max = vector_from_json(bounds.at("flow_max"));

        const json& topo = j.at("topology");
        reject_unknown_keys(topo, {"tank_input_map", "tank_disturbance_map", "node_input_map", "node_disturbance_map"},
                            "topology");
        sc.model.tank_input_map = matrix_from_json(topo.at("tank_input_map"), "tank_input_map");
        sc.model.tank_disturbance_map = matrix_from_json(topo.at("tank_disturbance_map"), "tank_disturbance_map");
        sc.model.node_input_map = matrix_from_json(topo.at("node_input_map"), "node_input_map");
        sc.model.node_disturbance_map = matrix_from_json(topo.at("node_disturbance_map"), "node_disturbance_map");

        sc.u_prev_init = vector_from_json(initial.at("u_prev"));

        const json& w = j.at("weights");
        reject_unknown_keys(w, {"economic", "safety", "smoothness", "slack"}, "weights");
        sc.weights.economic = w.at("economic").get<double>();
        sc.weights.safety = w.at("safety").get<double>();
        sc.weights.smoothness = w.at("smoothness").get<double>();
        sc.weights.slack = w.at("slack").get<double>();

        const json& profiles = j.at("profiles");
        reject_unknown_keys(profiles, {"demand_csv", "tariff_csv"}, "profiles");
        const auto dir = json_path.parent_path();
        sc.demand = read_series_csv(dir / profiles.at("demand_csv").get<std::string>(), sc.model.n_d());
        const Mat t = read_series_csv(dir / profiles.at("tariff_csv").get<std::string>(), 1);
        sc.tariff = t.row(0).transpose();
        return sc;
    } catch (const json::exception& e) {
        throw ScenarioError("scenario " + json_path.string() + ": " + e.what());
    }
}

/// Stable content hash spanning the model, weights and series; used to make
/// sure compared logs came from the same scenario.
inline std::string scenario_hash(const Scenario& sc) {
    std::string blob = scenario_to_json(sc).dump();
    for (int h = 0; h < sc.demand.cols(); ++h) {
        for (int c = 0; c < sc.demand.rows(); ++c) blob += format_double(sc.demand(c, h)) + ",";
        blob += format_double(sc.tariff(h)) + ";";
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(detail::fnv1a(blob)));
    return std::string(buf);
}

} // namespace wdsmpc
