#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "wdsmpc/common.hpp"

namespace wdsmpc {

/// Storage tank geometry and level limits. Levels in m, area in m^2.
struct TankParams {
    std::string name;
    double area = 0.0;
    double level_min = 0.0;
    double level_max = 0.0;
    double level_ref = 0.0;  // safety target the controller tracks
    double level_init = 0.0;
};

/// Quadratic pump curves: head (m) and efficiency (fraction) vs flow (m^3/hr).
/// Coefficients ordered {a, b, c} for a*q^2 + b*q + c.
struct PumpCurve {
    std::array<double, 3> head_coeffs{0.0, 0.0, 0.0};
    std::array<double, 3> eff_coeffs{0.0, 0.0, 0.0};
    double eta_floor = 0.05;  // clamp keeps the energy cost finite
};

/// Binds a pump curve to one input channel of the network.
struct PumpSpec {
    int channel = -1;
    PumpCurve curve;
};

/// Per-actuator flow box, ordered like the input vector u. One-directional
/// pipes, so 0 <= flow_min <= flow_max.
struct ActuatorBounds {
    Vec flow_min;
    Vec flow_max;
};

/// Immutable description of the aggregated network: tanks, pump curves,
/// actuator boxes and the four signed routing matrices.
///
///   tank_input_map       (n_x x n_u)    inflow/outflow routing into tanks
///   tank_disturbance_map (n_x x n_d)    demand channels served from tanks
///   node_input_map       (n_node x n_u) node balance rows, entries in {-1,0,1}
///   node_disturbance_map (n_node x n_d) demand attachment, entries in {-1,0,1}
struct NetworkModel {
    std::vector<TankParams> tanks;
    std::vector<PumpSpec> pumps;
    ActuatorBounds bounds;
    Mat tank_input_map;
    Mat tank_disturbance_map;
    Mat node_input_map;
    Mat node_disturbance_map;

    int n_x() const { return static_cast<int>(tanks.size()); }
    int n_u() const { return static_cast<int>(tank_input_map.cols()); }
    int n_d() const { return static_cast<int>(tank_disturbance_map.cols()); }
    int n_node() const { return static_cast<int>(node_input_map.rows()); }

    Vec level_min() const { return tank_field(&TankParams::level_min); }
    Vec level_max() const { return tank_field(&TankParams::level_max); }
    Vec level_ref() const { return tank_field(&TankParams::level_ref); }
    Vec level_init() const { return tank_field(&TankParams::level_init); }

private:
    Vec tank_field(double TankParams::* f) const {
        Vec v(n_x());
        for (int i = 0; i < n_x(); ++i) v(i) = tanks[static_cast<size_t>(i)].*f;
        return v;
    }
};

/// Pressure head (m) delivered at flow q (m^3/hr).
inline double pump_head(const PumpCurve& curve, double q) {
    return curve.head_coeffs[0] * q * q + curve.head_coeffs[1] * q + curve.head_coeffs[2];
}

/// Efficiency fraction at flow q, clamped to [eta_floor, 1].
inline double pump_efficiency(const PumpCurve& curve, double q) {
    const double raw = curve.eff_coeffs[0] * q * q + curve.eff_coeffs[1] * q + curve.eff_coeffs[2];
    return std::clamp(raw, curve.eta_floor, 1.0);
}

/// Continuous-time level derivative (m/hr). State-independent: the tanks
/// integrate whatever the routing matrices deliver.
inline Vec tank_rhs(const NetworkModel& model, const Vec& u, const Vec& d) {
    if (u.size() != model.n_u())
        throw DimensionError("tank_rhs: input vector has size " + std::to_string(u.size()) +
                             ", model expects " + std::to_string(model.n_u()));
    if (d.size() != model.n_d())
        throw DimensionError("tank_rhs: disturbance vector has size " + std::to_string(d.size()) +
                             ", model expects " + std::to_string(model.n_d()));
    Vec net = model.tank_input_map * u + model.tank_disturbance_map * d;
    for (int i = 0; i < model.n_x(); ++i) net(i) /= model.tanks[static_cast<size_t>(i)].area;
    return net;
}

/// Node balance residual E*u + Lambda*d (m^3/hr); zero iff demand is met.
inline Vec node_residual(const NetworkModel& model, const Vec& u, const Vec& d) {
    if (u.size() != model.n_u() || d.size() != model.n_d())
        throw DimensionError("node_residual: vector sizes do not match the model");
    if (model.n_node() == 0) return Vec::Zero(0);
    return model.node_input_map * u + model.node_disturbance_map * d;
}

/// Checks every structural invariant; returns one message per violation
/// (empty means the model is usable). Never throws.
inline std::vector<std::string> validate_model(const NetworkModel& model) {
    std::vector<std::string> violations;
    auto fail = [&violations](const std::string& msg) { violations.push_back(msg); };

    const int nx = model.n_x();
    const int nu = model.n_u();
    const int nd = model.n_d();

    for (int i = 0; i < nx; ++i) {
        const TankParams& t = model.tanks[static_cast<size_t>(i)];
        const std::string who = "tank '" + (t.name.empty() ? std::to_string(i) : t.name) + "'";
        if (!(t.area > 0.0)) fail(who + ": area must be positive, got " + std::to_string(t.area));
        if (!(t.level_min < t.level_max)) fail(who + ": level_min must be below level_max");
        if (t.level_ref < t.level_min || t.level_ref > t.level_max)
            fail(who + ": level_ref outside [level_min, level_max]");
        if (t.level_init < t.level_min || t.level_init > t.level_max)
            fail(who + ": level_init outside [level_min, level_max]");
    }

    for (const PumpSpec& p : model.pumps) {
        const std::string who = "pump on channel " + std::to_string(p.channel);
        if (p.channel < 0 || p.channel >= nu) fail(who + ": channel index out of range");
        if (!(p.curve.head_coeffs[2] > 0.0)) fail(who + ": shutoff head c_p must be positive");
        if (!(p.curve.eta_floor > 0.0 && p.curve.eta_floor <= 1.0))
            fail(who + ": eta_floor must lie in (0, 1]");
    }

    if (model.bounds.flow_min.size() != nu || model.bounds.flow_max.size() != nu) {
        fail("actuator bounds must have one entry per input channel");
    } else {
        for (int c = 0; c < nu; ++c) {
            if (!(0.0 <= model.bounds.flow_min(c) && model.bounds.flow_min(c) <= model.bounds.flow_max(c)))
                fail("bounds for channel " + std::to_string(c) + " violate 0 <= flow_min <= flow_max");
        }
    }

    if (model.tank_input_map.rows() != nx) fail("tank_input_map must have one row per tank");
    if (model.tank_disturbance_map.rows() != nx) fail("tank_disturbance_map must have one row per tank");
    if (model.node_disturbance_map.rows() != model.n_node())
        fail("node_disturbance_map must have one row per node");
    if (model.node_input_map.rows() > 0 && model.node_input_map.cols() != nu)
        fail("node_input_map must have one column per input channel");
    if (model.node_disturbance_map.rows() > 0 && model.node_disturbance_map.cols() != nd)
        fail("node_disturbance_map must have one column per disturbance channel");

    auto check_incidence = [&fail](const Mat& m, const std::string& name) {
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) {
                const double v = m(r, c);
                if (v != -1.0 && v != 0.0 && v != 1.0)
                    fail(name + "(" + std::to_string(r) + "," + std::to_string(c) +
                         ") = " + std::to_string(v) + " is not in {-1, 0, 1}");
            }
    };
    check_incidence(model.node_input_map, "node_input_map");
    check_incidence(model.node_disturbance_map, "node_disturbance_map");

    for (int c = 0; c < nu; ++c) {
        const bool in_tanks = model.tank_input_map.rows() == nx && nx > 0 &&
                              model.tank_input_map.cols() == nu &&
                              model.tank_input_map.col(c).cwiseAbs().maxCoeff() > 0.0;
        const bool in_nodes = model.node_input_map.rows() > 0 &&
                              model.node_input_map.cols() == nu &&
                              model.node_input_map.col(c).cwiseAbs().maxCoeff() > 0.0;
        if (!in_tanks && !in_nodes)
            fail("input channel " + std::to_string(c) + " is routed nowhere (all-zero columns)");
    }

    return violations;
}

} // namespace wdsmpc
