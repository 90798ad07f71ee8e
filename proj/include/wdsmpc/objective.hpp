#pragma once

#include <cmath>

#include "wdsmpc/common.hpp"
#include "wdsmpc/network.hpp"

namespace wdsmpc {

/// Objective weights. The slack weight must dominate the others so slacks
/// only move when the hard problem has no other way out.
struct Weights {
    double economic = 1.0;
    double safety = 1.0;
    double smoothness = 1.0;
    double slack = 1e4;
};

namespace detail {

/// gamma/1000 with gamma the specific weight of water (9810 N/m^3); turns
/// (m^3/s * m) into kW.
inline constexpr double kPumpPowerConstant = 9.81;

/// Half-width of the smoothed absolute value used in the economic term.
inline constexpr double kAbsSmoothing = 2e-4;

/// C1 replacement for |p| (Huber form): quadratic inside the band, exact
/// outside it. Exactly zero at p = 0, within kAbsSmoothing/2 of |p|
/// everywhere, and its curvature is bounded by 1/kAbsSmoothing so the
/// quasi-Newton solver never meets a near-kink at pump shutoff.
inline double smooth_abs(double p) {
    const double a = std::abs(p);
    if (a >= kAbsSmoothing) return a - 0.5 * kAbsSmoothing;
    return 0.5 * p * p / kAbsSmoothing;
}

inline double smooth_abs_derivative(double p) {
    if (p >= kAbsSmoothing) return 1.0;
    if (p <= -kAbsSmoothing) return -1.0;
    return p / kAbsSmoothing;
}

/// Energy cost argument for one pump: power (kW) times tariff, before the
/// absolute value. Flow arrives in m^3/hr; power wants m^3/s.
inline double pump_cost_argument(const PumpCurve& curve, double q, double tariff) {
    const double head = pump_head(curve, q);
    const double eta = pump_efficiency(curve, q);
    return kPumpPowerConstant * (q / 3600.0) * head / eta * tariff;
}

/// d/dq of pump_cost_argument. The efficiency clamp contributes zero slope
/// outside its active band.
inline double pump_cost_argument_derivative(const PumpCurve& curve, double q, double tariff) {
    const double head = pump_head(curve, q);
    const double dhead = 2.0 * curve.head_coeffs[0] * q + curve.head_coeffs[1];
    const double raw_eta = curve.eff_coeffs[0] * q * q + curve.eff_coeffs[1] * q + curve.eff_coeffs[2];
    const double eta = pump_efficiency(curve, q);
    const bool clamped = raw_eta <= curve.eta_floor || raw_eta >= 1.0;
    const double deta = clamped ? 0.0 : 2.0 * curve.eff_coeffs[0] * q + curve.eff_coeffs[1];
    const double scale = kPumpPowerConstant / 3600.0 * tariff;
    return scale * ((head + q * dhead) * eta - q * head * deta) / (eta * eta);
}

} // namespace detail

/// Pumping energy cost for one step (currency): sum over pump channels of
/// |power * tariff| * dt, with power = 9.81 * (q/3600) * H(q) / eta(q) in kW.
inline double economic_stage_cost(const NetworkModel& model, const Vec& u, double tariff, double dt) {
    double cost = 0.0;
    for (const PumpSpec& p : model.pumps)
        cost += detail::smooth_abs(detail::pump_cost_argument(p.curve, u(p.channel), tariff)) * dt;
    return cost;
}

/// Squared deviation from the desired tank levels.
inline double safety_stage_cost(const Vec& x, const Vec& x_ref) {
    if (x.size() != x_ref.size()) throw DimensionError("safety_stage_cost: size mismatch");
    return (x - x_ref).squaredNorm();
}

/// Squared input rate of change.
inline double smoothness_stage_cost(const Vec& du) { return du.squaredNorm(); }

/// Weighted horizon sum of the three stage costs plus the linear slack
/// penalty. X holds Np+1 state columns; U, DU hold Np columns. The safety
/// term at stage j reads the successor state X[j+1] (the one stage j's
/// input influences).
inline double total_cost(const NetworkModel& model, const Weights& weights, const Vec& x_ref,
                         const Vec& tariff_forecast, double dt, const Mat& X, const Mat& U,
                         const Mat& DU, const Vec& xi) {
    const int np = static_cast<int>(U.cols());
    if (X.cols() != np + 1 || DU.cols() != np || tariff_forecast.size() != np)
        throw DimensionError("total_cost: sequence lengths are inconsistent");
    double cost = 0.0;
    for (int j = 0; j < np; ++j) {
        cost += weights.economic * economic_stage_cost(model, U.col(j), tariff_forecast(j), dt);
        cost += weights.safety * safety_stage_cost(X.col(j + 1), x_ref);
        cost += weights.smoothness * smoothness_stage_cost(DU.col(j));
    }
    cost += weights.slack * xi.sum();
    return cost;
}

} // namespace wdsmpc
