#pragma once

#include <string>
#include <utility>

#include "wdsmpc/blocking.hpp"
#include "wdsmpc/common.hpp"
#include "wdsmpc/integrator.hpp"
#include "wdsmpc/network.hpp"
#include "wdsmpc/objective.hpp"
#include "wdsmpc/scenario.hpp"

namespace wdsmpc {

/// One frozen receding-horizon instance: forecasts sliced at step k, the
/// expansion matrix built once, and the decision-vector layout
///
///   z = [ dU_bar block 0 (n_u entries), ..., dU_bar block Nc-1,
///         xi_lower (n_x entries), xi_upper (n_x entries) ]
///
/// dU_bar entries are input rates (m^3/hr per step); xi are per-horizon
/// tank-level slacks (m), shared across all steps of the horizon.
struct OcpProblem {
    NetworkModel model;
    Horizon horizon;
    BlockingSchedule schedule;
    ExpansionMatrix expansion;
    Weights weights;
    Mat demand_forecast;  // n_d x Np
    Vec tariff_forecast;  // Np
    Vec x0;
    Vec u_prev;

    int n_delta() const { return schedule.nc * model.n_u(); }
    int n_slack() const { return 2 * model.n_x(); }
    int n_z() const { return n_delta() + n_slack(); }
};

/// Trajectories implied by a decision vector.
struct DecodedTrajectories {
    Mat DU;  // n_u x Np input rates
    Mat U;   // n_u x Np absolute inputs
    Mat X;   // n_x x (Np+1) levels
    Vec xi;  // 2*n_x slacks [lower..., upper...]
};

inline OcpProblem assemble(const Scenario& scenario, const BlockingSchedule& schedule,
                           const Horizon& horizon, const Vec& x0, const Vec& u_prev, int k) {
    if (schedule.np != horizon.np)
        throw ScheduleError("assemble: schedule covers " + std::to_string(schedule.np) +
                            " steps, horizon expects " + std::to_string(horizon.np));
    if (k < 0 || k + horizon.np > scenario.series_length())
        throw HorizonError("assemble: step " + std::to_string(k) + " with Np " +
                           std::to_string(horizon.np) + " exhausts the " +
                           std::to_string(scenario.series_length()) + "-step series");
    if (x0.size() != scenario.model.n_x() || u_prev.size() != scenario.model.n_u())
        throw DimensionError("assemble: x0/u_prev sizes do not match the model");

    OcpProblem p;
    p.model = scenario.model;
    p.horizon = horizon;
    p.schedule = schedule;
    p.expansion = interpolation_matrix(schedule);
    p.weights = scenario.weights;
    p.demand_forecast = scenario.demand.middleCols(k, horizon.np);
    p.tariff_forecast = scenario.tariff.segment(k, horizon.np);
    p.x0 = x0;
    p.u_prev = u_prev;
    return p;
}

inline DecodedTrajectories decode(const Vec& z, const OcpProblem& p) {
    if (z.size() != p.n_z())
        throw DimensionError("decode: decision vector has size " + std::to_string(z.size()) +
                             ", layout expects " + std::to_string(p.n_z()));
    const int nu = p.model.n_u();

    Mat reduced(nu, p.schedule.nc);
    for (int i = 0; i < p.schedule.nc; ++i) reduced.col(i) = z.segment(i * nu, nu);

    DecodedTrajectories t;
    t.DU = expand(p.expansion, reduced);
    t.U.resize(nu, p.horizon.np);
    t.U.col(0) = p.u_prev + t.DU.col(0);
    for (int j = 1; j < p.horizon.np; ++j) t.U.col(j) = t.U.col(j - 1) + t.DU.col(j);
    t.X = rollout(p.model, p.x0, t.U, p.demand_forecast, p.horizon);
    t.xi = z.tail(p.n_slack());
    return t;
}

/// Equality residuals (node balance at each step, stacked step-major) and
/// inequality residuals g(z) <= 0, ordered:
///   [flow_min - U; U - flow_max; (level_min - xi_lo) - X; X - (level_max + xi_up); -xi]
/// with steps outermost and channels/tanks innermost inside each group.
/// State rows cover X[1..Np].
inline std::pair<Vec, Vec> constraint_eval(const Vec& z, const OcpProblem& p) {
    const DecodedTrajectories t = decode(z, p);
    const int np = p.horizon.np;
    const int nu = p.model.n_u();
    const int nx = p.model.n_x();
    const int nn = p.model.n_node();

    Vec eq(np * nn);
    for (int j = 0; j < np; ++j)
        eq.segment(j * nn, nn) = node_residual(p.model, t.U.col(j), p.demand_forecast.col(j));

    const Vec lo = p.model.level_min();
    const Vec hi = p.model.level_max();
    Vec ineq(2 * np * nu + 2 * np * nx + 2 * nx);
    int at = 0;
    for (int j = 0; j < np; ++j)
        ineq.segment(at + j * nu, nu) = p.model.bounds.flow_min - t.U.col(j);
    at += np * nu;
    for (int j = 0; j < np; ++j)
        ineq.segment(at + j * nu, nu) = t.U.col(j) - p.model.bounds.flow_max;
    at += np * nu;
    for (int j = 0; j < np; ++j)
        ineq.segment(at + j * nx, nx) = (lo - t.xi.head(nx)) - t.X.col(j + 1);
    at += np * nx;
    for (int j = 0; j < np; ++j)
        ineq.segment(at + j * nx, nx) = t.X.col(j + 1) - (hi + t.xi.tail(nx));
    at += np * nx;
    ineq.segment(at, 2 * nx) = -t.xi;
    return {eq, ineq};
}

/// Constant-Jacobian affine form of the constraints: eq(z) = Aeq z - beq,
/// ineq(z) = Ain z - bin. Exact because the dynamics are state-independent
/// and the expansion map is linear.
struct AffineConstraints {
    Mat Aeq;
    Vec beq;
    Mat Ain;
    Vec bin;
};

inline AffineConstraints linearize_constraints(const OcpProblem& p) {
    const int np = p.horizon.np;
    const int nu = p.model.n_u();
    const int nx = p.model.n_x();
    const int nn = p.model.n_node();
    const int nc = p.schedule.nc;
    const int nz = p.n_z();
    const double dt = p.horizon.dt;

    // C(j,i) = d U(j) / d dU_bar_i; CC(j,i) = sum_{m<=j} C(m,i).
    Mat C(np, nc), CC(np, nc);
    Vec colsum = Vec::Zero(nc), colsum2 = Vec::Zero(nc);
    for (int j = 0; j < np; ++j) {
        colsum += p.expansion.W.row(j).transpose();
        C.row(j) = colsum.transpose();
        colsum2 += colsum;
        CC.row(j) = colsum2.transpose();
    }

    AffineConstraints a;
    a.Aeq = Mat::Zero(np * nn, nz);
    a.beq = Vec::Zero(np * nn);
    const Mat& E = p.model.node_input_map;
    for (int j = 0; j < np; ++j) {
        for (int r = 0; r < nn; ++r) {
            for (int i = 0; i < nc; ++i)
                for (int c = 0; c < nu; ++c) a.Aeq(j * nn + r, i * nu + c) = E(r, c) * C(j, i);
            a.beq(j * nn + r) = -(E.row(r).dot(p.u_prev) +
                                  p.model.node_disturbance_map.row(r).dot(p.demand_forecast.col(j)));
        }
    }

    const int mi = 2 * np * nu + 2 * np * nx + 2 * nx;
    a.Ain = Mat::Zero(mi, nz);
    a.bin = Vec::Zero(mi);
    int at = 0;
    for (int j = 0; j < np; ++j)
        for (int c = 0; c < nu; ++c) {
            const int r = at + j * nu + c;
            for (int i = 0; i < nc; ++i) a.Ain(r, i * nu + c) = -C(j, i);
            a.bin(r) = p.u_prev(c) - p.model.bounds.flow_min(c);
        }
    at += np * nu;
    for (int j = 0; j < np; ++j)
        for (int c = 0; c < nu; ++c) {
            const int r = at + j * nu + c;
            for (int i = 0; i < nc; ++i) a.Ain(r, i * nu + c) = C(j, i);
            a.bin(r) = p.model.bounds.flow_max(c) - p.u_prev(c);
        }
    at += np * nu;

    // Cumulative disturbance and previous-input contributions to X(j+1).
    const Mat& Bu = p.model.tank_input_map;
    const Mat& Bd = p.model.tank_disturbance_map;
    Mat dist_cum(nx, np);
    Vec acc = Vec::Zero(nx);
    for (int j = 0; j < np; ++j) {
        acc += Bd * p.demand_forecast.col(j);
        dist_cum.col(j) = acc;
    }
    const Vec bu_uprev = Bu * p.u_prev;

    for (int j = 0; j < np; ++j)
        for (int t = 0; t < nx; ++t) {
            const double over_area = dt / p.model.tanks[static_cast<size_t>(t)].area;
            const double xfree = p.x0(t) + over_area * (static_cast<double>(j + 1) * bu_uprev(t) + dist_cum(t, j));
            const int rlo = at + j * nx + t;
            const int rhi = at + np * nx + j * nx + t;
            for (int i = 0; i < nc; ++i)
                for (int c = 0; c < nu; ++c) {
                    const double dxdz = over_area * Bu(t, c) * CC(j, i);
                    a.Ain(rlo, i * nu + c) = -dxdz;
                    a.Ain(rhi, i * nu + c) = dxdz;
                }
            a.Ain(rlo, p.n_delta() + t) = -1.0;      // lower slack
            a.Ain(rhi, p.n_delta() + nx + t) = -1.0; // upper slack
            a.bin(rlo) = xfree - p.model.tanks[static_cast<size_t>(t)].level_min;
            a.bin(rhi) = p.model.tanks[static_cast<size_t>(t)].level_max - xfree;
        }
    at += 2 * np * nx;
    for (int s = 0; s < 2 * nx; ++s) a.Ain(at + s, p.n_delta() + s) = -1.0;
    return a;
}

/// Objective value seen by the solver: weighted horizon cost of the decoded
/// trajectories (smoothed economic term) plus the linear slack penalty.
inline double ocp_cost(const Vec& z, const OcpProblem& p) {
    const DecodedTrajectories t = decode(z, p);
    return total_cost(p.model, p.weights, p.model.level_ref(), p.tariff_forecast, p.horizon.dt, t.X,
                      t.U, t.DU, t.xi);
}

/// Analytic gradient of ocp_cost, assembled by backpropagating stage-cost
/// sensitivities through the cumulative-sum and expansion maps.
inline Vec cost_gradient(const Vec& z, const OcpProblem& p) {
    const DecodedTrajectories t = decode(z, p);
    const int np = p.horizon.np;
    const int nu = p.model.n_u();
    const int nx = p.model.n_x();
    const double dt = p.horizon.dt;
    const Vec x_ref = p.model.level_ref();

    // dJ/dU and dJ/dDU, one column per step.
    Mat g_U = Mat::Zero(nu, np);
    for (int j = 0; j < np; ++j)
        for (const PumpSpec& pump : p.model.pumps) {
            const double q = t.U(pump.channel, j);
            const double arg = detail::pump_cost_argument(pump.curve, q, p.tariff_forecast(j));
            const double darg = detail::pump_cost_argument_derivative(pump.curve, q, p.tariff_forecast(j));
            g_U(pump.channel, j) += p.weights.economic * dt * detail::smooth_abs_derivative(arg) * darg;
        }

    // Safety term: suffix sums of 2*w2*(X(j+1) - ref) feed every earlier input.
    Mat suffix(nx, np);
    Vec acc = Vec::Zero(nx);
    for (int j = np - 1; j >= 0; --j) {
        acc += 2.0 * p.weights.safety * (t.X.col(j + 1) - x_ref);
        suffix.col(j) = acc;
    }
    Vec inv_area(nx);
    for (int i = 0; i < nx; ++i) inv_area(i) = 1.0 / p.model.tanks[static_cast<size_t>(i)].area;
    g_U += dt * p.model.tank_input_map.transpose() * inv_area.asDiagonal() * suffix;

    const Mat g_DU = 2.0 * p.weights.smoothness * t.DU;

    // Pull back through U = u_prev + cumsum(DU) and DU = reduced * W^T.
    Mat C(np, p.schedule.nc);
    Vec colsum = Vec::Zero(p.schedule.nc);
    for (int j = 0; j < np; ++j) {
        colsum += p.expansion.W.row(j).transpose();
        C.row(j) = colsum.transpose();
    }
    const Mat g_reduced = g_DU * p.expansion.W + g_U * C;

    Vec grad(p.n_z());
    for (int i = 0; i < p.schedule.nc; ++i) grad.segment(i * nu, nu) = g_reduced.col(i);
    grad.tail(p.n_slack()).setConstant(p.weights.slack);
    return grad;
}

} // namespace wdsmpc
