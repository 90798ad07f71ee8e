#pragma once

#include <utility>

#include "wdsmpc/common.hpp"
#include "wdsmpc/network.hpp"

namespace wdsmpc {

/// Prediction horizon: Np steps of dt hours each.
struct Horizon {
    int np = 1;
    double dt = 1.0;
};

/// Classical fourth-order Runge-Kutta step with zero-order hold on (u, d).
/// rhs must be callable as rhs(x, u, d) -> Vec.
///
/// For the tank model the right-hand side is state-independent and all four
/// stages coincide, so the step is exact; the full scheme is kept so the
/// integrator also serves state-dependent models.
template <typename Rhs>
Vec rk4_step(Rhs&& rhs, const Vec& x, const Vec& u, const Vec& d, double dt) {
    if (!(dt > 0.0)) throw DimensionError("rk4_step: dt must be positive");
    const Vec k1 = rhs(x, u, d);
    const Vec k2 = rhs(Vec(x + 0.5 * dt * k1), u, d);
    const Vec k3 = rhs(Vec(x + 0.5 * dt * k2), u, d);
    const Vec k4 = rhs(Vec(x + dt * k3), u, d);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Open-loop rollout of the tank dynamics over the horizon.
/// U and D hold one column per step (n_u x Np, n_d x Np); the returned
/// trajectory holds one column per knot (n_x x (Np+1)), column 0 = x0.
inline Mat rollout(const NetworkModel& model, const Vec& x0, const Mat& U, const Mat& D,
                   const Horizon& horizon) {
    if (U.cols() != horizon.np || D.cols() != horizon.np)
        throw DimensionError("rollout: input/disturbance sequences must have Np columns");
    if (x0.size() != model.n_x())
        throw DimensionError("rollout: x0 size does not match the number of tanks");

    Mat X(model.n_x(), horizon.np + 1);
    X.col(0) = x0;
    auto rhs = [&model](const Vec&, const Vec& u, const Vec& d) { return tank_rhs(model, u, d); };
    for (int j = 0; j < horizon.np; ++j)
        X.col(j + 1) = rk4_step(rhs, Vec(X.col(j)), Vec(U.col(j)), Vec(D.col(j)), horizon.dt);
    return X;
}

} // namespace wdsmpc
