#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "wdsmpc/common.hpp"
#include "wdsmpc/ocp.hpp"
#include "wdsmpc/qp.hpp"

namespace wdsmpc {

struct SolverOptions {
    double kkt_tol = 1e-6;
    int max_iter = 100;
    double merit_penalty_init = 10.0;
    double ls_backtrack = 0.5;
    double ls_min_step = 1e-10;
};

enum class SolveStatus { converged, max_iter, infeasible_qp, line_search_failure };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::converged: return "converged";
        case SolveStatus::max_iter: return "max_iter";
        case SolveStatus::infeasible_qp: return "infeasible_qp";
        case SolveStatus::line_search_failure: return "line_search_failure";
    }
    return "unknown";
}

struct SolverResult {
    Vec z;
    double cost = std::numeric_limits<double>::infinity();
    double kkt_residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    double wall_time = 0.0;  // seconds around the solve only
    SolveStatus status = SolveStatus::max_iter;
    BlockingSchedule schedule;
    std::vector<double> merit_history;  // accepted iterates, for diagnostics
    // Multipliers at the final iterate; equality entries follow the reduced
    // independent row set (equality_rows), inequalities the full row order.
    Vec eq_multipliers;
    Vec ineq_multipliers;
    std::vector<int> equality_rows;
};

namespace detail {

/// Rows of Aeq forming a maximal independent subset (column-pivoted QR of
/// Aeq'). Blocked problems stack Np node-balance rows that span only the
/// Nc anchor combinations, so the duplicates must not reach the KKT system.
inline std::vector<int> independent_equality_rows(const Mat& Aeq) {
    std::vector<int> rows;
    if (Aeq.rows() == 0) return rows;
    Eigen::ColPivHouseholderQR<Mat> qr(Aeq.transpose());
    qr.setThreshold(1e-10);
    const auto& perm = qr.colsPermutation().indices();
    for (int i = 0; i < qr.rank(); ++i) rows.push_back(perm(i));
    std::sort(rows.begin(), rows.end());
    return rows;
}

struct ReducedEqualities {
    Mat A;
    Vec b;
};

inline ReducedEqualities reduce_equalities(const AffineConstraints& aff, const std::vector<int>& rows) {
    ReducedEqualities red;
    red.A.resize(static_cast<int>(rows.size()), aff.Aeq.cols());
    red.b.resize(static_cast<int>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        red.A.row(static_cast<int>(i)) = aff.Aeq.row(rows[i]);
        red.b(static_cast<int>(i)) = aff.beq(rows[i]);
    }
    return red;
}

/// Moves z onto the constraint set: minimum-norm equality correction, then
/// an elastic QP that shrinks any inequality overshoot to zero. Returns
/// false when the constraints are contradictory (no feasible point exists,
/// e.g. scenario demand incompatible with the blocking schedule).
inline bool restore_feasibility(const AffineConstraints& aff, const ReducedEqualities& red, Vec& z) {
    constexpr double kTol = 1e-8;

    if (red.A.rows() > 0) {
        const Vec r = red.b - red.A * z;
        if (r.cwiseAbs().maxCoeff() > 0.0) {
            Eigen::CompleteOrthogonalDecomposition<Mat> cod(red.A);
            z += cod.solve(r);
        }
    }
    if (aff.Aeq.rows() > 0 && (aff.Aeq * z - aff.beq).cwiseAbs().maxCoeff() > 1e-6) return false;

    if (aff.Ain.rows() == 0) return true;
    Vec slack = aff.bin - aff.Ain * z;
    std::vector<int> violated;
    for (int i = 0; i < slack.size(); ++i)
        if (slack(i) < -kTol) violated.push_back(i);
    if (violated.empty()) return true;

    // Variables [d; t]: min 1/2|d|^2 + M 1't  s.t. equalities on d,
    // satisfied rows stay satisfied, violated rows come under their elastic.
    const int nz = static_cast<int>(z.size());
    const int nt = static_cast<int>(violated.size());
    const int nv = nz + nt;
    Mat H = Mat::Identity(nv, nv);
    for (int i = 0; i < nt; ++i) H(nz + i, nz + i) = 1e-2;
    Vec g = Vec::Zero(nv);
    g.tail(nt).setConstant(1e6);

    Mat Aeq = Mat::Zero(red.A.rows(), nv);
    Aeq.leftCols(nz) = red.A;
    const Vec beq = Vec::Zero(red.A.rows());

    const int mi = static_cast<int>(aff.Ain.rows());
    Mat Ain = Mat::Zero(mi + nt, nv);
    Vec bin(mi + nt);
    Ain.topLeftCorner(mi, nz) = aff.Ain;
    bin.head(mi) = slack;  // rows: Ain d <= bin - Ain z
    for (int i = 0; i < nt; ++i) {
        Ain(violated[static_cast<size_t>(i)], nz + i) = -1.0;  // elastic absorbs the row
        Ain(mi + i, nz + i) = -1.0;                            // t >= 0
        bin(mi + i) = 0.0;
    }

    Vec p0 = Vec::Zero(nv);
    for (int i = 0; i < nt; ++i) p0(nz + i) = -slack(violated[static_cast<size_t>(i)]) + 1e-12;

    const QpResult qp = solve_qp(H, g, Aeq, beq, Ain, bin, p0);
    if (!qp.optimal) return false;
    if (qp.p.tail(nt).maxCoeff() > 1e-7) return false;
    z += qp.p.head(nz);
    return true;
}

/// Powell-damped BFGS update keeping B positive definite.
inline void damped_bfgs_update(Mat& B, const Vec& s, const Vec& y) {
    const Vec Bs = B * s;
    const double sBs = s.dot(Bs);
    if (sBs <= 1e-16) return;
    const double sy = s.dot(y);
    Vec r = y;
    if (sy < 0.2 * sBs) {
        const double theta = 0.8 * sBs / (sBs - sy);
        r = theta * y + (1.0 - theta) * Bs;
    }
    const double sr = s.dot(r);
    if (sr <= 1e-14 * sBs) return;
    B += (r * r.transpose()) / sr - (Bs * Bs.transpose()) / sBs;
}

/// Exact Hessian of the quadratic objective terms (safety + smoothness),
/// which dominate the curvature; the BFGS updates only have to learn the
/// economic term on top of this seed. A small ridge keeps the slack
/// directions (linear objective) positive definite.
inline Mat quadratic_hessian_seed(const OcpProblem& p) {
    const int np = p.horizon.np, nu = p.model.n_u(), nx = p.model.n_x(), nc = p.schedule.nc;
    const int nz = p.n_z();

    Mat C(np, nc);
    Vec colsum = Vec::Zero(nc);
    for (int j = 0; j < np; ++j) {
        colsum += p.expansion.W.row(j).transpose();
        C.row(j) = colsum.transpose();
    }
    Mat CC(np, nc);
    Vec colsum2 = Vec::Zero(nc);
    for (int j = 0; j < np; ++j) {
        colsum2 += C.row(j).transpose();
        CC.row(j) = colsum2.transpose();
    }

    Mat S = Mat::Zero(np * nx, nz);  // dX(j+1)/dz
    for (int j = 0; j < np; ++j)
        for (int t = 0; t < nx; ++t) {
            const double coef = p.horizon.dt / p.model.tanks[static_cast<size_t>(t)].area;
            for (int i = 0; i < nc; ++i)
                for (int c = 0; c < nu; ++c)
                    S(j * nx + t, i * nu + c) = coef * p.model.tank_input_map(t, c) * CC(j, i);
        }
    Mat R = Mat::Zero(np * nu, nz);  // dDU(j)/dz
    for (int j = 0; j < np; ++j)
        for (int c = 0; c < nu; ++c)
            for (int i = 0; i < nc; ++i) R(j * nu + c, i * nu + c) = p.expansion.W(j, i);

    Mat B = 2.0 * p.weights.safety * (S.transpose() * S) + 2.0 * p.weights.smoothness * (R.transpose() * R);
    B += 1e-4 * Mat::Identity(nz, nz);
    return B;
}

} // namespace detail

/// Sequential quadratic programming on the assembled problem. Constraints
/// are affine, so after one feasibility restoration every iterate stays
/// exactly feasible and the l1 merit function coincides with the objective.
inline SolverResult solve(const OcpProblem& problem, const SolverOptions& options, const Vec& z0) {
    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&t_start]() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    SolverResult res;
    res.schedule = problem.schedule;
    if (z0.size() != problem.n_z()) throw DimensionError("solve: z0 does not match the problem layout");

    const AffineConstraints aff = linearize_constraints(problem);
    const std::vector<int> eq_rows = detail::independent_equality_rows(aff.Aeq);
    const detail::ReducedEqualities red = detail::reduce_equalities(aff, eq_rows);

    Vec z = z0;
    if (!detail::restore_feasibility(aff, red, z)) {
        res.z = z;
        res.status = SolveStatus::infeasible_qp;
        res.cost = ocp_cost(z, problem);
        res.wall_time = elapsed();
        return res;
    }

    const int nz = problem.n_z();
    Mat B = detail::quadratic_hessian_seed(problem);
    double rho = options.merit_penalty_init;

    auto merit_of = [&](double f, const Vec& zz) {
        double viol = 0.0;
        if (aff.Aeq.rows() > 0) viol += (aff.Aeq * zz - aff.beq).cwiseAbs().sum();
        if (aff.Ain.rows() > 0) viol += (aff.Ain * zz - aff.bin).cwiseMax(0.0).sum();
        return f + rho * viol;
    };

    double f = ocp_cost(z, problem);
    Vec grad = cost_gradient(z, problem);
    res.merit_history.push_back(merit_of(f, z));

    Vec best_z = z;
    double best_merit = res.merit_history.back();
    res.status = SolveStatus::max_iter;

    for (int iter = 1; iter <= options.max_iter; ++iter) {
        res.iterations = iter;

        Vec slack = aff.bin - aff.Ain * z;
        slack = slack.cwiseMax(0.0);
        std::vector<int> working0;
        for (int i = 0; i < slack.size(); ++i)
            if (slack(i) <= 1e-9) working0.push_back(i);

        const QpResult qp = solve_qp(B, grad, red.A, Vec::Zero(red.A.rows()), aff.Ain, slack,
                                     Vec::Zero(nz), working0);
        if (qp.start_infeasible) {
            res.status = SolveStatus::infeasible_qp;
            break;
        }
        res.eq_multipliers = qp.eq_multipliers;
        res.ineq_multipliers = qp.ineq_multipliers;
        res.equality_rows = eq_rows;

        // KKT certificate at the current iterate with the QP multipliers.
        double station = grad.cwiseAbs().maxCoeff();
        {
            Vec lag = grad;
            if (red.A.rows() > 0) lag += red.A.transpose() * qp.eq_multipliers;
            if (aff.Ain.rows() > 0) lag += aff.Ain.transpose() * qp.ineq_multipliers;
            station = lag.cwiseAbs().maxCoeff();
        }
        double feas = 0.0;
        if (aff.Aeq.rows() > 0) feas = (aff.Aeq * z - aff.beq).cwiseAbs().maxCoeff();
        if (aff.Ain.rows() > 0) feas = std::max(feas, (aff.Ain * z - aff.bin).maxCoeff());
        feas = std::max(feas, 0.0);
        // Scaled complementarity: for working rows this reduces to their
        // activation noise, off the working set the multiplier is zero.
        double compl_res = 0.0;
        for (int i = 0; i < slack.size(); ++i)
            compl_res = std::max(compl_res, std::abs(qp.ineq_multipliers(i)) * slack(i) /
                                                (1.0 + std::abs(qp.ineq_multipliers(i))));
        res.kkt_residual = std::max({station, feas, compl_res});

        if (res.kkt_residual <= options.kkt_tol) {
            res.status = SolveStatus::converged;
            break;
        }
        if (!qp.optimal) {  // subproblem hit its iteration cap
            res.status = SolveStatus::line_search_failure;
            break;
        }

        const Vec& p = qp.p;
        const double pnorm = p.cwiseAbs().maxCoeff();
        if (pnorm <= 1e-14) {
            res.status = (res.kkt_residual <= 10.0 * options.kkt_tol) ? SolveStatus::converged
                                                                      : SolveStatus::line_search_failure;
            break;
        }

        const double dual_norm =
            std::max(qp.eq_multipliers.size() ? qp.eq_multipliers.cwiseAbs().maxCoeff() : 0.0,
                     qp.ineq_multipliers.size() ? qp.ineq_multipliers.cwiseAbs().maxCoeff() : 0.0);
        rho = std::max(rho, 1.1 * dual_norm);

        const double dirderiv = grad.dot(p);
        const double noise_floor = 1e-14 * (1.0 + std::abs(f));
        double alpha = 1.0;
        double f_new = ocp_cost(z + alpha * p, problem);
        bool ls_ok = true;
        while (f_new > f + 1e-4 * alpha * dirderiv + noise_floor) {
            alpha *= options.ls_backtrack;
            if (alpha < options.ls_min_step) {
                ls_ok = false;
                break;
            }
            f_new = ocp_cost(z + alpha * p, problem);
        }
        if (!ls_ok) {
            res.status = SolveStatus::line_search_failure;
            break;
        }

        const Vec z_new = z + alpha * p;
        const Vec grad_new = cost_gradient(z_new, problem);
        detail::damped_bfgs_update(B, Vec(alpha * p), Vec(grad_new - grad));

        z = z_new;
        f = f_new;
        grad = grad_new;
        res.merit_history.push_back(merit_of(f, z));
        if (res.merit_history.back() < best_merit) {
            best_merit = res.merit_history.back();
            best_z = z;
        }
    }

    if (res.status == SolveStatus::converged || merit_of(f, z) <= best_merit) {
        res.z = z;
        res.cost = f;
    } else {
        res.z = best_z;  // non-converged: hand back the best iterate seen
        res.cost = ocp_cost(best_z, problem);
    }
    res.wall_time = elapsed();
    return res;
}

/// Receding-horizon initial guess: shift the reduced rate blocks one block
/// forward, repeat the last block, zero the slacks. Falls back to all
/// zeros when the schedules differ.
inline Vec warm_start(const SolverResult& previous, const OcpProblem& next) {
    Vec z0 = Vec::Zero(next.n_z());
    if (previous.schedule.lengths != next.schedule.lengths || previous.z.size() != next.n_z())
        return z0;
    const int nu = next.model.n_u();
    const int nc = next.schedule.nc;
    for (int i = 0; i < nc - 1; ++i) z0.segment(i * nu, nu) = previous.z.segment((i + 1) * nu, nu);
    z0.segment((nc - 1) * nu, nu) = previous.z.segment((nc - 1) * nu, nu);
    return z0;
}

} // namespace wdsmpc
