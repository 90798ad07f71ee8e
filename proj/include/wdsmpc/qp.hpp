#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "wdsmpc/common.hpp"

namespace wdsmpc {

/// Result of one convex QP solve. Multipliers follow the convention
/// H p + g + Aeq' nu + Ain' mu = 0 with mu >= 0 on active rows.
struct QpResult {
    Vec p;
    Vec eq_multipliers;    // one per equality row
    Vec ineq_multipliers;  // one per inequality row, zero off the active set
    bool optimal = false;
    bool start_infeasible = false;
    int iterations = 0;
    std::vector<int> working_set;
};

/// Dense primal active-set method for
///
///     min 1/2 p'Hp + g'p   s.t.  Aeq p = beq,  Ain p <= bin
///
/// with H positive definite and Aeq full row rank. The start point p0 must
/// already satisfy every constraint (the SQP keeps its iterates feasible,
/// so p0 = 0 always works there). Equality-constrained subproblems use the
/// null-space method; the working set changes one row at a time, most
/// rapidly violating blocking row first, lowest index on ties. Degenerate
/// additions swap out the working-set row they depend on.
inline QpResult solve_qp(const Mat& H, const Vec& g, const Mat& Aeq, const Vec& beq, const Mat& Ain,
                         const Vec& bin, const Vec& p0, std::vector<int> working0 = {}) {
    constexpr double kActTol = 1e-9;   // activity detection on slack margins
    constexpr double kFeasTol = 1e-7;  // start-point feasibility

    const int n = static_cast<int>(H.rows());
    const int me = static_cast<int>(Aeq.rows());
    const int mi = static_cast<int>(Ain.rows());

    QpResult res;
    res.p = p0;
    res.eq_multipliers = Vec::Zero(me);
    res.ineq_multipliers = Vec::Zero(mi);

    if ((me > 0 && (Aeq * p0 - beq).cwiseAbs().maxCoeff() > kFeasTol) ||
        (mi > 0 && (Ain * p0 - bin).maxCoeff() > kFeasTol)) {
        res.start_infeasible = true;
        return res;
    }

    Vec row_norms(mi);
    for (int i = 0; i < mi; ++i) row_norms(i) = Ain.row(i).norm();

    Vec p = p0;
    std::vector<int> W;

    auto stack_active_transposed = [&](int extra_row) {
        const int m = me + static_cast<int>(W.size()) + (extra_row >= 0 ? 1 : 0);
        Mat At(n, m);
        for (int r = 0; r < me; ++r) At.col(r) = Aeq.row(r).transpose();
        for (size_t k = 0; k < W.size(); ++k) At.col(me + static_cast<int>(k)) = Ain.row(W[k]).transpose();
        if (extra_row >= 0) At.col(m - 1) = Ain.row(extra_row).transpose();
        return At;
    };

    // Adds `row` to W, keeping the stacked active matrix full row rank. On
    // linear dependence the working-set row carrying the largest weight in
    // the dependence relation is swapped out instead (degenerate exchange).
    auto add_or_exchange = [&](int row) {
        Eigen::ColPivHouseholderQR<Mat> qr(stack_active_transposed(row));
        qr.setThreshold(1e-10);
        if (qr.rank() == qr.cols()) {
            W.push_back(row);
            return true;
        }
        if (W.empty()) return false;
        const Mat At = stack_active_transposed(-1);
        const Vec coeffs =
            Eigen::CompleteOrthogonalDecomposition<Mat>(At).solve(Ain.row(row).transpose());
        int victim = -1;
        double weight = 1e-8;
        for (size_t k = 0; k < W.size(); ++k)
            if (std::abs(coeffs(me + static_cast<int>(k))) > weight) {
                weight = std::abs(coeffs(me + static_cast<int>(k)));
                victim = static_cast<int>(k);
            }
        if (victim < 0) return false;  // depends on the equalities alone
        W[static_cast<size_t>(victim)] = row;
        return true;
    };

    std::sort(working0.begin(), working0.end());
    for (int row : working0)
        if (row >= 0 && row < mi && bin(row) - Ain.row(row) * p <= kActTol) {
            Eigen::ColPivHouseholderQR<Mat> qr(stack_active_transposed(row));
            qr.setThreshold(1e-10);
            if (qr.rank() == qr.cols()) W.push_back(row);
        }

    const int max_iter = 100 + 6 * (n + mi);
    int stall = 0;        // iterations without movement in p
    bool bland = false;   // anti-cycling: lowest-index selection
    // Once a full (unblocked) step lands on the EQP minimizer of a working
    // set, any further direction for that same set is numerical noise; the
    // snapshot routes the next visit straight to the multiplier check.
    std::vector<int> settled_W{-1};
    for (int iter = 1; iter <= max_iter; ++iter) {
        res.iterations = iter;
        if (stall > 30) bland = true;
        const int m = me + static_cast<int>(W.size());
        const Vec grad_here = g + H * p;

        Vec q(n);
        Mat At;
        if (m > 0) At = stack_active_transposed(-1);

        if (m == 0) {
            q = -Eigen::LLT<Mat>(H).solve(grad_here);
        } else if (m >= n) {
            q.setZero();
        } else {
            Eigen::HouseholderQR<Mat> qr(At);
            const Mat Q = qr.householderQ() * Mat::Identity(n, n);
            const Mat Z = Q.rightCols(n - m);
            const Mat Hr = Z.transpose() * H * Z;
            Eigen::LLT<Mat> llt(Hr);
            Vec w;
            if (llt.info() == Eigen::Success) {
                w = -llt.solve(Z.transpose() * grad_here);
            } else {
                w = -Eigen::LLT<Mat>(Hr + 1e-10 * Mat::Identity(Hr.rows(), Hr.cols()))
                         .solve(Z.transpose() * grad_here);
            }
            q = Z * w;
        }

        const double qnorm = q.norm();
        if (qnorm <= 1e-12 * (1.0 + p.norm()) || W == settled_W) {
            Vec lambda = Vec::Zero(m);
            if (m > 0) lambda = Eigen::HouseholderQR<Mat>(At).solve(-grad_here);
            const double mult_tol =
                1e-9 * (1.0 + (m > 0 ? lambda.cwiseAbs().maxCoeff() : 0.0));
            int drop = -1;
            if (bland) {  // lowest constraint index among the negative multipliers
                int lowest_row = std::numeric_limits<int>::max();
                for (size_t k = 0; k < W.size(); ++k)
                    if (lambda(me + static_cast<int>(k)) < -mult_tol && W[k] < lowest_row) {
                        lowest_row = W[k];
                        drop = static_cast<int>(k);
                    }
            } else {
                double most_negative = -mult_tol;
                for (size_t k = 0; k < W.size(); ++k)
                    if (lambda(me + static_cast<int>(k)) < most_negative) {
                        most_negative = lambda(me + static_cast<int>(k));
                        drop = static_cast<int>(k);
                    }
            }
            if (drop < 0) {
                res.p = p;
                res.eq_multipliers = lambda.head(me);
                for (size_t k = 0; k < W.size(); ++k)
                    res.ineq_multipliers(W[k]) = std::max(0.0, lambda(me + static_cast<int>(k)));
                res.optimal = true;
                res.working_set = W;
                return res;
            }
            W.erase(W.begin() + drop);
            settled_W.assign(1, -1);
            ++stall;
            continue;
        }

        // Step length to the nearest blocking row outside the working set.
        double beta = 1.0;
        int blocker = -1;
        double blocker_rate = 0.0;
        for (int i = 0; i < mi; ++i) {
            if (std::find(W.begin(), W.end(), i) != W.end()) continue;
            const double rate = Ain.row(i) * q;
            if (rate <= 1e-10 * std::max(1.0, row_norms(i) * qnorm)) continue;
            const double slack = std::max(0.0, bin(i) - Ain.row(i) * p);
            const double bi = slack / rate;
            const bool better = bland ? (bi < beta - 1e-14 || (bi < beta + 1e-14 && blocker >= 0 && i < blocker))
                                      : (bi < beta - 1e-14 || (bi < beta + 1e-14 && rate > blocker_rate));
            if (blocker < 0 ? bi < beta : better) {
                beta = bi;
                blocker = i;
                blocker_rate = rate;
            }
        }

        if (blocker >= 0 && beta < 1.0) {
            if (beta * qnorm > 1e-13)
                stall = 0;
            else
                ++stall;
            p += beta * q;
            settled_W.assign(1, -1);
            add_or_exchange(blocker);
        } else {
            p += q;
            settled_W = W;
            stall = 0;
        }
    }

    res.p = p;  // iteration cap; feasible but not certified optimal
    res.working_set = W;
    return res;
}

} // namespace wdsmpc
