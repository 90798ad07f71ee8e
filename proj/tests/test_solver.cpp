#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "test_helpers.hpp"
#include "wdsmpc/qp.hpp"
#include "wdsmpc/sqp.hpp"

using namespace wdsmpc;
using wdsmpc::testing::make_single_tank_scenario;
using wdsmpc::testing::quadratic_cost_form;
using wdsmpc::testing::random_vector;

TEST_CASE("active-set QP building blocks") {
    SECTION("unconstrained Newton step") {
        const int n = 5;
        const Vec g = -Vec::Ones(n);
        const auto r = solve_qp(Mat::Identity(n, n), g, Mat::Zero(0, n), Vec::Zero(0), Mat::Zero(0, n),
                                Vec::Zero(0), Vec::Zero(n));
        REQUIRE(r.optimal);
        CHECK((r.p - Vec::Ones(n)).cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("single active bound carries a nonnegative multiplier") {
        const int n = 3;
        Mat Ain = Mat::Zero(1, n);
        Ain(0, 0) = 1.0;
        const auto r = solve_qp(Mat::Identity(n, n), Vec(-Vec::Ones(n)), Mat::Zero(0, n), Vec::Zero(0),
                                Ain, Vec::Constant(1, 0.5), Vec::Zero(n));
        REQUIRE(r.optimal);
        CHECK(r.p(0) == Catch::Approx(0.5));
        CHECK(r.p(1) == Catch::Approx(1.0));
        CHECK(r.ineq_multipliers(0) == Catch::Approx(0.5));
        CHECK(r.ineq_multipliers(0) >= 0.0);
    }

    SECTION("equality-only QP matches the direct KKT solve") {
        std::mt19937 rng(99);
        const int n = 8, me = 3;
        Mat R(n, n);
        for (int i = 0; i < R.size(); ++i) R.data()[i] = random_vector(rng, 1, -1.0, 1.0)(0);
        const Mat H = R * R.transpose() + 0.5 * Mat::Identity(n, n);
        const Vec g = random_vector(rng, n, -2.0, 2.0);
        Mat Aeq(me, n);
        for (int i = 0; i < Aeq.size(); ++i) Aeq.data()[i] = random_vector(rng, 1, -1.0, 1.0)(0);
        const Vec beq = random_vector(rng, me, -1.0, 1.0);

        Mat kkt = Mat::Zero(n + me, n + me);
        kkt.topLeftCorner(n, n) = H;
        kkt.topRightCorner(n, me) = Aeq.transpose();
        kkt.bottomLeftCorner(me, n) = Aeq;
        Vec rhs(n + me);
        rhs << -g, beq;
        const Vec sol = kkt.lu().solve(rhs);

        const Vec p0 = Eigen::CompleteOrthogonalDecomposition<Mat>(Aeq).solve(beq);
        const auto r = solve_qp(H, g, Aeq, beq, Mat::Zero(0, n), Vec::Zero(0), p0);
        REQUIRE(r.optimal);
        CHECK((r.p - sol.head(n)).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((r.eq_multipliers - sol.tail(me)).cwiseAbs().maxCoeff() < 1e-8);
    }

    SECTION("infeasible start point is reported") {
        Mat Ain = Mat::Identity(1, 1);
        const auto r = solve_qp(Mat::Identity(1, 1), Vec::Zero(1), Mat::Zero(0, 1), Vec::Zero(0), Ain,
                                Vec::Constant(1, -1.0), Vec::Zero(1));
        CHECK(r.start_infeasible);
    }
}

namespace {

OcpProblem default_problem(const Scenario& sc, const BlockingSchedule& schedule, int k = 0) {
    return assemble(sc, schedule, Horizon{schedule.np, 1.0}, sc.model.level_init(), sc.u_prev_init, k);
}

} // namespace

TEST_CASE("convex instance matches the equality-constrained least-squares oracle") {
    Scenario sc = make_default_scenario(48);
    sc.weights = Weights{0.0, 2.0, 0.005, 1e4};  // quadratic objective, economic term off
    const OcpProblem p = default_problem(sc, unblocked_schedule(4));

    // Oracle: min |Mz - r|^2 over the rates subject to the node-balance
    // equalities, solved through its KKT system; slacks sit at zero.
    const auto form = quadratic_cost_form(p);
    const AffineConstraints aff = linearize_constraints(p);
    const int nd = p.n_delta();
    const Mat Md = form.M.leftCols(nd);
    const Mat Ad = aff.Aeq.leftCols(nd);
    const int me = static_cast<int>(Ad.rows());
    Mat kkt = Mat::Zero(nd + me, nd + me);
    kkt.topLeftCorner(nd, nd) = 2.0 * Md.transpose() * Md;
    kkt.topRightCorner(nd, me) = Ad.transpose();
    kkt.bottomLeftCorner(me, nd) = Ad;
    Vec rhs(nd + me);
    rhs << 2.0 * Md.transpose() * form.r, aff.beq;
    const Vec oracle = kkt.lu().solve(rhs);

    SolverOptions tight;
    tight.kkt_tol = 1e-9;  // the oracle comparison wants 1e-6 in z itself
    const SolverResult res = solve(p, tight, Vec::Zero(p.n_z()));
    REQUIRE(res.status == SolveStatus::converged);
    CHECK((res.z.head(nd) - oracle.head(nd)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(res.z.tail(p.n_slack()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("toy problem beats an exhaustive grid") {
    const Scenario sc = make_single_tank_scenario();
    const OcpProblem p = default_problem(sc, unblocked_schedule(2));

    // 201-point grid per input move, checked through the public evaluators.
    double best = std::numeric_limits<double>::infinity();
    const double lo = sc.model.bounds.flow_min(0), hi = sc.model.bounds.flow_max(0);
    for (int i = 0; i <= 200; ++i)
        for (int j = 0; j <= 200; ++j) {
            const double u0 = lo + (hi - lo) * i / 200.0;
            const double u1 = lo + (hi - lo) * j / 200.0;
            Vec z = Vec::Zero(p.n_z());
            z(0) = u0 - sc.u_prev_init(0);
            z(1) = u1 - u0;
            const auto [eq, ineq] = constraint_eval(z, p);
            if (ineq.maxCoeff() > 1e-9) continue;
            best = std::min(best, ocp_cost(z, p));
        }

    const SolverResult res = solve(p, SolverOptions{}, Vec::Zero(p.n_z()));
    REQUIRE(res.status == SolveStatus::converged);
    CHECK(res.cost <= best + 1e-4);
}

TEST_CASE("warm start at the optimum is a fixed point") {
    const Scenario sc = make_default_scenario(48);
    const OcpProblem p = default_problem(sc, schedule_from_lengths({1, 2, 3, 4, 5, 9}, 24));
    const SolverResult first = solve(p, SolverOptions{}, Vec::Zero(p.n_z()));
    REQUIRE(first.status == SolveStatus::converged);
    const SolverResult again = solve(p, SolverOptions{}, first.z);
    CHECK(again.status == SolveStatus::converged);
    CHECK(again.iterations <= 2);
    CHECK(again.cost <= first.cost + 1e-9);
}

TEST_CASE("warm start cuts iterations on the next receding-horizon problem") {
    const Scenario sc = make_default_scenario(48);
    const auto schedule = schedule_from_lengths({1, 2, 3, 4, 5, 9}, 24);
    const Horizon horizon{24, 1.0};
    const OcpProblem p0 = assemble(sc, schedule, horizon, sc.model.level_init(), sc.u_prev_init, 0);
    const SolverResult r0 = solve(p0, SolverOptions{}, Vec::Zero(p0.n_z()));
    REQUIRE(r0.status == SolveStatus::converged);

    // Advance the plant one step with the applied input, then solve step 1
    // cold and warm. The iteration counts are reported, not asserted: the
    // benefit is measured, convergence is the requirement.
    const DecodedTrajectories t = decode(r0.z, p0);
    const Vec x1 = t.X.col(1);
    const OcpProblem p1 = assemble(sc, schedule, horizon, x1, Vec(t.U.col(0)), 1);
    const SolverResult cold = solve(p1, SolverOptions{}, Vec::Zero(p1.n_z()));
    const SolverResult warm = solve(p1, SolverOptions{}, warm_start(r0, p1));
    REQUIRE(cold.status == SolveStatus::converged);
    REQUIRE(warm.status == SolveStatus::converged);
    INFO("cold iterations: " << cold.iterations << ", warm iterations: " << warm.iterations);
    CHECK(warm.cost <= cold.cost + 1e-6);
}

TEST_CASE("warm_start shifts blocks and falls back to zero") {
    const Scenario sc = make_default_scenario(48);
    const auto schedule = schedule_from_lengths({1, 2, 3, 4, 5, 9}, 24);
    const OcpProblem p = default_problem(sc, schedule);

    SolverResult prev;
    prev.schedule = schedule;
    prev.z = Vec::LinSpaced(p.n_z(), 1.0, static_cast<double>(p.n_z()));
    const Vec z0 = warm_start(prev, p);
    for (int i = 0; i < 5; ++i)
        CHECK((z0.segment(i * 4, 4) - prev.z.segment((i + 1) * 4, 4)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((z0.segment(5 * 4, 4) - prev.z.segment(5 * 4, 4)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(z0.tail(4).cwiseAbs().maxCoeff() == 0.0);

    SolverResult mismatched = prev;
    mismatched.schedule = schedule_from_lengths({4, 20}, 24);
    mismatched.z = Vec::Ones(2 * 4 + 4);
    CHECK(warm_start(mismatched, p).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("merit decreases monotonically over accepted iterates") {
    const Scenario sc = make_default_scenario(48);
    const SolverResult res = solve(default_problem(sc, unblocked_schedule(24)), SolverOptions{},
                                   Vec::Zero(24 * 4 + 4));
    REQUIRE(res.status == SolveStatus::converged);
    REQUIRE(res.merit_history.size() >= 2);
    for (size_t i = 1; i < res.merit_history.size(); ++i)
        CHECK(res.merit_history[i] <= res.merit_history[i - 1] + 1e-8);
}

TEST_CASE("KKT certificate is independently reproducible") {
    const Scenario sc = make_default_scenario(48);
    const OcpProblem p = default_problem(sc, schedule_from_lengths({1, 2, 3, 4, 5, 9}, 24));
    const SolverOptions opt;
    const SolverResult res = solve(p, opt, Vec::Zero(p.n_z()));
    REQUIRE(res.status == SolveStatus::converged);

    const AffineConstraints aff = linearize_constraints(p);
    Vec lag = cost_gradient(res.z, p);
    for (size_t i = 0; i < res.equality_rows.size(); ++i)
        lag += res.eq_multipliers(static_cast<int>(i)) * aff.Aeq.row(res.equality_rows[i]).transpose();
    lag += aff.Ain.transpose() * res.ineq_multipliers;
    CHECK(lag.cwiseAbs().maxCoeff() <= opt.kkt_tol);

    const auto [eq, ineq] = constraint_eval(res.z, p);
    CHECK(eq.cwiseAbs().maxCoeff() <= opt.kkt_tol);
    CHECK(ineq.maxCoeff() <= opt.kkt_tol);
}

TEST_CASE("identical inputs produce identical iterates") {
    const Scenario sc = make_default_scenario(48);
    const OcpProblem p = default_problem(sc, schedule_from_lengths({1, 2, 3, 4, 5, 9}, 24), 3);
    const SolverResult a = solve(p, SolverOptions{}, Vec::Zero(p.n_z()));
    const SolverResult b = solve(p, SolverOptions{}, Vec::Zero(p.n_z()));
    CHECK(a.z == b.z);
    CHECK(a.iterations == b.iterations);
    CHECK(a.cost == b.cost);
}

/// Lifts a blocked decision vector into the unblocked layout: the expanded
/// rate sequence becomes the decision blocks, the slacks carry over.
Vec lift_to_full(const SolverResult& blocked, const OcpProblem& blocked_p, const OcpProblem& full_p) {
    const DecodedTrajectories t = decode(blocked.z, blocked_p);
    Vec z = Vec::Zero(full_p.n_z());
    for (int j = 0; j < full_p.schedule.nc; ++j)
        z.segment(j * full_p.model.n_u(), full_p.model.n_u()) = t.DU.col(j);
    z.tail(full_p.n_slack()) = t.xi;
    return z;
}

TEST_CASE("full degrees of freedom never cost more than blocking") {
    const Scenario sc = make_default_scenario(60);
    const auto blocked_schedule = schedule_from_lengths({1, 2, 3, 4, 5, 9}, 24);
    const auto full_schedule = unblocked_schedule(24);
    std::mt19937 rng(314);
    SolverOptions opt;
    opt.max_iter = 400;  // cold starts far from the receding-horizon path

    for (int trial = 0; trial < 5; ++trial) {
        const Vec x0 = random_vector(rng, 2, 1.5, 5.5);
        Vec u_prev = random_vector(rng, 4, 5.0, 145.0);
        const int k = std::uniform_int_distribution<int>(0, 30)(rng);
        const Horizon horizon{24, 1.0};
        const OcpProblem pf = assemble(sc, full_schedule, horizon, x0, u_prev, k);
        const OcpProblem pb = assemble(sc, blocked_schedule, horizon, x0, u_prev, k);
        const SolverResult rb = solve(pb, opt, Vec::Zero(pb.n_z()));
        REQUIRE(rb.status == SolveStatus::converged);
        // The economic term is nonconvex, so a cold full solve may stop in a
        // worse local minimum; starting it from the lifted blocked solution
        // checks the feasible-set nesting it is supposed to certify.
        const SolverResult cold = solve(pf, opt, Vec::Zero(pf.n_z()));
        const SolverResult lifted = solve(pf, opt, lift_to_full(rb, pb, pf));
        REQUIRE(lifted.status == SolveStatus::converged);
        const double full_cost =
            (cold.status == SolveStatus::converged) ? std::min(cold.cost, lifted.cost) : lifted.cost;
        CHECK(full_cost <= rb.cost + 1e-5);
    }
}

TEST_CASE("node demand incompatible with the schedule reports infeasible_qp") {
    Scenario sc = make_default_scenario(48);
    // Make the offtake draw diurnal: rate blocking can no longer track it.
    for (int h = 0; h < sc.series_length(); ++h)
        sc.demand(0, h) = 35.0 + 10.0 * std::sin(2.0 * 3.14159265358979 * h / 24.0);
    const SolverResult blocked =
        solve(default_problem(sc, schedule_from_lengths({1, 2, 3, 4, 5, 9}, 24)), SolverOptions{},
              Vec::Zero(6 * 4 + 4));
    CHECK(blocked.status == SolveStatus::infeasible_qp);

    // The unblocked controller can still track it exactly.
    const SolverResult full =
        solve(default_problem(sc, unblocked_schedule(24)), SolverOptions{}, Vec::Zero(24 * 4 + 4));
    CHECK(full.status == SolveStatus::converged);
}
