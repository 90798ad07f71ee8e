#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "test_helpers.hpp"
#include "wdsmpc/objective.hpp"
#include "wdsmpc/ocp.hpp"
#include "wdsmpc/scenario.hpp"

using namespace wdsmpc;
using wdsmpc::testing::central_difference_gradient;
using wdsmpc::testing::random_vector;

namespace {

/// One pump with flat head 50 m and flat efficiency 0.8 on channel 0.
NetworkModel flat_pump_model() {
    NetworkModel m;
    m.tanks = {{"t", 100.0, 0.0, 10.0, 5.0, 5.0}};
    PumpCurve curve;
    curve.head_coeffs = {0.0, 0.0, 50.0};
    curve.eff_coeffs = {0.0, 0.0, 0.8};
    m.pumps = {{0, curve}};
    m.bounds.flow_min = Vec::Zero(1);
    m.bounds.flow_max = Vec::Constant(1, 500.0);
    m.tank_input_map = Mat::Constant(1, 1, 1.0);
    m.tank_disturbance_map = Mat::Zero(1, 1);
    m.node_input_map = Mat::Zero(0, 1);
    m.node_disturbance_map = Mat::Zero(0, 1);
    return m;
}

} // namespace

TEST_CASE("economic stage cost prices pump energy against the tariff") {
    const NetworkModel m = flat_pump_model();

    SECTION("hand unit computation: 0.1 m^3/s at 50 m head, eta 0.8") {
        // Independent oracle: P = gamma*Q*H/(1000*eta) = 9.81*0.1*50/0.8 kW.
        const double power_kw = 9810.0 * 0.1 * 50.0 / (1000.0 * 0.8);
        CHECK(power_kw == Catch::Approx(61.3125));
        const double cost = economic_stage_cost(m, Vec::Constant(1, 360.0), 0.1, 1.0);
        CHECK(cost == Catch::Approx(power_kw * 0.1).margin(2e-4));
        CHECK(cost == Catch::Approx(6.13125).margin(2e-4));
    }

    SECTION("idle pumps cost nothing") {
        CHECK(economic_stage_cost(m, Vec::Zero(1), 0.25, 1.0) == 0.0);
    }

    SECTION("cost is linear in the tariff") {
        const double c1 = economic_stage_cost(m, Vec::Constant(1, 120.0), 0.1, 1.0);
        const double c2 = economic_stage_cost(m, Vec::Constant(1, 120.0), 0.2, 1.0);
        CHECK(c2 == Catch::Approx(2.0 * c1).margin(2e-4));
    }

    SECTION("zero tariff contributes nothing regardless of pumping") {
        CHECK(economic_stage_cost(m, Vec::Constant(1, 450.0), 0.0, 1.0) == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("safety stage cost is the squared level deviation") {
    Vec x(2), ref(2);
    x << 3.0, 4.0;
    ref << 2.0, 2.0;
    CHECK(safety_stage_cost(ref, ref) == 0.0);
    CHECK(safety_stage_cost(x, ref) == Catch::Approx(5.0));
    const Vec delta = Vec::Constant(2, 0.7);
    CHECK(safety_stage_cost(Vec(ref + delta), ref) == Catch::Approx(safety_stage_cost(Vec(ref - delta), ref)));
    CHECK_THROWS_AS(safety_stage_cost(Vec::Zero(3), ref), DimensionError);
}

TEST_CASE("smoothness stage cost is the squared rate") {
    CHECK(smoothness_stage_cost(Vec::Zero(4)) == 0.0);
    Vec du(4);
    du << 1.0, -1.0, 2.0, 0.0;
    CHECK(smoothness_stage_cost(du) == Catch::Approx(6.0));
    CHECK(smoothness_stage_cost(Vec(3.0 * du)) == Catch::Approx(9.0 * 6.0));
}

TEST_CASE("total cost sums weighted stages plus the slack penalty") {
    const NetworkModel m = flat_pump_model();
    const Vec ref = Vec::Constant(1, 2.0);

    SECTION("all weights zero") {
        Mat X = Mat::Constant(1, 3, 9.0), U = Mat::Constant(1, 2, 77.0), DU = Mat::Constant(1, 2, 5.0);
        const double c = total_cost(m, Weights{0, 0, 0, 0}, ref, Vec::Constant(2, 0.3), 1.0, X, U, DU,
                                    Vec::Constant(2, 4.0));
        CHECK(c == 0.0);
    }

    SECTION("safety only, trajectory pinned at the reference") {
        Mat X = Mat::Constant(1, 4, 2.0), U = Mat::Zero(1, 3), DU = Mat::Zero(1, 3);
        const double c =
            total_cost(m, Weights{0, 1, 0, 0}, ref, Vec::Constant(3, 0.3), 1.0, X, U, DU, Vec::Zero(2));
        CHECK(c == 0.0);
    }

    SECTION("single step with known stage values sums to 17.13125") {
        // econ 6.13125 (the hand computation above), safety 5, smoothness 6.
        Mat X(1, 2), U(1, 1), DU(1, 1);
        X(0, 0) = 2.0;
        X(0, 1) = 2.0 + std::sqrt(5.0);  // (x - ref)^2 = 5
        U(0, 0) = 360.0;
        DU(0, 0) = std::sqrt(6.0);
        const double c = total_cost(m, Weights{1, 1, 1, 123.0}, ref, Vec::Constant(1, 0.1), 1.0, X, U, DU,
                                    Vec::Zero(2));
        CHECK(c == Catch::Approx(17.13125).margin(5e-4));
    }

    SECTION("monotone in each weight for a fixed trajectory") {
        Mat X = Mat::Constant(1, 3, 4.0), U = Mat::Constant(1, 2, 100.0), DU = Mat::Constant(1, 2, 3.0);
        const Vec tariff = Vec::Constant(2, 0.2);
        const Vec xi = Vec::Constant(2, 0.1);
        const double base = total_cost(m, Weights{1, 1, 1, 10}, ref, tariff, 1.0, X, U, DU, xi);
        CHECK(total_cost(m, Weights{2, 1, 1, 10}, ref, tariff, 1.0, X, U, DU, xi) >= base);
        CHECK(total_cost(m, Weights{1, 3, 1, 10}, ref, tariff, 1.0, X, U, DU, xi) >= base);
        CHECK(total_cost(m, Weights{1, 1, 4, 10}, ref, tariff, 1.0, X, U, DU, xi) >= base);
        CHECK(total_cost(m, Weights{1, 1, 1, 20}, ref, tariff, 1.0, X, U, DU, xi) >= base);
        CHECK(base >= 0.0);
    }
}

TEST_CASE("analytic cost gradient") {
    const Scenario sc = make_default_scenario(48);
    const Horizon horizon{8, 1.0};
    const auto schedule = schedule_from_lengths({1, 2, 2, 3}, 8);
    const OcpProblem problem =
        assemble(sc, schedule, horizon, sc.model.level_init(), sc.u_prev_init, 0);

    SECTION("matches central finite differences at random points") {
        std::mt19937 rng(2024);
        auto f = [&problem](const Vec& z) { return ocp_cost(z, problem); };
        for (int trial = 0; trial < 10; ++trial) {
            // Physically scaled draws keep |J| moderate so the h = 1e-6
            // central difference is not dominated by cancellation noise.
            Vec z = random_vector(rng, problem.n_z(), -10.0, 10.0);
            z.tail(problem.n_slack()) = random_vector(rng, problem.n_slack(), 0.0, 0.5);
            const Vec ga = cost_gradient(z, problem);
            const Vec gfd = central_difference_gradient(f, z);
            for (int i = 0; i < z.size(); ++i) {
                const double scale = std::max({1.0, std::abs(ga(i)), std::abs(gfd(i))});
                CHECK(std::abs(ga(i) - gfd(i)) / scale < 1e-5);
            }
        }
    }

    SECTION("slack-only weights leave exactly the slack entries") {
        Scenario flat = sc;
        flat.weights = Weights{0.0, 0.0, 0.0, 1.0};
        const OcpProblem pslack =
            assemble(flat, schedule, horizon, sc.model.level_init(), sc.u_prev_init, 0);
        std::mt19937 rng(5);
        const Vec z = random_vector(rng, pslack.n_z(), -10.0, 10.0);
        const Vec g = cost_gradient(z, pslack);
        for (int i = 0; i < pslack.n_delta(); ++i) CHECK(g(i) == 0.0);
        for (int i = pslack.n_delta(); i < pslack.n_z(); ++i) CHECK(g(i) == 1.0);
    }

    SECTION("gradient vanishes at the interior minimum of the quadratic instance") {
        Scenario quad = sc;
        quad.weights = Weights{0.0, 2.0, 0.005, 0.0};
        // validate_scenario would reject slack <= other weights; assemble directly.
        const OcpProblem pq = assemble(quad, schedule, horizon, sc.model.level_init(), sc.u_prev_init, 0);
        const auto form = wdsmpc::testing::quadratic_cost_form(pq);
        // Normal equations restricted to the rate entries (slacks do not
        // appear in the w_slack = 0 objective).
        const int nd = pq.n_delta();
        const Mat Md = form.M.leftCols(nd);
        Vec z = Vec::Zero(pq.n_z());
        z.head(nd) = (Md.transpose() * Md).ldlt().solve(Md.transpose() * form.r);
        const Vec g = cost_gradient(z, pq);
        CHECK(g.cwiseAbs().maxCoeff() < 1e-8);
    }
}
