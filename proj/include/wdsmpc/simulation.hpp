#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wdsmpc/common.hpp"
#include "wdsmpc/ocp.hpp"
#include "wdsmpc/scenario.hpp"
#include "wdsmpc/sqp.hpp"

namespace wdsmpc {

struct StepRecord {
    int k = 0;
    Vec x;   // tank levels entering the step
    Vec u;   // applied input
    Vec du;  // u - u_prev
    Vec d;   // realized disturbance
    double cost_econ = 0.0;
    double cost_safe = 0.0;  // evaluated on the successor state
    double cost_smooth = 0.0;
    Vec xi;
    double solve_time = 0.0;
    SolveStatus status = SolveStatus::converged;
    int iterations = 0;
};

struct SimulationLog {
    std::string scenario_id;  // content hash; compared logs must agree
    std::string controller;   // "full" or "idib"
    std::vector<int> lengths;
    Horizon horizon;
    std::vector<std::string> state_names, input_names, disturbance_names;
    std::vector<StepRecord> steps;
    std::vector<int> flagged_steps;  // non-converged solves (best iterate applied)
    Vec final_state;

    int duration() const { return static_cast<int>(steps.size()); }
};

/// Controller selection for a closed-loop run: a block-length vector for
/// the interpolated-blocking controller, or nothing for full DoF.
struct ControllerConfig {
    std::optional<std::vector<int>> lengths;
};

inline std::vector<std::string> input_channel_names(const NetworkModel& model) {
    std::vector<std::string> names;
    int valves = 0, pumps = 0;
    for (int c = 0; c < model.n_u(); ++c) {
        bool is_pump = false;
        for (const PumpSpec& p : model.pumps)
            if (p.channel == c) is_pump = true;
        names.push_back(is_pump ? "qp" + std::to_string(++pumps) : "qv" + std::to_string(++valves));
    }
    return names;
}

/// Receding-horizon closed loop: solve, apply the first input, advance the
/// plant one RK4 step with the realized demand, repeat. The plant model is
/// the prediction model. Non-converged (max_iter) steps apply the best
/// iterate and are flagged; infeasible/line-search failures abort.
inline SimulationLog run_closed_loop(const Scenario& scenario, const ControllerConfig& config,
                                     const Horizon& horizon, int duration,
                                     const SolverOptions& options = {}) {
    const auto violations = validate_scenario(scenario);
    if (!violations.empty())
        throw ScenarioError("run_closed_loop: invalid scenario: " + violations.front());
    if (duration < 1) throw SimulationError("run_closed_loop: duration must be >= 1 steps");
    if (horizon.np < 1 || !(horizon.dt > 0.0))
        throw SimulationError("run_closed_loop: horizon needs Np >= 1 and dt > 0");
    if (duration + horizon.np > scenario.series_length())
        throw SimulationError("run_closed_loop: scenario series has " +
                              std::to_string(scenario.series_length()) + " steps, need " +
                              std::to_string(duration + horizon.np));

    const BlockingSchedule schedule = config.lengths
                                          ? schedule_from_lengths(*config.lengths, horizon.np)
                                          : unblocked_schedule(horizon.np);

    SimulationLog log;
    log.scenario_id = scenario_hash(scenario);
    log.controller = config.lengths ? "idib" : "full";
    log.lengths = schedule.lengths;
    log.horizon = horizon;
    for (int i = 0; i < scenario.model.n_x(); ++i) log.state_names.push_back("x" + std::to_string(i + 1));
    log.input_names = input_channel_names(scenario.model);
    for (int i = 0; i < scenario.model.n_d(); ++i)
        log.disturbance_names.push_back("d" + std::to_string(i + 1));

    const Vec lo = scenario.model.level_min();
    const Vec hi = scenario.model.level_max();
    Vec x = scenario.model.level_init();
    Vec u_prev = scenario.u_prev_init;
    std::optional<SolverResult> previous;

    for (int k = 0; k < duration; ++k) {
        const OcpProblem problem = assemble(scenario, schedule, horizon, x, u_prev, k);
        const Vec z0 = previous ? warm_start(*previous, problem) : Vec::Zero(problem.n_z());
        const SolverResult result = solve(problem, options, z0);

        if (result.status == SolveStatus::infeasible_qp ||
            result.status == SolveStatus::line_search_failure)
            throw SimulationError("solver failed at step " + std::to_string(k) + " with status " +
                                  to_string(result.status));
        if (result.status != SolveStatus::converged) log.flagged_steps.push_back(k);

        const DecodedTrajectories traj = decode(result.z, problem);
        const Vec u = traj.U.col(0);
        const Vec d = scenario.demand.col(k);
        const Vec x_next =
            rk4_step([&](const Vec&, const Vec& uu, const Vec& dd) { return tank_rhs(scenario.model, uu, dd); },
                     x, u, d, horizon.dt);

        const int nx = scenario.model.n_x();
        for (int t = 0; t < nx; ++t) {
            const double below = lo(t) - traj.xi(t) - 1e-6;
            const double above = hi(t) + traj.xi(nx + t) + 1e-6;
            if (x_next(t) < below || x_next(t) > above)
                throw SimulationError("plant level " + log.state_names[static_cast<size_t>(t)] +
                                      " left its slack-relaxed bounds at step " + std::to_string(k));
        }

        StepRecord rec;
        rec.k = k;
        rec.x = x;
        rec.u = u;
        rec.du = u - u_prev;
        rec.d = d;
        rec.cost_econ = economic_stage_cost(scenario.model, u, scenario.tariff(k), horizon.dt);
        rec.cost_safe = safety_stage_cost(x_next, scenario.model.level_ref());
        rec.cost_smooth = smoothness_stage_cost(rec.du);
        rec.xi = traj.xi;
        rec.solve_time = result.wall_time;
        rec.status = result.status;
        rec.iterations = result.iterations;
        log.steps.push_back(std::move(rec));

        x = x_next;
        u_prev = u;
        previous = result;
    }
    log.final_state = x;
    return log;
}

// ---------------------------------------------------------------------------
// MAPE and the paired comparison report
// ---------------------------------------------------------------------------

/// Mean absolute percentage error with a division guard: reference entries
/// with |x| < 1e-9 are excluded from the mean and counted; an all-excluded
/// series leaves the value undefined (NaN).
struct MapeResult {
    double percent = std::numeric_limits<double>::quiet_NaN();
    int excluded = 0;
    bool defined = false;
};

inline MapeResult mape(const Vec& reference, const Vec& test) {
    if (reference.size() != test.size()) throw DimensionError("mape: series lengths differ");
    MapeResult r;
    double sum = 0.0;
    int n = 0;
    for (int i = 0; i < reference.size(); ++i) {
        if (std::abs(reference(i)) < 1e-9) {
            ++r.excluded;
            continue;
        }
        sum += std::abs((reference(i) - test(i)) / reference(i));
        ++n;
    }
    if (n > 0) {
        r.percent = sum / static_cast<double>(n) * 100.0;
        r.defined = true;
    }
    return r;
}

struct ChannelMape {
    std::string name;
    MapeResult result;
};

struct ComparisonReport {
    std::vector<ChannelMape> channels;  // states first, then inputs
    double mean_reduction_pct = 0.0;    // 100*(1 - mean_blocked/mean_full)
    double median_reduction_pct = 0.0;
    double total_econ_full = 0.0;
    double total_econ_blocked = 0.0;
    Vec solve_times_full;
    Vec solve_times_blocked;
    std::vector<int> flagged_full, flagged_blocked;
};

namespace detail {

inline Vec series_of(const SimulationLog& log, int channel, bool state) {
    Vec v(log.duration());
    for (int k = 0; k < log.duration(); ++k)
        v(k) = state ? log.steps[static_cast<size_t>(k)].x(channel) : log.steps[static_cast<size_t>(k)].u(channel);
    return v;
}

inline double median(Vec v) {
    std::sort(v.begin(), v.end());
    const int n = static_cast<int>(v.size());
    return n % 2 ? v(n / 2) : 0.5 * (v(n / 2 - 1) + v(n / 2));
}

} // namespace detail

/// Blocked-vs-full report: per-channel MAPE with the full-DoF run as the
/// reference, solve-time reduction and total economic cost.
inline ComparisonReport compare(const SimulationLog& log_full, const SimulationLog& log_blocked) {
    if (log_full.scenario_id != log_blocked.scenario_id)
        throw ComparisonError("compare: logs come from different scenarios");
    if (log_full.duration() != log_blocked.duration())
        throw ComparisonError("compare: logs cover different durations");
    if (log_full.duration() == 0) throw ComparisonError("compare: empty logs");

    ComparisonReport rep;
    const int nx = static_cast<int>(log_full.state_names.size());
    const int nu = static_cast<int>(log_full.input_names.size());
    for (int t = 0; t < nx; ++t)
        rep.channels.push_back({log_full.state_names[static_cast<size_t>(t)],
                                mape(detail::series_of(log_full, t, true), detail::series_of(log_blocked, t, true))});
    for (int c = 0; c < nu; ++c)
        rep.channels.push_back({log_full.input_names[static_cast<size_t>(c)],
                                mape(detail::series_of(log_full, c, false), detail::series_of(log_blocked, c, false))});

    rep.solve_times_full.resize(log_full.duration());
    rep.solve_times_blocked.resize(log_full.duration());
    for (int k = 0; k < log_full.duration(); ++k) {
        rep.solve_times_full(k) = log_full.steps[static_cast<size_t>(k)].solve_time;
        rep.solve_times_blocked(k) = log_blocked.steps[static_cast<size_t>(k)].solve_time;
        rep.total_econ_full += log_full.steps[static_cast<size_t>(k)].cost_econ;
        rep.total_econ_blocked += log_blocked.steps[static_cast<size_t>(k)].cost_econ;
    }
    rep.mean_reduction_pct = 100.0 * (1.0 - rep.solve_times_blocked.mean() / rep.solve_times_full.mean());
    rep.median_reduction_pct =
        100.0 * (1.0 - detail::median(rep.solve_times_blocked) / detail::median(rep.solve_times_full));
    rep.flagged_full = log_full.flagged_steps;
    rep.flagged_blocked = log_blocked.flagged_steps;
    return rep;
}

// ---------------------------------------------------------------------------
// CSV / text serialization
// ---------------------------------------------------------------------------

/// One row per step. Header for the default scenario:
///   k,x1,x2,qv1,qv2,qp1,qp2,d1,d2,d3,cost_econ,cost_safe,cost_smooth,
///   xi1,...,xi4,solve_time,status
/// include_timing=false omits the solve_time column (used for bitwise
/// determinism checks).
inline void write_log_csv(std::ostream& out, const SimulationLog& log, bool include_timing = true) {
    out << "k";
    for (const auto& n : log.state_names) out << "," << n;
    for (const auto& n : log.input_names) out << "," << n;
    for (const auto& n : log.disturbance_names) out << "," << n;
    out << ",cost_econ,cost_safe,cost_smooth";
    const int n_xi = log.steps.empty() ? 0 : static_cast<int>(log.steps.front().xi.size());
    for (int i = 0; i < n_xi; ++i) out << ",xi" << (i + 1);
    if (include_timing) out << ",solve_time";
    out << ",status\n";

    for (const StepRecord& r : log.steps) {
        out << r.k;
        for (int i = 0; i < r.x.size(); ++i) out << "," << format_double(r.x(i));
        for (int i = 0; i < r.u.size(); ++i) out << "," << format_double(r.u(i));
        for (int i = 0; i < r.d.size(); ++i) out << "," << format_double(r.d(i));
        out << "," << format_double(r.cost_econ) << "," << format_double(r.cost_safe) << ","
            << format_double(r.cost_smooth);
        for (int i = 0; i < r.xi.size(); ++i) out << "," << format_double(r.xi(i));
        if (include_timing) out << "," << format_double(r.solve_time);
        out << "," << to_string(r.status) << "\n";
    }
}

inline void write_comparison_csv(std::ostream& out, const ComparisonReport& rep) {
    out << "metric,channel,value,note\n";
    for (const ChannelMape& c : rep.channels) {
        out << "mape_pct," << c.name << ",";
        out << (c.result.defined ? format_double(c.result.percent) : std::string("nan"));
        out << ",excluded=" << c.result.excluded << "\n";
    }
    out << "solve_time_reduction_mean_pct,," << format_double(rep.mean_reduction_pct) << ",\n";
    out << "solve_time_reduction_median_pct,," << format_double(rep.median_reduction_pct) << ",\n";
    out << "total_econ_cost,full," << format_double(rep.total_econ_full) << ",\n";
    out << "total_econ_cost,idib," << format_double(rep.total_econ_blocked) << ",\n";
    out << "flagged_steps,full," << rep.flagged_full.size() << ",\n";
    out << "flagged_steps,idib," << rep.flagged_blocked.size() << ",\n";
    out << "solve_time_series_s,full";
    for (int k = 0; k < rep.solve_times_full.size(); ++k) out << (k ? ";" : ",") << format_double(rep.solve_times_full(k));
    out << ",\nsolve_time_series_s,idib";
    for (int k = 0; k < rep.solve_times_blocked.size(); ++k)
        out << (k ? ";" : ",") << format_double(rep.solve_times_blocked(k));
    out << ",\n";
}

inline void write_comparison_text(std::ostream& out, const ComparisonReport& rep) {
    char buf[128];
    out << "Blocked (idib) vs full-DoF controller, " << rep.solve_times_full.size() << " steps\n\n";
    out << "MAPE per channel (reference: full-DoF run)\n";
    for (const ChannelMape& c : rep.channels) {
        if (c.result.defined)
            std::snprintf(buf, sizeof(buf), "  %-6s %8.4f %%   (excluded samples: %d)\n", c.name.c_str(),
                          c.result.percent, c.result.excluded);
        else
            std::snprintf(buf, sizeof(buf), "  %-6s      n/a     (all %d samples excluded)\n", c.name.c_str(),
                          c.result.excluded);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "\nSolve-time reduction: mean %.2f %%, median %.2f %%\n",
                  rep.mean_reduction_pct, rep.median_reduction_pct);
    out << buf;
    std::snprintf(buf, sizeof(buf), "Mean solve time: full %.6f s, idib %.6f s\n", rep.solve_times_full.mean(),
                  rep.solve_times_blocked.mean());
    out << buf;
    std::snprintf(buf, sizeof(buf), "Total economic cost: full %.6f, idib %.6f\n", rep.total_econ_full,
                  rep.total_econ_blocked);
    out << buf;
    out << "Flagged (non-converged) steps: full " << rep.flagged_full.size() << ", idib "
        << rep.flagged_blocked.size() << "\n";
}

} // namespace wdsmpc
