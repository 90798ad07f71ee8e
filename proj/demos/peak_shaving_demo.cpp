// Minimal library walkthrough: run the blocked and full controllers for one
// day on the bundled scenario and print how pumping follows the tariff.

#include <cstdio>

#include "wdsmpc/scenario.hpp"
#include "wdsmpc/simulation.hpp"

using namespace wdsmpc;

int main() {
    const Scenario sc = make_default_scenario();
    const Horizon horizon{24, 1.0};
    const int day = 24;

    const SimulationLog full = run_closed_loop(sc, ControllerConfig{}, horizon, day);
    const SimulationLog idib =
        run_closed_loop(sc, ControllerConfig{{{1, 2, 3, 4, 5, 9}}}, horizon, day);

    std::printf("hour  tariff   pumps_full  pumps_idib   levels_idib\n");
    for (int k = 0; k < day; ++k) {
        const StepRecord& f = full.steps[static_cast<size_t>(k)];
        const StepRecord& b = idib.steps[static_cast<size_t>(k)];
        std::printf("%4d   %.2f     %8.2f    %8.2f    %.3f %.3f\n", k, sc.tariff(k),
                    f.u(2) + f.u(3), b.u(2) + b.u(3), b.x(0), b.x(1));
    }

    const ComparisonReport rep = compare(full, idib);
    std::printf("\nmean solve-time reduction: %.1f %%\n", rep.mean_reduction_pct);
    for (const ChannelMape& c : rep.channels)
        if (c.result.defined) std::printf("MAPE %-4s %.3f %%\n", c.name.c_str(), c.result.percent);
    return 0;
}
