#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace wdsmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Size or shape of an argument does not match the model/problem layout.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Invalid block-length vector (non-positive length, sum != Np, ...).
struct ScheduleError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Forecast series too short for the requested horizon slice.
struct HorizonError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

/// Malformed scenario file or scenario data violating model invariants.
struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Closed-loop run aborted (solver failure, plant left its bounds).
struct SimulationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The two logs handed to compare() do not belong to the same scenario.
struct ComparisonError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace wdsmpc
