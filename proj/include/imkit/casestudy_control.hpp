// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "imkit/algorithm.hpp"

namespace imkit::control {

// Two-stage chemical reactor with delayed recycle streams. The published
// update laws are continuous-time right-hand sides; `step_size` is the
// forward-Euler step (step_size = 1 degenerates to the printed recursion,
// which diverges and is kept only for reference).
struct ReactorParams {
    double theta1 = 2.0, theta2 = 2.0;
    double k1 = 0.3, k2 = 0.3;
    double R1 = 0.5, R2 = 0.5;
    double V1 = 0.5, V2 = 0.5;
    double F2 = 0.5;
    double vartheta1 = 1.0, vartheta2 = 1.0, vartheta3 = -1.0;
    double step_size = 0.05;
};

struct ReactorState {
    double x1 = -0.5;
    double x2 = 2.0;
    std::vector<double> x1_history;  // x1 at sample indices 0..k
};

ReactorState make_reactor_state(double x1_0, double x2_0);

// Time-varying recycle delay d(t) = 0.5 (3 + sin t), in time units.
double reactor_delay(double t);

// Advances one sample: both state equations with
//   delta1 = vt1 sin(t) x1_tau^2,  delta2 = vt2 sin(t) x1_tau^3 + vt3 x2,
// and emits the measurement y = x1. The delayed index tau is k minus the
// delay rounded to whole samples, clamped to 0 (history pre-populated with
// x1_0). Throws NumericError with the step index on non-finite states.
double reactor_step(ReactorState& state, const ReactorParams& params, double u, long k);

// Adaptive output-feedback controller state x^c = [z_hat, r, l].
struct ControllerState {
    double z_hat = 0.0;
    double r = 1.0;
    double l = 1.0;
};

struct ControllerDerived {
    double rho = 0.0;
    double zeta_aux = 0.0;
    double delta = 0.0;
    double gain_max = 0.0;  // max{r delta - r^2, rho y^2 + zeta_aux^2}, shared by both updates
};

ControllerDerived controller_derived(const ControllerState& c, double y);

// One controller sample: u from the current state, then the three update
// laws scaled by step_size. Throws NumericError if r <= 0 (the r^{-1/2}
// term leaves its domain).
double controller_step(ControllerState& c, double y, double step_size);

// The controller wrapped as a dynamic algorithm (nzeta=3, ny=nu=1, nw=0),
// zeta0 = [0, 1, 1].
DynamicAlgorithm reactor_controller_algorithm(double step_size = 0.05);

enum class LoopMode { Plain, EncodedLoopback };

struct Trajectories {
    std::vector<double> x1, x2, y, u, u_hat;
    std::vector<Vec> ytilde;  // encoded measurements (encoded mode)
    std::vector<Vec> utilde;  // encoded control actions (encoded mode)
    double seconds_plain = 0.0;
    double seconds_encoded = 0.0;
    long steps = 0;
};

// Closed loop: plant in the user process, controller either local (plain) or
// behind the protocol module in a cloud session (encoded). The encoded run
// applies the decoded control action u_hat to the plant.
Trajectories run_closed_loop(const ReactorParams& params, long steps, LoopMode mode,
                             std::shared_ptr<const EncodingScheme> scheme,
                             std::uint64_t session_seed);

// Runs the plain and encoded loops back to back with identical parameters
// and returns both (plain columns from the first, u_hat/encoded from the
// second, timing columns from each).
Trajectories run_closed_loop_comparison(const ReactorParams& params, long steps,
                                        std::shared_ptr<const EncodingScheme> scheme,
                                        std::uint64_t session_seed);

// CSVs behind the figures: trajectories, measurement-vs-encoded, control
// error, cumulative runtime.
void export_figures_data(const Trajectories& t, const std::string& out_dir);

}  // namespace imkit::control
