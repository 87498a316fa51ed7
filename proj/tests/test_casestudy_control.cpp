// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "imkit/casestudy_control.hpp"

using namespace imkit;
using namespace imkit::control;

namespace {

std::shared_ptr<const EncodingScheme> reactor_scheme(std::uint64_t seed) {
    SchemeDims dims{1, 1, 3, 3, 3, 4};
    SchemeScales scales{1e-2, 1e-2, 1e-2, 1e2};
    NoiseSpec noise;
    noise.sigma = 1e2;
    return std::make_shared<const EncodingScheme>(
        EncodingScheme::keygen(dims, scales, noise, seed));
}

}  // namespace

TEST_CASE("reactor: zero state with zero coupling stays at the origin") {
    ReactorParams p;
    p.vartheta1 = p.vartheta2 = p.vartheta3 = 0.0;
    auto state = make_reactor_state(0.0, 0.0);
    for (long k = 0; k < 10; ++k) reactor_step(state, p, 0.0, k);
    CHECK(state.x1 == 0.0);
    CHECK(state.x2 == 0.0);
}

TEST_CASE("reactor single sample matches independent hand evaluation") {
    ReactorParams p;  // published parameters
    auto state = make_reactor_state(-0.5, 2.0);
    const double u = 1.0;
    const double y = reactor_step(state, p, u, 0);

    // Hand evaluation at k=0, t=0: sin(0)=0 so both delta terms reduce, the
    // delayed sample clamps to x1_0.
    const double dx1 = -(1.0 / 2.0 + 0.3) * (-0.5) + ((1.0 - 0.5) / 0.5) * 2.0;  // 2.4
    const double dx2 =
        -(1.0 / 2.0 + 0.3) * (-0.5) + (0.5 / 0.5) * (-0.5) + (0.5 / 0.5) * u + (-1.0) * 2.0;
    CHECK(state.x1 == doctest::Approx(-0.5 + p.step_size * dx1).epsilon(1e-15));
    CHECK(state.x2 == doctest::Approx(2.0 + p.step_size * dx2).epsilon(1e-15));
    CHECK(y == state.x1);
}

TEST_CASE("printed-map reading (step 1) reproduces the divergence") {
    ReactorParams p;
    p.step_size = 1.0;
    auto state = make_reactor_state(-0.5, 2.0);
    ControllerState ctrl;
    bool blew_up = false;
    try {
        double y = state.x1;
        for (long k = 0; k < 20; ++k) {
            const double u = controller_step(ctrl, y, p.step_size);
            y = reactor_step(state, p, u, k);
        }
    } catch (const NumericError&) {
        blew_up = true;
    }
    CHECK(blew_up);
}

TEST_CASE("rho at y=0 evaluates exactly as printed") {
    ControllerState c;
    const auto d = controller_derived(c, 0.0);
    CHECK(d.rho == doctest::Approx(1.02).epsilon(1e-15));
}

TEST_CASE("controller single sample matches independent hand evaluation") {
    ControllerState c;  // (0, 1, 1)
    const double y = -0.5;
    const double h = 0.05;
    const double u = controller_step(c, y, h);

    // Independent arithmetic straight from the published expressions.
    const double rho = std::pow(0.1 + 0.25, 2) + 1.01;            // 1.1325
    const double inner = 0.0 + 1.0 * y + 1.0 * rho * y;           // -1.06625
    const double zeta = 1.0 * inner;                              // r^{-1/2} = 1
    const double q = 1.02 + 0.2 * 0.25 + 0.0625;                  // 1.1325
    const double poly = 1.0404 + 1.224 * 0.25 + 10.56 * 0.0625 + 6.0 * std::pow(0.5, 6) +
                        25.0 * std::pow(0.5, 8);
    const double delta = 2.0 * (2.0 + q) * poly + 4.0 * 0.0625 * std::pow(q, 4);
    const double gain = std::max(delta - 1.0, rho * 0.25 + zeta * zeta);
    CHECK(u == doctest::Approx(-inner).epsilon(1e-14));
    CHECK(c.r == doctest::Approx(1.0 + h * gain).epsilon(1e-14));
    CHECK(c.l == doctest::Approx(1.0 + h * rho * 0.25).epsilon(1e-14));
    const double dz = -inner - 0.0 - y - gain * y;
    CHECK(c.z_hat == doctest::Approx(h * dz).epsilon(1e-13));
}

TEST_CASE("controller rejects nonpositive adaptive gain") {
    ControllerState c;
    c.r = 0.0;
    CHECK_THROWS_AS(controller_step(c, 0.1, 0.05), NumericError);
}

TEST_CASE("plain closed loop stabilizes and the delay never reaches forward") {
    ReactorParams p;
    const auto traj = run_closed_loop(p, 100, LoopMode::Plain, nullptr, 0);
    REQUIRE(traj.steps == 100);
    double max_state = 0.0;
    for (long k = 0; k < 100; ++k)
        max_state = std::max({max_state, std::abs(traj.x1[static_cast<std::size_t>(k)]),
                              std::abs(traj.x2[static_cast<std::size_t>(k)])});
    CHECK(max_state <= 10.0);
    // Decay: the tail is much smaller than the peak.
    const double tail = std::max(std::abs(traj.x1.back()), std::abs(traj.x2.back()));
    CHECK(tail <= 0.1 * max_state);

    // Delay causality: round(d/h) samples at h=0.05 is between 20 and 40, so
    // any in-range history access requires tau <= k. (The buffer would throw
    // out_of_range otherwise; reaching here means no forward access.)
    CHECK(reactor_delay(0.0) >= 1.0);
    CHECK(reactor_delay(0.0) <= 2.0);
}

TEST_CASE("encoded closed loop matches the plain loop") {
    ReactorParams p;
    auto scheme = reactor_scheme(404);
    const auto traj = run_closed_loop_comparison(p, 100, scheme, 777);
    REQUIRE(traj.u.size() == 100);
    REQUIRE(traj.u_hat.size() == 100);

    double max_u_err = 0.0;
    for (std::size_t k = 0; k < 100; ++k)
        max_u_err = std::max(max_u_err, std::abs(traj.u[k] - traj.u_hat[k]));
    CHECK(max_u_err <= 1e-6);

    // Plain states occupy the first half, encoded-loop states the second.
    double max_state_err = 0.0;
    for (std::size_t k = 0; k < 100; ++k) {
        max_state_err = std::max(max_state_err, std::abs(traj.x1[k] - traj.x1[100 + k]));
        max_state_err = std::max(max_state_err, std::abs(traj.x2[k] - traj.x2[100 + k]));
    }
    CHECK(max_state_err <= 1e-6);

    // The encoded measurement is noise-dominated: it looks nothing like y.
    double min_ratio = 1e300;
    for (std::size_t k = 1; k < 100; ++k) {
        const double ey = traj.ytilde[k].cwiseAbs().maxCoeff();
        const double py = std::abs(traj.y[k]) + 1e-12;
        min_ratio = std::min(min_ratio, ey / py);
    }
    CHECK(min_ratio > 10.0);
}

TEST_CASE("controller-state immersion residual stays small in the encoded loop") {
    // Lockstep: run the wrapped controller plainly and through the target
    // construction with identical encoded measurements.
    ReactorParams p;
    auto scheme = reactor_scheme(505);
    auto alg = reactor_controller_algorithm(p.step_size);
    auto target = TargetAlgorithm(alg, scheme, 1);
    Vec zeta = alg.zeta0;

    auto plant = make_reactor_state(-0.5, 2.0);
    Rng rng(9);
    double y = plant.x1;
    for (long k = 0; k < 100; ++k) {
        Vec yv(1);
        yv << y;
        const auto e = scheme->encode_input(yv, static_cast<std::uint64_t>(k), rng);
        const auto eu = target.step(e, Vec(0));
        const Vec u = scheme->decode_utility(eu, e);
        zeta = alg.f(zeta, yv, Vec(0));
        const double residual =
            (target.encoded_state() - scheme->immerse_state(zeta)).cwiseAbs().maxCoeff();
        CHECK(residual <= 1e-8 * (1.0 + target.encoded_state().cwiseAbs().maxCoeff()));
        y = reactor_step(plant, p, u(0), k);
    }
}

TEST_CASE("figure export writes consistent CSVs") {
    ReactorParams p;
    auto scheme = reactor_scheme(606);
    const auto traj = run_closed_loop_comparison(p, 25, scheme, 888);
    const std::string dir = "control_csv_test";
    export_figures_data(traj, dir);

    std::ifstream is(dir + "/trajectories.csv");
    REQUIRE(is.good());
    std::string header;
    std::getline(is, header);
    CHECK(header.find("u_hat") != std::string::npos);
    int rows = 0;
    std::string line;
    double max_err_column = 0.0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++rows;
        // err column is |u - u_hat|, recomputable from the other columns.
        std::vector<double> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(std::stod(cell));
        const double u = cols[6], u_hat = cols[7], err = cols[8];
        CHECK(err == doctest::Approx(std::abs(u - u_hat)).epsilon(1e-9));
        max_err_column = std::max(max_err_column, err);
    }
    CHECK(rows == 25);
    CHECK(max_err_column <= 1e-6);

    std::ifstream rt(dir + "/runtime.csv");
    REQUIRE(rt.good());
    std::getline(rt, header);
    CHECK(header == "t_plain_s,t_encoded_s,ratio");
    std::filesystem::remove_all(dir);
}
