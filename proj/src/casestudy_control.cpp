// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#include "imkit/casestudy_control.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "imkit/protocol.hpp"

namespace imkit::control {

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void check_finite(double v, const char* what, long k) {
    if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << what << " non-finite at step " << k << "; simulation aborted";
        throw NumericError(msg.str());
    }
}

}  // namespace

ReactorState make_reactor_state(double x1_0, double x2_0) {
    ReactorState s;
    s.x1 = x1_0;
    s.x2 = x2_0;
    s.x1_history = {x1_0};
    return s;
}

double reactor_delay(double t) { return 0.5 * (3.0 + std::sin(t)); }

double reactor_step(ReactorState& state, const ReactorParams& p, double u, long k) {
    const double h = p.step_size;
    const double t = static_cast<double>(k) * h;

    // Delay in whole samples, rounded, never reaching past the start.
    const long delay_samples =
        h == 1.0 ? std::lround(reactor_delay(t)) : std::lround(reactor_delay(t) / h);
    const long tau = k - delay_samples;
    const double x1_tau = tau >= 0 ? state.x1_history[static_cast<std::size_t>(tau)]
                                   : state.x1_history.front();

    const double delta1 = p.vartheta1 * std::sin(t) * x1_tau * x1_tau;
    const double delta2 = p.vartheta2 * std::sin(t) * x1_tau * x1_tau * x1_tau +
                          p.vartheta3 * state.x2;
    const double dx1 = -(1.0 / p.theta1 + p.k1) * state.x1 + (1.0 - p.R2) / p.V1 * state.x2 +
                       delta1;
    const double dx2 = -(1.0 / p.theta2 + p.k2) * state.x1 + p.R1 / p.V2 * x1_tau +
                       p.F2 / p.V2 * u + delta2;

    if (h == 1.0) {
        state.x1 = dx1;
        state.x2 = dx2;
    } else {
        state.x1 += h * dx1;
        state.x2 += h * dx2;
    }
    check_finite(state.x1, "reactor x1", k);
    check_finite(state.x2, "reactor x2", k);
    state.x1_history.push_back(state.x1);
    return state.x1;  // y = x1 (emitted for the NEXT sample)
}

ControllerDerived controller_derived(const ControllerState& c, double y) {
    ControllerDerived d;
    const double y2 = y * y;
    const double y4 = y2 * y2;
    const double y6 = y4 * y2;
    const double y8 = y4 * y4;
    d.rho = (0.1 + y2) * (0.1 + y2) + 1.01;
    d.zeta_aux = (1.0 / std::sqrt(c.r)) * (c.z_hat + c.r * y + c.l * d.rho * y);
    const double l2 = c.l * c.l;
    const double l4 = l2 * l2;
    const double q = 1.02 + 0.2 * y2 + y4;
    d.delta = 2.0 * (2.0 * l2 + l4 * q) *
                  (1.0404 + 1.224 * y2 + 10.56 * y4 + 6.0 * y6 + 25.0 * y8) +
              4.0 * y4 * q * q * q * q;
    d.gain_max = std::max(c.r * d.delta - c.r * c.r, d.rho * y2 + d.zeta_aux * d.zeta_aux);
    return d;
}

double controller_step(ControllerState& c, double y, double step_size) {
    if (!(c.r > 0.0))
        throw NumericError("controller: r <= 0, adaptive gain left its domain");
    const ControllerDerived d = controller_derived(c, y);
    const double u = -c.r * (c.z_hat + c.r * y + c.l * d.rho * y);
    const double dz = -c.r * (c.z_hat + c.r * y + c.l * d.rho * y) - c.r * c.z_hat -
                      c.r * c.r * y - d.gain_max * y;
    if (step_size == 1.0) {
        c.z_hat = dz;
        c.r = d.gain_max;
        c.l = d.rho * y * y;
    } else {
        c.z_hat += step_size * dz;
        c.r += step_size * d.gain_max;
        c.l += step_size * (d.rho * y * y);
    }
    return u;
}

DynamicAlgorithm reactor_controller_algorithm(double step_size) {
    DynamicAlgorithm alg;
    alg.dims = {3, 1, 1, 0};
    alg.zeta0 = Vec(3);
    alg.zeta0 << 0.0, 1.0, 1.0;
    alg.f = [step_size](const Vec& zeta, const Vec& y, const Vec&) {
        ControllerState c{zeta(0), zeta(1), zeta(2)};
        controller_step(c, y(0), step_size);
        Vec next(3);
        next << c.z_hat, c.r, c.l;
        return next;
    };
    alg.g = [](const Vec& zeta, const Vec& y, const Vec&) {
        ControllerState c{zeta(0), zeta(1), zeta(2)};
        const ControllerDerived d = controller_derived(c, y(0));
        Vec u(1);
        u << -c.r * (c.z_hat + c.r * y(0) + c.l * d.rho * y(0));
        return u;
    };
    return alg;
}

Trajectories run_closed_loop(const ReactorParams& params, long steps, LoopMode mode,
                             std::shared_ptr<const EncodingScheme> scheme,
                             std::uint64_t session_seed) {
    Trajectories out;
    out.steps = steps;
    ReactorState plant = make_reactor_state(-0.5, 2.0);

    if (mode == LoopMode::Plain) {
        ControllerState ctrl;
        const double t0 = now_seconds();
        double y = plant.x1;
        for (long k = 0; k < steps; ++k) {
            out.x1.push_back(plant.x1);
            out.x2.push_back(plant.x2);
            out.y.push_back(y);
            if (!(ctrl.r > 0.0)) throw NumericError("controller: r <= 0 in nominal run");
            const double u = controller_step(ctrl, y, params.step_size);
            out.u.push_back(u);
            y = reactor_step(plant, params, u, k);
        }
        out.seconds_plain = now_seconds() - t0;
        return out;
    }

    if (!scheme) throw ConfigError("run_closed_loop: encoded mode needs a scheme");
    const SchemeDims& sd = scheme->dims();
    if (sd.ny != 1 || sd.nu != 1 || sd.nzeta != 3)
        throw DimensionError("run_closed_loop: scheme dims must be ny=nu=1, nzeta=3");

    // Controller in a cloud session, plant driven by the decoded action.
    protocol::CloudServer server(
        scheme, [&params](const std::string& name) -> std::optional<protocol::AlgorithmSpec> {
            if (name != "reactor-controller") return std::nullopt;
            return protocol::AlgorithmSpec{reactor_controller_algorithm(params.step_size), 1};
        });
    protocol::ClientSession session(scheme, "reactor-controller", session_seed);

    const double t0 = now_seconds();
    // In-process loopback: handle() invoked directly, messages still encoded.
    auto hello_reply = server.handle(session.make_hello());
    session.on_ack(hello_reply);
    double y = plant.x1;
    const Vec w_empty(0);
    for (long k = 0; k < steps; ++k) {
        out.x1.push_back(plant.x1);
        out.x2.push_back(plant.x2);
        out.y.push_back(y);
        Vec yv(1);
        yv << y;
        const protocol::WireMessage input = session.send_input(yv, w_empty);
        out.ytilde.push_back(input.ytilde);
        const protocol::WireMessage reply = server.handle(input);
        out.utilde.push_back(reply.utilde);
        const Vec u_hat = session.receive_utility(reply);
        out.u_hat.push_back(u_hat(0));
        y = reactor_step(plant, params, u_hat(0), k);
    }
    out.seconds_encoded = now_seconds() - t0;
    return out;
}

Trajectories run_closed_loop_comparison(const ReactorParams& params, long steps,
                                        std::shared_ptr<const EncodingScheme> scheme,
                                        std::uint64_t session_seed) {
    Trajectories plain = run_closed_loop(params, steps, LoopMode::Plain, nullptr, 0);
    Trajectories enc =
        run_closed_loop(params, steps, LoopMode::EncodedLoopback, scheme, session_seed);
    Trajectories out = std::move(plain);
    out.u_hat = enc.u_hat;
    out.ytilde = enc.ytilde;
    out.utilde = enc.utilde;
    out.seconds_encoded = enc.seconds_encoded;
    // Encoded-loop states ride along in separate columns via export.
    out.x1.insert(out.x1.end(), enc.x1.begin(), enc.x1.end());
    out.x2.insert(out.x2.end(), enc.x2.begin(), enc.x2.end());
    return out;
}

void export_figures_data(const Trajectories& t, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const long n = t.steps;
    const bool paired = static_cast<long>(t.x1.size()) == 2 * n;

    {
        std::ofstream os(fs::path(out_dir) / "trajectories.csv");
        os << "step,x1,x2,y";
        if (paired) os << ",x1_encoded,x2_encoded";
        os << ",u";
        if (!t.u_hat.empty()) os << ",u_hat,err";
        if (!t.ytilde.empty()) {
            for (Index i = 0; i < t.ytilde.front().size(); ++i) os << ",ytilde_" << i;
        }
        os << "\n";
        for (long k = 0; k < n; ++k) {
            os << k << "," << t.x1[k] << "," << t.x2[k] << "," << t.y[k];
            if (paired) os << "," << t.x1[n + k] << "," << t.x2[n + k];
            os << "," << t.u[k];
            if (!t.u_hat.empty())
                os << "," << t.u_hat[k] << "," << std::abs(t.u[k] - t.u_hat[k]);
            if (!t.ytilde.empty())
                for (Index i = 0; i < t.ytilde[k].size(); ++i) os << "," << t.ytilde[k](i);
            os << "\n";
        }
    }
    {
        std::ofstream os(fs::path(out_dir) / "runtime.csv");
        os << "t_plain_s,t_encoded_s,ratio\n";
        const double ratio = t.seconds_plain > 0 ? t.seconds_encoded / t.seconds_plain : 0.0;
        os << t.seconds_plain << "," << t.seconds_encoded << "," << ratio << "\n";
    }
}

}  // namespace imkit::control
