// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "imkit/algorithm.hpp"

using namespace imkit;

namespace {

std::shared_ptr<const EncodingScheme> make_scheme(const AlgoDims& d, std::uint64_t seed,
                                                  double scale = 1.0, double sigma = 1.0,
                                                  Index lift = 2) {
    SchemeDims dims{d.ny, d.nu, d.nzeta, d.ny + lift, d.nu + lift, d.nzeta + lift};
    SchemeScales scales{scale, scale, scale, scale == 1.0 ? 1.0 : 1.0 / scale};
    NoiseSpec noise;
    noise.sigma = sigma;
    return std::make_shared<const EncodingScheme>(
        EncodingScheme::keygen(dims, scales, noise, seed));
}

// zeta' = A zeta + B y, u = C zeta + D y, spectral radius kept under 0.9.
DynamicAlgorithm random_linear(const AlgoDims& d, std::uint64_t seed) {
    Rng rng(seed);
    auto rand_mat = [&rng](Index r, Index c, double s) {
        Mat m(r, c);
        for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-s, s);
        return m;
    };
    const Mat a = rand_mat(d.nzeta, d.nzeta, 0.9 / std::sqrt(static_cast<double>(d.nzeta)));
    const Mat b = rand_mat(d.nzeta, d.ny, 1.0);
    const Mat c = rand_mat(d.nu, d.nzeta, 1.0);
    const Mat e = rand_mat(d.nu, d.ny, 1.0);
    DynamicAlgorithm alg;
    alg.dims = d;
    alg.zeta0 = rand_mat(d.nzeta, 1, 1.0);
    alg.f = [a, b](const Vec& z, const Vec& y, const Vec&) { return Vec(a * z + b * y); };
    alg.g = [c, e](const Vec& z, const Vec& y, const Vec&) { return Vec(c * z + e * y); };
    return alg;
}

std::vector<StepInput> random_inputs(const AlgoDims& d, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<StepInput> inputs;
    for (int k = 0; k < n; ++k) {
        StepInput in;
        in.y = Vec(d.ny);
        for (Index i = 0; i < d.ny; ++i) in.y(i) = rng.uniform(-1, 1);
        in.w = Vec(d.nw);
        for (Index i = 0; i < d.nw; ++i) in.w(i) = rng.uniform(-1, 1);
        inputs.push_back(std::move(in));
    }
    return inputs;
}

}  // namespace

TEST_CASE("identity-hold algorithm echoes its input through the target") {
    AlgoDims d{2, 2, 2, 0};
    DynamicAlgorithm alg;
    alg.dims = d;
    alg.zeta0 = Vec::Zero(2);
    alg.f = [](const Vec& z, const Vec&, const Vec&) { return z; };
    alg.g = [](const Vec&, const Vec& y, const Vec&) { return y; };
    auto scheme = make_scheme(d, 1);
    auto target = build_target(alg, scheme);

    Rng rng(2);
    for (int k = 0; k < 5; ++k) {
        Vec y(2);
        y << 0.1 * k, -0.2 * k;
        const auto e = scheme->encode_input(y, static_cast<std::uint64_t>(k), rng);
        const auto eu = target.step(e, Vec(0));
        const Vec u = scheme->decode_utility(eu, e);
        CHECK((u - y).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("zero algorithm gives the pure-offset utility and zero state") {
    AlgoDims d{2, 2, 2, 0};
    DynamicAlgorithm alg;
    alg.dims = d;
    alg.zeta0 = Vec::Zero(2);
    alg.f = [](const Vec& z, const Vec&, const Vec&) { return Vec(Vec::Zero(z.size())); };
    alg.g = [](const Vec& z, const Vec&, const Vec&) { return Vec(Vec::Zero(z.size())); };
    auto scheme = make_scheme(d, 3);
    auto target = build_target(alg, scheme);
    Rng rng(4);
    Vec y(2);
    y << 1.0, 2.0;
    const auto e = scheme->encode_input(y, 0, rng);
    const auto eu = target.step(e, Vec(0));
    CHECK((eu.utilde - scheme->pi4() * e.ytilde).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(target.encoded_state().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random linear algorithm: decoded utilities match the plain run") {
    AlgoDims d{3, 2, 2, 1};
    auto alg = random_linear(d, 11);
    auto scheme = make_scheme(d, 12);
    auto target = build_target(alg, scheme);
    const auto inputs = random_inputs(d, 100, 13);
    const auto ref = run_reference(alg, inputs);

    Rng rng(14);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto e = scheme->encode_input(inputs[k].y, k, rng);
        const auto eu = target.step(e, inputs[k].w);
        const Vec u = scheme->decode_utility(eu, e);
        const double rel = (u - ref.utilities[k]).cwiseAbs().maxCoeff() /
                           std::max(1.0, ref.utilities[k].cwiseAbs().maxCoeff());
        CHECK(rel <= 1e-9);
    }
}

TEST_CASE("immersion residuals stay at rounding level for a linear algorithm") {
    AlgoDims d{3, 2, 2, 0};
    auto alg = random_linear(d, 21);
    auto scheme = make_scheme(d, 22);
    const auto inputs = random_inputs(d, 500, 23);
    Rng rng(24);
    const auto residuals = immersion_residuals(alg, scheme, inputs, rng);
    REQUIRE(residuals.size() == inputs.size() + 1);
    CHECK(residuals.front().residual == 0.0);  // start on the manifold

    // Replay the target to bound the residual relative to the state size.
    auto target = build_target(alg, scheme);
    Rng rng2(24);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto e = scheme->encode_input(inputs[k].y, k, rng2);
        target.step(e, inputs[k].w);
        const double bound = 1e-9 * (1.0 + target.encoded_state().cwiseAbs().maxCoeff());
        CHECK(residuals[k + 1].residual <= bound);
    }
}

TEST_CASE("target_step rejects out-of-order inputs") {
    AlgoDims d{2, 2, 2, 0};
    auto alg = random_linear(d, 31);
    auto scheme = make_scheme(d, 32);
    auto target = build_target(alg, scheme);
    Rng rng(33);
    Vec y(2);
    y << 0.5, 0.5;
    const auto e0 = scheme->encode_input(y, 0, rng);
    const auto e2 = scheme->encode_input(y, 2, rng);
    CHECK_THROWS_AS(target.step(e2, Vec(0)), ProtocolError);
    target.step(e0, Vec(0));
    CHECK(target.current_step() == 1);
}

TEST_CASE("non-finite algorithm output fails fast with step context") {
    AlgoDims d{1, 1, 1, 0};
    DynamicAlgorithm alg;
    alg.dims = d;
    alg.zeta0 = Vec::Ones(1);
    alg.f = [](const Vec& z, const Vec&, const Vec&) { return Vec(z * 10.0); };
    alg.g = [](const Vec& z, const Vec& y, const Vec&) {
        Vec u(1);
        u(0) = y(0) / (z(0) > 1e3 ? 0.0 : 1.0);  // eventually 1/0
        return u;
    };
    auto scheme = make_scheme(d, 41, 1.0, 0.0);
    auto target = build_target(alg, scheme);
    Rng rng(42);
    Vec y(1);
    y << 1.0;
    bool threw = false;
    for (std::uint64_t k = 0; k < 10 && !threw; ++k) {
        try {
            target.step(scheme->encode_input(y, k, rng), Vec(0));
        } catch (const NumericError& err) {
            threw = true;
            CHECK(std::string(err.what()).find("step") != std::string::npos);
        }
    }
    CHECK(threw);
}

TEST_CASE("two-scale target with T local steps matches the plain two-scale run") {
    AlgoDims d{3, 2, 3, 0};
    TwoScaleAlgorithm alg{random_linear(d, 51), 50};
    auto scheme = make_scheme(d, 52);
    auto target = build_target_two_scale(alg, scheme);
    const auto inputs = random_inputs(d, 3, 53);
    const auto ref = run_reference(alg, inputs);

    Rng rng(54);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto e = scheme->encode_input(inputs[k].y, k, rng);
        const auto eu = target.step(e, inputs[k].w);
        const Vec u = scheme->decode_utility(eu, e);
        const double rel = (u - ref.utilities[k]).cwiseAbs().maxCoeff() /
                           std::max(1.0, ref.utilities[k].cwiseAbs().maxCoeff());
        CHECK(rel <= 1e-8);
    }
}

TEST_CASE("T=1 two-scale target state trajectory is bit-identical to single-scale") {
    // The state recursions coincide exactly; emission timing differs by one
    // transition (pre- vs post-), per the two published forms.
    AlgoDims d{2, 2, 2, 0};
    auto base = random_linear(d, 61);
    auto scheme = make_scheme(d, 62);
    auto single = build_target(base, scheme);
    auto twoscale = build_target_two_scale({base, 1}, scheme);
    const auto inputs = random_inputs(d, 20, 63);

    Rng rng_a(64), rng_b(64);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto ea = scheme->encode_input(inputs[k].y, k, rng_a);
        const auto eb = scheme->encode_input(inputs[k].y, k, rng_b);
        CHECK(ea.ytilde == eb.ytilde);  // identical rng streams
        single.step(ea, inputs[k].w);
        twoscale.step(eb, inputs[k].w);
        CHECK(single.encoded_state() == twoscale.encoded_state());
    }
}

TEST_CASE("two-scale utilities come from the post-iteration state") {
    AlgoDims d{1, 1, 1, 0};
    DynamicAlgorithm counter;
    counter.dims = d;
    counter.zeta0 = Vec::Zero(1);
    counter.f = [](const Vec& z, const Vec&, const Vec&) { return Vec(z.array() + 1.0); };
    counter.g = [](const Vec& z, const Vec&, const Vec&) { return z; };
    const auto inputs = random_inputs(d, 2, 71);

    const auto once = run_reference(TwoScaleAlgorithm{counter, 1}, inputs);
    CHECK(once.utilities[0](0) == 1.0);  // counted one local step before emitting
    const auto five = run_reference(TwoScaleAlgorithm{counter, 5}, inputs);
    CHECK(five.utilities[0](0) == 5.0);
    CHECK(five.utilities[1](0) == 10.0);

    // Single-scale emits from the pre-transition state instead.
    const auto plain = run_reference(counter, inputs);
    CHECK(plain.utilities[0](0) == 0.0);
    CHECK(plain.utilities[1](0) == 1.0);
}

TEST_CASE("build_target validates dimensions") {
    AlgoDims d{2, 2, 2, 0};
    auto alg = random_linear(d, 81);
    AlgoDims wrong{3, 2, 2, 0};
    auto scheme = make_scheme(wrong, 82);
    CHECK_THROWS_AS(build_target(alg, scheme), DimensionError);
}

TEST_CASE("run_reference matches the closed form for a scalar linear system") {
    // zeta' = 0.5 zeta + y with constant y=1: zeta_k = 2 (1 - 0.5^k) for zeta0=0.
    AlgoDims d{1, 1, 1, 0};
    DynamicAlgorithm alg;
    alg.dims = d;
    alg.zeta0 = Vec::Zero(1);
    alg.f = [](const Vec& z, const Vec& y, const Vec&) { return Vec(0.5 * z + y); };
    alg.g = [](const Vec& z, const Vec&, const Vec&) { return z; };
    std::vector<StepInput> inputs(10, {Vec::Ones(1), Vec(0)});
    const auto ref = run_reference(alg, inputs);
    for (std::size_t k = 0; k < 10; ++k) {
        const double expect = 2.0 * (1.0 - std::pow(0.5, static_cast<double>(k)));
        CHECK(ref.utilities[k](0) == doctest::Approx(expect).epsilon(1e-12));
    }
}
