// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "imkit/privacy.hpp"
#include "imkit/scheme.hpp"
#include "oracles.hpp"

using namespace imkit;
using namespace imkit::privacy;

namespace {

// Hand-set scheme reproducing the published magnitude configuration:
// ||Pi1_i||_1 = 1e-4, ||N1_i||_2 = 1e4, ||Pi3_j||_1 = 1e-4,
// ||(Pi4 N1)_j||_2 = 1e8, sigma = 1e4.
EncodingScheme magnitude_scheme() {
    Mat pi1(2, 1);
    pi1 << 1e-4, 1e-4;
    Mat n1(2, 1);
    n1 << 1e4, -1e4;  // row l2 norms exactly 1e4, in ker(pi1_left)
    Mat pi1_left(1, 2);
    pi1_left << 5e3, 5e3;  // (pi1^T pi1)^{-1} pi1^T
    Mat pi2(2, 1);
    pi2 << 1.0, 1.0;
    Mat pi2_left(1, 2);
    pi2_left << 0.5, 0.5;
    Mat pi3(2, 1);
    pi3 << 1e-4, 1e-4;
    Mat pi3_left(1, 2);
    pi3_left << 5e3, 5e3;
    // Pi4*N1 = [[1e8], [1e8]]: product rows with l2 norm exactly 1e8.
    Mat pi4(2, 2);
    pi4 << 1e4, 0.0, 0.0, -1e4;
    return EncodingScheme::from_parts(pi1, pi2, pi3, pi4, n1, pi1_left, pi2_left, pi3_left,
                                      Vec::Zero(1), 1e4, 0);
}

EncodingScheme random_scheme(std::uint64_t seed) {
    SchemeDims dims{2, 2, 2, 4, 4, 4};
    SchemeScales scales{0.5, 0.5, 0.5, 2.0};
    NoiseSpec noise;
    noise.sigma = 3.0;
    return EncodingScheme::keygen(dims, scales, noise, seed);
}

}  // namespace

TEST_CASE("laplace_sample degenerates to mu at sigma 0") {
    Rng rng(1);
    Vec mu(3);
    mu << -1.0, 0.0, 2.5;
    const Vec s = laplace_sample({mu, 0.0}, 3, rng);
    CHECK(s == mu);
}

TEST_CASE("laplace_sample moments at b=1 (Monte Carlo oracle)") {
    Rng rng(2);
    const long n = 1000000;
    double sum = 0.0, sumsq = 0.0;
    for (long i = 0; i < n; ++i) {
        const Vec s = laplace_sample({Vec(), 1.0}, 1, rng);
        sum += s(0);
        sumsq += s(0) * s(0);
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(mean >= -0.01);
    CHECK(mean <= 0.01);
    CHECK(var >= 1.94);  // true variance 2 b^2 = 2
    CHECK(var <= 2.06);
}

TEST_CASE("laplace_sample matches the analytic CDF (KS oracle)") {
    Rng rng(3);
    std::vector<double> samples;
    samples.reserve(100000);
    for (int i = 0; i < 100000; ++i) samples.push_back(laplace_sample({Vec(), 1.0}, 1, rng)(0));
    CHECK(oracles::ks_distance_laplace(std::move(samples), 0.0, 1.0) <= 0.01);
}

TEST_CASE("laplace_sample honors large means and scales") {
    Rng rng(4);
    Vec mu(2);
    mu << 5e4, -5e4;
    const Vec s = laplace_sample({mu, 1e4}, 2, rng);
    CHECK(std::isfinite(s(0)));
    CHECK(std::abs(s(0) - 5e4) < 1e6);
    CHECK(std::abs(s(1) + 5e4) < 1e6);
}

TEST_CASE("epsilon_y reproduces the published 1e-12 configuration") {
    const auto s = magnitude_scheme();
    const Vec eps = epsilon_y(s, 1.0);
    REQUIRE(eps.size() == 2);
    CHECK(eps(0) == doctest::Approx(1e-12).epsilon(1e-12));
    CHECK(eps(1) == doctest::Approx(1e-12).epsilon(1e-12));
}

TEST_CASE("epsilon_u reproduces the published 1e-13 configuration") {
    const auto s = magnitude_scheme();
    const Vec eps = epsilon_u(s, 1000.0);  // delta_u = clipping threshold C
    REQUIRE(eps.size() == 2);
    CHECK(eps(0) == doctest::Approx(1e-13).epsilon(1e-12));
    CHECK(eps(1) == doctest::Approx(1e-13).epsilon(1e-12));
}

TEST_CASE("zero sensitivity gives zero epsilon") {
    const auto s = magnitude_scheme();
    CHECK(epsilon_y(s, 0.0).maxCoeff() == 0.0);
    CHECK(epsilon_u(s, 0.0).maxCoeff() == 0.0);
}

TEST_CASE("epsilon formulas match the row-wise oracle on a random scheme") {
    const auto s = random_scheme(17);
    const double dy = 0.7, du = 2.5;
    const Vec ey = epsilon_y(s, dy);
    const Vec eu = epsilon_u(s, du);
    const Mat prod = s.pi4() * s.n1();
    for (Index i = 0; i < ey.size(); ++i) {
        const double expect = oracles::row_l1(s.pi1(), i) * dy /
                              (oracles::row_l2(s.n1(), i) * s.noise_sigma());
        CHECK(ey(i) == doctest::Approx(expect).epsilon(1e-14));
    }
    for (Index j = 0; j < eu.size(); ++j) {
        const double expect = oracles::row_l1(s.pi3(), j) * du /
                              (oracles::row_l2(prod, j) * s.noise_sigma());
        CHECK(eu(j) == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("a zero N1 row invalidates the scheme for privacy bounds") {
    // pi1 = [[1],[0]] forces the kernel vector [[0],[1]]: zero first row.
    Mat pi1(2, 1);
    pi1 << 1.0, 0.0;
    Mat n1(2, 1);
    n1 << 0.0, 1.0;
    Mat pi1_left(1, 2);
    pi1_left << 1.0, 0.0;
    Mat pi2(2, 1), pi2_left(1, 2), pi3(2, 1), pi3_left(1, 2), pi4(2, 2);
    pi2 << 1, 0;
    pi2_left << 1, 0;
    pi3 << 1, 0;
    pi3_left << 1, 0;
    pi4 << 1, 0, 0, 1;
    const auto s = EncodingScheme::from_parts(pi1, pi2, pi3, pi4, n1, pi1_left, pi2_left,
                                              pi3_left, Vec::Zero(1), 1.0, 0);
    CHECK_THROWS_AS(epsilon_y(s, 1.0), InvalidSchemeError);
}

TEST_CASE("epsilon scales exactly inversely with sigma") {
    const auto s = random_scheme(23);
    const Vec base = epsilon_y(s, 1.0);
    // Same matrices, sigma scaled by 8 (a power of two: exact in float).
    const auto s8 = EncodingScheme::from_parts(s.pi1(), s.pi2(), s.pi3(), s.pi4(), s.n1(),
                                               s.pi1_left(), s.pi2_left(), s.pi3_left(),
                                               s.noise_mu(), s.noise_sigma() * 8.0, 0);
    const Vec scaled = epsilon_y(s8, 1.0);
    for (Index i = 0; i < base.size(); ++i) CHECK(scaled(i) == base(i) / 8.0);
}

TEST_CASE("calibrate_sigma: halving behavior and round-trip") {
    const auto s = random_scheme(29);
    const double dy = 1.0, du = 1000.0;
    const double sigma1 = calibrate_sigma(s, dy, du, 1e-6, 1e-7);
    const double sigma2 = calibrate_sigma(s, dy, du, 2e-6, 2e-7);
    CHECK(sigma2 == doctest::Approx(sigma1 / 2.0).epsilon(1e-14));

    // Plugging the calibrated sigma back meets both targets, with equality on
    // the binding row.
    const auto cal = EncodingScheme::from_parts(s.pi1(), s.pi2(), s.pi3(), s.pi4(), s.n1(),
                                                s.pi1_left(), s.pi2_left(), s.pi3_left(),
                                                s.noise_mu(), sigma1, 0);
    const double max_y = epsilon_y(cal, dy).maxCoeff();
    const double max_u = epsilon_u(cal, du).maxCoeff();
    CHECK(max_y <= 1e-6 * (1 + 1e-12));
    CHECK(max_u <= 1e-7 * (1 + 1e-12));
    const bool y_binds = max_y >= 1e-6 * (1 - 1e-12);
    const bool u_binds = max_u >= 1e-7 * (1 - 1e-12);
    CHECK((y_binds || u_binds));

    CHECK_THROWS_AS(calibrate_sigma(s, dy, du, 0.0, 1e-7), ConfigError);
}

TEST_CASE("calibrate_sigma at published magnitudes stays within 1e4") {
    const auto s = magnitude_scheme();
    const double sigma = calibrate_sigma(s, 1.0, 1000.0, 1e-12, 1e-13);
    CHECK(sigma <= 1e4 * (1 + 1e-12));
}

TEST_CASE("perfect secrecy margin") {
    PrivacyReport r;
    r.eps_y_max = 0.0;
    r.eps_u_max = 0.0;
    CHECK(perfect_secrecy_margin(r) == 0.0);

    const auto s = magnitude_scheme();
    const auto report = make_report(s, {1.0, 1000.0});
    CHECK(perfect_secrecy_margin(report) == doctest::Approx(1e-12).epsilon(1e-12));

    // Monotone in 1/sigma: twice the noise, half the margin.
    const auto s2 = EncodingScheme::from_parts(s.pi1(), s.pi2(), s.pi3(), s.pi4(), s.n1(),
                                               s.pi1_left(), s.pi2_left(), s.pi3_left(),
                                               s.noise_mu(), s.noise_sigma() * 2.0, 0);
    const auto report2 = make_report(s2, {1.0, 1000.0});
    CHECK(perfect_secrecy_margin(report2) < perfect_secrecy_margin(report));
}

TEST_CASE("report writers produce the expected columns") {
    const auto s = random_scheme(31);
    const auto report = make_report(s, {1.0, 1.0});
    std::ostringstream text, csv;
    write_report_text(text, report);
    write_report_csv(csv, report);
    CHECK(text.str().find("eps_y_max") != std::string::npos);
    CHECK(csv.str().rfind("row,eps_y,eps_u", 0) == 0);
    CHECK(report.cond_pi1 >= 1.0);
}

TEST_CASE("adjacency probe: identical inputs give near-zero ratio") {
    const auto s = random_scheme(37);
    Rng rng(5);
    Vec y(2);
    y << 0.4, 0.6;
    const auto probe = adjacency_ratio_probe(s, y, y, 200000, 40, rng);
    CHECK(probe.analytic_eps.maxCoeff() == 0.0);
    for (Index c = 0; c < probe.max_log_ratio.size(); ++c)
        CHECK(probe.max_log_ratio(c) <= probe.slack_at_max(c));
}

TEST_CASE("adjacency probe: 1-D toy stays within the analytic bound plus slack") {
    // Hand-set: pi1 = [1, 1]^T, N1 = [1, -1]^T / sqrt(2), sigma = 10.
    Mat pi1(2, 1);
    pi1 << 1.0, 1.0;
    Mat n1(2, 1);
    n1 << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
    Mat pi1_left(1, 2);
    pi1_left << 0.5, 0.5;
    Mat pi2(2, 1), pi2_left(1, 2), pi3(2, 1), pi3_left(1, 2), pi4(2, 2);
    pi2 << 1, 1;
    pi2_left << 0.5, 0.5;
    pi3 << 1, 1;
    pi3_left << 0.5, 0.5;
    pi4 << 1, 0, 0, 1;
    const auto s = EncodingScheme::from_parts(pi1, pi2, pi3, pi4, n1, pi1_left, pi2_left,
                                              pi3_left, Vec::Zero(1), 10.0, 0);
    Vec y(1), yp(1);
    y << 0.0;
    yp << 1.0;  // ||y - y'||_1 = 1
    Rng rng(6);
    const auto probe = adjacency_ratio_probe(s, y, yp, 1000000, 60, rng);
    // Analytic bound: ||pi1_i||_1 / (||n1_i||_2 sigma) = sqrt(2)/10.
    CHECK(probe.analytic_eps(0) == doctest::Approx(std::sqrt(2.0) / 10.0).epsilon(1e-12));
    for (Index c = 0; c < probe.max_log_ratio.size(); ++c) {
        CHECK(probe.max_log_ratio(c) <= probe.analytic_eps(c) + probe.slack_at_max(c));
    }
}
