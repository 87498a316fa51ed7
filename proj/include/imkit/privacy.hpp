// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

#include "imkit/linalg.hpp"

namespace imkit {

class EncodingScheme;

namespace privacy {

// Per-component Laplace scale b; density (1/2b) exp(-|x-mu|/b).
// The covariance of each component is 2b^2 (b is NOT a standard deviation;
// the paper's notation section conflicts with its own density derivation and
// we follow the derivation).
struct LaplaceParams {
    Vec mu;          // empty means zero mean
    double sigma = 0.0;
};

// i.i.d. Laplace vector via inverse CDF from a uniform draw.
// sigma == 0 returns mu exactly (degenerate noiseless limit).
Vec laplace_sample(const LaplaceParams& params, Index dim, Rng& rng);

// l1 sensitivities of input data and utility, caller-supplied
// (Delta = 1 for normalized inputs, Delta_u = clip threshold C for gradients).
struct Sensitivity {
    double delta_y = 1.0;
    double delta_u = 1.0;
};

// eps_i = ||Pi1_i||_1 delta_y / (||N1_i||_2 sigma) for every row i of the
// encoded input. Throws InvalidSchemeError on a zero N1 row or sigma == 0.
Vec epsilon_y(const EncodingScheme& scheme, double delta_y);

// eps_j = ||Pi3_j||_1 delta_u / (||(Pi4 N1)_j||_2 sigma), reading the bound's
// row norm as row j of the product Pi4*N1.
Vec epsilon_u(const EncodingScheme& scheme, double delta_u);

// Smallest sigma meeting both row-wise targets; the formulas are 1/sigma
// homogeneous so this is a closed-form max over rows.
double calibrate_sigma(const EncodingScheme& scheme, double delta_y, double delta_u,
                       double eps_y_target, double eps_u_target);

struct PrivacyReport {
    Vec eps_y_rows;
    Vec eps_u_rows;
    double eps_y_max = 0.0;
    double eps_u_max = 0.0;
    Sensitivity sensitivity;
    double cond_pi1 = 0.0, cond_pi2 = 0.0, cond_pi3 = 0.0, cond_pi4 = 0.0;
    double sigma = 0.0;
};

PrivacyReport make_report(const EncodingScheme& scheme, const Sensitivity& sens);

// Distance from the eps = 0 perfect-secrecy ideal: max(eps_y_max, eps_u_max).
double perfect_secrecy_margin(const PrivacyReport& report);

void write_report_text(std::ostream& os, const PrivacyReport& report);
void write_report_csv(std::ostream& os, const PrivacyReport& report);

// Empirical differential-privacy check: histogram the encoded coordinates for
// two adjacent inputs and estimate the per-coordinate sup log-ratio. Advisory
// output reported alongside the analytic bound; the slack columns carry the
// statistical uncertainty of each ratio estimate derived from bin counts.
struct ProbeResult {
    Vec max_log_ratio;    // per encoded coordinate
    Vec slack_at_max;     // estimation slack at the maximizing bin
    Vec analytic_eps;     // epsilon_y rows at delta = ||y - y'||_1
    long trials = 0;
    int bins = 0;
};

ProbeResult adjacency_ratio_probe(const EncodingScheme& scheme, const Vec& y,
                                  const Vec& y_prime, long trials, int bins, Rng& rng);

}  // namespace privacy
}  // namespace imkit
