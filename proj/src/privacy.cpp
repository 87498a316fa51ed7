// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#include "imkit/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "imkit/scheme.hpp"

namespace imkit::privacy {

namespace {

double laplace_scalar(double mu, double b, Rng& rng) {
    // Inverse CDF from a uniform draw strictly inside (0,1).
    const double p = rng.uniform01() - 0.5;
    const double sign = p < 0.0 ? -1.0 : 1.0;
    return mu - b * sign * std::log(1.0 - 2.0 * std::abs(p));
}

}  // namespace

Vec laplace_sample(const LaplaceParams& params, Index dim, Rng& rng) {
    if (dim < 1) throw ConfigError("laplace_sample: dim must be >= 1");
    Vec mu = params.mu.size() == 0 ? Vec::Zero(dim) : params.mu;
    if (mu.size() != dim) throw DimensionError("laplace_sample: mu dimension mismatch");
    if (params.sigma == 0.0) return mu;  // degenerate noiseless limit
    Vec out(dim);
    for (Index i = 0; i < dim; ++i) out(i) = laplace_scalar(mu(i), params.sigma, rng);
    return out;
}

Vec epsilon_y(const EncodingScheme& scheme, double delta_y) {
    if (!(delta_y >= 0.0)) throw ConfigError("epsilon_y: delta_y must be >= 0");
    if (scheme.noise_sigma() <= 0.0)
        throw InvalidSchemeError("epsilon_y: sigma must be positive for a privacy bound");
    const auto pi1 = linalg::row_norms(scheme.pi1());
    const auto n1 = linalg::row_norms(scheme.n1());
    if (n1.l2.minCoeff() <= 0.0)
        throw InvalidSchemeError("epsilon_y: N1 has a zero row; bound undefined");
    return (pi1.l1 * delta_y).cwiseQuotient(n1.l2 * scheme.noise_sigma());
}

Vec epsilon_u(const EncodingScheme& scheme, double delta_u) {
    if (!(delta_u >= 0.0)) throw ConfigError("epsilon_u: delta_u must be >= 0");
    if (scheme.noise_sigma() <= 0.0)
        throw InvalidSchemeError("epsilon_u: sigma must be positive for a privacy bound");
    const auto pi3 = linalg::row_norms(scheme.pi3());
    const Mat prod = scheme.pi4() * scheme.n1();
    const auto pn = linalg::row_norms(prod);
    if (pn.l2.minCoeff() <= 0.0)
        throw InvalidSchemeError("epsilon_u: Pi4*N1 has a zero row; bound undefined");
    return (pi3.l1 * delta_u).cwiseQuotient(pn.l2 * scheme.noise_sigma());
}

double calibrate_sigma(const EncodingScheme& scheme, double delta_y, double delta_u,
                       double eps_y_target, double eps_u_target) {
    if (!(eps_y_target > 0.0) || !(eps_u_target > 0.0))
        throw ConfigError("calibrate_sigma: targets must be positive");
    const auto pi1 = linalg::row_norms(scheme.pi1());
    const auto n1 = linalg::row_norms(scheme.n1());
    const auto pi3 = linalg::row_norms(scheme.pi3());
    const auto pn = linalg::row_norms(Mat(scheme.pi4() * scheme.n1()));
    if (n1.l2.minCoeff() <= 0.0 || pn.l2.minCoeff() <= 0.0)
        throw InvalidSchemeError("calibrate_sigma: zero noise row; bound undefined");
    // eps_i(sigma) = c_i / sigma, so the binding sigma is max_i c_i / target.
    const double need_y = (pi1.l1 * delta_y).cwiseQuotient(n1.l2).maxCoeff() / eps_y_target;
    const double need_u = (pi3.l1 * delta_u).cwiseQuotient(pn.l2).maxCoeff() / eps_u_target;
    return std::max(need_y, need_u);
}

PrivacyReport make_report(const EncodingScheme& scheme, const Sensitivity& sens) {
    PrivacyReport r;
    r.sensitivity = sens;
    r.sigma = scheme.noise_sigma();
    r.eps_y_rows = epsilon_y(scheme, sens.delta_y);
    r.eps_u_rows = epsilon_u(scheme, sens.delta_u);
    r.eps_y_max = r.eps_y_rows.maxCoeff();
    r.eps_u_max = r.eps_u_rows.maxCoeff();
    r.cond_pi1 = linalg::condition_number(scheme.pi1());
    r.cond_pi2 = linalg::condition_number(scheme.pi2());
    r.cond_pi3 = linalg::condition_number(scheme.pi3());
    r.cond_pi4 = linalg::condition_number(scheme.pi4());
    return r;
}

double perfect_secrecy_margin(const PrivacyReport& report) {
    return std::max(report.eps_y_max, report.eps_u_max);
}

void write_report_text(std::ostream& os, const PrivacyReport& r) {
    os << "privacy report\n";
    os << "  sigma (Laplace scale b): " << r.sigma << "\n";
    os << "  sensitivities: delta_y=" << r.sensitivity.delta_y
       << " delta_u=" << r.sensitivity.delta_u << "\n";
    os << "  eps_y_max: " << r.eps_y_max << "\n";
    os << "  eps_u_max: " << r.eps_u_max << "\n";
    os << "  perfect-secrecy margin (distance from eps=0): "
       << std::max(r.eps_y_max, r.eps_u_max) << "\n";
    os << "  condition numbers: pi1=" << r.cond_pi1 << " pi2=" << r.cond_pi2
       << " pi3=" << r.cond_pi3 << " pi4=" << r.cond_pi4 << "\n";
}

void write_report_csv(std::ostream& os, const PrivacyReport& r) {
    os << "row,eps_y,eps_u\n";
    const Index n = std::max(r.eps_y_rows.size(), r.eps_u_rows.size());
    for (Index i = 0; i < n; ++i) {
        os << i << ",";
        if (i < r.eps_y_rows.size()) os << r.eps_y_rows(i);
        os << ",";
        if (i < r.eps_u_rows.size()) os << r.eps_u_rows(i);
        os << "\n";
    }
}

ProbeResult adjacency_ratio_probe(const EncodingScheme& scheme, const Vec& y,
                                  const Vec& y_prime, long trials, int bins, Rng& rng) {
    if (trials < 1) throw ConfigError("adjacency_ratio_probe: trials must be >= 1");
    if (bins < 2) throw ConfigError("adjacency_ratio_probe: bins must be >= 2");
    const Index m = scheme.dims().ny_lift;

    // Draw the encoded coordinates for both inputs.
    Mat samples_a(trials, m), samples_b(trials, m);
    for (long t = 0; t < trials; ++t) {
        samples_a.row(t) = scheme.encode_input(y, 0, rng).ytilde.transpose();
        samples_b.row(t) = scheme.encode_input(y_prime, 0, rng).ytilde.transpose();
    }

    ProbeResult res;
    res.trials = trials;
    res.bins = bins;
    res.max_log_ratio = Vec::Zero(m);
    res.slack_at_max = Vec::Zero(m);
    const double dy = (y - y_prime).lpNorm<1>();
    res.analytic_eps = epsilon_y(scheme, dy);

    const long min_count = 5;  // bins thinner than this carry no usable signal
    for (Index c = 0; c < m; ++c) {
        const double lo = std::min(samples_a.col(c).minCoeff(), samples_b.col(c).minCoeff());
        const double hi = std::max(samples_a.col(c).maxCoeff(), samples_b.col(c).maxCoeff());
        const double width = (hi - lo) > 0 ? (hi - lo) : 1.0;
        std::vector<long> ha(bins, 0), hb(bins, 0);
        auto bucket = [&](double v) {
            int b = static_cast<int>((v - lo) / width * bins);
            return std::clamp(b, 0, bins - 1);
        };
        for (long t = 0; t < trials; ++t) {
            ++ha[bucket(samples_a(t, c))];
            ++hb[bucket(samples_b(t, c))];
        }
        double best = 0.0, slack = 0.0;
        for (int b = 0; b < bins; ++b) {
            if (ha[b] < min_count || hb[b] < min_count) continue;
            const double lr = std::abs(std::log(static_cast<double>(ha[b]) / hb[b]));
            if (lr > best) {
                best = lr;
                // ~4 sigma of the log-ratio of two Poisson counts.
                slack = 4.0 * std::sqrt(1.0 / ha[b] + 1.0 / hb[b]);
            }
        }
        res.max_log_ratio(c) = best;
        res.slack_at_max(c) = slack;
    }
    return res;
}

}  // namespace imkit::privacy
