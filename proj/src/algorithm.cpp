// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#include "imkit/algorithm.hpp"

#include <sstream>
#include <utility>

namespace imkit {

namespace {

void require_finite(const Vec& v, const char* what, std::uint64_t step) {
    if (!v.allFinite()) {
        std::ostringstream msg;
        msg << what << " produced a non-finite value at step " << step;
        throw NumericError(msg.str());
    }
}

void check_compatible(const AlgoDims& a, const SchemeDims& s) {
    if (a.nzeta != s.nzeta || a.ny != s.ny || a.nu != s.nu) {
        std::ostringstream msg;
        msg << "algorithm dims (nzeta=" << a.nzeta << ", ny=" << a.ny << ", nu=" << a.nu
            << ") do not match scheme dims (nzeta=" << s.nzeta << ", ny=" << s.ny
            << ", nu=" << s.nu << ")";
        throw DimensionError(msg.str());
    }
}

}  // namespace

TargetAlgorithm::TargetAlgorithm(DynamicAlgorithm alg,
                                 std::shared_ptr<const EncodingScheme> scheme, int local_steps)
    : scheme_(std::move(scheme)),
      f_(std::move(alg.f)),
      g_(std::move(alg.g)),
      dims_(alg.dims),
      local_steps_(local_steps) {
    if (local_steps_ < 1) throw ConfigError("TargetAlgorithm: local_steps must be >= 1");
    check_compatible(dims_, scheme_->dims());
    if (alg.zeta0.size() != dims_.nzeta)
        throw DimensionError("TargetAlgorithm: zeta0 dimension mismatch");
    zeta_tilde_ = scheme_->immerse_state(alg.zeta0);  // start on the manifold
}

EncodedUtility TargetAlgorithm::step(const EncodedInput& input, const Vec& w) {
    if (input.step != step_)
        throw ProtocolError("target step mismatch: expected " + std::to_string(step_) +
                            ", got " + std::to_string(input.step));
    if (input.ytilde.size() != scheme_->dims().ny_lift)
        throw DimensionError("target step: encoded input dimension mismatch");
    const Vec ybar = linalg::accurate_product(scheme_->pi1_left(), input.ytilde);

    EncodedUtility out;
    if (local_steps_ == 1) {
        const Vec zbar = linalg::accurate_product(scheme_->pi2_left(), zeta_tilde_);
        Vec u = g_(zbar, ybar, w);
        require_finite(u, "g", step_);
        out = scheme_->encode_utility(u, input.ytilde, step_);
        Vec znext = f_(zbar, ybar, w);
        require_finite(znext, "f", step_);
        zeta_tilde_ = scheme_->pi2() * znext;
    } else {
        for (int t = 0; t < local_steps_; ++t) {
            const Vec zbar = linalg::accurate_product(scheme_->pi2_left(), zeta_tilde_);
            Vec znext = f_(zbar, ybar, w);
            require_finite(znext, "f", step_);
            zeta_tilde_ = scheme_->pi2() * znext;
        }
        Vec u = g_(linalg::accurate_product(scheme_->pi2_left(), zeta_tilde_), ybar, w);
        require_finite(u, "g", step_);
        out = scheme_->encode_utility(u, input.ytilde, step_);
    }
    ++step_;
    return out;
}

TargetAlgorithm build_target(const DynamicAlgorithm& alg,
                             std::shared_ptr<const EncodingScheme> scheme) {
    return TargetAlgorithm(alg, std::move(scheme), 1);
}

TargetAlgorithm build_target_two_scale(const TwoScaleAlgorithm& alg,
                                       std::shared_ptr<const EncodingScheme> scheme) {
    if (alg.local_steps < 1) throw ConfigError("build_target_two_scale: local_steps must be >= 1");
    return TargetAlgorithm(alg.base, std::move(scheme), alg.local_steps);
}

ReferenceRun run_reference(const DynamicAlgorithm& alg, const std::vector<StepInput>& inputs) {
    ReferenceRun run;
    Vec zeta = alg.zeta0;
    run.states.push_back(zeta);
    std::uint64_t k = 0;
    for (const auto& in : inputs) {
        Vec u = alg.g(zeta, in.y, in.w);
        require_finite(u, "g", k);
        run.utilities.push_back(std::move(u));
        zeta = alg.f(zeta, in.y, in.w);
        require_finite(zeta, "f", k);
        run.states.push_back(zeta);
        ++k;
    }
    return run;
}

ReferenceRun run_reference(const TwoScaleAlgorithm& alg, const std::vector<StepInput>& inputs) {
    if (alg.local_steps < 1) throw ConfigError("run_reference: local_steps must be >= 1");
    ReferenceRun run;
    Vec zeta = alg.base.zeta0;
    run.states.push_back(zeta);
    std::uint64_t k = 0;
    for (const auto& in : inputs) {
        for (int t = 0; t < alg.local_steps; ++t) {
            zeta = alg.base.f(zeta, in.y, in.w);
            require_finite(zeta, "f", k);
        }
        run.states.push_back(zeta);
        Vec u = alg.base.g(zeta, in.y, in.w);
        require_finite(u, "g", k);
        run.utilities.push_back(std::move(u));
        ++k;
    }
    return run;
}

std::vector<ImmersionResidual> immersion_residuals(const DynamicAlgorithm& alg,
                                                   std::shared_ptr<const EncodingScheme> scheme,
                                                   const std::vector<StepInput>& inputs,
                                                   Rng& rng) {
    TargetAlgorithm target = build_target(alg, scheme);
    Vec zeta = alg.zeta0;
    std::vector<ImmersionResidual> residuals;
    auto record = [&](std::uint64_t k) {
        const Vec diff = target.encoded_state() - scheme->immerse_state(zeta);
        residuals.push_back({k, diff.cwiseAbs().maxCoeff()});
    };
    record(0);
    std::uint64_t k = 0;
    for (const auto& in : inputs) {
        EncodedInput e = scheme->encode_input(in.y, k, rng);
        target.step(e, in.w);
        zeta = alg.f(zeta, in.y, in.w);
        ++k;
        record(k);
    }
    return residuals;
}

}  // namespace imkit
