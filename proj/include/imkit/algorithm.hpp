// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "imkit/scheme.hpp"

namespace imkit {

struct AlgoDims {
    Index nzeta = 0;
    Index ny = 0;
    Index nu = 0;
    Index nw = 0;
};

using TransitionFn = std::function<Vec(const Vec& zeta, const Vec& y, const Vec& w)>;

// Caller-supplied discrete-time dynamic algorithm
//   zeta_{k+1} = f(zeta_k, y_k, w_k),  u_k = g(zeta_k, y_k, w_k).
// f and g must be deterministic and total on finite inputs; the disturbance
// channel w travels unencoded and must not carry private data.
struct DynamicAlgorithm {
    TransitionFn f;
    TransitionFn g;
    Vec zeta0;
    AlgoDims dims;
};

// Two-time-scale variant: one received input drives local_steps iterations of
// f before a single utility is emitted from the final state.
struct TwoScaleAlgorithm {
    DynamicAlgorithm base;
    int local_steps = 1;
};

struct ImmersionResidual {
    std::uint64_t step = 0;
    double residual = 0.0;  // max-abs of zetatilde_k - Pi2 zeta_k
};

// The conjugated algorithm the cloud executes. Single-owner state machine:
// one session, one owner; distinct instances may share the scheme.
class TargetAlgorithm {
  public:
    TargetAlgorithm(DynamicAlgorithm alg, std::shared_ptr<const EncodingScheme> scheme,
                    int local_steps = 1);

    // Consumes the encoded input for the current step, returns the encoded
    // utility for that step and advances the internal counter.
    // Single scale: utility from the pre-transition state, then one
    // transition. Two scales: local_steps transitions, then the utility from
    // the final state.
    EncodedUtility step(const EncodedInput& input, const Vec& w);

    const Vec& encoded_state() const { return zeta_tilde_; }
    std::uint64_t current_step() const { return step_; }
    int local_steps() const { return local_steps_; }
    const EncodingScheme& scheme() const { return *scheme_; }

  private:
    std::shared_ptr<const EncodingScheme> scheme_;
    TransitionFn f_, g_;
    AlgoDims dims_;
    int local_steps_;
    Vec zeta_tilde_;
    std::uint64_t step_ = 0;
};

TargetAlgorithm build_target(const DynamicAlgorithm& alg,
                             std::shared_ptr<const EncodingScheme> scheme);
TargetAlgorithm build_target_two_scale(const TwoScaleAlgorithm& alg,
                                       std::shared_ptr<const EncodingScheme> scheme);

struct StepInput {
    Vec y;
    Vec w;
};

struct ReferenceRun {
    std::vector<Vec> states;     // zeta_0 .. zeta_N (one more than inputs)
    std::vector<Vec> utilities;  // u_0 .. u_{N-1}
};

// Plain (unencoded) run; the oracle for residual and lockstep checks.
ReferenceRun run_reference(const DynamicAlgorithm& alg, const std::vector<StepInput>& inputs);
ReferenceRun run_reference(const TwoScaleAlgorithm& alg, const std::vector<StepInput>& inputs);

// Runs plain and target in lockstep with identical encoding noise draws and
// reports the off-the-manifold error per step (index 0 is at construction).
std::vector<ImmersionResidual> immersion_residuals(const DynamicAlgorithm& alg,
                                                   std::shared_ptr<const EncodingScheme> scheme,
                                                   const std::vector<StepInput>& inputs,
                                                   Rng& rng);

}  // namespace imkit
