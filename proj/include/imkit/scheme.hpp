// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "imkit/linalg.hpp"

namespace imkit {

// Original and lifted dimensions; every lifted dimension must be strictly
// larger than its original to create the redundancy the coding relies on.
struct SchemeDims {
    Index ny = 0;
    Index nu = 0;
    Index nzeta = 0;
    Index ny_lift = 0;
    Index nu_lift = 0;
    Index nzeta_lift = 0;
};

struct SchemeScales {
    double pi1 = 1e-4;
    double pi2 = 1e-4;
    double pi3 = 1e-4;
    double pi4 = 1e4;
};

// Per-component Laplace scale b (NOT a standard deviation; the density is
// (1/2b) exp(-|x-mu|/b)). sigma == 0 is the noiseless limit used by tests.
struct NoiseSpec {
    Vec mu;  // dim ny_lift - ny; empty means zero mean
    double sigma = 1e4;
};

struct EncodedInput {
    Vec ytilde;
    std::uint64_t step = 0;
};

struct EncodedUtility {
    Vec utilde;
    std::uint64_t step = 0;
};

// Full key material: the random lift matrices of the affine maps, the kernel
// basis used to inject removable noise, precomputed left inverses (stored,
// not recomputed, so user and cloud numerics are identical), and the noise
// parameters. Immutable after construction; safe to share across threads.
class EncodingScheme {
  public:
    static EncodingScheme keygen(const SchemeDims& dims, const SchemeScales& scales,
                                 const NoiseSpec& noise, std::uint64_t seed);

    // Direct construction from raw parts (validated). Left inverses and the
    // kernel basis are taken as given; used by tests with hand-set matrices.
    static EncodingScheme from_parts(Mat pi1, Mat pi2, Mat pi3, Mat pi4, Mat n1,
                                     Mat pi1_left, Mat pi2_left, Mat pi3_left,
                                     Vec noise_mu, double noise_sigma, std::uint64_t seed);

    const Mat& pi1() const { return pi1_; }
    const Mat& pi2() const { return pi2_; }
    const Mat& pi3() const { return pi3_; }
    const Mat& pi4() const { return pi4_; }
    const Mat& n1() const { return n1_; }
    const Mat& pi1_left() const { return pi1_left_; }
    const Mat& pi2_left() const { return pi2_left_; }
    const Mat& pi3_left() const { return pi3_left_; }
    const Vec& noise_mu() const { return noise_mu_; }
    double noise_sigma() const { return noise_sigma_; }
    const SchemeDims& dims() const { return dims_; }
    std::uint64_t seed() const { return seed_; }

    // ytilde = Pi1 y + N1 s with s ~ Laplace(mu, sigma I).
    EncodedInput encode_input(const Vec& y, std::uint64_t step, Rng& rng) const;

    // Same, additionally returning the noise draw s. The draw is
    // key-equivalent material: audit/test use only, never transmitted.
    std::pair<EncodedInput, Vec> encode_input_audit(const Vec& y, std::uint64_t step,
                                                    Rng& rng) const;

    // Pi1^L ytilde; equals the original y up to float rounding.
    Vec decode_input(const EncodedInput& e) const;

    // utilde = Pi3 u + Pi4 ytilde.
    EncodedUtility encode_utility(const Vec& u, const Vec& ytilde, std::uint64_t step) const;

    // Pi3^L (utilde - Pi4 ytilde); requires the same step's encoded input.
    Vec decode_utility(const EncodedUtility& eu, const EncodedInput& ei) const;

    // zetatilde = Pi2 zeta ("start on the manifold").
    Vec immerse_state(const Vec& zeta) const;

    void save(const std::string& path) const;
    static EncodingScheme load(const std::string& path);

    bool operator==(const EncodingScheme& other) const;

  private:
    EncodingScheme() = default;
    void validate() const;

    Mat pi1_, pi2_, pi3_, pi4_, n1_;
    Mat pi1_left_, pi2_left_, pi3_left_;
    Vec noise_mu_;
    double noise_sigma_ = 0.0;
    SchemeDims dims_;
    std::uint64_t seed_ = 0;
};

}  // namespace imkit
