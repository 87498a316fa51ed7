// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#include "imkit/scheme.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "imkit/privacy.hpp"
#include "imkit/serial.hpp"

namespace imkit {

namespace {

constexpr char kMagic[4] = {'I', 'M', 'K', 'T'};
constexpr std::uint16_t kVersion = 1;
constexpr double kResidualTol = 1e-10;

void check_dim(const Vec& v, Index expect, const char* what) {
    if (v.size() != expect) {
        std::ostringstream msg;
        msg << what << ": expected dim " << expect << ", got " << v.size();
        throw DimensionError(msg.str());
    }
}

}  // namespace

EncodingScheme EncodingScheme::keygen(const SchemeDims& dims, const SchemeScales& scales,
                                      const NoiseSpec& noise, std::uint64_t seed) {
    if (dims.ny < 1 || dims.nu < 1 || dims.nzeta < 1)
        throw ConfigError("keygen: original dimensions must be >= 1");
    if (dims.ny_lift <= dims.ny || dims.nu_lift <= dims.nu || dims.nzeta_lift <= dims.nzeta)
        throw ConfigError("keygen: lifted dimensions must strictly exceed originals");
    if (!(noise.sigma >= 0.0) || !std::isfinite(noise.sigma))
        throw ConfigError("keygen: sigma must be finite and >= 0");

    Rng rng(seed);
    EncodingScheme s;
    s.dims_ = dims;
    s.seed_ = seed;
    s.pi1_ = linalg::gen_full_col_rank(dims.ny_lift, dims.ny, scales.pi1, rng);
    s.pi2_ = linalg::gen_full_col_rank(dims.nzeta_lift, dims.nzeta, scales.pi2, rng);
    s.pi3_ = linalg::gen_full_col_rank(dims.nu_lift, dims.nu, scales.pi3, rng);
    // Pi4 only needs full (min-dimension) rank; transpose the generator for
    // the wide case.
    if (dims.nu_lift >= dims.ny_lift) {
        s.pi4_ = linalg::gen_full_col_rank(dims.nu_lift, dims.ny_lift, scales.pi4, rng);
    } else {
        s.pi4_ = linalg::gen_full_col_rank(dims.ny_lift, dims.nu_lift, scales.pi4, rng).transpose();
    }
    s.n1_ = linalg::kernel_basis(s.pi1_, rng);
    s.pi1_left_ = linalg::left_inverse(s.pi1_);
    s.pi2_left_ = linalg::left_inverse(s.pi2_);
    s.pi3_left_ = linalg::left_inverse(s.pi3_);
    s.noise_mu_ = noise.mu.size() == 0 ? Vec::Zero(dims.ny_lift - dims.ny) : noise.mu;
    s.noise_sigma_ = noise.sigma;
    s.validate();
    return s;
}

EncodingScheme EncodingScheme::from_parts(Mat pi1, Mat pi2, Mat pi3, Mat pi4, Mat n1,
                                          Mat pi1_left, Mat pi2_left, Mat pi3_left,
                                          Vec noise_mu, double noise_sigma,
                                          std::uint64_t seed) {
    EncodingScheme s;
    s.dims_.ny = pi1.cols();
    s.dims_.ny_lift = pi1.rows();
    s.dims_.nzeta = pi2.cols();
    s.dims_.nzeta_lift = pi2.rows();
    s.dims_.nu = pi3.cols();
    s.dims_.nu_lift = pi3.rows();
    s.pi1_ = std::move(pi1);
    s.pi2_ = std::move(pi2);
    s.pi3_ = std::move(pi3);
    s.pi4_ = std::move(pi4);
    s.n1_ = std::move(n1);
    s.pi1_left_ = std::move(pi1_left);
    s.pi2_left_ = std::move(pi2_left);
    s.pi3_left_ = std::move(pi3_left);
    s.noise_mu_ = std::move(noise_mu);
    s.noise_sigma_ = noise_sigma;
    s.seed_ = seed;
    s.validate();
    return s;
}

void EncodingScheme::validate() const {
    const auto& d = dims_;
    if (d.ny_lift <= d.ny || d.nu_lift <= d.nu || d.nzeta_lift <= d.nzeta)
        throw ConfigError("scheme: lifted dimensions must strictly exceed originals");
    if (pi4_.rows() != d.nu_lift || pi4_.cols() != d.ny_lift)
        throw DimensionError("scheme: pi4 shape mismatch");
    if (n1_.rows() != d.ny_lift || n1_.cols() != d.ny_lift - d.ny)
        throw DimensionError("scheme: n1 shape mismatch");
    if (noise_mu_.size() != d.ny_lift - d.ny)
        throw DimensionError("scheme: noise mu dimension mismatch");
    if (!(noise_sigma_ >= 0.0) || !std::isfinite(noise_sigma_))
        throw ConfigError("scheme: sigma must be finite and >= 0");
    if (!linalg::is_finite(pi1_) || !linalg::is_finite(pi2_) || !linalg::is_finite(pi3_) ||
        !linalg::is_finite(pi4_) || !linalg::is_finite(n1_))
        throw NumericError("scheme: non-finite matrix entries");

    auto residual = [](const Mat& left, const Mat& m) {
        return (left * m - Mat::Identity(m.cols(), m.cols())).cwiseAbs().maxCoeff();
    };
    if (residual(pi1_left_, pi1_) > kResidualTol)
        throw RankError("scheme: pi1_left * pi1 != I");
    if (residual(pi2_left_, pi2_) > kResidualTol)
        throw RankError("scheme: pi2_left * pi2 != I");
    if (residual(pi3_left_, pi3_) > kResidualTol)
        throw RankError("scheme: pi3_left * pi3 != I");
    if ((pi1_left_ * n1_).cwiseAbs().maxCoeff() > kResidualTol)
        throw RankError("scheme: pi1_left * n1 != 0");
}

EncodedInput EncodingScheme::encode_input(const Vec& y, std::uint64_t step, Rng& rng) const {
    return encode_input_audit(y, step, rng).first;
}

std::pair<EncodedInput, Vec> EncodingScheme::encode_input_audit(const Vec& y,
                                                                std::uint64_t step,
                                                                Rng& rng) const {
    check_dim(y, dims_.ny, "encode_input: y");
    privacy::LaplaceParams params{noise_mu_, noise_sigma_};
    Vec s = privacy::laplace_sample(params, dims_.ny_lift - dims_.ny, rng);
    EncodedInput e;
    e.ytilde = linalg::accurate_product_sum(pi1_, y, n1_, s);
    e.step = step;
    return {std::move(e), std::move(s)};
}

Vec EncodingScheme::decode_input(const EncodedInput& e) const {
    check_dim(e.ytilde, dims_.ny_lift, "decode_input: ytilde");
    return linalg::accurate_product(pi1_left_, e.ytilde);
}

EncodedUtility EncodingScheme::encode_utility(const Vec& u, const Vec& ytilde,
                                              std::uint64_t step) const {
    check_dim(u, dims_.nu, "encode_utility: u");
    check_dim(ytilde, dims_.ny_lift, "encode_utility: ytilde");
    EncodedUtility eu;
    eu.utilde = linalg::accurate_product_sum(pi3_, u, pi4_, ytilde);
    eu.step = step;
    return eu;
}

Vec EncodingScheme::decode_utility(const EncodedUtility& eu, const EncodedInput& ei) const {
    if (eu.step != ei.step)
        throw ProtocolError("decode_utility: utility step " + std::to_string(eu.step) +
                            " does not match retained input step " + std::to_string(ei.step));
    check_dim(eu.utilde, dims_.nu_lift, "decode_utility: utilde");
    check_dim(ei.ytilde, dims_.ny_lift, "decode_utility: ytilde");
    return linalg::accurate_product(pi3_left_,
                                    linalg::accurate_offset_difference(eu.utilde, pi4_, ei.ytilde));
}

Vec EncodingScheme::immerse_state(const Vec& zeta) const {
    check_dim(zeta, dims_.nzeta, "immerse_state: zeta");
    return pi2_ * zeta;
}

void EncodingScheme::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save: cannot open " + path);
    os.write(kMagic, 4);
    serial::put_u16(os, kVersion);
    serial::put_u64(os, static_cast<std::uint64_t>(dims_.ny));
    serial::put_u64(os, static_cast<std::uint64_t>(dims_.nu));
    serial::put_u64(os, static_cast<std::uint64_t>(dims_.nzeta));
    serial::put_u64(os, static_cast<std::uint64_t>(dims_.ny_lift));
    serial::put_u64(os, static_cast<std::uint64_t>(dims_.nu_lift));
    serial::put_u64(os, static_cast<std::uint64_t>(dims_.nzeta_lift));
    for (const Mat* m : {&pi1_, &pi2_, &pi3_, &pi4_, &n1_, &pi1_left_, &pi2_left_, &pi3_left_})
        linalg::write_mat(os, *m);
    linalg::write_vec(os, noise_mu_);
    serial::put_f64(os, noise_sigma_);
    serial::put_u64(os, seed_);
    if (!os) throw IoError("save: write failure on " + path);
}

EncodingScheme EncodingScheme::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("load: bad magic (not a scheme file): " + path);
    const std::uint16_t version = serial::get_u16(is);
    if (version != kVersion)
        throw IoError("load: unsupported scheme version " + std::to_string(version));
    EncodingScheme s;
    s.dims_.ny = static_cast<Index>(serial::get_u64(is));
    s.dims_.nu = static_cast<Index>(serial::get_u64(is));
    s.dims_.nzeta = static_cast<Index>(serial::get_u64(is));
    s.dims_.ny_lift = static_cast<Index>(serial::get_u64(is));
    s.dims_.nu_lift = static_cast<Index>(serial::get_u64(is));
    s.dims_.nzeta_lift = static_cast<Index>(serial::get_u64(is));
    for (Mat* m : {&s.pi1_, &s.pi2_, &s.pi3_, &s.pi4_, &s.n1_, &s.pi1_left_, &s.pi2_left_, &s.pi3_left_})
        *m = linalg::read_mat(is);
    s.noise_mu_ = linalg::read_vec(is);
    s.noise_sigma_ = serial::get_f64(is);
    s.seed_ = serial::get_u64(is);
    s.validate();
    return s;
}

bool EncodingScheme::operator==(const EncodingScheme& other) const {
    auto eq = [](const Mat& a, const Mat& b) {
        return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
    };
    return eq(pi1_, other.pi1_) && eq(pi2_, other.pi2_) && eq(pi3_, other.pi3_) &&
           eq(pi4_, other.pi4_) && eq(n1_, other.n1_) && eq(pi1_left_, other.pi1_left_) &&
           eq(pi2_left_, other.pi2_left_) && eq(pi3_left_, other.pi3_left_) &&
           noise_mu_.size() == other.noise_mu_.size() && noise_mu_ == other.noise_mu_ &&
           noise_sigma_ == other.noise_sigma_ && seed_ == other.seed_;
}

}  // namespace imkit
