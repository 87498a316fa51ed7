// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#include "imkit/registry.hpp"

#include "imkit/casestudy_control.hpp"

namespace imkit {

protocol::AlgorithmResolver builtin_algorithms(const SchemeDims& dims) {
    return [dims](const std::string& name) -> std::optional<protocol::AlgorithmSpec> {
        if (name == "echo") {
            if (dims.ny != dims.nu) return std::nullopt;
            DynamicAlgorithm alg;
            alg.dims = {dims.nzeta, dims.ny, dims.nu, 0};
            alg.zeta0 = Vec::Zero(dims.nzeta);
            alg.f = [](const Vec& zeta, const Vec&, const Vec&) { return zeta; };
            alg.g = [](const Vec&, const Vec& y, const Vec&) { return y; };
            return protocol::AlgorithmSpec{std::move(alg), 1};
        }
        if (name == "reactor-controller") {
            if (dims.ny != 1 || dims.nu != 1 || dims.nzeta != 3) return std::nullopt;
            return protocol::AlgorithmSpec{control::reactor_controller_algorithm(), 1};
        }
        return std::nullopt;
    };
}

}  // namespace imkit
