// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "imkit/protocol.hpp"

namespace imkit {

// Algorithms both endpoints can instantiate by name (out-of-band
// provisioning: the cloud loads the definition by name plus the scheme file).
//   echo                u = y passthrough, state held
//   reactor-controller  the adaptive output-feedback controller
// Dims are taken from the scheme the server was started with.
protocol::AlgorithmResolver builtin_algorithms(const SchemeDims& dims);

}  // namespace imkit
