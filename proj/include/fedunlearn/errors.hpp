#pragma once

#include <stdexcept>
#include <string>

namespace fedunlearn {

// Invalid run configuration: bad sizes, out-of-range parameters, impossible setups.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Violation of the client/server exchange contract (e.g. mismatched architectures).
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedunlearn
