#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mixface {

enum class Errc {
  ZeroVector,
  DimensionMismatch,
  InvalidLabel,
  EmptyInput,
  InvalidMargin,
  InvalidEpsilon,
  NoPositives,
  NoNegatives,
  PerturbationOutOfDomain,
  InvalidConfig,
  InsufficientSamples,
  NonFiniteLoss,
  EmptyPairs,
  OneClassOnly,
  Io,
};

std::string_view to_string(Errc code);

/// Every failure raised by the library carries one of the `Errc` codes so
/// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mixface
