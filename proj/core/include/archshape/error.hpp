#pragma once

#include <stdexcept>
#include <string>

namespace archshape {

/// Broad failure category. The CLI maps `io` to exit code 2 and every
/// other kind to exit code 1.
enum class ErrorKind {
  parse,
  empty_mesh,
  index,
  degenerate_geometry,
  watertight,
  argument,
  format,
  shape,
  config,
  state,
  contract,
  empty_form,
  generation,
  divergence,
  undefined_metric,
  io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Throws Error(kind, message) when `condition` is false.
void require(bool condition, ErrorKind kind, const std::string& message);

}  // namespace archshape
