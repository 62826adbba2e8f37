#include "archshape/error.hpp"

namespace archshape {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::empty_mesh: return "empty mesh";
    case ErrorKind::index: return "index error";
    case ErrorKind::degenerate_geometry: return "degenerate geometry";
    case ErrorKind::watertight: return "mesh is not watertight";
    case ErrorKind::argument: return "argument error";
    case ErrorKind::format: return "format error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::config: return "config error";
    case ErrorKind::state: return "state error";
    case ErrorKind::contract: return "contract error";
    case ErrorKind::empty_form: return "empty form";
    case ErrorKind::generation: return "generation error";
    case ErrorKind::divergence: return "training diverged";
    case ErrorKind::undefined_metric: return "undefined metric";
    case ErrorKind::io: return "I/O error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace archshape
