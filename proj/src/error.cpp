#include "cfqp/error.hpp"

namespace cfqp {

const char* to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::missing_file: return "missing_file";
    case ErrorKind::empty_file: return "empty_file";
    case ErrorKind::unparsable_cell: return "unparsable_cell";
    case ErrorKind::constant_group: return "constant_group";
    case ErrorKind::empty_group: return "empty_group";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::mode_mismatch: return "mode_mismatch";
    case ErrorKind::config: return "config";
    case ErrorKind::runtime: return "runtime";
  }
  return "unknown";
}

} // namespace cfqp
