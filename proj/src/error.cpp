#include "prodchoice/error.hpp"

namespace prodchoice {

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::backend: return 4;
    case ErrorKind::analysis: return 5;
  }
  return 1;
}

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::backend: return "backend";
    case ErrorKind::analysis: return "analysis";
  }
  return "unknown";
}

}  // namespace prodchoice
