#include "tofr/errors.hpp"

#include <iostream>

namespace tofr {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kTopology: return "topology error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kGeometry: return "degenerate geometry";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kCheckpoint: return "checkpoint error";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

namespace {

void stderr_handler(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

WarningHandler g_handler = &stderr_handler;

}  // namespace

void set_warning_handler(WarningHandler handler) {
  g_handler = handler ? handler : &stderr_handler;
}

void warn(const std::string& message) { g_handler(message); }

}  // namespace tofr
