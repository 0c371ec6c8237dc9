#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sardiff {

// Precondition failure on a public interface. Thrown eagerly, before any
// long-running work or partial output.
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Runtime failure (I/O, corrupt file, non-finite loss, ...).
inline void ensure(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

}  // namespace sardiff
