#pragma once

#include <atomic>

namespace fade {

// Set from a signal handler; long loops poll it at epoch boundaries so that
// only complete epochs are reported.
inline std::atomic<bool>& interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline bool interrupt_requested() { return interrupt_flag().load(std::memory_order_relaxed); }

}  // namespace fade
