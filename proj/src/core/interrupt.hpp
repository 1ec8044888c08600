#pragma once

#include <atomic>

#include "core/common.hpp"

namespace metalora {

// Cooperative cancellation: signal handlers / API callers set the flag, long
// loops poll it between batches and bail out with InterruptedError.
inline std::atomic<bool>& interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline void request_interrupt() { interrupt_flag().store(true); }
inline void clear_interrupt() { interrupt_flag().store(false); }

inline void throw_if_interrupted() {
  if (interrupt_flag().load()) throw InterruptedError("interrupted");
}

}  // namespace metalora
