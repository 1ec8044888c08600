#pragma once

#include <cstdlib>
#include <string>
#include <string_view>

namespace metalora {

// Fault-injection switch used to prove the verification suites catch real
// defects: METALORA_MUTATION=<name> arms the named defect for the process.
inline const std::string& active_mutation() {
  static const std::string active = [] {
    const char* v = std::getenv("METALORA_MUTATION");
    return std::string(v ? v : "");
  }();
  return active;
}

inline bool mutation_active(std::string_view name) { return active_mutation() == name; }

}  // namespace metalora
