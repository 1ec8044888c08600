#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace metalora {

// One property/oracle suite outcome.  `max_err` is the worst relative error
// observed; suites that only assert structure leave it at 0.
struct SuiteResult {
  std::string name;
  std::string module;
  bool passed = false;
  std::size_t cases = 0;
  double max_err = 0.0;
  std::string detail;  // first failure diagnostics
};

std::vector<std::string> verify_modules();

// Runs every registered suite (or only those of one module).  Suites never
// throw; failures land in the result rows.
std::vector<SuiteResult> run_verify(const std::string& filter_module = "");

bool verify_passed(const std::vector<SuiteResult>& results);
std::string verify_report_text(const std::vector<SuiteResult>& results);
nlohmann::json verify_report_json(const std::vector<SuiteResult>& results);

}  // namespace metalora
