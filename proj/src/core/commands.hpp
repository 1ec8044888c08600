#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace metalora {

// Progress sink; each call is one complete line without a trailing newline.
using LogFn = std::function<void(const std::string&)>;

// All commands return a process exit status: 0 on success, otherwise the
// ErrorCode value of the failure (failed verification maps to VerifyFailed).
// An interrupted run leaves its output directory behind with an "incomplete"
// marker file still present; a finished run removes the marker.

// Runs the property suites (optionally one module's) and writes
// verify_report.txt / verify_report.json under report_dir.
int cmd_verify(const std::string& filter_module, const std::filesystem::path& report_dir,
               const LogFn& log);

// Materializes the adaptation datasets for every configured seed as MTK1
// blobs plus a per-seed index.json under <out_dir>/data.
int cmd_gen_data(const std::filesystem::path& config_path, const LogFn& log);

// Trains the configured arm for one seed; writes checkpoints and the
// train_report files under the output directory.
int cmd_train(const std::filesystem::path& config_path,
              const std::optional<std::uint64_t>& seed_override, const std::string& out_override,
              const LogFn& log);

// Full arm x seed comparison; writes comparison.json / comparison.csv.
int cmd_compare(const std::filesystem::path& config_path, const LogFn& log);

}  // namespace metalora
