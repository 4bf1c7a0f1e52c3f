#pragma once

#include "texmatch/config.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace texmatch::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2, kVerifyFailed = 3 };

/// Flags shared by every subcommand, before they are folded into a RunConfig.
struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<Index> threads;
  bool deterministic = false;
  std::vector<std::string> overrides;  ///< --set section.key=value, applied in order
};

/// Defaults, then --config, then every --set, then the dedicated flags.
/// --deterministic forces one thread.
RunConfig resolve(const CommonOptions& common, const std::vector<std::string>& extra_overrides = {});

/// Creates `out` and writes resolved_config.ini into it.
void write_resolved(const RunConfig& cfg, const std::filesystem::path& out);

int cmd_synth(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_pretrain(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_train(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out,
              std::ostream& log);
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out,
             std::ostream& log);
int cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_verify(std::uint64_t seed, bool inject_gradient_fault, std::ostream& log);

/// Full command line: parses, dispatches and maps exceptions to exit codes.
int run(int argc, char** argv);

}  // namespace texmatch::cli
