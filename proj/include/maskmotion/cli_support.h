#ifndef MASKMOTION_CLI_SUPPORT_H_
#define MASKMOTION_CLI_SUPPORT_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskmotion/error.h"

namespace maskmotion {

// One `key = value` line of a config file. Keys are normalized to kebab-case.
struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

// Flat key-value text: blank lines and `#` comments are ignored, a value may
// be quoted. Throws kConfig naming the line on malformed or duplicate keys.
std::vector<ConfigEntry> ParseConfigText(std::string_view text);
// As above; errors are prefixed with the path. A missing file is kIo.
std::vector<ConfigEntry> ReadConfigFile(const std::filesystem::path& path);

// Process exit status for an error category. Success is 0 and unexpected
// exceptions are 1.
int ExitStatus(ErrorCategory category);

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;  // resolved settings after defaults, file and flags
  uint64_t seed = 0;
  std::string git_describe;
  std::vector<std::string> outputs;  // relative to the run directory
  std::string started_at;            // UTC, ISO 8601
  double wall_clock_seconds = 0.0;

  nlohmann::json ToJson() const;
};

inline constexpr const char* kRunManifestName = "run_manifest.json";

void WriteRunManifest(const std::filesystem::path& dir,
                      const RunManifest& manifest);

// `git describe` of the source tree at configure time, or "unknown".
std::string BuildDescription();
std::string UtcTimestamp();

// Creates `dir` if needed. A non-empty directory is refused (kUsage) unless
// `force` is set, and even then only directories holding a run manifest or a
// dataset manifest are cleared.
void PrepareOutputDir(const std::filesystem::path& dir, bool force);

}  // namespace maskmotion

#endif  // MASKMOTION_CLI_SUPPORT_H_
