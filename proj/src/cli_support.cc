#include "maskmotion/cli_support.h"

#include <algorithm>
#include <ctime>
#include <set>

#include "maskmotion/mask_io.h"

#ifndef MASKMOTION_GIT_DESCRIBE
#define MASKMOTION_GIT_DESCRIBE "unknown"
#endif

namespace maskmotion {

namespace fs = std::filesystem;

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

Error LineError(int line, const std::string& what) {
  return Error(ErrorCategory::kConfig, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<ConfigEntry> ParseConfigText(std::string_view text) {
  std::vector<ConfigEntry> entries;
  std::set<std::string> seen;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = Trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;

    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw LineError(line_no, "expected 'key = value'");
    }
    std::string key(Trim(line.substr(0, eq)));
    std::string_view value = Trim(line.substr(eq + 1));
    if (key.empty()) throw LineError(line_no, "empty key");
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.find_first_of(" \t") != std::string::npos) {
      throw LineError(line_no, "key '" + key + "' contains whitespace");
    }
    if (!value.empty() && (value.front() == '"' || value.front() == '\'')) {
      const size_t close = value.find(value.front(), 1);
      if (close == std::string_view::npos) {
        throw LineError(line_no, "unterminated quote in value of '" + key + "'");
      }
      const std::string_view rest = Trim(value.substr(close + 1));
      if (!rest.empty() && rest.front() != '#') {
        throw LineError(line_no, "text after quoted value of '" + key + "'");
      }
      value = value.substr(1, close - 1);
    } else {
      const size_t hash = value.find(" #");
      if (hash != std::string_view::npos) value = Trim(value.substr(0, hash));
    }
    if (!seen.insert(key).second) {
      throw LineError(line_no, "duplicate key '" + key + "'");
    }
    entries.push_back({key, std::string(value), line_no});
  }
  return entries;
}

std::vector<ConfigEntry> ReadConfigFile(const fs::path& path) {
  const std::string text = ReadFileBytes(path);
  try {
    return ParseConfigText(text);
  } catch (const Error& e) {
    throw Error(e.category(), path.string() + ": " + e.what());
  }
}

int ExitStatus(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kUsage:
      return 2;
    case ErrorCategory::kIo:
      return 3;
    case ErrorCategory::kFormat:
      return 4;
    case ErrorCategory::kConfig:
      return 5;
    case ErrorCategory::kNumeric:
      return 6;
    case ErrorCategory::kInvalidArgument:
      return 7;
    case ErrorCategory::kShapeMismatch:
      return 8;
    case ErrorCategory::kInternal:
      return 9;
  }
  return 1;
}

nlohmann::json RunManifest::ToJson() const {
  return {{"command", command},
          {"argv", argv},
          {"config", config},
          {"seed", seed},
          {"git_describe", git_describe},
          {"outputs", outputs},
          {"started_at", started_at},
          {"wall_clock_seconds", wall_clock_seconds}};
}

void WriteRunManifest(const fs::path& dir, const RunManifest& manifest) {
  WriteFileBytes(dir / kRunManifestName, manifest.ToJson().dump(2) + "\n");
}

std::string BuildDescription() { return MASKMOTION_GIT_DESCRIBE; }

std::string UtcTimestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void PrepareOutputDir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir, ec)) {
      throw Error(ErrorCategory::kUsage, dir.string() + ": exists and is not a directory");
    }
    if (!fs::is_empty(dir, ec)) {
      if (!force) {
        throw Error(ErrorCategory::kUsage,
                    dir.string() + ": directory is not empty (pass --force to replace it)");
      }
      if (!fs::exists(dir / kRunManifestName) && !fs::exists(dir / "manifest.json")) {
        throw Error(ErrorCategory::kUsage,
                    dir.string() +
                        ": refusing to clear a directory that was not written by this tool");
      }
      fs::remove_all(dir, ec);
      if (ec) {
        throw Error(ErrorCategory::kIo, dir.string() + ": cannot clear: " + ec.message());
      }
    }
  }
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCategory::kIo, dir.string() + ": cannot create: " + ec.message());
  }
}

}  // namespace maskmotion
