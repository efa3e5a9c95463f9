#pragma once

// Run configuration (flat "key=value" text with a schema version) and the
// per-command run manifest written next to every output.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ssd {

inline constexpr int kConfigSchema = 1;

/// Ordered key/value settings. Lines starting with '#' are comments; the
/// file must declare "schema=1".
class RunConfig {
 public:
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  std::string to_text() const;
  static RunConfig parse(const std::string& text, const std::string& origin = "<string>");
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
};

struct ManifestInput {
  std::string role;
  std::string path;
  std::string digest;  // hex FNV-1a of the file bytes
};

struct RunManifest {
  std::string command;
  RunConfig config;
  std::vector<ManifestInput> inputs;
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
  std::string version;

  std::string to_json() const;
  void save(const std::string& path) const;
};

/// Hex FNV-1a digest of a whole file.
std::string file_digest(const std::string& path);

/// Library version string.
const char* version();

}  // namespace ssd
