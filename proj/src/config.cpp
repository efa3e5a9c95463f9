#include "ssd/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ssd/binio.hpp"
#include "ssd/common.hpp"

namespace ssd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of("=\n#") != std::string::npos) throw Error("invalid config key '" + key + "'");
  if (value.find('\n') != std::string::npos) throw Error("config value for '" + key + "' contains a newline");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error("missing config key '" + key + "'");
  return it->second;
}

std::string RunConfig::get_or(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(get(key), &used);
    if (used != get(key).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error("config key '" + key + "' is not a number: " + get(key));
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = get(key);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw Error("config key '" + key + "' is not a nonnegative integer: " + s);
  return std::stoull(s);
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "schema=" << kConfigSchema << "\n";
  for (const auto& [k, v] : values_) {
    if (k != "schema") os << k << "=" << v << "\n";
  }
  return os.str();
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool schema_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "schema") {
      if (value != std::to_string(kConfigSchema))
        throw Error(origin + ":" + std::to_string(lineno) + ": unsupported config schema " + value);
      schema_seen = true;
      continue;
    }
    if (cfg.has(key)) throw Error(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    cfg.set(key, value);
  }
  if (!schema_seen) throw Error(origin + ": missing 'schema=" + std::to_string(kConfigSchema) + "' line");
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write config file " + path);
  out << to_text();
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = version;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  cfg["schema"] = kConfigSchema;
  for (const auto& [k, v] : config.values()) cfg[k] = v;
  j["config"] = cfg;
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& in : inputs) j["inputs"].push_back({{"role", in.role}, {"path", in.path}, {"digest", in.digest}});
  j["outputs"] = outputs;
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

void RunManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path);
  out << to_json();
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  Fnv1a64 h;
  std::vector<std::uint8_t> buf(1 << 16);
  while (in) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    h.update(std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return hex_digest(h.value());
}

const char* version() { return "0.1.0"; }

}  // namespace ssd
