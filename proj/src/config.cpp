#include "cuedet/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cuedet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  cfg.raw_ = text;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments, but not inside quoted values
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw config_error("config line " + std::to_string(line_no) + ": empty key or value");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    cfg.values_[key] = value;
  }
  const long long version = cfg.get_int("schema_version", 1);
  if (version != 1)
    throw config_error("unsupported config schema_version " + std::to_string(version));
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw config_error("config: missing required key '" + key + "'");
  return it->second;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long long RunConfig::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t used = 0;
    const long long out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (...) {
    throw config_error("config: key '" + key + "' is not an integer: " + v);
  }
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (...) {
    throw config_error("config: key '" + key + "' is not a number: " + v);
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw config_error("config: key '" + key + "' is not a boolean: " + v);
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  const std::string v = get_string(key);
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  if (out.empty()) throw config_error("config: key '" + key + "' is an empty list");
  return out;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const std::string& config_bytes, long long seed,
                    const std::vector<std::string>& outputs) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["tool"] = "cuedet";
  j["tool_version"] = kVersion;
  j["command"] = command;
  j["config_hash"] = "fnv1a:" + fnv1a_hex(config_bytes);
  j["seed"] = seed;
  j["outputs"] = outputs;
  const auto path = std::filesystem::path(dir) / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace cuedet
