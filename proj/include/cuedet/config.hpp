#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cuedet/common.hpp"

namespace cuedet {

// Flat typed key-value run configuration:
//
//   schema_version = 1
//   seed = 7                  # integers
//   learning_rate = 0.001     # floats
//   platforms = "alpha,beta"  # quoted strings; get_list splits on commas
//   shuffle = true            # booleans
//
// Unknown keys are kept (subcommands validate their own set); schema_version
// must be 1.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text);
  static RunConfig from_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;

  // Raw file bytes, hashed into run manifests.
  const std::string& raw() const { return raw_; }

 private:
  std::map<std::string, std::string> values_;
  std::string raw_;
};

// manifest.json written next to every run's outputs: schema version, tool
// version, command, config hash, seed, and output names. No timestamps, so
// reruns are byte-identical.
void write_manifest(const std::string& dir, const std::string& command,
                    const std::string& config_bytes, long long seed,
                    const std::vector<std::string>& outputs);

}  // namespace cuedet
