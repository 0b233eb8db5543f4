#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lgcp/inference.hpp"
#include "lgcp/model.hpp"
#include "lgcp/predict.hpp"
#include "lgcp/simulate.hpp"

namespace lgcp::cli {

// Line-oriented key-value configuration:
//
//   # comment
//   [section]
//   key = value
//
// Keys are addressed as "section.key". Later assignments win, so command-line
// overrides are applied with set() after parsing.
class Config {
 public:
  struct Entry {
    std::string value;
    std::string origin;  // "file:line" or "command line"
  };

  static Config parse(std::string_view text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value, const std::string& origin = "command line");
  // Parses "section.key=value".
  void set_assignment(const std::string& assignment);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  // Relative paths resolve against the directory of the config file.
  std::filesystem::path get_path(const std::string& key, const std::string& fallback) const;

  // Rejects keys outside the known set, naming the key and its origin.
  void check_known_keys() const;

  // 64-bit FNV-1a over the canonical "key=value" lines, excluding settings
  // that cannot change results (worker count, verbosity).
  std::uint64_t hash() const;
  std::string canonical() const;

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::filesystem::path base_dir;

 private:
  const Entry* find(const std::string& key) const;
  std::map<std::string, Entry> entries_;
};

ModelSpec model_spec(const Config& c);
FitOptions fit_options(const Config& c);
SimulationConfig simulation_config(const Config& c);
std::vector<std::string> partitions(const Config& c);  // predict.partitions, "pixel" allowed
IntensityEstimator estimator(const Config& c);
std::uint64_t seed(const Config& c);
int threads(const Config& c);

std::string hex64(std::uint64_t v);

}  // namespace lgcp::cli
