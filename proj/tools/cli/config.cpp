#include "cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "lgcp/csv.hpp"
#include "lgcp/error.hpp"

namespace lgcp::cli {

namespace {

const std::set<std::string> kKnownKeys = {
    "data.table",
    "model.intercept", "model.linear", "model.besag", "model.edge_list", "model.grid_spacing",
    "model.rw1", "model.iid", "model.pc_median", "model.fixed_precision", "model.standardize",
    "inference.init", "inference.step", "inference.min_step", "inference.probe",
    "inference.max_evaluations", "inference.grid_step", "inference.grid_radius",
    "inference.grid_cutoff", "inference.newton_tolerance", "inference.newton_max_iterations",
    "predict.estimator", "predict.partitions", "predict.fit_dir", "predict.aspect",
    "cv.folds", "cv.seed", "cv.blocked_by",
    "simulate.width", "simulate.height", "simulate.units", "simulate.catchments", "simulate.admin",
    "simulate.beta0", "simulate.beta", "simulate.sigma0", "simulate.trigger_amplitude",
    "simulate.trigger_scale", "simulate.ridge_bumps", "simulate.ridge_amplitude", "simulate.seed",
    "screen.candidates",
    "compare.trigger", "compare.trigger_bins",
    "output.dir",
    "run.seed", "run.threads", "run.verbose",
};

// Per-effect prior medians: model.pc_median.<effect>.
constexpr std::string_view kMedianPrefix = "model.pc_median.";

const std::set<std::string> kPathKeys = {"data.table", "model.edge_list", "predict.fit_dir", "output.dir"};

const std::set<std::string> kNotHashed = {"run.threads", "run.verbose"};

std::string lower(std::string s) {
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& source) {
  Config c;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    std::string line = csv::trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = csv::trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty() || section.find_first_of(" \t.=") != std::string::npos)
        throw ConfigError(where + ": invalid section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = csv::trim(std::string_view(line).substr(0, eq));
    std::string value = csv::trim(std::string_view(line).substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string::npos) value = csv::trim(value.substr(0, hash));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside of any [section]");
    c.entries_[section + "." + key] = {value, where};
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Config c = parse(ss.str(), path.string());
  c.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return c;
}

void Config::set(const std::string& key, const std::string& value, const std::string& origin) {
  if (key.find('.') == std::string::npos) throw ConfigError(origin + ": override '" + key + "' needs section.key");
  std::string v = value;
  // Paths given on the command line are relative to the working directory,
  // not to the config file.
  if (kPathKeys.count(key) && !v.empty() && std::filesystem::path(v).is_relative())
    v = (std::filesystem::current_path() / v).lexically_normal().string();
  entries_[key] = {v, origin};
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must look like section.key=value");
  set(csv::trim(std::string_view(assignment).substr(0, eq)), csv::trim(std::string_view(assignment).substr(eq + 1)));
}

const Config::Entry* Config::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    return csv::parse_double(e->value);
  } catch (const std::invalid_argument&) {
    throw ConfigError(e->origin + ": " + key + " expects a number, got '" + e->value + "'");
  }
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    return csv::parse_int(e->value);
  } catch (const std::invalid_argument&) {
    throw ConfigError(e->origin + ": " + key + " expects an integer, got '" + e->value + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  const std::string v = lower(e->value);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(e->origin + ": " + key + " expects true/false, got '" + e->value + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  const Entry* e = find(key);
  std::vector<std::string> out;
  if (!e || e->value.empty()) return out;
  for (auto& item : csv::split_line(e->value))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::filesystem::path Config::get_path(const std::string& key, const std::string& fallback) const {
  std::filesystem::path p = get(key, fallback);
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

void Config::check_known_keys() const {
  for (const auto& [key, e] : entries_) {
    if (kKnownKeys.count(key)) continue;
    if (key.starts_with(kMedianPrefix) && key.size() > kMedianPrefix.size()) continue;
    throw ConfigError(e.origin + ": unknown setting '" + key + "'");
  }
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [key, e] : entries_) {
    if (kNotHashed.count(key)) continue;
    out += key + "=" + e.value + "\n";
  }
  return out;
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

ModelSpec model_spec(const Config& c) {
  ModelSpec m;
  m.intercept = c.get_bool("model.intercept", true);
  m.linear = c.get_list("model.linear");
  if (const std::string b = c.get("model.besag", ""); !b.empty()) m.besag = b;
  if (c.has("model.edge_list")) m.besag_edge_list = c.get_path("model.edge_list", "").string();
  m.grid_spacing = c.get_double("model.grid_spacing", 1.0);
  for (const auto& item : c.get_list("model.rw1")) {
    Rw1Term t;
    const auto colon = item.find(':');
    t.covariate = csv::trim(std::string_view(item).substr(0, colon));
    if (colon != std::string::npos) {
      try {
        t.bins = static_cast<int>(csv::parse_int(csv::trim(std::string_view(item).substr(colon + 1))));
      } catch (const std::invalid_argument&) {
        throw ConfigError("model.rw1: bad bin count in '" + item + "'");
      }
    }
    m.rw1.push_back(t);
  }
  m.iid = c.get_list("model.iid");
  m.pc_median = c.get_double("model.pc_median", 0.1);
  for (const auto& [key, e] : c.entries())
    if (key.starts_with(kMedianPrefix)) m.pc_median_override[key.substr(kMedianPrefix.size())] = c.get_double(key, 0.1);
  m.fixed_effect_precision = c.get_double("model.fixed_precision", 1e-6);
  m.standardize = c.get_bool("model.standardize", true);
  m.validate();
  return m;
}

FitOptions fit_options(const Config& c) {
  FitOptions f;
  const auto init = c.get_list("inference.init");
  if (!init.empty()) {
    f.init.resize(static_cast<int>(init.size()));
    for (std::size_t k = 0; k < init.size(); ++k) {
      try {
        f.init[static_cast<int>(k)] = csv::parse_double(init[k]);
      } catch (const std::invalid_argument&) {
        throw ConfigError("inference.init: '" + init[k] + "' is not a number");
      }
    }
  }
  NewtonOptions n;
  n.tolerance = c.get_double("inference.newton_tolerance", n.tolerance);
  n.max_iterations = static_cast<int>(c.get_int("inference.newton_max_iterations", n.max_iterations));
  f.optimize.initial_step = c.get_double("inference.step", f.optimize.initial_step);
  f.optimize.min_step = c.get_double("inference.min_step", f.optimize.min_step);
  f.optimize.probe = c.get_double("inference.probe", f.optimize.probe);
  f.optimize.max_evaluations = static_cast<int>(c.get_int("inference.max_evaluations", f.optimize.max_evaluations));
  f.optimize.newton = n;
  f.grid.step = c.get_double("inference.grid_step", f.grid.step);
  f.grid.radius = static_cast<int>(c.get_int("inference.grid_radius", f.grid.radius));
  f.grid.cutoff = c.get_double("inference.grid_cutoff", f.grid.cutoff);
  f.grid.newton = n;
  f.grid.workers = threads(c);
  if (!(f.grid.step > 0)) throw ConfigError("inference.grid_step must be positive");
  if (f.grid.radius < 0) throw ConfigError("inference.grid_radius must be >= 0");
  if (!(f.optimize.min_step > 0) || f.optimize.initial_step < f.optimize.min_step)
    throw ConfigError("inference.step must be >= inference.min_step > 0");
  return f;
}

SimulationConfig simulation_config(const Config& c) {
  SimulationConfig s;
  s.width = static_cast<int>(c.get_int("simulate.width", s.width));
  s.height = static_cast<int>(c.get_int("simulate.height", s.height));
  s.n_units = static_cast<int>(c.get_int("simulate.units", s.n_units));
  s.n_catchments = static_cast<int>(c.get_int("simulate.catchments", s.n_catchments));
  s.n_admin = static_cast<int>(c.get_int("simulate.admin", s.n_admin));
  s.beta0 = c.get_double("simulate.beta0", s.beta0);
  if (c.has("simulate.beta")) {
    s.beta.clear();
    for (const auto& v : c.get_list("simulate.beta")) {
      try {
        s.beta.push_back(csv::parse_double(v));
      } catch (const std::invalid_argument&) {
        throw ConfigError("simulate.beta: '" + v + "' is not a number");
      }
    }
  }
  s.sigma0 = c.get_double("simulate.sigma0", s.sigma0);
  s.trigger_amplitude = c.get_double("simulate.trigger_amplitude", s.trigger_amplitude);
  s.trigger_scale = c.get_double("simulate.trigger_scale", s.trigger_scale);
  s.ridge_bumps = static_cast<int>(c.get_int("simulate.ridge_bumps", s.ridge_bumps));
  s.ridge_amplitude = c.get_double("simulate.ridge_amplitude", s.ridge_amplitude);
  s.seed = static_cast<std::uint64_t>(c.get_int("simulate.seed", static_cast<std::int64_t>(seed(c))));
  s.validate();
  return s;
}

std::vector<std::string> partitions(const Config& c) {
  auto p = c.get_list("predict.partitions");
  if (p.empty()) p = {"pixel"};
  return p;
}

IntensityEstimator estimator(const Config& c) { return parse_estimator(c.get("predict.estimator", "lognormal-mean")); }

std::uint64_t seed(const Config& c) {
  const auto s = c.get_int("run.seed", 1);
  if (s < 0) throw ConfigError("run.seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

int threads(const Config& c) {
  const auto t = c.get_int("run.threads", 1);
  if (t < 1 || t > 256) throw ConfigError("run.threads must be in 1..256");
  return static_cast<int>(t);
}

}  // namespace lgcp::cli
