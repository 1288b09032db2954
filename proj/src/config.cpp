#include "saldrn/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "saldrn/errors.hpp"

namespace saldrn {
namespace {

enum class Kind { Int, Double, Bool, String, IntList, DoubleList };

struct KeySpec {
  Kind kind;
  const char* def;
};

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table{
      {"data.root", {Kind::String, ""}},
      {"data.batch_size", {Kind::Int, "16"}},
      {"data.patch_size", {Kind::Int, "32"}},
      {"data.scale_min", {Kind::Double, "1.0"}},
      {"data.scale_max", {Kind::Double, "4.0"}},
      {"data.seed", {Kind::Int, "0"}},
      {"sal.widths", {Kind::IntList, "8,16,24"}},
      {"sal.groups", {Kind::Int, "4"}},
      {"sal.m", {Kind::Int, "16"}},
      {"sal.leaky_slope", {Kind::Double, "0.05"}},
      {"route.K", {Kind::Int, "3"}},
      {"route.thresholds", {Kind::DoubleList, "0,0.25,0.5"}},
      {"route.D", {Kind::Int, "4"}},
      {"route.C", {Kind::Int, "64"}},
      {"route.share_params", {Kind::Bool, "true"}},
      {"route.fru_depths", {Kind::IntList, "3,2,2"}},
      {"route.patch_size", {Kind::Int, "48"}},
      {"route.overlap", {Kind::Int, "8"}},
      {"lsum.freqs", {Kind::DoubleList, ""}},
      {"lsum.sigmoid_alpha", {Kind::Bool, "true"}},
      {"loss.lambda1", {Kind::Double, "0.1"}},
      {"loss.lambda2", {Kind::Double, "0.15"}},
      {"loss.gamma", {Kind::Double, "10"}},
      {"loss.err_kernel", {Kind::Int, "5"}},
      {"loss.err_bins", {Kind::Int, "256"}},
      {"loss.sal_gt_dir", {Kind::String, ""}},
      {"train.iters", {Kind::Int, "400000"}},
      {"train.lr0", {Kind::Double, "1e-4"}},
      {"train.lr_drop_at", {Kind::Int, "200000"}},
      {"train.checkpoint_every", {Kind::Int, "10000"}},
      {"opt.beta1", {Kind::Double, "0.9"}},
      {"opt.beta2", {Kind::Double, "0.999"}},
      {"opt.eps", {Kind::Double, "1e-8"}},
      {"infer.tile", {Kind::Int, "128"}},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_long(const std::string& s, long& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtol(s.c_str(), &end, 10);
  return errno == 0 && end == s.c_str() + s.size();
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0" || s == "no" || s == "off") {
    out = false;
    return true;
  }
  return false;
}

std::vector<std::string> split_list(std::string s) {
  s = trim(s);
  if (!s.empty() && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<std::string> items;
  if (trim(s).empty()) return items;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

void check_value(const std::string& key, Kind kind, const std::string& value) {
  auto fail = [&](const char* what) {
    throw ConfigError("config key " + key + ": expected " + what + ", got '" + value + "'");
  };
  long l;
  double d;
  bool b;
  switch (kind) {
    case Kind::Int:
      if (!parse_long(value, l)) fail("an integer");
      break;
    case Kind::Double:
      if (!parse_double(value, d)) fail("a number");
      break;
    case Kind::Bool:
      if (!parse_bool(value, b)) fail("a boolean");
      break;
    case Kind::String:
      break;
    case Kind::IntList:
      for (const auto& item : split_list(value))
        if (!parse_long(item, l)) fail("a comma-separated integer list");
      break;
    case Kind::DoubleList:
      for (const auto& item : split_list(value))
        if (!parse_double(item, d)) fail("a comma-separated number list");
      break;
  }
}

template <typename V>
std::string join(const std::vector<V>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace

std::string format_list(const std::vector<double>& v) { return join(v); }
std::string format_list(const std::vector<int>& v) { return join(v); }

Config::Config() {
  for (const auto& [key, spec] : key_table()) values_[key] = spec.def;
}

void Config::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  auto it = key_table().find(key);
  if (it == key_table().end()) throw ConfigError("unknown config key: " + key);
  check_value(key, it->second.kind, value);
  values_[key] = value;
}

void Config::apply(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void Config::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path);
}

void Config::merge_text(const std::string& text, const std::string& origin) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.find('=') == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    apply(line);
  }
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

long Config::get_int(const std::string& key) const {
  long v = 0;
  parse_long(get(key), v);
  return v;
}

double Config::get_double(const std::string& key) const {
  double v = 0;
  parse_double(get(key), v);
  return v;
}

bool Config::get_bool(const std::string& key) const {
  bool v = false;
  parse_bool(get(key), v);
  return v;
}

std::vector<int> Config::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : split_list(get(key))) {
    long v = 0;
    parse_long(item, v);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key))) {
    double v = 0;
    parse_double(item, v);
    out.push_back(v);
  }
  return out;
}

std::string Config::snapshot() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << '\n';
  return os.str();
}

std::vector<std::string> Config::known_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, spec] : key_table()) keys.push_back(key);
  return keys;
}

ModelConfig Config::model() const {
  ModelConfig m;
  m.sal.widths = get_ints("sal.widths");
  m.sal.groups = static_cast<int>(get_int("sal.groups"));
  m.sal.m = static_cast<int>(get_int("sal.m"));
  m.sal.slope = get_double("sal.leaky_slope");
  if (m.sal.widths.size() != 3) throw ConfigError("sal.widths must list exactly 3 stage widths");
  if (m.sal.groups <= 0) throw ConfigError("sal.groups must be positive");
  for (int w : m.sal.widths)
    if (w <= 0 || w % m.sal.groups != 0) throw ConfigError("sal.widths must be positive multiples of sal.groups");
  if (m.sal.m <= 0) throw ConfigError("sal.m must be positive");

  auto& r = m.route;
  r.K = static_cast<int>(get_int("route.K"));
  r.thresholds = get_doubles("route.thresholds");
  r.D = static_cast<int>(get_int("route.D"));
  r.C = static_cast<int>(get_int("route.C"));
  r.share_params = get_bool("route.share_params");
  r.fru_depths = get_ints("route.fru_depths");
  r.patch_size = static_cast<int>(get_int("route.patch_size"));
  r.overlap = static_cast<int>(get_int("route.overlap"));
  if (r.K < 1) throw ConfigError("route.K must be at least 1");
  if (static_cast<int>(r.thresholds.size()) != r.K) throw ConfigError("route.thresholds must list route.K values");
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    if (r.thresholds[i] < 0.0 || r.thresholds[i] > 1.0) throw ConfigError("route.thresholds must lie in [0, 1]");
    if (i > 0 && r.thresholds[i] < r.thresholds[i - 1]) throw ConfigError("route.thresholds must be nondecreasing");
  }
  if (r.C <= 0 || r.C % 4 != 0) throw ConfigError("route.C must be a positive multiple of 4");
  if (r.D < 1) throw ConfigError("route.D must be at least 1");
  if (!r.share_params) {
    if (static_cast<int>(r.fru_depths.size()) != r.K) throw ConfigError("route.fru_depths must list route.K depths");
    for (int d : r.fru_depths)
      if (d < 1) throw ConfigError("route.fru_depths entries must be at least 1");
  }
  if (r.patch_size < 1 || r.overlap < 0 || r.overlap >= r.patch_size) {
    throw ConfigError("route.overlap must lie in [0, route.patch_size)");
  }

  m.lsum.freqs = get_doubles("lsum.freqs");
  m.lsum.sigmoid_alpha = get_bool("lsum.sigmoid_alpha");
  if (!m.lsum.freqs.empty() && m.lsum.freqs.size() != 32) throw ConfigError("lsum.freqs must list 32 frequencies");
  return m;
}

DataConfig Config::data() const {
  DataConfig d;
  d.root = get("data.root");
  d.batch_size = static_cast<int>(get_int("data.batch_size"));
  d.patch_size = static_cast<int>(get_int("data.patch_size"));
  d.scale_min = get_double("data.scale_min");
  d.scale_max = get_double("data.scale_max");
  d.seed = static_cast<std::uint64_t>(get_int("data.seed"));
  if (d.batch_size < 1) throw ConfigError("data.batch_size must be at least 1");
  if (d.patch_size < 8) throw ConfigError("data.patch_size must be at least 8");
  if (d.scale_min < 1.0 || d.scale_max > 4.0 || d.scale_min > d.scale_max) {
    throw ConfigError("data.scale_min/scale_max must satisfy 1 <= min <= max <= 4");
  }
  return d;
}

LossConfig Config::loss() const {
  LossConfig l;
  l.lambda1 = get_double("loss.lambda1");
  l.lambda2 = get_double("loss.lambda2");
  l.gamma = get_double("loss.gamma");
  l.err_kernel = static_cast<int>(get_int("loss.err_kernel"));
  l.err_bins = static_cast<int>(get_int("loss.err_bins"));
  l.sal_gt_dir = get("loss.sal_gt_dir");
  if (l.lambda1 < 0 || l.lambda2 < 0) throw ConfigError("loss.lambda1/lambda2 must be nonnegative");
  if (l.gamma <= 0) throw ConfigError("loss.gamma must be positive");
  if (l.err_kernel < 1 || l.err_kernel % 2 == 0) throw ConfigError("loss.err_kernel must be a positive odd integer");
  if (l.err_bins < 1) throw ConfigError("loss.err_bins must be positive");
  return l;
}

TrainConfig Config::train() const {
  TrainConfig t;
  t.iters = get_int("train.iters");
  t.lr0 = get_double("train.lr0");
  t.lr_drop_at = get_int("train.lr_drop_at");
  t.checkpoint_every = get_int("train.checkpoint_every");
  t.beta1 = get_double("opt.beta1");
  t.beta2 = get_double("opt.beta2");
  t.eps = get_double("opt.eps");
  if (t.iters < 1) throw ConfigError("train.iters must be at least 1");
  if (t.lr_drop_at > t.iters) throw ConfigError("train.lr_drop_at must not exceed train.iters");
  if (t.checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be at least 1");
  if (t.lr0 <= 0) throw ConfigError("train.lr0 must be positive");
  if (t.beta1 < 0 || t.beta1 >= 1 || t.beta2 < 0 || t.beta2 >= 1) throw ConfigError("opt.beta1/beta2 must lie in [0, 1)");
  if (t.eps <= 0) throw ConfigError("opt.eps must be positive");
  return t;
}

int Config::infer_tile() const {
  const long t = get_int("infer.tile");
  if (t < 8) throw ConfigError("infer.tile must be at least 8");
  return static_cast<int>(t);
}

}  // namespace saldrn
