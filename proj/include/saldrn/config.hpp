#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace saldrn {

struct DetectorConfig {
  std::vector<int> widths{8, 16, 24};
  int groups = 4;
  int m = 16;
  double slope = 0.05;
};

struct RoutingConfig {
  int K = 3;
  std::vector<double> thresholds{0.0, 0.25, 0.5};
  int D = 4;
  int C = 64;
  bool share_params = true;
  /// IMDBs per FRU when parameters are not shared.
  std::vector<int> fru_depths{3, 2, 2};
  int patch_size = 48;
  int overlap = 8;

  int depth(int fru) const { return share_params ? D : fru_depths.at(fru); }
};

struct LsumConfig {
  /// 32 frequencies; empty selects the default ladder 2e^i.
  std::vector<double> freqs;
  bool sigmoid_alpha = true;
};

struct ModelConfig {
  DetectorConfig sal;
  RoutingConfig route;
  LsumConfig lsum;
};

struct DataConfig {
  std::string root;
  int batch_size = 16;
  int patch_size = 32;
  double scale_min = 1.0;
  double scale_max = 4.0;
  std::uint64_t seed = 0;
};

struct LossConfig {
  double lambda1 = 0.1;
  double lambda2 = 0.15;
  double gamma = 10.0;
  int err_kernel = 5;
  int err_bins = 256;
  std::string sal_gt_dir;
};

struct TrainConfig {
  long iters = 400000;
  double lr0 = 1e-4;
  long lr_drop_at = 200000;
  long checkpoint_every = 10000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Dotted key/value configuration. Only known keys are accepted and every
/// value is type-checked when set.
class Config {
 public:
  Config();

  void set(const std::string& key, const std::string& value);
  /// Applies a `key=value` assignment.
  void apply(const std::string& assignment);
  /// Plain-text file of `key = value` lines; `#` starts a comment.
  void merge_file(const std::string& path);
  void merge_text(const std::string& text, const std::string& origin = "<text>");

  const std::string& get(const std::string& key) const;
  long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  /// Sorted `key = value` lines.
  std::string snapshot() const;
  static std::vector<std::string> known_keys();

  ModelConfig model() const;
  DataConfig data() const;
  LossConfig loss() const;
  TrainConfig train() const;
  int infer_tile() const;

 private:
  std::map<std::string, std::string> values_;
};

std::string format_list(const std::vector<double>& v);
std::string format_list(const std::vector<int>& v);

}  // namespace saldrn
