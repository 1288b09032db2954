#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "saldrn/config.hpp"
#include "saldrn/params.hpp"

namespace saldrn {

/// Overlapping square-patch layout of an image.
struct PatchGrid {
  int patch_size = 48;
  int overlap = 8;
  int src_h = 0;
  int src_w = 0;
  /// Reflect padding added on the bottom/right when the source is smaller
  /// than one patch.
  int pad_h = 0;
  int pad_w = 0;
  std::vector<int> ys;
  std::vector<int> xs;

  int rows() const { return static_cast<int>(ys.size()); }
  int cols() const { return static_cast<int>(xs.size()); }
  std::size_t size() const { return ys.size() * xs.size(); }
  /// Top-left corner of patch i, row-major.
  std::pair<int, int> offset(std::size_t i) const { return {ys[i / xs.size()], xs[i % xs.size()]}; }
};

/// Offsets at stride patch - overlap, last one clamped to dim - patch.
std::vector<int> axis_offsets(int dim, int patch, int overlap);
PatchGrid make_grid(int h, int w, int patch, int overlap);

/// Cuts a 1 x C x H x W tensor into grid.size() x C x p x p patches.
template <typename T>
std::pair<Tensor<T>, PatchGrid> decompose(const Tensor<T>& image, int patch, int overlap);
template <typename T>
Tensor<T> extract_patches(const Tensor<T>& image, const PatchGrid& grid);
/// Averages overlapping patch contributions back into 1 x C x H x W.
template <typename T>
Tensor<T> recombine(const Tensor<T>& patches, const PatchGrid& grid);

/// Number of switches passed: switch k passes when s > theta_k, and a failed
/// switch bypasses all later ones.
int select_path(double s, std::span<const double> thresholds);

template <typename T>
class Cca {
 public:
  Cca() = default;
  Cca(ParamStore<T>& store, const std::string& name, int channels);
  Var<T> attention(const Var<T>& x) const;
  Var<T> operator()(const Var<T>& x) const { return channel_scale(x, attention(x)); }
  static int hidden(int channels) { return std::max(1, channels / 16); }
  static std::size_t param_count(int channels);

 private:
  Conv<T> fc1_, fc2_;
};

template <typename T>
class Imdb {
 public:
  Imdb() = default;
  Imdb(ParamStore<T>& store, const std::string& name, int channels);
  Var<T> operator()(const Var<T>& x) const;
  static std::size_t param_count(int channels);
  /// Multiply-accumulates per pixel.
  static double macs_per_pixel(int channels);

 private:
  int c_ = 0;
  Conv<T> c1_, c2_, c3_, c4_, out_;
  Cca<T> cca_;
};

template <typename T>
class Fru {
 public:
  Fru() = default;
  Fru(ParamStore<T>& store, const std::string& name, int channels, int depth);
  Var<T> operator()(const Var<T>& x, const Var<T>& shallow) const;
  static std::size_t param_count(int channels, int depth);
  static double macs_per_pixel(int channels, int depth);

 private:
  Conv<T> entry_, fuse_, tail_;
  std::vector<Imdb<T>> blocks_;
};

enum class DrmMode { Route, AllPaths };

/// Shallow 3x3 feature extraction followed by K gated FRUs.
template <typename T>
class RoutingNet {
 public:
  RoutingNet() = default;
  RoutingNet(ParamStore<T>& store, const RoutingConfig& config);

  Var<T> shallow(const Var<T>& patch) const;
  /// FRU k (0-based) applied to x with the shallow features concatenated.
  Var<T> fru(int k, const Var<T>& x, const Var<T>& shallow) const;
  /// Features after `depth` FRUs.
  Var<T> run_path(const Var<T>& patch, int depth) const;
  /// Outputs after 0..K FRUs; element 0 is the shallow features.
  std::vector<Var<T>> all_paths(const Var<T>& patch) const;
  /// mode=Route: one map per sample using select_path on the mean of its
  /// saliency patch. mode=AllPaths: K+1 maps.
  std::vector<Var<T>> drm_forward(const Var<T>& patch, const Tensor<T>& sal_patch, DrmMode mode) const;

  const RoutingConfig& config() const { return config_; }
  void set_thresholds(const std::vector<double>& thresholds) { config_.thresholds = thresholds; }
  static std::size_t shallow_param_count(const RoutingConfig& config);
  static std::size_t fru_param_count(const RoutingConfig& config);

 private:
  RoutingConfig config_;
  Conv<T> shallow_;
  std::vector<Fru<T>> frus_;
};

}  // namespace saldrn
