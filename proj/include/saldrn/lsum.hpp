#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "saldrn/config.hpp"
#include "saldrn/params.hpp"

namespace saldrn {

/// omega_i = 2 e^i, i = 1..32.
std::vector<double> default_frequencies();

/// 64 entries: [sin(w_1 r), cos(w_1 r), ..., sin(w_32 r), cos(w_32 r)],
/// evaluated in double. Empty `freqs` selects the default ladder.
std::vector<double> scale_encoding(double r, std::span<const double> freqs = {});

/// (1-a)(1-b) z00 + (1-a) b z01 + a (1-b) z10 + a b z11.
template <typename T>
T bilinear_latent(T a, T b, T z00, T z01, T z10, T z11) {
  return (T(1) - a) * (T(1) - b) * z00 + (T(1) - a) * b * z01 + a * (T(1) - b) * z10 + a * b * z11;
}

/// Query table along one axis: output pixel i has center (i + 0.5) / out in
/// the unit interval, i.e. source coordinate (i + 0.5) * src / out - 0.5 on
/// a grid of `src` latent codes; neighbours are clamped to the edges.
AxisTable axis_table(int out, int src);
/// Entries [begin, end) with source indices shifted by -shift.
AxisTable slice_table(const AxisTable& table, int begin, int end, int shift);

/// Output size for a continuous scale: round(r * dim), ties away from zero.
inline int scaled_dim(double r, int dim) { return static_cast<int>(std::lround(r * dim)); }

template <typename T>
struct FeaturePyramid {
  std::array<Var<T>, 4> levels;  // x1, x2, x4, x8
};

template <typename T>
class Lsum {
 public:
  Lsum() = default;
  Lsum(ParamStore<T>& store, int channels, const LsumConfig& config);

  FeaturePyramid<T> cfeb(const Var<T>& x) const;
  /// Scale-aware pixel attention over N x C x h x w query features.
  Var<T> sapa(const Var<T>& concat, double r) const;
  /// Attention weights alone.
  Var<T> sapa_alpha(const Var<T>& concat, double r) const;
  /// Per-level IFF responses on the round(r H) x round(r W) query grid.
  std::array<Var<T>, 4> query_levels(const FeaturePyramid<T>& pyr, int lr_h, int lr_w, double r) const;
  /// SAPA-weighted HR features, N x C x round(r H) x round(r W). r in [1, 8].
  Var<T> upsample(const Var<T>& features, double r) const;
  Var<T> reconstruct(const Var<T>& hr_features) const;
  Var<T> forward(const Var<T>& features, double r) const { return reconstruct(upsample(features, r)); }

  /// Inference on a 1 x C x H x W map in output tiles of `tile` pixels.
  /// Bitwise equal to forward(); bounds peak memory by the tile size.
  Tensor<T> forward_tiled(const Tensor<T>& features, double r, int tile) const;

  int channels() const { return c_; }
  static std::size_t param_count(int channels);
  static std::size_t cfeb_param_count(int channels);
  static std::size_t sapa_param_count(int channels);
  static std::size_t reconstruct_param_count(int channels);
  static double cfeb_macs(int channels, int h, int w);
  static double sapa_macs(int channels, int hout, int wout);
  static double reconstruct_macs(int channels, int hout, int wout);

 private:
  Var<T> query_features(const FeaturePyramid<T>& pyr, const std::array<AxisTable, 4>& rows,
                        const std::array<AxisTable, 4>& cols, double r) const;

  int c_ = 0;
  LsumConfig config_;
  Conv<T> g1_, g2_, g3_;
  Var<T> sapa_w_scale_, sapa_w_feat_, sapa_b1_;
  Conv<T> sapa_fc2_;
  Conv<T> rec1_, rec2_;
};

void check_upsample_scale(double r);

}  // namespace saldrn
