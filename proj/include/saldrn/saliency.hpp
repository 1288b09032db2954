#pragma once

#include <array>
#include <string>

#include "saldrn/config.hpp"
#include "saldrn/params.hpp"

namespace saldrn {

/// Three-stage residual encoder with a nearest-resize fusion decoder,
/// mapping N x 3 x H x W images to N x 1 x H x W maps in (0, 1).
template <typename T>
class SaliencyNet {
 public:
  SaliencyNet() = default;
  SaliencyNet(ParamStore<T>& store, const DetectorConfig& config, const std::string& prefix = "sal");

  Var<T> forward(const Var<T>& image) const;
  /// Encoder stage outputs, for inspection.
  std::array<Var<T>, 3> encode(const Var<T>& image) const;

  static std::size_t param_count(const DetectorConfig& config);
  /// Multiply-accumulates for one H x W forward.
  static double macs(const DetectorConfig& config, int h, int w);

 private:
  struct Stage {
    Conv<T> down, conv1, conv2;
    Var<T> gn1_gamma, gn1_beta, gn2_gamma, gn2_beta;
  };
  DetectorConfig config_;
  std::array<Stage, 3> stages_;
  Conv<T> fuse_, head_;
};

}  // namespace saldrn
