#pragma once

#include <cstdint>

#include "saldrn/config.hpp"
#include "saldrn/lsum.hpp"
#include "saldrn/params.hpp"
#include "saldrn/routing.hpp"
#include "saldrn/saliency.hpp"

namespace saldrn {

/// Detector, routing network and upsampler over one parameter store.
template <typename T>
class SrModel {
 public:
  explicit SrModel(const ModelConfig& config, std::uint64_t seed = 0);
  SrModel(const SrModel&) = delete;
  SrModel& operator=(const SrModel&) = delete;

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const SaliencyNet<T>& detector() const { return detector_; }
  const RoutingNet<T>& routing() const { return routing_; }
  const Lsum<T>& lsum() const { return lsum_; }
  const ModelConfig& config() const { return config_; }

  /// Replaces the thresholds used by route-mode inference.
  void set_thresholds(const std::vector<double>& thresholds);

 private:
  ModelConfig config_;
  ParamStore<T> store_;
  SaliencyNet<T> detector_;
  RoutingNet<T> routing_;
  Lsum<T> lsum_;
};

}  // namespace saldrn
