#include "saldrn/model.hpp"

namespace saldrn {

template <typename T>
SrModel<T>::SrModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      detector_(store_, config.sal),
      routing_(store_, config.route),
      lsum_(store_, config.route.C, config.lsum) {
  store_.initialize(seed);
}

template <typename T>
void SrModel<T>::set_thresholds(const std::vector<double>& thresholds) {
  if (static_cast<int>(thresholds.size()) != config_.route.K) {
    throw ConfigError("threshold count must equal route.K");
  }
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (thresholds[i] < 0 || thresholds[i] > 1 || (i > 0 && thresholds[i] < thresholds[i - 1])) {
      throw ConfigError("thresholds must be nondecreasing values in [0, 1]");
    }
  }
  config_.route.thresholds = thresholds;
  routing_.set_thresholds(thresholds);
}

template class SrModel<float>;
template class SrModel<double>;

}  // namespace saldrn
