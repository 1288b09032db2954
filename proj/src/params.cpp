#include "saldrn/params.hpp"

#include <cmath>
#include <random>

namespace saldrn {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
void ParamStore<T>::initialize(std::uint64_t seed) {
  std::uint64_t index = 0;
  for (auto& [name, v] : params_) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index++)};
    std::mt19937_64 rng(seq);
    Tensor<T>& t = v->value;
    if (ends_with(name, "weight") || name.find(".weight_") != std::string::npos) {
      auto fi = fan_in_.find(name);
      const int fan_in = fi != fan_in_.end() ? fi->second : t.c() * t.h() * t.w();
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (T& x : t.vec()) x = static_cast<T>(dist(rng));
    } else if (ends_with(name, "gamma")) {
      t.fill(T(1));
    } else {
      t.fill(T(0));
    }
  }
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace saldrn
