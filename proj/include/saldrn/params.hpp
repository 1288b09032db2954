#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "saldrn/autograd.hpp"

namespace saldrn {

/// Named trainable tensors, iterated in name order.
template <typename T>
class ParamStore {
 public:
  /// `fan_in` overrides the initialization fan-in (default: c * h * w).
  Var<T> add(const std::string& name, Shape shape, int fan_in = 0) {
    auto [it, inserted] = params_.emplace(name, variable(Tensor<T>(shape)));
    if (!inserted) throw ContractViolation("duplicate parameter " + name);
    if (fan_in > 0) fan_in_[name] = fan_in;
    return it->second;
  }

  const Var<T>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractViolation("unknown parameter " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const std::map<std::string, Var<T>>& all() const { return params_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : params_) n += v->value.numel();
    return n;
  }

  std::size_t count_prefix(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& [name, v] : params_)
      if (name.rfind(prefix, 0) == 0) n += v->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : params_) v->grad = Tensor<T>();
  }

  /// Kaiming-uniform weights (bound 1/sqrt(fan_in)), unit GN gammas, zero
  /// biases. Each parameter draws from its own stream seeded by
  /// (seed, position in name order).
  void initialize(std::uint64_t seed);

 private:
  std::map<std::string, Var<T>> params_;
  std::map<std::string, int> fan_in_;
};

/// Convolution layer bound to parameters in a store.
template <typename T>
struct Conv {
  Var<T> weight;
  Var<T> bias;
  ConvSpec spec;

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, spec); }
};

/// Registers `<name>.weight` (cout, cin/groups, k, k) and `<name>.bias` (cout).
/// Padding is k/2.
template <typename T>
Conv<T> make_conv(ParamStore<T>& store, const std::string& name, int cin, int cout, int k,
                  int stride = 1, int groups = 1) {
  Conv<T> conv;
  conv.weight = store.add(name + ".weight", {cout, cin / groups, k, k});
  conv.bias = store.add(name + ".bias", {1, cout, 1, 1});
  conv.spec = {stride, k / 2, groups};
  return conv;
}

inline std::size_t conv_params(int cin, int cout, int k, int groups = 1) {
  return static_cast<std::size_t>(cout) * (cin / groups) * k * k + cout;
}

}  // namespace saldrn
