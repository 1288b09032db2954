#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "saldrn/autograd.hpp"
#include "saldrn/params.hpp"

namespace saldrn::test {

template <typename T>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.vec()) v = static_cast<T>(u(rng));
  return t;
}

/// Scalar probe of a tensor-valued output: sum(out * fixed random weights).
inline Var<double> probe(const Var<double>& out, std::uint64_t seed) {
  const Var<double> m = mean_all(mul(out, constant(random_tensor<double>(out->value.shape(), seed))));
  const double n = static_cast<double>(out->value.numel());
  return weighted_sum<double>(std::span<const Var<double>>(&m, 1), std::span<const double>(&n, 1));
}

struct GradReport {
  double worst = 0;  // largest relative error seen
  int checked = 0;
};

/// Central differences on a sample of entries of every parameter (and any
/// extra leaves), compared with the analytic gradient.
inline GradReport check_gradients(ParamStore<double>& store, const std::function<Var<double>()>& loss,
                                  std::vector<Var<double>> extra = {}, int per_tensor = 6, double h = 1e-6) {
  store.zero_grad();
  for (auto& v : extra) v->grad = Tensor<double>();
  backward(loss());
  std::vector<Var<double>> leaves;
  for (const auto& [name, v] : store.all()) leaves.push_back(v);
  for (auto& v : extra) leaves.push_back(v);

  GradReport rep;
  std::mt19937_64 rng(99);
  for (auto& leaf : leaves) {
    const Tensor<double> analytic = leaf->grad.empty() ? Tensor<double>(leaf->value.shape()) : leaf->grad;
    const std::size_t n = leaf->value.numel();
    for (int s = 0; s < per_tensor && s < static_cast<int>(n); ++s) {
      const std::size_t i = per_tensor >= static_cast<int>(n) ? static_cast<std::size_t>(s) : rng() % n;
      const double orig = leaf->value[i];
      double up, down;
      {
        NoGradGuard guard;
        leaf->value[i] = orig + h;
        up = scalar_value(loss());
        leaf->value[i] = orig - h;
        down = scalar_value(loss());
        leaf->value[i] = orig;
      }
      const double fd = (up - down) / (2 * h);
      const double a = analytic[i];
      const double scale = std::max({std::abs(a), std::abs(fd), 1e-6});
      rep.worst = std::max(rep.worst, std::abs(a - fd) / scale);
      ++rep.checked;
    }
  }
  return rep;
}

/// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("saldrn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace saldrn::test
