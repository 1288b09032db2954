#pragma once

#include <span>
#include <string>
#include <vector>

#include "saldrn/config.hpp"

namespace saldrn {

struct ModuleCost {
  std::string module;
  double params = 0;
  double flops = 0;
};

/// Per-submodule parameters and FLOPs; totals are sums over `modules`.
struct ComplexityReport {
  std::vector<ModuleCost> modules;

  double total_params() const;
  double total_flops() const;
  const ModuleCost& at(const std::string& module) const;
  /// JSON array of {module, params, flops} objects followed by a total row.
  std::string to_json() const;
};

/// Exact parameter counts from the architecture constants.
ComplexityReport count_params(const ModelConfig& config);

/// Analytic cost of one patch x patch test patch upsampled by r, with FRU k
/// executed by the fraction ratios[k] of patches. FLOPs = 2 x multiply-adds.
ComplexityReport count_flops(const ModelConfig& config, std::span<const double> ratios, int patch = 48,
                             double r = 2.0);

/// Multiply-adds of FRU k on one patch, including its per-patch CCA MLPs.
double fru_macs(const RoutingConfig& config, int k, int patch);
/// Multiply-adds outside the FRUs on one patch.
double base_macs(const ModelConfig& config, int patch, double r);

/// Fraction of patch means above each threshold under the path rule.
std::vector<double> passing_ratios(std::span<const double> patch_means, std::span<const double> thresholds);

/// Threshold settings of the standard sweep, from all-pass to none-pass.
std::vector<std::vector<double>> sweep_settings();

struct SweepRow {
  std::vector<double> thresholds;
  std::vector<double> ratios;
  double flops = 0;
};

std::vector<SweepRow> threshold_sweep(const ModelConfig& config, std::span<const double> patch_means,
                                      const std::vector<std::vector<double>>& settings, int patch = 48,
                                      double r = 2.0);

}  // namespace saldrn
