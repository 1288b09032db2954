#include "saldrn/complexity.hpp"

#include <json.hpp>

#include "saldrn/errors.hpp"
#include "saldrn/lsum.hpp"
#include "saldrn/routing.hpp"
#include "saldrn/saliency.hpp"

namespace saldrn {

double ComplexityReport::total_params() const {
  double n = 0;
  for (const auto& m : modules) n += m.params;
  return n;
}

double ComplexityReport::total_flops() const {
  double n = 0;
  for (const auto& m : modules) n += m.flops;
  return n;
}

const ModuleCost& ComplexityReport::at(const std::string& module) const {
  for (const auto& m : modules)
    if (m.module == module) return m;
  throw ContractViolation("no module " + module + " in report");
}

std::string ComplexityReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : modules) rows.push_back({{"module", m.module}, {"params", m.params}, {"flops", m.flops}});
  rows.push_back({{"module", "total"}, {"params", total_params()}, {"flops", total_flops()}});
  return rows.dump(2);
}

ComplexityReport count_params(const ModelConfig& c) {
  ComplexityReport rep;
  rep.modules = {
      {"detector", static_cast<double>(SaliencyNet<float>::param_count(c.sal)), 0},
      {"shallow", static_cast<double>(RoutingNet<float>::shallow_param_count(c.route)), 0},
      {"fru", static_cast<double>(RoutingNet<float>::fru_param_count(c.route)), 0},
      {"lsum.cfeb", static_cast<double>(Lsum<float>::cfeb_param_count(c.route.C)), 0},
      {"lsum.sapa", static_cast<double>(Lsum<float>::sapa_param_count(c.route.C)), 0},
      {"lsum.reconstruct", static_cast<double>(Lsum<float>::reconstruct_param_count(c.route.C)), 0},
  };
  return rep;
}

double fru_macs(const RoutingConfig& c, int k, int patch) {
  const int depth = c.depth(k);
  const int hid = Cca<float>::hidden(c.C);
  const double mlp = 2.0 * c.C * hid;
  return Fru<float>::macs_per_pixel(c.C, depth) * patch * patch + depth * mlp;
}

double base_macs(const ModelConfig& c, int patch, double r) {
  const int out = scaled_dim(r, patch);
  return SaliencyNet<float>::macs(c.sal, patch, patch) + 27.0 * c.route.C * patch * patch +
         Lsum<float>::cfeb_macs(c.route.C, patch, patch) + Lsum<float>::sapa_macs(c.route.C, out, out) +
         Lsum<float>::reconstruct_macs(c.route.C, out, out);
}

ComplexityReport count_flops(const ModelConfig& c, std::span<const double> ratios, int patch, double r) {
  if (static_cast<int>(ratios.size()) != c.route.K) throw ContractViolation("one passing ratio per switch");
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    if (ratios[k] < 0 || ratios[k] > 1 || (k > 0 && ratios[k] > ratios[k - 1])) {
      throw ContractViolation("passing ratios must be nonincreasing values in [0, 1]");
    }
  }
  const int out = scaled_dim(r, patch);
  ComplexityReport rep = count_params(c);
  for (auto& m : rep.modules) {
    if (m.module == "detector") m.flops = 2 * SaliencyNet<float>::macs(c.sal, patch, patch);
    if (m.module == "shallow") m.flops = 2 * 27.0 * c.route.C * patch * patch;
    if (m.module == "lsum.cfeb") m.flops = 2 * Lsum<float>::cfeb_macs(c.route.C, patch, patch);
    if (m.module == "lsum.sapa") m.flops = 2 * Lsum<float>::sapa_macs(c.route.C, out, out);
    if (m.module == "lsum.reconstruct") m.flops = 2 * Lsum<float>::reconstruct_macs(c.route.C, out, out);
    if (m.module == "fru") {
      for (int k = 0; k < c.route.K; ++k) m.flops += 2 * ratios[k] * fru_macs(c.route, k, patch);
    }
  }
  return rep;
}

std::vector<double> passing_ratios(std::span<const double> patch_means, std::span<const double> thresholds) {
  std::vector<double> ratios(thresholds.size(), 0.0);
  if (patch_means.empty()) return ratios;
  for (double s : patch_means) {
    const int path = select_path(s, thresholds);
    for (int k = 0; k < path; ++k) ratios[k] += 1;
  }
  for (double& v : ratios) v /= static_cast<double>(patch_means.size());
  return ratios;
}

std::vector<std::vector<double>> sweep_settings() {
  return {{0, 0, 0}, {0, 0.25, 0.5}, {0, 0.25, 0.75}, {0, 0.5, 0.75}, {0, 0.75, 1}, {0.25, 0.5, 0.75}, {1, 1, 1}};
}

std::vector<SweepRow> threshold_sweep(const ModelConfig& c, std::span<const double> patch_means,
                                      const std::vector<std::vector<double>>& settings, int patch, double r) {
  std::vector<SweepRow> rows;
  for (const auto& t : settings) {
    SweepRow row;
    row.thresholds = t;
    row.ratios = passing_ratios(patch_means, t);
    row.flops = count_flops(c, row.ratios, patch, r).total_flops();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace saldrn
