#pragma once

#include <array>
#include <string>
#include <vector>

#include "saldrn/model.hpp"
#include "saldrn/routing.hpp"

namespace saldrn {

struct RoutingReport {
  PatchGrid grid;
  std::vector<int> path_map;               // row-major, one entry per patch
  std::vector<double> patch_saliency;      // mean saliency per patch
  std::vector<double> passing_ratios;      // K entries
  std::array<int, 20> histogram{};         // patch means in 20 equal bins over [0, 1]
};

struct SrResult {
  Tensor<float> sr;        // 1 x 3 x round(rH) x round(rW), clamped to [0, 1]
  Tensor<float> saliency;  // 1 x 1 x H x W
  RoutingReport report;
};

enum class PatchSchedule { Grouped, Sequential };

/// Saliency of the full image and the per-patch routing decisions.
RoutingReport route_image(const SrModel<float>& model, const Tensor<float>& image, Tensor<float>* saliency = nullptr);

/// Full-image SR at scale r in [1, 4]. Grouped runs patches of equal path
/// together; Sequential runs them one by one with identical results.
SrResult super_resolve(const SrModel<float>& model, const Tensor<float>& image, double r, int tile = 128,
                       PatchSchedule schedule = PatchSchedule::Grouped);

void check_inference_scale(double r);

/// Writes `<stem>_saliency.png`, `<stem>_paths.png` and `<stem>_routing.txt`.
/// The summary carries one passing ratio per switch and the FLOPs estimate
/// for a 48 x 48 patch at scale r.
void export_maps(const RoutingReport& report, const Tensor<float>& saliency, const ModelConfig& config,
                 const std::string& out_dir, const std::string& stem, double r = 2.0);

/// Palette for path indices 0..K.
std::vector<std::uint32_t> path_palette(int K);

}  // namespace saldrn
