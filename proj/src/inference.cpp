#include "saldrn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "saldrn/complexity.hpp"
#include "saldrn/errors.hpp"
#include "saldrn/image.hpp"

namespace saldrn {
namespace {

constexpr int kChunk = 16;

Tensor<float> gather(const Tensor<float>& src, const std::vector<int>& members) {
  const Shape s = src.shape();
  Tensor<float> out({static_cast<int>(members.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < members.size(); ++i)
    std::copy_n(src.plane(members[i], 0), s.sample(), out.plane(static_cast<int>(i), 0));
  return out;
}

void scatter(const Tensor<float>& src, const std::vector<int>& members, Tensor<float>& dst) {
  for (std::size_t i = 0; i < members.size(); ++i)
    std::copy_n(src.plane(static_cast<int>(i), 0), src.shape().sample(), dst.plane(members[i], 0));
}

}  // namespace

void check_inference_scale(double r) {
  if (!(r >= 1.0 && r <= 4.0)) throw InvalidScale("scale must lie in [1, 4]");
}

RoutingReport route_image(const SrModel<float>& model, const Tensor<float>& image, Tensor<float>* saliency) {
  NoGradGuard guard;
  const RoutingConfig& rc = model.config().route;
  Tensor<float> sal = model.detector().forward(constant(image))->value;
  auto [patches, grid] = decompose(sal, rc.patch_size, rc.overlap);

  RoutingReport rep;
  rep.grid = grid;
  const std::size_t plane = patches.shape().plane();
  for (int n = 0; n < patches.n(); ++n) {
    double s = 0;
    const float* p = patches.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    s /= static_cast<double>(plane);
    rep.patch_saliency.push_back(s);
    rep.path_map.push_back(select_path(s, rc.thresholds));
    rep.histogram[std::clamp(static_cast<int>(std::floor(s * 20)), 0, 19)] += 1;
  }
  rep.passing_ratios = passing_ratios(rep.patch_saliency, rc.thresholds);
  if (saliency) *saliency = std::move(sal);
  return rep;
}

SrResult super_resolve(const SrModel<float>& model, const Tensor<float>& image, double r, int tile,
                       PatchSchedule schedule) {
  check_inference_scale(r);
  if (image.n() != 1 || image.c() != 3) throw ContractViolation("super_resolve expects one RGB image");
  NoGradGuard guard;
  SrResult res;
  res.report = route_image(model, image, &res.saliency);
  const RoutingReport& rep = res.report;
  const RoutingNet<float>& net = model.routing();

  const Tensor<float> patches = extract_patches(image, rep.grid);
  Tensor<float> features({patches.n(), model.config().route.C, patches.h(), patches.w()});
  if (schedule == PatchSchedule::Sequential) {
    for (int n = 0; n < patches.n(); ++n) {
      const std::vector<int> one{n};
      scatter(net.run_path(constant(gather(patches, one)), rep.path_map[n])->value, one, features);
    }
  } else {
    std::map<int, std::vector<int>> groups;
    for (int n = 0; n < patches.n(); ++n) groups[rep.path_map[n]].push_back(n);
    for (const auto& [depth, members] : groups) {
      for (std::size_t b = 0; b < members.size(); b += kChunk) {
        const std::vector<int> chunk(members.begin() + static_cast<std::ptrdiff_t>(b),
                                     members.begin() + static_cast<std::ptrdiff_t>(std::min(members.size(), b + kChunk)));
        scatter(net.run_path(constant(gather(patches, chunk)), depth)->value, chunk, features);
      }
    }
  }
  const Tensor<float> merged = recombine(features, rep.grid);
  res.sr = model.lsum().forward_tiled(merged, r, tile);
  for (float& v : res.sr.vec()) v = std::clamp(v, 0.0f, 1.0f);
  return res;
}

std::vector<std::uint32_t> path_palette(int K) {
  static const std::uint32_t base[] = {0x2c3e91, 0x2ca02c, 0xf2c12e, 0xd62728, 0x9467bd, 0x8c564b, 0xe377c2, 0x17becf};
  std::vector<std::uint32_t> pal;
  for (int k = 0; k <= K; ++k) pal.push_back(base[k % 8]);
  return pal;
}

void export_maps(const RoutingReport& report, const Tensor<float>& saliency, const ModelConfig& config,
                 const std::string& out_dir, const std::string& stem, double r) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  write_image(out_dir + "/" + stem + "_saliency.png", saliency);

  const PatchGrid& g = report.grid;
  const int H = g.src_h, W = g.src_w;
  std::vector<std::uint8_t> index(static_cast<std::size_t>(H) * W);
  auto cell = [](const std::vector<int>& starts, int v) {
    return static_cast<int>(std::upper_bound(starts.begin(), starts.end(), v) - starts.begin()) - 1;
  };
  for (int y = 0; y < H; ++y) {
    const int row = cell(g.ys, y);
    for (int x = 0; x < W; ++x) {
      const int path = report.path_map[static_cast<std::size_t>(row) * g.cols() + cell(g.xs, x)];
      index[static_cast<std::size_t>(y) * W + x] = static_cast<std::uint8_t>(path);
    }
  }
  write_palette_png(out_dir + "/" + stem + "_paths.png", H, W, index, path_palette(config.route.K));

  const std::string txt = out_dir + "/" + stem + "_routing.txt";
  std::ofstream os(txt);
  if (!os) throw IoError("cannot write " + txt);
  os << "patches " << g.size() << " grid " << g.rows() << "x" << g.cols() << "\n";
  os << "thresholds " << format_list(config.route.thresholds) << "\n";
  for (std::size_t k = 0; k < report.passing_ratios.size(); ++k)
    os << "switch " << k + 1 << " passing_ratio " << report.passing_ratios[k] << "\n";
  const double flops = count_flops(config, report.passing_ratios, 48, r).total_flops();
  os << "flops_per_patch " << flops << " (48x48, r=" << r << ")\n";
  os << "histogram";
  for (int c : report.histogram) os << ' ' << c;
  os << "\n";
  if (!os) throw IoError("cannot write " + txt);
}

}  // namespace saldrn
