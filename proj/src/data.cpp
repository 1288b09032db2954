#include "saldrn/data.hpp"

#include <algorithm>
#include <filesystem>

#include "saldrn/errors.hpp"

namespace saldrn {

namespace fs = std::filesystem;

DatasetIndex load_dataset(const std::string& root, Split split) {
  const fs::path dir = fs::path(root) / (split == Split::Train ? "train" : "test");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw ConfigError("dataset directory not found: " + dir.string());
  DatasetIndex index;
  index.root_path = dir.string();
  index.split = split;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (is_decodable_image(entry.path().string())) index.entries.push_back(entry.path().filename().string());
  }
  std::sort(index.entries.begin(), index.entries.end());
  if (index.entries.empty()) throw EmptyDataset("no decodable images in " + dir.string());
  return index;
}

ImageCache::ImageCache(const DatasetIndex& index, std::string sal_gt_dir)
    : index_(index), sal_gt_dir_(std::move(sal_gt_dir)) {}

const Image8& ImageCache::image(std::size_t i) {
  auto it = images_.find(i);
  if (it == images_.end()) it = images_.emplace(i, read_image8(index_.path(i))).first;
  return it->second;
}

const Image8& ImageCache::saliency(std::size_t i) {
  auto it = saliency_.find(i);
  if (it == saliency_.end()) {
    Image8 g = read_gray8(sal_gt_dir_ + "/" + index_.entries.at(i));
    const Image8& img = image(i);
    if (g.h != img.h || g.w != img.w) {
      throw IoError("saliency ground truth for " + index_.entries[i] + " does not match the image size");
    }
    it = saliency_.emplace(i, std::move(g)).first;
  }
  return it->second;
}

TrainingSample sample_training_pair(ImageCache& cache, std::mt19937_64& rng, double r, int patch) {
  if (r < 1.0 || r > 4.0) throw InvalidScale("training scale must lie in [1, 4]");
  const int h = hr_patch_size(r, patch);
  const auto& index = cache.index();
  std::uniform_int_distribution<std::size_t> pick(0, index.size() - 1);
  constexpr int kRetries = 8;
  for (int attempt = 0; attempt <= kRetries; ++attempt) {
    const std::size_t i = pick(rng);
    const Image8& img = cache.image(i);
    if (img.h < h || img.w < h) continue;
    std::uniform_int_distribution<int> dy(0, img.h - h), dx(0, img.w - h);
    TrainingSample s;
    s.image = i;
    s.y = dy(rng);
    s.x = dx(rng);
    s.r_eff = static_cast<double>(h) / patch;
    s.hr = to_tensor(img, s.y, s.x, h, h);
    s.lr = degrade_bicubic(s.hr, s.r_eff);
    if (cache.has_saliency()) {
      s.sal_gt = degrade_bicubic(to_tensor(cache.saliency(i), s.y, s.x, h, h), s.r_eff);
    }
    return s;
  }
  throw EmptyDataset("no training image is at least " + std::to_string(h) + " pixels on each side");
}

Tensor<float> apply_augmentation(const Tensor<float>& t, const Augmentation& aug) {
  Tensor<float> out = t;
  const int H = t.h(), W = t.w();
  if (aug.hflip || aug.vflip) {
    for (int n = 0; n < t.n(); ++n)
      for (int c = 0; c < t.c(); ++c)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x)
            out.at(n, c, y, x) = t.at(n, c, aug.vflip ? H - 1 - y : y, aug.hflip ? W - 1 - x : x);
  }
  if (aug.rot90) {
    // Counter-clockwise quarter turn.
    const Tensor<float> src = out;
    out = Tensor<float>({t.n(), t.c(), W, H});
    for (int n = 0; n < t.n(); ++n)
      for (int c = 0; c < t.c(); ++c)
        for (int y = 0; y < W; ++y)
          for (int x = 0; x < H; ++x) out.at(n, c, y, x) = src.at(n, c, x, W - 1 - y);
  }
  return out;
}

TrainingSample augment(const TrainingSample& sample, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  TrainingSample out = sample;
  out.aug.hflip = coin(rng);
  out.aug.vflip = coin(rng);
  out.aug.rot90 = coin(rng);
  out.lr = apply_augmentation(sample.lr, out.aug);
  out.hr = apply_augmentation(sample.hr, out.aug);
  if (!sample.sal_gt.empty()) out.sal_gt = apply_augmentation(sample.sal_gt, out.aug);
  return out;
}

std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step) {
  // splitmix64 of the pair decorrelates neighbouring steps.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + step + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return std::mt19937_64(z);
}

BatchSampler::BatchSampler(DatasetIndex index, DataConfig config, std::string sal_gt_dir)
    : cache_(index, std::move(sal_gt_dir)), config_(std::move(config)) {}

Batch BatchSampler::batch(std::uint64_t step) {
  std::mt19937_64 rng = step_rng(config_.seed, step);
  std::uniform_real_distribution<double> scale(config_.scale_min, config_.scale_max);
  const double r = config_.scale_min == config_.scale_max ? config_.scale_min : scale(rng);
  std::vector<Tensor<float>> lr, hr, gt;
  Batch b;
  for (int i = 0; i < config_.batch_size; ++i) {
    TrainingSample s = augment(sample_training_pair(cache_, rng, r, config_.patch_size), rng);
    b.r_eff = s.r_eff;
    lr.push_back(std::move(s.lr));
    hr.push_back(std::move(s.hr));
    if (!s.sal_gt.empty()) gt.push_back(std::move(s.sal_gt));
    s.lr = s.hr = s.sal_gt = Tensor<float>();
    b.samples.push_back(std::move(s));
  }
  b.lr = stack<float>(lr);
  b.hr = stack<float>(hr);
  if (!gt.empty()) b.sal_gt = stack<float>(gt);
  return b;
}

}  // namespace saldrn
