#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "saldrn/config.hpp"
#include "saldrn/image.hpp"
#include "saldrn/tensor.hpp"

namespace saldrn {

enum class Split { Train, Test };

struct DatasetIndex {
  std::string root_path;  // directory holding the entries
  std::vector<std::string> entries;
  Split split = Split::Train;

  std::string path(std::size_t i) const { return root_path + "/" + entries.at(i); }
  std::size_t size() const { return entries.size(); }
};

/// Lists decodable images under `<root>/train` or `<root>/test`, sorted by name.
DatasetIndex load_dataset(const std::string& root, Split split);

/// HR crop size for an LR patch of `patch` pixels at scale r.
inline int hr_patch_size(double r, int patch = 32) {
  return static_cast<int>(std::lround(patch * r));
}

struct Augmentation {
  bool hflip = false;
  bool vflip = false;
  bool rot90 = false;
};

struct TrainingSample {
  Tensor<float> lr;      // 1 x 3 x p x p
  Tensor<float> hr;      // 1 x 3 x h x h
  Tensor<float> sal_gt;  // 1 x 1 x p x p, empty without ground truth
  double r_eff = 1.0;
  std::size_t image = 0;
  int y = 0;
  int x = 0;
  Augmentation aug;
};

/// Decoded images, loaded on first use.
class ImageCache {
 public:
  explicit ImageCache(const DatasetIndex& index, std::string sal_gt_dir = "");
  const Image8& image(std::size_t i);
  const Image8& saliency(std::size_t i);
  const DatasetIndex& index() const { return index_; }
  bool has_saliency() const { return !sal_gt_dir_.empty(); }

 private:
  DatasetIndex index_;
  std::string sal_gt_dir_;
  std::map<std::size_t, Image8> images_;
  std::map<std::size_t, Image8> saliency_;
};

/// HR crop of round(p r) pixels at a uniform offset and its bicubic LR. An
/// image smaller than the crop is skipped for another draw, 8 times at most.
TrainingSample sample_training_pair(ImageCache& cache, std::mt19937_64& rng, double r, int patch = 32);

Tensor<float> apply_augmentation(const Tensor<float>& t, const Augmentation& aug);
/// Draws flips and a quarter turn independently with probability 1/2 each.
TrainingSample augment(const TrainingSample& sample, std::mt19937_64& rng);

struct Batch {
  Tensor<float> lr;
  Tensor<float> hr;
  Tensor<float> sal_gt;
  double r_eff = 1.0;
  std::vector<TrainingSample> samples;  // tensors cleared; provenance only
};

/// Generator seeded from (seed, step). Sampling is a pure function of both.
std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t step);

class BatchSampler {
 public:
  BatchSampler(DatasetIndex index, DataConfig config, std::string sal_gt_dir = "");
  /// Batch for a training step; one scale factor per batch.
  Batch batch(std::uint64_t step);
  const DataConfig& config() const { return config_; }

 private:
  ImageCache cache_;
  DataConfig config_;
};

}  // namespace saldrn
