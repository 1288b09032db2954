#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "saldrn/checkpoint.hpp"
#include "saldrn/config.hpp"
#include "saldrn/data.hpp"
#include "saldrn/model.hpp"

namespace saldrn {

/// lr0 before lr_drop_at, lr0 / 2 from then on.
double lr_schedule(long iter, const TrainConfig& config);

class Adam {
 public:
  Adam() = default;
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One update of every parameter holding a gradient.
  void step(ParamStore<float>& params, double lr);
  long steps() const { return t_; }

  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt, long steps);

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::map<std::string, Tensor<float>> m_, v_;
};

struct StepMetrics {
  long step = 0;
  double total = 0;
  double sr = 0;
  double sal = 0;
  double diff = 0;
  double beta_entropy = 0;
  double lr = 0;
  double r = 1;
  bool has_sal = false;
};

struct LossTerms {
  Var<float> total;
  StepMetrics metrics;
};

/// Builds the training objective for one batch: saliency on the LR patches,
/// every routing path through the upsampler, path weights from the patch
/// mean saliency, and the difficulty target from the deepest path.
LossTerms compute_losses(const SrModel<float>& model, const Batch& batch, const LossConfig& loss);

class Trainer {
 public:
  explicit Trainer(const Config& config);
  /// Continues from a checkpoint written by this trainer.
  Trainer(const Config& config, const Checkpoint& resume);

  /// Runs step iteration() + 1.
  StepMetrics step();
  long iteration() const { return iteration_; }
  Checkpoint checkpoint() const;

  SrModel<float>& model() { return *model_; }
  const Config& config() const { return config_; }
  BatchSampler& sampler() { return *sampler_; }

 private:
  Config config_;
  TrainConfig train_;
  LossConfig loss_;
  std::unique_ptr<SrModel<float>> model_;
  std::unique_ptr<BatchSampler> sampler_;
  Adam adam_;
  long iteration_ = 0;
};

using StepCallback = std::function<void(const StepMetrics&)>;

/// Runs until train.iters, writing `step_<n>.ckpt` every checkpoint_every
/// steps and at the end, `last.ckpt`, and `loss.csv` into out_dir.
/// `resume` names a checkpoint to continue from (empty: fresh start).
std::string train(const Config& config, const std::string& out_dir, const std::string& resume = "",
                  const StepCallback& on_step = {});

/// Model rebuilt from the configuration stored in a checkpoint.
std::unique_ptr<SrModel<float>> load_model(const std::string& path, Config* config = nullptr);

}  // namespace saldrn
