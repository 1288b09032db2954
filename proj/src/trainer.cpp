#include "saldrn/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "saldrn/errors.hpp"
#include "saldrn/losses.hpp"

namespace saldrn {

double lr_schedule(long iter, const TrainConfig& config) {
  return iter < config.lr_drop_at ? config.lr0 : config.lr0 / 2;
}

void Adam::step(ParamStore<float>& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, p] : params.all()) {
    if (p->grad.empty()) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.shape() != p->value.shape()) {
      m = Tensor<float>(p->value.shape());
      v = Tensor<float>(p->value.shape());
    }
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad[i];
      const double mi = beta1_ * m[i] + (1 - beta1_) * g;
      const double vi = beta2_ * v[i] + (1 - beta2_) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      p->value[i] -= static_cast<float>(lr * (mi / c1) / (std::sqrt(vi / c2) + eps_));
    }
  }
}

void Adam::save(Checkpoint& ckpt) const {
  for (const auto& [name, m] : m_) ckpt.arrays["adam.m." + name] = m;
  for (const auto& [name, v] : v_) ckpt.arrays["adam.v." + name] = v;
}

void Adam::load(const Checkpoint& ckpt, long steps) {
  m_.clear();
  v_.clear();
  for (const auto& [name, t] : ckpt.arrays) {
    if (name.rfind("adam.m.", 0) == 0) m_[name.substr(7)] = t;
    if (name.rfind("adam.v.", 0) == 0) v_[name.substr(7)] = t;
  }
  t_ = steps;
}

LossTerms compute_losses(const SrModel<float>& model, const Batch& batch, const LossConfig& loss) {
  const int N = batch.lr.n();
  const auto& thresholds = model.config().route.thresholds;
  auto lr = constant(batch.lr);
  auto sal = model.detector().forward(lr);

  std::vector<std::vector<double>> beta(N);
  double entropy = 0;
  const std::size_t P = sal->value.shape().plane();
  for (int n = 0; n < N; ++n) {
    double s = 0;
    const float* p = sal->value.plane(n, 0);
    for (std::size_t i = 0; i < P; ++i) s += p[i];
    beta[n] = path_weights(s / static_cast<double>(P), thresholds, loss.gamma);
    for (double b : beta[n])
      if (b > 0) entropy -= b * std::log(b);
  }

  std::vector<Var<float>> srs;
  for (const auto& features : model.routing().all_paths(lr)) srs.push_back(model.lsum().forward(features, batch.r_eff));
  auto l_sr = sr_loss<float>(srs, batch.hr, beta);

  const Tensor<float> err =
      error_map(srs.back()->value, batch.hr, batch.lr.h(), batch.lr.w(), loss.err_kernel, loss.err_bins);
  auto l_diff = difficulty_loss(sal, err);
  Var<float> l_sal;
  if (!batch.sal_gt.empty()) l_sal = saliency_loss(sal, batch.sal_gt);

  LossTerms out;
  out.total = total_loss(l_sr, l_sal, l_diff, loss.lambda1, loss.lambda2);
  out.metrics.total = scalar_value(out.total);
  out.metrics.sr = scalar_value(l_sr);
  out.metrics.diff = scalar_value(l_diff);
  out.metrics.has_sal = static_cast<bool>(l_sal);
  out.metrics.sal = l_sal ? scalar_value(l_sal) : 0.0;
  out.metrics.beta_entropy = entropy / N;
  out.metrics.r = batch.r_eff;
  return out;
}

Trainer::Trainer(const Config& config)
    : config_(config), train_(config.train()), loss_(config.loss()) {
  const DataConfig data = config.data();
  model_ = std::make_unique<SrModel<float>>(config.model(), data.seed);
  sampler_ = std::make_unique<BatchSampler>(load_dataset(data.root, Split::Train), data, loss_.sal_gt_dir);
  adam_ = Adam(train_.beta1, train_.beta2, train_.eps);
}

Trainer::Trainer(const Config& config, const Checkpoint& resume) : Trainer(config) {
  restore_params(resume, model_->params());
  iteration_ = resume.iteration;
  adam_.load(resume, iteration_);
}

StepMetrics Trainer::step() {
  const long s = iteration_ + 1;
  const Batch batch = sampler_->batch(static_cast<std::uint64_t>(s));
  model_->params().zero_grad();
  LossTerms terms = compute_losses(*model_, batch, loss_);
  if (!std::isfinite(terms.metrics.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << s << " (data.seed=" << sampler_->config().seed << ", r=" << batch.r_eff
        << ", images=";
    for (std::size_t i = 0; i < batch.samples.size(); ++i) {
      const auto& smp = batch.samples[i];
      msg << (i ? ";" : "") << smp.image << "@" << smp.y << "," << smp.x;
    }
    msg << ")";
    throw NonFiniteLoss(msg.str());
  }
  backward(terms.total);
  terms.total.reset();
  const double lr = lr_schedule(s - 1, train_);
  adam_.step(model_->params(), lr);
  iteration_ = s;
  terms.metrics.step = s;
  terms.metrics.lr = lr;
  return terms.metrics;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = config_.snapshot();
  ckpt.iteration = iteration_;
  store_params(ckpt, model_->params());
  adam_.save(ckpt);
  return ckpt;
}

namespace {

void write_csv_row(std::ostream& os, const StepMetrics& m) {
  os.precision(9);
  os << m.step << ',' << m.total << ',' << m.sr << ',' << m.sal << ',' << m.diff << ',' << m.beta_entropy << ','
     << m.lr << ',' << m.r << '\n';
}

constexpr const char* kCsvHeader = "step,total,sr,sal,diff,beta_entropy,lr,r";

}  // namespace

std::string train(const Config& config, const std::string& out_dir, const std::string& resume,
                  const StepCallback& on_step) {
  std::filesystem::create_directories(out_dir);
  std::unique_ptr<Trainer> trainer;
  if (resume.empty()) {
    trainer = std::make_unique<Trainer>(config);
  } else {
    trainer = std::make_unique<Trainer>(config, load_checkpoint(resume));
  }
  const TrainConfig tc = config.train();

  // Keep the rows up to the resume point so the log reads as one run.
  const std::string csv_path = out_dir + "/loss.csv";
  std::vector<std::string> kept;
  if (trainer->iteration() > 0) {
    std::ifstream in(csv_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line == kCsvHeader) continue;
      if (std::stol(line.substr(0, line.find(','))) <= trainer->iteration()) kept.push_back(line);
    }
  }
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + csv_path);
  csv << kCsvHeader << '\n';
  for (const auto& line : kept) csv << line << '\n';

  std::string last;
  auto save = [&](long step) {
    const Checkpoint ckpt = trainer->checkpoint();
    last = out_dir + "/step_" + std::to_string(step) + ".ckpt";
    save_checkpoint(last, ckpt);
    save_checkpoint(out_dir + "/last.ckpt", ckpt);
  };

  while (trainer->iteration() < tc.iters) {
    const StepMetrics m = trainer->step();
    write_csv_row(csv, m);
    if (!csv) throw IoError("cannot write " + csv_path);
    if (on_step) on_step(m);
    if (m.step % tc.checkpoint_every == 0 || m.step == tc.iters) save(m.step);
  }
  csv.flush();
  if (last.empty()) save(trainer->iteration());
  return out_dir + "/last.ckpt";
}

std::unique_ptr<SrModel<float>> load_model(const std::string& path, Config* config) {
  const Checkpoint ckpt = load_checkpoint(path);
  const Config cfg = checkpoint_config(ckpt);
  auto model = std::make_unique<SrModel<float>>(cfg.model(), 0);
  restore_params(ckpt, model->params());
  if (config) *config = cfg;
  return model;
}

}  // namespace saldrn
