#include <CLI11.hpp>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "../support.hpp"
#include "saldrn/checkpoint.hpp"
#include "saldrn/complexity.hpp"
#include "saldrn/errors.hpp"
#include "saldrn/image.hpp"
#include "saldrn/inference.hpp"
#include "saldrn/losses.hpp"
#include "saldrn/lsum.hpp"
#include "saldrn/metrics.hpp"
#include "saldrn/model.hpp"
#include "saldrn/routing.hpp"
#include "saldrn/saliency.hpp"
#include "saldrn/synthetic.hpp"
#include "saldrn/trainer.hpp"

using namespace saldrn;
using saldrn::test::random_tensor;

namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

std::string pct(double v) { return fmt(100 * v, 1) + "%"; }

std::string list(const std::vector<double>& v, int digits = 2) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i], digits);
  return s + "]";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- 1

Outcome parameter_fidelity() {
  Timer t;
  const auto rep = count_params(ModelConfig{});
  const double total = rep.total_params();
  const double lsum = rep.at("lsum.cfeb").params + rep.at("lsum.sapa").params + rep.at("lsum.reconstruct").params;
  const double secs = t.seconds();
  const bool ok_total = std::abs(total / 571e3 - 1) <= 0.15;
  const bool ok_lsum = std::abs(lsum / 72e3 - 1) <= 0.10;
  return {ok_total && ok_lsum && secs < 1.0,
          "total " + fmt(total, 0) + " (target 571K +-15%), LSUM " + fmt(lsum, 0) + " (target 72K +-10%), " +
              fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 2

bool strictly_decreasing(const std::vector<SweepRow>& rows) {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (!(rows[i].flops < rows[i - 1].flops)) return false;
  return true;
}

std::string sweep_text(const std::vector<double>& flops) {
  std::string s;
  for (std::size_t i = 0; i < flops.size(); ++i) s += (i ? ", " : "") + fmt(flops[i] / 1e6, 0);
  return s;
}

Outcome flops_structure() {
  Timer t;
  const ModelConfig mc;
  const std::vector<double> none{0, 0, 0}, all{1, 1, 1};
  const double base = count_flops(mc, none).total_flops();
  const double full = count_flops(mc, all).total_flops();
  const double ratio = base / full;
  const bool ok_ratio = std::abs(ratio - 0.034) <= 0.02;

  // Sweeps under three sources of passing ratios: the two reference ratio
  // tables and a uniform spread of patch means.
  const std::vector<std::vector<std::vector<double>>> reference{
      {{1, 1, 1}, {1, 0.75, 0.47}, {1, 0.75, 0.25}, {1, 0.47, 0.25}, {1, 0.25, 0}, {0.75, 0.47, 0.25}, {0, 0, 0}},
      {{1, 1, 1}, {1, 0.94, 0.40}, {1, 0.94, 0.18}, {1, 0.39, 0.18}, {1, 0.18, 0}, {0.95, 0.19, 0.18}, {0, 0, 0}},
  };
  bool ok_sweep = true;
  std::string sweeps;
  for (std::size_t s = 0; s < reference.size(); ++s) {
    std::vector<SweepRow> rows;
    for (const auto& ratios : reference[s]) rows.push_back({{}, ratios, count_flops(mc, ratios).total_flops()});
    const bool dec = strictly_decreasing(rows);
    ok_sweep = ok_sweep && dec;
    std::vector<double> f;
    for (const auto& r : rows) f.push_back(r.flops);
    sweeps += "; reference table " + std::to_string(s + 1) + (dec ? " decreasing" : " NOT decreasing") + " (" +
              sweep_text(f) + " M)";
  }
  std::vector<double> means(10000);
  for (int i = 0; i < 10000; ++i) means[i] = (i + 0.5) / 10000;
  const auto rows = threshold_sweep(mc, means, sweep_settings());
  const bool dec = strictly_decreasing(rows);
  ok_sweep = ok_sweep && dec;
  std::vector<double> f;
  for (const auto& r : rows) f.push_back(r.flops);
  sweeps += "; uniform means" + std::string(dec ? " decreasing" : " NOT decreasing") + " (" + sweep_text(f) + " M)";

  // Instrumented oracle: count every executed multiply-add of one patch.
  SrModel<float> model(mc, 1);
  const auto patch = constant(random_tensor<float>({1, 3, 48, 48}, 2, 0, 1));
  double worst = 0;
  for (int path : {0, 3}) {
    NoGradGuard guard;
    MacCounter counter;
    model.detector().forward(patch);
    model.lsum().forward(model.routing().run_path(patch, path), 2.0);
    const double analytic = count_flops(mc, path ? all : none).total_flops();
    worst = std::max(worst, std::abs(analytic / (2.0 * counter.total()) - 1));
  }
  const bool ok_oracle = worst <= 0.01;
  const double secs = t.seconds();
  return {ok_ratio && ok_sweep && ok_oracle && secs < 10,
          "non-FRU/full-path " + pct(ratio) + " (target 3.4% +-2) [" + (ok_ratio ? "ok" : "off") +
              "], full path " + fmt(full / 1e6, 0) + "M FLOPs" + sweeps + " [" + (ok_sweep ? "ok" : "off") +
              "]; instrumented vs analytic max deviation " + pct(worst) + " [" + (ok_oracle ? "ok" : "off") + "], " +
              fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 3

Outcome routing_semantics() {
  Timer t;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  int mismatches = 0, interior = 0;
  double worst_sum = 0;
  for (const auto& th : sweep_settings()) {
    for (int i = 0; i < 10000; ++i) {
      const double s = u(rng);
      const auto beta = path_weights(s, th, 10.0);
      double sum = 0;
      for (double b : beta) sum += b;
      worst_sum = std::max(worst_sum, std::abs(sum - 1));
      bool on_boundary = s <= 0 || s >= 1;
      for (double v : th) on_boundary = on_boundary || s == v;
      if (on_boundary) continue;
      ++interior;
      const int arg = static_cast<int>(std::max_element(beta.begin(), beta.end()) - beta.begin());
      if (arg != select_path(s, th)) ++mismatches;
    }
  }
  int monotone_breaks = 0;
  std::set<int> image;
  for (const auto& th : sweep_settings()) {
    int prev = 0;
    for (int i = 0; i < 10000; ++i) {
      const int p = select_path(i / 9999.0, th);
      if (p < prev) ++monotone_breaks;
      prev = p;
      if (th == std::vector<double>{0, 0.25, 0.5}) image.insert(p);
    }
  }
  const bool full_image = image == std::set<int>{0, 1, 2, 3};
  const double secs = t.seconds();
  return {mismatches == 0 && worst_sum <= 1e-9 && monotone_breaks == 0 && full_image && secs < 5,
          std::to_string(mismatches) + " argmax mismatches over " + std::to_string(interior) +
              " interior samples, max |sum beta - 1| " + fmt(worst_sum * 1e16, 2) + "e-16, " +
              std::to_string(monotone_breaks) + " monotonicity breaks on the 10^4 grid, path image " +
              (full_image ? "{0..3}" : "incomplete") + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 4

Outcome iff_oracle() {
  Timer t;
  ParamStore<double> store;
  Lsum<double> lsum(store, 16, {});
  store.initialize(4);
  const int H = 32, W = 32;
  const auto pyr = lsum.cfeb(constant(random_tensor<double>({1, 16, H, W}, 5)));
  const auto q = lsum.query_levels(pyr, H, W, 8.0);  // 256 x 256 queries
  double worst = 0;
  for (int lvl = 0; lvl < 4; ++lvl) {
    const auto& code = pyr.levels[lvl]->value;
    const auto& got = q[lvl]->value;
    const int th = code.h(), tw = code.w(), ho = got.h(), wo = got.w();
    if (ho != 256 || wo != 256) return {false, "query grid is " + std::to_string(ho) + "x" + std::to_string(wo)};
    for (int c = 0; c < code.c(); ++c)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          // Continuous position among code centers, neighbours clamped.
          const double gy = (i + 0.5) / ho * th - 0.5, gx = (j + 0.5) / wo * tw - 0.5;
          const int y0 = static_cast<int>(std::floor(gy)), x0 = static_cast<int>(std::floor(gx));
          const double b = gy - y0, a = gx - x0;
          auto z = [&](int y, int x) { return code.at(0, c, std::clamp(y, 0, th - 1), std::clamp(x, 0, tw - 1)); };
          const double want = (1 - a) * (1 - b) * z(y0, x0) + (1 - a) * b * z(y0 + 1, x0) + a * (1 - b) * z(y0, x0 + 1) +
                              a * b * z(y0 + 1, x0 + 1);
          worst = std::max(worst, std::abs(got.at(0, c, i, j) - want));
        }
  }
  // Corner queries: at r = 2^t the query grid of level t sits on its code centers.
  bool corners = true;
  for (int lvl = 0; lvl < 4; ++lvl) {
    const auto ql = lsum.query_levels(pyr, H, W, static_cast<double>(1 << lvl));
    corners = corners && ql[lvl]->value.vec() == pyr.levels[lvl]->value.vec();
  }
  const double secs = t.seconds();
  return {worst <= 1e-6 && corners && secs < 30,
          "max |h - brute force| " + fmt(worst * 1e15, 3) + "e-15 over 4 levels x 256x256 queries, corner queries " +
              (corners ? "exact" : "NOT exact") + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 5

Outcome shape_law() {
  Timer t;
  ModelConfig mc;
  mc.route.C = 16;
  SrModel<float> model(mc, 3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ur(1, 4);
  std::uniform_int_distribution<int> ud(48, 128);
  int bad = 0;
  std::string first;
  for (int i = 0; i < 200; ++i) {
    const double r = ur(rng);
    const int h = ud(rng), w = ud(rng);
    const auto img = synthetic_scene(h, w, 100 + i);
    const auto out = super_resolve(model, img, r).sr;
    const int eh = static_cast<int>(std::lround(r * h)), ew = static_cast<int>(std::lround(r * w));
    if (out.h() != eh || out.w() != ew || out.c() != 3) {
      if (!bad) first = " (first: " + std::to_string(h) + "x" + std::to_string(w) + " at r=" + fmt(r, 4) + ")";
      ++bad;
    }
  }
  const double secs = t.seconds();
  return {bad == 0 && secs < 300,
          std::to_string(200 - bad) + "/200 outputs of size round(r dim)" + first + ", C=16, " + fmt(secs, 1) + " s"};
}

// ---------------------------------------------------------------- 6

void randomize(ParamStore<double>& store, std::uint64_t seed) {
  for (const auto& [name, v] : store.all()) {
    const bool gamma = name.find("gamma") != std::string::npos;
    v->value = random_tensor<double>(v->value.shape(), seed++, gamma ? 0.5 : -0.5, gamma ? 1.5 : 0.5);
  }
}

// Central differences with h = 1e-5: smaller steps drown gradients near 1e-6
// in the roundoff of the probe loss.
Outcome gradient_integrity() {
  Timer t;
  std::map<std::string, double> worst;
  {
    ParamStore<double> store;
    DetectorConfig dc;
    dc.widths = {4, 8, 16};
    dc.m = 4;
    SaliencyNet<double> net(store, dc);
    randomize(store, 10);
    auto x = variable(random_tensor<double>({2, 3, 12, 10}, 1, 0, 1));
    worst["detector"] = test::check_gradients(store, [&] { return test::probe(net.forward(x), 2); }, {x}, 8, 1e-5).worst;
  }
  {
    ParamStore<double> store;
    RoutingConfig rc;
    rc.C = 8;
    rc.D = 2;
    RoutingNet<double> net(store, rc);
    randomize(store, 20);
    auto x = variable(random_tensor<double>({2, 3, 6, 6}, 3, 0, 1));
    worst["FRU path"] =
        test::check_gradients(store, [&] { return test::probe(net.run_path(x, 1), 4); }, {x}, 8, 1e-5).worst;
  }
  {
    ParamStore<double> store;
    Cca<double> cca(store, "cca", 16);
    randomize(store, 30);
    auto x = variable(random_tensor<double>({2, 16, 5, 4}, 5));
    worst["CCA"] = test::check_gradients(store, [&] { return test::probe(cca(x), 6); }, {x}, 8, 1e-5).worst;
  }
  {
    ParamStore<double> store;
    Lsum<double> lsum(store, 8, {});
    randomize(store, 40);
    auto x = variable(random_tensor<double>({2, 8, 5, 4}, 7));
    worst["LSUM+SAPA"] =
        test::check_gradients(store, [&] { return test::probe(lsum.forward(x, 2.3), 8); }, {x}, 8, 1e-5).worst;
  }
  bool ok = true;
  std::string detail;
  for (const auto& [name, w] : worst) {
    ok = ok && w <= 1e-3;
    detail += name + " " + fmt(w * 1e6, 2) + "e-6, ";
  }
  const double secs = t.seconds();
  return {ok && secs < 120, "max relative error " + detail + fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 7

Outcome decompose_round_trip() {
  Timer t;
  std::mt19937_64 rng(7);
  int exact = 0;
  std::size_t count512 = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int h, w, p, ov;
    if (trial == 0) {
      h = w = 512;
      p = 48;
      ov = 8;
    } else {
      p = std::uniform_int_distribution<int>(8, 64)(rng);
      ov = std::uniform_int_distribution<int>(0, p - 1)(rng);
      h = std::uniform_int_distribution<int>(1, 300)(rng);
      w = std::uniform_int_distribution<int>(1, 300)(rng);
    }
    const auto img = random_tensor<float>({1, 3, h, w}, 1000 + trial);
    const auto [patches, grid] = decompose(img, p, ov);
    if (trial == 0) count512 = grid.size();
    if (recombine(patches, grid).vec() == img.vec()) ++exact;
  }
  const double secs = t.seconds();
  return {exact == 100 && count512 == 169 && secs < 10,
          std::to_string(exact) + "/100 exact round trips, 512x512/48/8 gives " + std::to_string(count512) +
              " patches, " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 8

Outcome error_map_pipeline() {
  Timer t;
  double worst_ks = 0;
  for (int i = 0; i < 20; ++i) {
    const auto hr = synthetic_scene(96, 96, 200 + i);
    Tensor<float> sr = degrade_bicubic(hr, 2.0);
    sr = resize_bicubic(sr, 96, 96);
    const auto map = error_map(sr, hr, 48, 48, 5, 256);
    worst_ks = std::max(worst_ks, ks_uniform(map.span()));
  }
  const auto hr = synthetic_scene(96, 96, 300);
  const auto zero = error_map(hr, hr, 48, 48, 5, 256);
  const bool all_zero = std::all_of(zero.vec().begin(), zero.vec().end(), [](float v) { return v == 0.0f; });
  const double secs = t.seconds();
  return {worst_ks <= 0.1 && all_zero && secs < 5,
          "max KS distance " + fmt(worst_ks, 4) + " over 20 bicubic-error maps, sr == hr map " +
              (all_zero ? "all zero" : "NOT zero") + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 9

Config toy_config(const std::string& root) {
  Config c;
  c.apply("data.root=" + root);
  c.apply("data.batch_size=16");
  c.apply("data.scale_min=2");
  c.apply("data.scale_max=2");
  c.apply("data.seed=1");
  c.apply("route.C=32");
  c.apply("train.iters=5000");
  c.apply("train.lr_drop_at=2500");
  c.apply("train.lr0=1e-3");
  c.apply("train.checkpoint_every=1000");
  return c;
}

Outcome toy_training(const std::string& work) {
  Timer t;
  const std::string root = work + "/toy", run = work + "/run";
  fs::remove_all(work);
  write_toy_corpus(root, 20, 5, 192, 1);
  std::vector<double> totals;
  train(toy_config(root), run, "", [&](const StepMetrics& m) {
    totals.push_back(m.total);
    if (m.step % 500 == 0) std::cout << "  step " << m.step << " total " << fmt(m.total, 4) << std::endl;
  });

  // (a) loss averaged over ten 500-step windows
  std::vector<double> windows;
  for (std::size_t i = 0; i + 500 <= totals.size(); i += 500) {
    double s = 0;
    for (std::size_t j = i; j < i + 500; ++j) s += totals[j];
    windows.push_back(s / 500);
  }
  bool decreasing = windows.size() == 10;
  for (std::size_t i = 1; i < windows.size(); ++i) decreasing = decreasing && windows[i] < windows[i - 1];

  // (b) held-out PSNR at r = 2
  Config cfg;
  auto model = load_model(run + "/last.ckpt", &cfg);
  const auto rows = evaluate(*model, load_dataset(root, Split::Test), {2.0});
  const double gain = rows[0].psnr_model - rows[0].psnr_bicubic;

  // (c) saliency of deep versus shallow routed patches on the held-out LR inputs
  double s1 = 0, s3 = 0;
  int n1 = 0, n3 = 0;
  const auto test = load_dataset(root, Split::Test);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto lr = degrade_bicubic(read_image(test.path(i)), 2.0);
    const auto rep = route_image(*model, lr);
    for (std::size_t p = 0; p < rep.path_map.size(); ++p) {
      if (rep.path_map[p] == 1) {
        s1 += rep.patch_saliency[p];
        ++n1;
      } else if (rep.path_map[p] == 3) {
        s3 += rep.patch_saliency[p];
        ++n3;
      }
    }
  }
  const bool routed = n1 > 0 && n3 > 0 && s3 / n3 > s1 / n1;
  const double hours = t.seconds() / 3600;
  return {decreasing && gain >= 0.3 && routed && hours <= 8,
          "window losses " + list(windows, 4) + (decreasing ? " strictly decreasing" : " NOT strictly decreasing") +
              "; PSNR " + fmt(rows[0].psnr_model, 2) + " dB vs bicubic " + fmt(rows[0].psnr_bicubic, 2) +
              " dB (gain " + fmt(gain, 2) + ", need 0.30); path-3 mean saliency " +
              (n3 ? fmt(s3 / n3, 3) : std::string("n/a")) + " over " + std::to_string(n3) + " patches vs path-1 " +
              (n1 ? fmt(s1 / n1, 3) : std::string("n/a")) + " over " + std::to_string(n1) + "; " + fmt(hours, 2) +
              " h"};
}

// ---------------------------------------------------------------- 10

Outcome determinism(const std::string& work) {
  Timer t;
  const std::string root = work + "/toy";
  fs::remove_all(work);
  write_toy_corpus(root, 6, 1, 160, 2);
  Config c;
  c.apply("data.root=" + root);
  c.apply("data.batch_size=4");
  c.apply("data.seed=11");
  c.apply("route.C=16");
  c.apply("train.iters=100");
  c.apply("train.lr_drop_at=50");
  c.apply("train.checkpoint_every=100");
  train(c, work + "/a");
  train(c, work + "/b");
  const bool same_log = read_file(work + "/a/loss.csv") == read_file(work + "/b/loss.csv");
  const auto ca = load_checkpoint(work + "/a/last.ckpt"), cb = load_checkpoint(work + "/b/last.ckpt");
  bool same_params = ca.arrays.size() == cb.arrays.size();
  for (const auto& [name, v] : ca.arrays) {
    auto it = cb.arrays.find(name);
    same_params = same_params && it != cb.arrays.end() &&
                  std::memcmp(v.data(), it->second.data(), v.numel() * sizeof(float)) == 0;
  }
  auto ma = load_model(work + "/a/last.ckpt"), mb = load_model(work + "/b/last.ckpt");
  const auto img = read_image(load_dataset(root, Split::Test).path(0));
  const auto sa = super_resolve(*ma, img, 2.7).sr, sb = super_resolve(*mb, img, 2.7).sr;
  const auto sa2 = super_resolve(*ma, img, 2.7, 48, PatchSchedule::Sequential).sr;
  const bool same_sr = sa.vec() == sb.vec() && sa.vec() == sa2.vec();
  const double secs = t.seconds();
  return {same_log && same_params && same_sr && secs < 600,
          std::string("loss trajectories ") + (same_log ? "identical" : "DIFFER") + " over 100 steps, parameters " +
              (same_params ? "identical" : "DIFFER") + ", SR outputs " + (same_sr ? "identical" : "DIFFER") + ", " +
              fmt(secs, 1) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  int criterion = 0;
  std::string work = "acceptance_work";
  app.add_option("--criterion", criterion, "Criterion number 1-10")->required()->check(CLI::Range(1, 10));
  app.add_option("--workdir", work, "Scratch directory for criteria that train");
  CLI11_PARSE(app, argc, argv);

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> checks{
      {1, {"parameter fidelity", parameter_fidelity}},
      {2, {"FLOPs structure", flops_structure}},
      {3, {"routing semantics", routing_semantics}},
      {4, {"IFF oracle", iff_oracle}},
      {5, {"shape law", shape_law}},
      {6, {"gradient integrity", gradient_integrity}},
      {7, {"decompose/recombine", decompose_round_trip}},
      {8, {"error-map pipeline", error_map_pipeline}},
      {9, {"toy training", [&] { return toy_training(work + "/c9"); }}},
      {10, {"determinism", [&] { return determinism(work + "/c10"); }}},
  };
  const auto& [name, run] = checks.at(criterion);
  Outcome out;
  try {
    out = run();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << criterion << " (" << name << "): " << out.detail
            << std::endl;
  return out.pass ? 0 : 1;
}
