#include <doctest.h>

#include <cstring>

#include "saldrn/errors.hpp"
#include "saldrn/lsum.hpp"
#include "saldrn/model.hpp"
#include "saldrn/routing.hpp"
#include "saldrn/saliency.hpp"
#include "support.hpp"

using namespace saldrn;
using saldrn::test::check_gradients;
using saldrn::test::probe;
using saldrn::test::random_tensor;

namespace {

void zero_params(ParamStore<double>& store, const std::string& prefix) {
  for (const auto& [name, v] : store.all())
    if (name.rfind(prefix, 0) == 0) v->value.fill(0);
}

void randomize(ParamStore<double>& store, std::uint64_t seed) {
  // Random biases and gammas as well, so no gradient is trivially zero.
  for (const auto& [name, v] : store.all()) {
    const bool gamma = name.find("gamma") != std::string::npos;
    v->value = random_tensor<double>(v->value.shape(), seed++, gamma ? 0.5 : -0.5, gamma ? 1.5 : 0.5);
  }
}

RoutingConfig tiny_routing(bool shared) {
  RoutingConfig rc;
  rc.C = 8;
  rc.D = 2;
  rc.share_params = shared;
  rc.fru_depths = {1, 2, 1};
  return rc;
}

}  // namespace

// ---------------------------------------------------------------- detector

TEST_CASE("detector encoder halves three times with ceil division") {
  ParamStore<float> store;
  DetectorConfig dc;
  SaliencyNet<float> net(store, dc);
  store.initialize(1);
  const auto x = constant(random_tensor<float>({1, 3, 50, 50}, 2, 0, 1));
  const auto enc = net.encode(x);
  CHECK(enc[0]->value.shape() == Shape{1, 8, 25, 25});
  CHECK(enc[1]->value.shape() == Shape{1, 16, 13, 13});
  CHECK(enc[2]->value.shape() == Shape{1, 24, 7, 7});
  const auto y = net.forward(x)->value;
  CHECK(y.shape() == Shape{1, 1, 50, 50});
  for (float v : y.vec()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  CHECK(store.count() == SaliencyNet<float>::param_count(dc));
}

TEST_CASE("detector gradients") {
  ParamStore<double> store;
  DetectorConfig dc;
  dc.widths = {4, 8, 16};
  dc.m = 4;
  SaliencyNet<double> net(store, dc);
  randomize(store, 10);
  auto x = variable(random_tensor<double>({2, 3, 9, 11}, 3, 0, 1));
  const auto rep = check_gradients(store, [&] { return probe(net.forward(x), 4); }, {x});
  CHECK(rep.worst < 1e-3);
}

// ---------------------------------------------------------------- patches

TEST_CASE("patch grid layout") {
  const auto g = make_grid(512, 512, 48, 8);
  CHECK(g.size() == 169);
  REQUIRE(g.ys.size() == 13);
  for (int i = 0; i < 12; ++i) CHECK(g.ys[i] == 40 * i);
  CHECK(g.ys[12] == 464);
  CHECK(g.xs == g.ys);

  CHECK(make_grid(88, 88, 48, 8).xs == std::vector<int>{0, 40});
  CHECK(make_grid(88, 88, 48, 8).size() == 4);
  CHECK(make_grid(48, 48, 48, 8).size() == 1);

  const auto small = make_grid(30, 60, 48, 8);
  CHECK(small.pad_h == 18);
  CHECK(small.pad_w == 0);
  CHECK(small.ys == std::vector<int>{0});
  CHECK_THROWS_AS(make_grid(64, 64, 48, 48), ContractViolation);
}

TEST_CASE("decompose and recombine round trip") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = std::uniform_int_distribution<int>(4, 40)(rng);
    const int ov = std::uniform_int_distribution<int>(0, p - 1)(rng);
    const int h = std::uniform_int_distribution<int>(1, 120)(rng);
    const int w = std::uniform_int_distribution<int>(1, 120)(rng);
    const auto img = random_tensor<float>({1, 2, h, w}, trial);
    const auto [patches, grid] = decompose(img, p, ov);
    CHECK(patches.shape() == Shape{static_cast<int>(grid.size()), 2, p, p});
    CHECK(recombine(patches, grid).vec() == img.vec());
  }
}

TEST_CASE("recombine averages overlapping contributions") {
  const auto g = make_grid(48, 88, 48, 8);
  REQUIRE(g.size() == 2);
  Tensor<float> patches({2, 1, 48, 48});
  std::fill_n(patches.plane(1, 0), 48 * 48, 1.0f);
  const auto out = recombine(patches, g);
  CHECK(out.at(0, 0, 10, 39) == 0.0f);
  for (int x = 40; x < 48; ++x) CHECK(out.at(0, 0, 10, x) == 0.5f);
  CHECK(out.at(0, 0, 10, 48) == 1.0f);

  const auto lone = make_grid(48, 48, 48, 8);
  const auto one = random_tensor<float>({1, 5, 48, 48}, 1);
  CHECK(recombine(one, lone).vec() == one.vec());
  CHECK_THROWS_AS(recombine(Tensor<float>({3, 1, 48, 48}), g), ContractViolation);
}

// ---------------------------------------------------------------- routing

TEST_CASE("select_path gate rule") {
  const std::vector<double> th{0, 0.25, 0.5};
  CHECK(select_path(0.3, th) == 2);
  CHECK(select_path(0.0, th) == 0);
  CHECK(select_path(0.25, th) == 1);
  CHECK(select_path(0.2, th) == 1);
  CHECK(select_path(0.5, th) == 2);
  CHECK(select_path(0.51, th) == 3);
  CHECK(select_path(1.0, std::vector<double>{1, 1, 1}) == 0);
  CHECK(select_path(1e-9, std::vector<double>{0, 0, 0}) == 3);
  // A failed switch bypasses all later ones even if they would pass.
  CHECK(select_path(0.4, std::vector<double>{0.5, 0.1, 0.1}) == 0);
}

TEST_CASE("raising a threshold never deepens a path") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> th{u(rng), u(rng), u(rng)};
    std::sort(th.begin(), th.end());
    const double s = u(rng);
    auto raised = th;
    raised[t % 3] += u(rng) * (1 - raised[t % 3]);
    CHECK(select_path(s, raised) <= select_path(s, th));
  }
}

TEST_CASE("CCA statistics and identity attention") {
  ParamStore<double> store;
  Cca<double> cca(store, "cca", 16);
  CHECK(Cca<double>::hidden(16) == 1);
  CHECK(Cca<double>::hidden(64) == 4);
  CHECK(store.count() == Cca<double>::param_count(16));
  // fc2 bias large and weights zero: attention -> 1, output -> input
  zero_params(store, "cca");
  store.get("cca.fc2.bias")->value.fill(40);
  const auto x = random_tensor<double>({2, 16, 5, 5}, 1);
  const auto y = cca(constant(x))->value;
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("CCA gradients") {
  ParamStore<double> store;
  Cca<double> cca(store, "cca", 8);
  randomize(store, 20);
  auto x = variable(random_tensor<double>({2, 8, 4, 3}, 5));
  const auto rep = check_gradients(store, [&] { return probe(cca(x), 6); }, {x});
  CHECK(rep.worst < 1e-3);
}

TEST_CASE("IMDB channel accounting and residual") {
  ParamStore<double> store;
  Imdb<double> block(store, "imdb", 64);
  CHECK(store.get("imdb.c4.weight")->value.shape() == Shape{16, 48, 3, 3});
  CHECK(store.get("imdb.c2.weight")->value.shape().c == 48);
  CHECK(store.get("imdb.out.weight")->value.shape() == Shape{64, 64, 1, 1});
  CHECK(store.count() == Imdb<double>::param_count(64));

  store.initialize(3);
  zero_params(store, "imdb.out");
  const auto x = random_tensor<double>({1, 64, 7, 9}, 2);
  CHECK(block(constant(x))->value.vec() == x.vec());
}

TEST_CASE("FRU fusion accounting and residual-only tail") {
  ParamStore<double> store;
  Fru<double> fru(store, "fru", 64, 4);
  CHECK(store.get("fru.fuse.weight")->value.shape() == Shape{64, 256, 1, 1});
  CHECK(store.get("fru.entry.weight")->value.shape() == Shape{64, 128, 1, 1});

  ParamStore<double> small;
  Fru<double> f(small, "f", 8, 2);
  small.initialize(4);
  zero_params(small, "f.tail");
  const auto x = constant(random_tensor<double>({1, 8, 6, 6}, 1));
  const auto s = constant(random_tensor<double>({1, 8, 6, 6}, 2));
  const Var<double> in[] = {x, s};
  const auto h0 = conv2d(concat_channels<double>(in), small.get("f.entry.weight"), small.get("f.entry.bias"),
                         ConvSpec{});
  CHECK(f(x, s)->value.vec() == h0->value.vec());
  CHECK_THROWS_AS(f(x, constant(Tensor<double>({1, 8, 5, 6}))), ContractViolation);
}

TEST_CASE("routing paths") {
  ParamStore<double> store;
  RoutingNet<double> net(store, tiny_routing(true));
  store.initialize(5);
  const auto patch = constant(random_tensor<double>({3, 3, 12, 12}, 1, 0, 1));
  const auto shallow = net.shallow(patch)->value;
  CHECK(shallow.shape() == Shape{3, 8, 12, 12});

  const auto paths = net.drm_forward(patch, Tensor<double>(), DrmMode::AllPaths);
  REQUIRE(paths.size() == 4);
  CHECK(paths[0]->value.vec() == shallow.vec());
  for (int d = 0; d <= 3; ++d) CHECK(net.run_path(patch, d)->value.vec() == paths[d]->value.vec());

  // Saliency means 0, 0.3, 0.9 route the three samples to paths 0, 2, 3.
  Tensor<double> sal({3, 1, 12, 12});
  std::fill_n(sal.plane(1, 0), 144, 0.3);
  std::fill_n(sal.plane(2, 0), 144, 0.9);
  const auto routed = net.drm_forward(patch, sal, DrmMode::Route)[0]->value;
  const int expect[] = {0, 2, 3};
  for (int n = 0; n < 3; ++n)
    CHECK(std::memcmp(routed.plane(n, 0), paths[expect[n]]->value.plane(n, 0), 8 * 144 * sizeof(double)) == 0);
}

TEST_CASE("shared FRU parameters do not grow with K") {
  for (int K : {1, 3, 6}) {
    ParamStore<double> store;
    auto rc = tiny_routing(true);
    rc.K = K;
    RoutingNet<double> net(store, rc);
    CHECK(store.count() == RoutingNet<double>::shallow_param_count(rc) + RoutingNet<double>::fru_param_count(rc));
    CHECK(store.count_prefix("fru") == Fru<double>::param_count(8, 2));
  }
  ParamStore<double> store;
  RoutingNet<double> net(store, tiny_routing(false));
  CHECK(store.count_prefix("fru") ==
        Fru<double>::param_count(8, 1) + Fru<double>::param_count(8, 2) + Fru<double>::param_count(8, 1));
}

TEST_CASE("routing gradients over all paths") {
  for (bool shared : {true, false}) {
    CAPTURE(shared);
    ParamStore<double> store;
    RoutingNet<double> net(store, tiny_routing(shared));
    randomize(store, 30);
    auto patch = variable(random_tensor<double>({2, 3, 6, 6}, 7, 0, 1));
    auto loss = [&] {
      const auto paths = net.all_paths(patch);
      std::vector<Var<double>> terms;
      for (std::size_t k = 0; k < paths.size(); ++k) terms.push_back(probe(paths[k], 40 + k));
      const std::vector<double> ones(terms.size(), 1.0);
      return weighted_sum<double>(terms, ones);
    };
    const auto rep = check_gradients(store, loss, {patch}, 4);
    CHECK(rep.worst < 1e-3);
  }
}

// ---------------------------------------------------------------- upsampler

TEST_CASE("CFEB pyramid bookkeeping") {
  ParamStore<double> store;
  Lsum<double> lsum(store, 64, {});
  store.initialize(1);
  const auto x = random_tensor<double>({1, 64, 12, 12}, 2);
  const auto pyr = lsum.cfeb(constant(x));
  CHECK(pyr.levels[0]->value.shape() == Shape{1, 16, 12, 12});
  CHECK(pyr.levels[1]->value.shape() == Shape{1, 16, 24, 24});
  CHECK(pyr.levels[2]->value.shape() == Shape{1, 16, 48, 48});
  CHECK(pyr.levels[3]->value.shape() == Shape{1, 16, 96, 96});
  CHECK(store.get("lsum.cfeb.g1.weight")->value.shape() == Shape{192, 16, 3, 3});
  CHECK(store.get("lsum.cfeb.g2.weight")->value.shape() == Shape{128, 16, 3, 3});
  CHECK(store.get("lsum.cfeb.g3.weight")->value.shape() == Shape{64, 16, 3, 3});

  zero_params(store, "lsum.cfeb");
  const auto z = lsum.cfeb(constant(x));
  CHECK(std::equal(x.data(), x.data() + 16 * 144, z.levels[0]->value.data()));
  for (int t = 1; t < 4; ++t)
    for (double v : z.levels[t]->value.vec()) CHECK(v == 0.0);
}

TEST_CASE("scale encoding") {
  const auto zero = scale_encoding(0.0);
  REQUIRE(zero.size() == 64);
  for (int i = 0; i < 64; ++i) CHECK(zero[i] == (i % 2 ? 1.0 : 0.0));
  for (double r : {1.0, 2.6, 3.99}) {
    const auto e = scale_encoding(r);
    CHECK(e.size() == 64);
    for (double v : e) CHECK(std::abs(v) <= 1.0);
    CHECK(e[0] == std::sin(2 * std::exp(1.0) * r));
    CHECK(e[63] == std::cos(2 * std::exp(32.0) * r));
  }
  std::vector<double> ladder(32);
  for (int i = 0; i < 32; ++i) ladder[i] = std::ldexp(M_PI / 4, i);
  CHECK(scale_encoding(2.0, ladder)[1] == doctest::Approx(std::cos(M_PI / 2)));
  CHECK_THROWS_AS(scale_encoding(1.0, std::vector<double>{1.0}), ConfigError);
}

TEST_CASE("bilinear latent blend") {
  CHECK(bilinear_latent(0.0, 0.0, 7.0, 1.0, 2.0, 3.0) == 7.0);
  CHECK(bilinear_latent(0.5, 0.5, 0.0, 1.0, 2.0, 5.0) == 2.0);
  CHECK(bilinear_latent(0.25, 0.75, 0.0, 1.0, 2.0, 3.0) == doctest::Approx(1.25));
}

TEST_CASE("upsampler output grid") {
  ParamStore<float> store;
  Lsum<float> lsum(store, 16, {});
  store.initialize(2);
  const auto f = constant(random_tensor<float>({1, 16, 48, 48}, 1));
  CHECK(lsum.upsample(f, 2.0)->value.shape() == Shape{1, 16, 96, 96});
  CHECK(lsum.forward(f, 2.6)->value.shape() == Shape{1, 3, 125, 125});
  CHECK(lsum.forward(f, 1.0)->value.shape() == Shape{1, 3, 48, 48});
  CHECK_THROWS_AS(lsum.upsample(f, 0.5), InvalidScale);
  CHECK_THROWS_AS(lsum.upsample(f, 8.5), InvalidScale);
}

TEST_CASE("level queries equal brute-force bilinear interpolation") {
  ParamStore<double> store;
  Lsum<double> lsum(store, 8, {});
  store.initialize(3);
  const int H = 5, W = 7;
  const auto pyr = lsum.cfeb(constant(random_tensor<double>({1, 8, H, W}, 4)));
  for (double r : {1.0, 1.7, 3.3}) {
    const auto q = lsum.query_levels(pyr, H, W, r);
    const int ho = scaled_dim(r, H), wo = scaled_dim(r, W);
    for (int t = 0; t < 4; ++t) {
      const auto& code = pyr.levels[t]->value;
      const int th = code.h(), tw = code.w();
      REQUIRE(q[t]->value.shape() == Shape{1, 2, ho, wo});
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          // Query point in the unit square and its position among code centers.
          const double py = (i + 0.5) / ho, px = (j + 0.5) / wo;
          const double gy = py * th - 0.5, gx = px * tw - 0.5;
          const int y0 = static_cast<int>(std::floor(gy)), x0 = static_cast<int>(std::floor(gx));
          const double b = gy - y0, a = gx - x0;
          auto at = [&](int c, int y, int x) {
            return code.at(0, c, std::clamp(y, 0, th - 1), std::clamp(x, 0, tw - 1));
          };
          for (int c = 0; c < 2; ++c) {
            const double want = bilinear_latent(a, b, at(c, y0, x0), at(c, y0 + 1, x0), at(c, y0, x0 + 1),
                                                at(c, y0 + 1, x0 + 1));
            CHECK(std::abs(q[t]->value.at(0, c, i, j) - want) <= 1e-12);
          }
        }
    }
    if (r == 1.0) CHECK(q[0]->value.vec() == pyr.levels[0]->value.vec());
  }
}

TEST_CASE("SAPA attention is positive and per channel") {
  ParamStore<double> store;
  Lsum<double> lsum(store, 16, {});
  store.initialize(5);
  const auto x = random_tensor<double>({1, 16, 6, 6}, 6);
  const auto y = lsum.sapa(constant(x), 2.3)->value;
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK((y[i] > 0) == (x[i] > 0));

  zero_params(store, "lsum.sapa");
  store.get("lsum.sapa.fc2.bias")->value.fill(50);
  const auto id = lsum.sapa(constant(x), 2.3)->value;
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(id[i] == doctest::Approx(x[i]).epsilon(1e-12));
  store.get("lsum.sapa.fc2.bias")->value.fill(0);
  const auto half = lsum.sapa(constant(x), 2.3)->value;
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(half[i] == doctest::Approx(x[i] / 2));
  CHECK(store.get("lsum.sapa.fc1.weight_scale")->value.shape() == Shape{8, 64, 1, 1});
}

TEST_CASE("reconstruction head") {
  ParamStore<double> store;
  Lsum<double> lsum(store, 64, {});
  store.initialize(1);
  const auto x = constant(random_tensor<double>({1, 64, 9, 9}, 2));
  CHECK(lsum.reconstruct(x)->value.shape() == Shape{1, 3, 9, 9});
  zero_params(store, "lsum.recon");
  store.get("lsum.recon.conv2.bias")->value.fill(0.5);
  const auto flat = lsum.reconstruct(x)->value;
  for (double v : flat.vec()) CHECK(v == 0.5);
}

TEST_CASE("tiled upsampling equals the whole-map pass") {
  ParamStore<float> store;
  Lsum<float> lsum(store, 16, {});
  store.initialize(7);
  const auto f = random_tensor<float>({1, 16, 23, 31}, 8);
  for (double r : {1.0, 2.0, 2.7, 4.0}) {
    const auto whole = lsum.forward(constant(f), r)->value;
    for (int tile : {16, 37, 500}) {
      const auto tiled = lsum.forward_tiled(f, r, tile);
      REQUIRE(tiled.shape() == whole.shape());
      CHECK(std::memcmp(tiled.data(), whole.data(), whole.numel() * sizeof(float)) == 0);
    }
  }
}

TEST_CASE("LSUM gradients including SAPA") {
  ParamStore<double> store;
  Lsum<double> lsum(store, 8, {});
  randomize(store, 50);
  auto f = variable(random_tensor<double>({2, 8, 4, 5}, 9));
  for (double r : {1.0, 2.3}) {
    CAPTURE(r);
    const auto rep = check_gradients(store, [&] { return probe(lsum.forward(f, r), 11); }, {f});
    CHECK(rep.worst < 1e-3);
  }
}

TEST_CASE("full model parameter split") {
  SrModel<float> model(ModelConfig{});
  const auto& p = model.params();
  CHECK(p.count() == 572924);
  CHECK(p.count_prefix("lsum.") == Lsum<float>::param_count(64));
  CHECK(p.count_prefix("lsum.") == 71203);
  CHECK(p.count_prefix("sal.") == SaliencyNet<float>::param_count(DetectorConfig{}));
}
