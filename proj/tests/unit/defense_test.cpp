#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "demark/core/random.hpp"
#include "demark/defense/converter.hpp"
#include "demark/defense/remap.hpp"
#include "demark/nn/serialize.hpp"
#include "helpers.hpp"

using namespace demark;
using namespace demark::defense;
using nn::Matrix;

namespace {

std::vector<double> random_sequence(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

Matrix random_windows(std::size_t rows, std::size_t n, std::uint64_t seed, double lo = 0.0,
                      double hi = 120.0) {
  Rng rng(seed);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// A reduced frozen decoder standing in for the adversary's in fast tests.
nn::ModelGraph small_decoder(std::size_t n, std::uint64_t seed) {
  nn::ModelGraph d(n,
                   {nn::LayerSpec::dense(32, nn::Activation::Relu),
                    nn::LayerSpec::dense(16, nn::Activation::None)},
                   seed, 1.0 / 50.0, 1.0);
  d.freeze();
  return d;
}

double fd_relative(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

}  // namespace

TEST_CASE("remap examples") {
  const RemapConfig cfg;
  const std::vector<double> in_spec{40, 50, 60};
  CHECK(remap(in_spec, cfg) == in_spec);
  const auto flat = remap(std::vector<double>{100, 100, 100}, cfg);
  CHECK(flat == std::vector<double>{60, 60, 60});
  const auto low = remap(std::vector<double>{5, 10, 15}, cfg);
  CHECK(low[0] == doctest::Approx(25.0));
  CHECK(low[1] == doctest::Approx(30.0));
  CHECK(low[2] == doctest::Approx(35.0));
  CHECK_ERROR_KIND(remap(std::vector<double>{1.0}, cfg), ErrorKind::DegenerateInput);
}

TEST_CASE("remap bounds the std and the mean, preserving order") {
  const RemapConfig cfg;
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 50 * (1 + trial % 4);
    const double spread = rng.uniform(0.1, 400.0);
    const double centre = rng.uniform(-200.0, 300.0);
    const auto raw = random_sequence(rng, n, centre - spread, centre + spread);
    const auto out = remap_unclamped(raw, cfg);
    const double sd_in = population_std(raw);
    CHECK(population_std(out) == doctest::Approx(std::min(sd_in, cfg.sigma)).epsilon(1e-9));
    const double m = mean(out);
    CHECK(m >= cfg.mu_min - 1e-9);
    CHECK(m <= cfg.mu_max + 1e-9);
    std::vector<std::size_t> a(n), b(n);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    std::stable_sort(a.begin(), a.end(), [&](auto i, auto j) { return raw[i] < raw[j]; });
    std::stable_sort(b.begin(), b.end(), [&](auto i, auto j) { return out[i] < out[j]; });
    CHECK(a == b);
    const auto clamped = remap(raw, cfg);
    CHECK(std::all_of(clamped.begin(), clamped.end(), [](double v) { return v >= 0.0; }));
  }
}

TEST_CASE("remap is idempotent on in-spec inputs") {
  const RemapConfig cfg;
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto raw = remap(random_sequence(rng, 100, 0.0, 500.0), cfg);
    const auto again = remap(raw, cfg);
    for (std::size_t i = 0; i < raw.size(); ++i) CHECK(again[i] == doctest::Approx(raw[i]).epsilon(1e-12));
  }
}

TEST_CASE("pre-scaling mean mode can miss the mean bound") {
  RemapConfig pre;
  pre.mean_mode = MeanMode::PreScaling;
  // Raw mean 100, std 100: the scale 0.2 gives {0, 40}. The raw mean asks for
  // a shift of -40, the scaled mean (20) for +10.
  const std::vector<double> raw{0, 200};
  CHECK(mean(remap_unclamped(raw, pre)) == doctest::Approx(-20.0));
  CHECK(mean(remap_unclamped(raw, RemapConfig{})) == doctest::Approx(30.0));
}

TEST_CASE("batch remap matches the single-window remap") {
  const RemapConfig cfg;
  const Matrix raw = random_windows(20, 50, 8, -100.0, 400.0);
  const Matrix out = remap_batch(raw, cfg);
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    const auto single = remap(nn::row_vector(raw, r), cfg);
    for (Eigen::Index c = 0; c < raw.cols(); ++c) CHECK(out(r, c) == doctest::Approx(single[c]).epsilon(1e-12));
  }
}

TEST_CASE("remap backward matches finite differences in every branch") {
  for (auto mode : {MeanMode::PostScaling, MeanMode::PreScaling}) {
    RemapConfig cfg;
    cfg.mean_mode = mode;
    Matrix raw(5, 8);
    Rng rng(21);
    const double centres[5] = {45, 45, 120, 5, 200};
    const double spreads[5] = {10, 200, 10, 300, 150};
    for (Eigen::Index r = 0; r < 5; ++r) {
      for (Eigen::Index c = 0; c < 8; ++c) raw(r, c) = centres[r] + rng.uniform(-spreads[r], spreads[r]);
    }
    const Matrix probe = random_windows(5, 8, 4, -1.0, 1.0);
    RemapCache cache;
    remap_batch(raw, cfg, &cache);
    const Matrix g = remap_backward(cache, cfg, probe);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
      Matrix up = raw;
      Matrix down = raw;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double numeric =
          (remap_batch(up, cfg).cwiseProduct(probe).sum() - remap_batch(down, cfg).cwiseProduct(probe).sum()) / (2 * h);
      CHECK(fd_relative(g.data()[i], numeric) < 1e-4);
    }
  }
}

TEST_CASE("converter and discriminator shapes") {
  const auto c = make_converter(100, 1);
  CHECK(c.input_dim() == 100);
  CHECK(c.output_dim() == 100);
  CHECK(c.layers().size() == 4);
  const auto d = make_discriminator(100, 1);
  CHECK(d.output_dim() == 1);
  const Matrix p = nn::forward(d, random_windows(10, 100, 2));
  CHECK((p.array() >= 0.0).all());
  CHECK((p.array() <= 1.0).all());
  CHECK_ERROR_KIND(convert(c, std::vector<double>(99, 1.0)), ErrorKind::LengthMismatch);
}

TEST_CASE("defend_window is remap after convert and is deterministic") {
  const DefenseModel model{make_converter(50, 3), RemapConfig{}, "test"};
  Rng rng(5);
  const auto x = random_sequence(rng, 50, 0.0, 150.0);
  const auto y = defend_window(model, x);
  CHECK(y == remap(convert(model.converter, x), model.remap));
  CHECK(defend_window(model, x) == y);
  CHECK(y.size() == 50);
}

TEST_CASE("defended windows keep their mean in range") {
  const DefenseModel model{make_converter(50, 9), RemapConfig{}, "test"};
  const Matrix x = random_windows(10000, 50, 6, 0.0, 300.0);
  const Matrix y = defend_batch(model, x);
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).mean();
    CHECK(m >= 30.0 - 1e-9);
    CHECK(m <= 60.0 + 1e-9);
  }
}

TEST_CASE("gradient of the full converter objective matches finite differences") {
  const std::size_t n = 6;
  nn::ModelGraph converter(n,
                           {nn::LayerSpec::dense(8, nn::Activation::LeakyRelu),
                            nn::LayerSpec::dense(n, nn::Activation::None)},
                           11, 1.0 / 50.0, 50.0);
  nn::ModelGraph disc(n, {nn::LayerSpec::dense(5, nn::Activation::Relu), nn::LayerSpec::dense(1, nn::Activation::Sigmoid)},
                      12, 1.0 / 50.0, 1.0);
  const auto decoder = small_decoder(n, 13);
  const Matrix x = random_windows(4, n, 14, 10.0, 90.0);
  const Matrix decode_x = nn::forward(decoder, x);
  const RemapConfig cfg;
  const auto loss = converter_loss(converter, cfg, disc, decoder, x, decode_x, 0.7, 1.3);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < converter.layers().size(); ++l) {
    auto& w = converter.layers()[l].weight;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + h;
      const double up = converter_loss(converter, cfg, disc, decoder, x, decode_x, 0.7, 1.3).value;
      w.data()[i] = saved - h;
      const double down = converter_loss(converter, cfg, disc, decoder, x, decode_x, 0.7, 1.3).value;
      w.data()[i] = saved;
      worst = std::max(worst, fd_relative(loss.grads.layers[l].weight.data()[i], (up - down) / (2 * h)));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("train_converter requires a frozen decoder and rejects bad weights") {
  auto decoder = small_decoder(20, 1);
  decoder.unfreeze();
  const Matrix x = random_windows(64, 20, 2);
  CHECK_ERROR_KIND(train_converter(decoder, x, GanTrainConfig{}, RemapConfig{}), ErrorKind::Contract);
  decoder.freeze();
  GanTrainConfig zero;
  zero.w1 = 0.0;
  zero.w2 = 0.0;
  CHECK_ERROR_KIND(train_converter(decoder, x, zero, RemapConfig{}), ErrorKind::OutOfRange);
  RemapConfig bad;
  bad.mu_min = 70.0;
  CHECK_ERROR_KIND(validate(bad), ErrorKind::OutOfRange);
}

TEST_CASE("pure adversarial training (w1 = 0) decorrelates the decoder") {
  const std::size_t n = 20;
  const auto decoder = small_decoder(n, 31);
  const auto before = nn::encode_model(decoder);
  GanTrainConfig gan;
  gan.w1 = 0.0;
  gan.epochs = 30;
  const auto res = train_converter(decoder, random_windows(512, n, 32), gan, RemapConfig{});
  CHECK(nn::encode_model(decoder) == before);
  CHECK(mean_decoder_cosine(decoder, res.defense, random_windows(256, n, 33)) < 0.1);
}

TEST_CASE("plain GAN training (w2 = 0) drives the discriminator toward chance") {
  const std::size_t n = 20;
  const auto decoder = small_decoder(n, 41);
  GanTrainConfig gan;
  gan.w2 = 0.0;
  gan.epochs = 10;
  const auto res = train_converter(decoder, random_windows(512, n, 42), gan, RemapConfig{});
  const double acc = discriminator_accuracy(res.discriminator, res.defense, random_windows(512, n, 43), gan, 44);
  CHECK(acc >= 0.35);
  CHECK(acc <= 0.65);
}

TEST_CASE("train_converter is deterministic") {
  const std::size_t n = 20;
  const auto decoder = small_decoder(n, 51);
  GanTrainConfig gan;
  gan.epochs = 1;
  const Matrix x = random_windows(128, n, 52);
  const auto a = train_converter(decoder, x, gan, RemapConfig{});
  const auto b = train_converter(decoder, x, gan, RemapConfig{});
  CHECK(a.defense.converter.same_weights(b.defense.converter));
  CHECK(a.discriminator.same_weights(b.discriminator));
}

TEST_CASE("defense models round trip through disk") {
  RemapConfig cfg;
  cfg.mean_mode = MeanMode::PreScaling;
  cfg.sigma = 15.0;
  const DefenseModel model{make_converter(20, 7), cfg, "unit-test"};
  const auto dir = std::filesystem::temp_directory_path() / "demark_defense_test";
  std::filesystem::create_directories(dir);
  save_defense(model, dir / "conv");
  const auto back = load_defense(dir / "conv");
  CHECK(back.converter.same_weights(model.converter));
  CHECK(back.remap.sigma == 15.0);
  CHECK(back.remap.mean_mode == MeanMode::PreScaling);
  CHECK(back.provenance == "unit-test");
  std::filesystem::remove_all(dir);
}
