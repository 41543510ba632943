#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gra/error.hpp"
#include "gra/nn.hpp"
#include "gra/random.hpp"

using namespace gra;
using namespace gra::nn;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::State;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

// Naive valid cross-correlation written independently of the library loop.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride) {
  const std::size_t C = x.shape[0], L = x.shape[1], O = w.shape[0], K = w.shape[2];
  const std::size_t out_len = (L - K) / stride + 1;
  Tensor y({O, out_len});
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double s = b.data[o];
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t k = 0; k < K; ++k) s += w.data[(o * C + c) * K + k] * x.data[c * L + t * stride + k];
      }
      y.data[o * out_len + t] = s;
    }
  }
  return y;
}

// Scalar objective sum(R .* forward(x)); dropout masks are replayed from a fixed seed.
double objective(const LayerStack& s, const Tensor& x, const Tensor& r, bool training, std::uint64_t mask_seed) {
  Rng rng(mask_seed);
  const Tensor y = forward(s, x, training, &rng);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += y.data[i] * r.data[i];
  return sum;
}

bool close(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return std::abs(analytic - numeric) <= 1e-4 * scale + 1e-7;
}

// Compares backward() against central differences for every parameter and input value.
void gradient_check(LayerStack s, const Tensor& x, std::uint64_t seed, bool training) {
  Rng rng(seed + 1000);
  ForwardCache cache;
  Rng mask_rng(seed);
  const Tensor y = forward(s, x, training, &mask_rng, &cache);
  const Tensor r = random_tensor(y.shape, rng);
  const Gradients g = backward(s, cache, r);
  const double h = 1e-5;

  for (std::size_t li = 0; li < s.size(); ++li) {
    auto& layer = s.layers()[li];
    if (!layer.spec.has_params()) continue;
    for (int which = 0; which < 2; ++which) {
      auto& p = which == 0 ? layer.weight.data : layer.bias.data;
      const auto& a = which == 0 ? g.layers[li].weight.data : g.layers[li].bias.data;
      REQUIRE(a.size() == p.size());
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double orig = p[j];
        p[j] = orig + h;
        const double up = objective(s, x, r, training, seed);
        p[j] = orig - h;
        const double down = objective(s, x, r, training, seed);
        p[j] = orig;
        const double numeric = (up - down) / (2 * h);
        INFO("layer " << li + 1 << (which == 0 ? " weight " : " bias ") << j << " analytic " << a[j]
                      << " numeric " << numeric);
        CHECK(close(a[j], numeric));
      }
    }
  }
  Tensor xp = x;
  REQUIRE(g.input.shape == x.shape);
  for (std::size_t j = 0; j < x.size(); ++j) {
    xp.data[j] = x.data[j] + h;
    const double up = objective(s, xp, r, training, seed);
    xp.data[j] = x.data[j] - h;
    const double down = objective(s, xp, r, training, seed);
    xp.data[j] = x.data[j];
    const double numeric = (up - down) / (2 * h);
    INFO("input " << j << " analytic " << g.input.data[j] << " numeric " << numeric);
    CHECK(close(g.input.data[j], numeric));
  }
}

std::vector<std::size_t> batch_shape(std::size_t b, const std::vector<std::size_t>& per_sample) {
  std::vector<std::size_t> s{b};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

void check_kind(const std::vector<LayerSpec>& specs, const std::vector<std::size_t>& in_shape, bool training) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    INFO("seed " << seed);
    LayerStack s(specs, in_shape, seed);
    Rng rng(seed * 7 + 3);
    // Nonzero biases so ReLU and pooling kinks are not hit by construction.
    for (auto& l : s.layers()) {
      for (auto& b : l.bias.data) b = rng.normal(0.0, 0.3);
    }
    gradient_check(s, random_tensor(batch_shape(3, in_shape), rng), seed, training);
  }
}

std::vector<std::vector<double>> snapshot(const LayerStack& s) {
  std::vector<std::vector<double>> out;
  for (const auto& l : s.layers()) {
    auto w = l.weight.data;
    w.insert(w.end(), l.bias.data.begin(), l.bias.data.end());
    out.push_back(w);
  }
  return out;
}

}  // namespace

TEST_CASE("conv1d worked examples") {
  const Tensor x({1, 3}, {1, 2, 3});
  const Tensor w({1, 1, 3}, {1, 0, -1});
  const Tensor b({1}, {0.0});
  const Tensor y = conv1d(x, w, b, 1);
  CHECK(y.shape == std::vector<std::size_t>{1, 1});
  CHECK(y.data[0] == -2.0);

  const Tensor seq({1, 6}, {4, 8, 15, 16, 23, 42});
  const Tensor id = conv1d(seq, Tensor({1, 1, 3}, {0, 1, 0}), b, 1);
  CHECK(id.data == std::vector<double>{8, 15, 16, 23});
}

TEST_CASE("conv1d matches a naive loop oracle") {
  Rng rng(11);
  for (std::size_t stride : {1u, 2u, 3u}) {
    const Tensor x = random_tensor({4, 32}, rng);
    const Tensor w = random_tensor({8, 4, 5}, rng);
    const Tensor b = random_tensor({8}, rng);
    const Tensor y = conv1d(x, w, b, stride);
    const Tensor ref = naive_conv(x, w, b, stride);
    REQUIRE(y.shape == ref.shape);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y.data[i] - ref.data[i]) < 1e-6);
  }
}

TEST_CASE("conv1d output length formula") {
  const Tensor b({1}, {0.0});
  for (std::size_t L = 1; L <= 24; ++L) {
    for (std::size_t k = 1; k <= L; ++k) {
      for (std::size_t s = 1; s <= 4; ++s) {
        const std::size_t expect = (L - k) / s + 1;
        CHECK(conv_output_length(L, k, s) == expect);
        const Tensor y = conv1d(Tensor({1, L}, 1.0), Tensor({1, 1, k}, 1.0), b, s);
        CHECK(y.shape[1] == expect);
      }
    }
  }
}

TEST_CASE("conv1d rejects mismatched shapes") {
  const Tensor b({2}, 0.0);
  CHECK(kind_of([&] { conv1d(Tensor({3, 10}), Tensor({2, 2, 3}), b, 1); }) == ErrorKind::Shape);
  CHECK(kind_of([&] { conv1d(Tensor({2, 2}), Tensor({2, 2, 3}), b, 1); }) == ErrorKind::Shape);
  CHECK(kind_of([&] { LayerStack({LayerSpec::conv1d(2, 9)}, {1, 5}, 0); }) == ErrorKind::Shape);
  CHECK(kind_of([&] { LayerStack({LayerSpec::dropout(1.0)}, {3}, 0); }) == ErrorKind::Config);
}

TEST_CASE("forward basics") {
  Rng rng(3);
  LayerStack s({LayerSpec::conv1d(4, 3), LayerSpec::relu(), LayerSpec::maxpool1d(2), LayerSpec::flatten(),
                LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dropout(0.5), LayerSpec::sigmoid_dense()},
               {2, 12}, 5);
  const Tensor x = random_tensor({16, 2, 12}, rng);
  const Tensor a = forward(s, x, false);
  const Tensor b = forward(s, x, false);
  CHECK(a == b);
  CHECK(a.shape == std::vector<std::size_t>{16, 1});
  for (double p : a.data) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }

  SUBCASE("zero final weights give exactly one half") {
    auto& last = s.layers().back();
    std::fill(last.weight.data.begin(), last.weight.data.end(), 0.0);
    std::fill(last.bias.data.begin(), last.bias.data.end(), 0.0);
    for (double p : forward(s, x, false).data) CHECK(p == 0.5);
  }
  SUBCASE("input shape is checked") {
    CHECK(kind_of([&] { forward(s, Tensor({4, 2, 11}), false); }) == ErrorKind::Shape);
  }
  SUBCASE("training dropout needs an rng") {
    CHECK(kind_of([&] { forward(s, x, true); }) == ErrorKind::State);
  }
  SUBCASE("non-finite activation names the layer") {
    s.layers()[0].weight.data[0] = std::numeric_limits<double>::quiet_NaN();
    try {
      forward(s, x, false);
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Numeric);
      CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
  }
}

TEST_CASE("relu on negative input is zero") {
  LayerStack s({LayerSpec::relu()}, {5}, 0);
  const Tensor y = forward(s, Tensor({2, 5}, -3.0), false);
  for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("dropout uses inverted scaling only in training") {
  LayerStack s({LayerSpec::dropout(0.25)}, {2000}, 0);
  const Tensor x({1, 2000}, 1.0);
  CHECK(forward(s, x, false) == x);
  Rng rng(9);
  const Tensor y = forward(s, x, true, &rng);
  std::size_t kept = 0;
  for (double v : y.data) {
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 1400);
  CHECK(kept < 1600);
  Rng again(9);
  CHECK(forward(s, x, true, &again) == y);
}

TEST_CASE("backward trivial cases") {
  Rng rng(4);
  LayerStack s({LayerSpec::dense(2)}, {3}, 1);
  const Tensor x = random_tensor({4, 3}, rng);
  ForwardCache cache;
  forward(s, x, false, nullptr, &cache);

  SUBCASE("zero upstream gradient") {
    const auto g = backward(s, cache, Tensor({4, 2}, 0.0));
    for (double v : g.layers[0].weight.data) CHECK(v == 0.0);
    for (double v : g.layers[0].bias.data) CHECK(v == 0.0);
  }
  SUBCASE("dense weight gradient is the outer product") {
    const Tensor d = random_tensor({4, 2}, rng);
    const auto g = backward(s, cache, d);
    for (std::size_t o = 0; o < 2; ++o) {
      double db = 0.0;
      for (std::size_t b = 0; b < 4; ++b) db += d.data[b * 2 + o];
      CHECK(g.layers[0].bias.data[o] == doctest::Approx(db).epsilon(1e-12));
      for (std::size_t i = 0; i < 3; ++i) {
        double dw = 0.0;
        for (std::size_t b = 0; b < 4; ++b) dw += d.data[b * 2 + o] * x.data[b * 3 + i];
        CHECK(g.layers[0].weight.data[o * 3 + i] == doctest::Approx(dw).epsilon(1e-12));
      }
    }
  }
  SUBCASE("missing cache") {
    CHECK(kind_of([&] { backward(s, ForwardCache{}, Tensor({4, 2})); }) == ErrorKind::State);
  }
  SUBCASE("gradient shape") {
    CHECK(kind_of([&] { backward(s, cache, Tensor({4, 3})); }) == ErrorKind::Shape);
  }
}

TEST_CASE("finite-difference agreement per layer kind") {
  SUBCASE("conv1d") { check_kind({LayerSpec::conv1d(3, 3, 2)}, {2, 9}, false); }
  SUBCASE("relu") { check_kind({LayerSpec::conv1d(3, 3), LayerSpec::relu()}, {2, 8}, false); }
  SUBCASE("maxpool") { check_kind({LayerSpec::conv1d(2, 2), LayerSpec::maxpool1d(3)}, {2, 10}, false); }
  SUBCASE("flatten and dense") { check_kind({LayerSpec::flatten(), LayerSpec::dense(4)}, {2, 5}, false); }
  SUBCASE("dropout") {
    check_kind({LayerSpec::dense(6), LayerSpec::dropout(0.4), LayerSpec::dense(2)}, {5}, true);
  }
  SUBCASE("sigmoid dense") { check_kind({LayerSpec::flatten(), LayerSpec::sigmoid_dense(2)}, {3, 2}, false); }
  SUBCASE("full small stack") {
    check_kind({LayerSpec::conv1d(3, 3), LayerSpec::relu(), LayerSpec::conv1d(4, 2), LayerSpec::relu(),
                LayerSpec::maxpool1d(2), LayerSpec::flatten(), LayerSpec::dense(5), LayerSpec::relu(),
                LayerSpec::dropout(0.3), LayerSpec::sigmoid_dense()},
               {2, 12}, true);
  }
}

TEST_CASE("logit gradient agrees with the probability gradient") {
  Rng rng(21);
  LayerStack s({LayerSpec::dense(4), LayerSpec::relu(), LayerSpec::sigmoid_dense()}, {3}, 2);
  const Tensor x = random_tensor({5, 3}, rng);
  ForwardCache cache;
  const Tensor p = forward(s, x, false, nullptr, &cache);
  const Tensor dz = random_tensor({5, 1}, rng);
  Tensor dp(dz.shape);
  for (std::size_t i = 0; i < dz.size(); ++i) dp.data[i] = dz.data[i] / (p.data[i] * (1.0 - p.data[i]));
  const auto a = backward_logits(s, cache, dz);
  const auto b = backward(s, cache, dp);
  for (std::size_t l = 0; l < s.size(); ++l) {
    for (std::size_t j = 0; j < a.layers[l].weight.size(); ++j) {
      CHECK(a.layers[l].weight.data[j] == doctest::Approx(b.layers[l].weight.data[j]).epsilon(1e-9));
    }
  }
  LayerStack no_sigmoid({LayerSpec::dense(1)}, {3}, 0);
  ForwardCache c2;
  forward(no_sigmoid, x, false, nullptr, &c2);
  CHECK(kind_of([&] { backward_logits(no_sigmoid, c2, dz); }) == ErrorKind::State);
}

TEST_CASE("bce loss") {
  const double half[] = {0.5}, one[] = {1.0}, zero[] = {0.0};
  CHECK(bce_loss(half, one) == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
  const double near_one[] = {1.0 - kBceEpsilon};
  CHECK(bce_loss(near_one, one) == doctest::Approx(1e-7).epsilon(1e-3));
  CHECK(bce_loss(one, one) == doctest::Approx(1e-7).epsilon(1e-3));
  CHECK(std::isfinite(bce_loss(zero, one)));

  Rng rng(8);
  std::vector<double> p(100), y(100);
  double ref = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    p[i] = rng.uniform(0.01, 0.99);
    y[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
    ref += -(y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]));
  }
  CHECK(std::abs(bce_loss(p, y) - ref / 100.0) < 1e-12);

  const double bad[] = {0.5};
  CHECK(kind_of([&] { bce_loss(half, bad); }) == ErrorKind::Input);
  std::vector<double> two{0.5, 0.5};
  CHECK(kind_of([&] { bce_loss(two, one); }) == ErrorKind::Shape);
}

TEST_CASE("freezing the last k layers") {
  const std::vector<LayerSpec> specs{LayerSpec::dense(6), LayerSpec::relu(),    LayerSpec::dense(4),
                                     LayerSpec::relu(),   LayerSpec::dropout(0.2), LayerSpec::sigmoid_dense()};
  Rng rng(5);
  const Tensor x = random_tensor({8, 5}, rng);
  auto step_with_k = [&](std::size_t k) {
    LayerStack s(specs, {5}, 3);
    s.set_trainable_last_k(k);
    const auto before = snapshot(s);
    ForwardCache cache;
    Rng drop(1);
    forward(s, x, true, &drop, &cache);
    const auto grads = backward_logits(s, cache, random_tensor({8, 1}, rng));
    Optimizer opt(train_config(1, 8, 1e-2));
    opt.step(s, grads);
    return std::pair{before, snapshot(s)};
  };

  LayerStack probe(specs, {5}, 3);
  const auto mask = probe.set_trainable_last_k(3);
  CHECK(mask == std::vector<bool>{true, true, true, false, false, false});
  CHECK(kind_of([&] { probe.set_trainable_last_k(7); }) == ErrorKind::Config);
  CHECK(kind_of([&] { probe.set_freeze_mask({true}); }) == ErrorKind::Config);

  SUBCASE("k = 0 changes nothing") {
    auto [before, after] = step_with_k(0);
    CHECK(before == after);
  }
  SUBCASE("k = 3 changes only the final parameterized layer") {
    auto [before, after] = step_with_k(3);
    for (std::size_t i = 0; i < 5; ++i) CHECK(before[i] == after[i]);
    CHECK(before[5] != after[5]);
  }
  SUBCASE("all layers trainable") {
    auto [before, after] = step_with_k(6);
    for (std::size_t i : {0u, 2u, 5u}) CHECK(before[i] != after[i]);
  }
}

TEST_CASE("frozen layers are invariant under training for random masks") {
  const std::vector<LayerSpec> specs{LayerSpec::conv1d(3, 3), LayerSpec::relu(), LayerSpec::flatten(),
                                     LayerSpec::dense(4), LayerSpec::relu(), LayerSpec::sigmoid_dense()};
  Rng rng(17);
  const Tensor x = random_tensor({40, 1, 10}, rng);
  std::vector<double> y(40);
  for (auto& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    LayerStack s(specs, {1, 10}, static_cast<std::uint64_t>(trial));
    std::vector<bool> mask(specs.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(0.5);
    s.set_freeze_mask(mask);
    const auto before = snapshot(s);
    train(s, x, y, train_config(2, 8, 1e-2));
    const auto after = snapshot(s);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (!specs[i].has_params()) continue;
      if (mask[i]) {
        CHECK(before[i] == after[i]);
      } else {
        CHECK(before[i] != after[i]);
      }
    }
  }
}

TEST_CASE("training") {
  Rng rng(31);
  const std::size_t n = 200;
  Tensor x({n, 2});
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x.data[2 * i] = rng.normal();
    x.data[2 * i + 1] = rng.normal();
    y[i] = x.data[2 * i] + x.data[2 * i + 1] > 0.0 ? 1.0 : 0.0;
  }
  const std::vector<LayerSpec> specs{LayerSpec::dense(8), LayerSpec::relu(), LayerSpec::sigmoid_dense()};

  SUBCASE("separable data converges") {
    LayerStack s(specs, {2}, 1);
    const auto r = train(s, x, y, train_config(50, 16, 1e-2));
    REQUIRE(r.epoch_loss.size() == 50);
    const double initial = bce_loss(forward(LayerStack(specs, {2}, 1), x, false).data, y);
    CHECK(r.epoch_loss.back() < 0.1 * initial);
  }
  SUBCASE("deterministic per seed") {
    LayerStack a(specs, {2}, 4), b(specs, {2}, 4);
    auto cfg = train_config(5, 16, 1e-2);
    cfg.seed = 12;
    CHECK(train(a, x, y, cfg).epoch_loss == train(b, x, y, cfg).epoch_loss);
    CHECK(a == b);
  }
  SUBCASE("zero learning rate") {
    LayerStack s(specs, {2}, 4);
    const LayerStack orig = s;
    const auto r = train(s, x, y, train_config(4, 16, 0.0));
    CHECK(s == orig);
    for (double l : r.epoch_loss) CHECK(l == doctest::Approx(r.epoch_loss.front()).epsilon(1e-12));
  }
  SUBCASE("sgd also descends") {
    LayerStack s(specs, {2}, 1);
    auto cfg = train_config(30, 16, 0.1);
    cfg.optimizer = OptimizerKind::Sgd;
    const auto r = train(s, x, y, cfg);
    CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  }
  SUBCASE("invalid inputs") {
    LayerStack s(specs, {2}, 1);
    CHECK(kind_of([&] { train(s, x, y, train_config(1, 0, 1e-3)); }) == ErrorKind::Config);
    CHECK(kind_of([&] { train(s, x, y, train_config(1, 4, -1.0)); }) == ErrorKind::Config);
    std::vector<double> bad = y;
    bad[0] = 0.5;
    CHECK(kind_of([&] { train(s, x, bad, train_config(1, 4, 1e-3)); }) == ErrorKind::Input);
    LayerStack plain({LayerSpec::dense(1)}, {2}, 0);
    CHECK(kind_of([&] { train(plain, x, y, train_config(1, 4, 1e-3)); }) == ErrorKind::Config);
  }
  SUBCASE("divergence is reported") {
    LayerStack s(specs, {2}, 1);
    s.layers()[0].weight.data[0] = std::numeric_limits<double>::infinity();
    CHECK(kind_of([&] { train(s, x, y, train_config(1, 16, 1e-3)); }) == ErrorKind::Numeric);
  }
}

TEST_CASE("parameters are stored at float precision") {
  LayerStack s({LayerSpec::conv1d(2, 3), LayerSpec::flatten(), LayerSpec::sigmoid_dense()}, {1, 6}, 9);
  for (const auto& l : s.layers()) {
    for (double v : l.weight.data) CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
  CHECK(s.parameter_count() == 2 * 3 + 2 + 8 + 1);
  CHECK(layer_kind_from_string(to_string(LayerKind::MaxPool1d)) == LayerKind::MaxPool1d);
  CHECK(kind_of([] { layer_kind_from_string("bogus"); }) == ErrorKind::Format);
}
