#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "critrom/autoencoder.hpp"

namespace critrom {
namespace {

DenseMatrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  SplitMix64 rng(seed);
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform();
  return m;
}

// Randomise biases too so no pre-activation sits on the ELU kink by accident.
Network random_network(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  Network net = init_network(make_spec(sizes), seed);
  SplitMix64 rng(seed + 100);
  for (auto& l : net.layers)
    for (double& b : l.b) b = rng.uniform(-0.3, 0.3);
  return net;
}

TEST(Elu, Values) {
  EXPECT_EQ(elu(0.0), 0.0);
  EXPECT_EQ(elu(2.5), 2.5);
  EXPECT_NEAR(elu(-1.0), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_NEAR(elu(-1.0), -0.632121, 1e-6);
}

TEST(Elu, ContinuouslyDifferentiableAtZero) {
  const double h = 1e-7;
  const double right = (elu(h) - elu(0.0)) / h;
  const double left = (elu(0.0) - elu(-h)) / h;
  EXPECT_NEAR(right, 1.0, 1e-8);
  EXPECT_NEAR(left, 1.0, 1e-7);
  EXPECT_EQ(elu_derivative(0.0), 1.0);
  EXPECT_EQ(elu_derivative(1e-300), 1.0);
}

TEST(Forward, IdentityLayers) {
  Network net{make_spec({3, 3, 3}), {}};
  net.layers = {{DenseMatrix::identity(3), Vector(3, 0.0)}, {DenseMatrix::identity(3), Vector(3, 0.0)}};
  const Vector x{0.2, 1.5, 3.0};
  EXPECT_EQ(forward(net, x), x);
}

TEST(Forward, ZeroPreActivation) {
  Network net{make_spec({1, 1, 1}), {}};
  net.layers = {{DenseMatrix{{1.0}}, Vector{-1.0}}, {DenseMatrix{{1.0}}, Vector{0.0}}};
  EXPECT_EQ(encode(net, Vector{1.0}), Vector{0.0});
  EXPECT_EQ(forward(net, Vector{1.0}), Vector{0.0});
}

TEST(Forward, HandComputedTwoLayer) {
  Network net{make_spec({2, 2, 2}), {}};
  net.layers = {{DenseMatrix{{0.5, -1.0}, {2.0, 0.25}}, Vector{0.1, -0.2}},
                {DenseMatrix{{1.0, -0.5}, {0.3, 0.7}}, Vector{0.0, 0.05}}};
  // hidden: z = (-0.3, 0.75)
  const double h1 = std::exp(-0.3) - 1.0;
  const double h2 = 0.75;
  const double z1 = h1 - 0.5 * h2;           // negative
  const double z2 = 0.3 * h1 + 0.7 * h2 + 0.05;  // positive
  ASSERT_LT(z1, 0.0);
  ASSERT_GT(z2, 0.0);
  const Vector y = forward(net, Vector{0.4, 0.6});
  EXPECT_NEAR(y[0], std::exp(z1) - 1.0, 1e-12);
  EXPECT_NEAR(y[1], z2, 1e-12);
  const Vector latent = encode(net, Vector{0.4, 0.6});
  EXPECT_NEAR(latent[0], h1, 1e-15);
  EXPECT_NEAR(latent[1], h2, 1e-15);
}

TEST(Forward, EncodeDecodeSplitIsExact) {
  const Network net = random_network({12, 9, 5, 3, 5, 9, 12}, 2);
  EXPECT_EQ(net.spec.latent_index, 3u);
  const DenseMatrix batch = random_batch(6, 12, 3);
  const DenseMatrix full = forward(net, batch);
  const DenseMatrix latents = encode(net, batch);
  EXPECT_EQ(latents.cols(), 3u);
  EXPECT_EQ(decode(net, latents), full);
  for (std::size_t s = 0; s < 6; ++s) {
    const Vector latent = encode(net, batch.row(s));
    EXPECT_EQ(decode(net, latent), forward(net, batch.row(s)));
    const auto row = full.row(s);
    EXPECT_EQ(decode(net, latent), Vector(row.begin(), row.end()));
  }
}

TEST(Forward, ShapeErrors) {
  const Network net = random_network({4, 2, 4}, 1);
  EXPECT_THROW(forward(net, Vector(3, 0.0)), DimensionError);
  EXPECT_THROW(decode(net, Vector(3, 0.0)), DimensionError);
}

TEST(NetworkSpec, Presets) {
  const NetworkSpec s1 = slab1d_network();
  EXPECT_EQ(s1.layer_count(), 14u);
  EXPECT_EQ(s1.latent_size(), 10u);
  EXPECT_EQ(s1.latent_index, 7u);
  const NetworkSpec s2 = core2d_network(8100);
  EXPECT_EQ(s2.layer_count(), 14u);
  EXPECT_EQ(s2.latent_size(), 4u);
  EXPECT_EQ(s2.input_size(), 8100u);
  EXPECT_EQ(slab1d_network(100, 2).latent_size(), 2u);
  EXPECT_THROW(make_spec({4, 4}), ConfigError);
  EXPECT_THROW(make_spec({4, 0, 4}), ConfigError);
}

TEST(Init, GlorotBoundsAndSeeds) {
  const Network a = init_network(slab1d_network(), 5);
  const Network b = init_network(slab1d_network(), 5);
  const Network c = init_network(slab1d_network(), 6);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  for (const auto& l : a.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.w.rows() + l.w.cols()));
    for (double w : l.w.data()) EXPECT_LE(std::abs(w), limit);
    for (double v : l.b) EXPECT_EQ(v, 0.0);
  }
}

TEST(Backprop, ZeroNetworkZeroBatch) {
  Network net = init_network(make_spec({6, 4, 2, 4, 6}), 1);
  for (auto& l : net.layers) std::fill(l.w.data().begin(), l.w.data().end(), 0.0);
  const Gradients g = backprop_mse(net, DenseMatrix(3, 6, 0.0));
  for (const auto& l : g.layers) {
    for (double v : l.w.data()) EXPECT_EQ(v, 0.0);
    for (double v : l.b) EXPECT_EQ(v, 0.0);
  }
}

// Central differences of the loss against every parameter of several toy nets.
TEST(Backprop, MatchesFiniteDifferences) {
  const std::vector<std::vector<std::size_t>> shapes = {
      {6, 4, 2, 4, 6}, {20, 15, 8, 15, 20}, {30, 20, 5, 20, 30}};
  const double h = 1e-5;
  std::size_t probed = 0;
  double worst = 0.0;
  for (std::size_t n = 0; n < shapes.size(); ++n) {
    Network net = random_network(shapes[n], 10 + n);
    const DenseMatrix batch = random_batch(5, shapes[n].front(), 20 + n);
    const Gradients g = backprop_mse(net, batch);
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = reconstruction_loss(net, batch);
      param = saved - h;
      const double down = reconstruction_loss(net, batch);
      param = saved;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
      worst = std::max(worst, std::abs(analytic - fd) / denom);
      ++probed;
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      auto& w = net.layers[l].w.data();
      for (std::size_t i = 0; i < w.size(); ++i) check(w[i], g.layers[l].w.data()[i]);
      auto& b = net.layers[l].b;
      for (std::size_t i = 0; i < b.size(); ++i) check(b[i], g.layers[l].b[i]);
    }
  }
  EXPECT_GE(probed, 1000u);
  EXPECT_LE(worst, 1e-4);
}

TEST(Backprop, DuplicatedBatchSameGradient) {
  const Network net = random_network({8, 5, 3, 5, 8}, 4);
  const DenseMatrix batch = random_batch(4, 8, 5);
  DenseMatrix doubled(8, 8);
  for (std::size_t s = 0; s < 8; ++s) {
    const auto src = batch.row(s % 4);
    std::copy(src.begin(), src.end(), doubled.row(s).begin());
  }
  const Gradients a = backprop_mse(net, batch);
  const Gradients b = backprop_mse(net, doubled);
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    for (std::size_t i = 0; i < a.layers[l].w.data().size(); ++i)
      EXPECT_NEAR(a.layers[l].w.data()[i], b.layers[l].w.data()[i], 1e-12);
    for (std::size_t i = 0; i < a.layers[l].b.size(); ++i) EXPECT_NEAR(a.layers[l].b[i], b.layers[l].b[i], 1e-12);
  }
}

TEST(Loss, PerSampleSquaredError) {
  const DenseMatrix x{{1.0, 2.0}, {0.0, 0.0}};
  const DenseMatrix y{{1.0, 1.0}, {2.0, 0.0}};
  EXPECT_DOUBLE_EQ(reconstruction_loss(x, y), (1.0 + 4.0) / 2.0);
}

// Scalar recurrence written out independently of the library.
struct ScalarNadam {
  double w, m = 0.0, v = 0.0;
  int t = 0;
  void step(double g, const NadamHyper& h) {
    ++t;
    m = h.beta1 * m + (1 - h.beta1) * g;
    v = h.beta2 * v + (1 - h.beta2) * g * g;
    const double m_hat = h.beta1 * m / (1 - std::pow(h.beta1, t + 1)) + (1 - h.beta1) * g / (1 - std::pow(h.beta1, t));
    const double v_hat = v / (1 - std::pow(h.beta2, t));
    w -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
  }
};

Network scalar_network(double w) {
  Network net{make_spec({1, 1, 1}), {}};
  net.layers = {{DenseMatrix{{w}}, Vector{0.0}}, {DenseMatrix{{1.0}}, Vector{0.0}}};
  return net;
}

Gradients scalar_gradient(const Network& net, double g) {
  Gradients grads = zero_gradients(net);
  grads.layers[0].w(0, 0) = g;
  return grads;
}

TEST(Nadam, ZeroGradientLeavesWeights) {
  Network net = random_network({4, 3, 2, 3, 4}, 9);
  const Network before = net;
  NadamState state = NadamState::zeros_like(net);
  for (int i = 0; i < 5; ++i) nadam_step(net, zero_gradients(net), state, {});
  EXPECT_EQ(net, before);
  EXPECT_EQ(state.t, 5);
}

TEST(Nadam, FirstStepDescends) {
  for (double g : {3.0, -0.2}) {
    Network net = scalar_network(0.5);
    NadamState state = NadamState::zeros_like(net);
    nadam_step(net, scalar_gradient(net, g), state, {});
    EXPECT_LT((net.layers[0].w(0, 0) - 0.5) * g, 0.0);
  }
}

TEST(Nadam, QuadraticMatchesScalarOracle) {
  for (double lr : {1e-3, 5e-2}) {
    NadamHyper h;
    h.learning_rate = lr;
    Network net = scalar_network(1.0);
    NadamState state = NadamState::zeros_like(net);
    ScalarNadam oracle{1.0};
    double prev = 1.0;
    for (int i = 0; i < 200; ++i) {
      const double w = net.layers[0].w(0, 0);
      nadam_step(net, scalar_gradient(net, w), state, h);
      oracle.step(w, h);
      EXPECT_NEAR(net.layers[0].w(0, 0), oracle.w, 1e-14);
      if (lr == 1e-3) {
        EXPECT_LT(net.layers[0].w(0, 0), prev);
        prev = net.layers[0].w(0, 0);
      }
    }
    // At the default rate each step moves w by about lr, so 200 steps only
    // reach w ~ 0.8; a larger rate drives it to zero.
    if (lr == 1e-3) EXPECT_NEAR(net.layers[0].w(0, 0), 0.8, 0.02);
    else EXPECT_LT(std::abs(net.layers[0].w(0, 0)), 1e-2);
  }
}

TEST(Nadam, RejectsNonFiniteGradient) {
  Network net = scalar_network(1.0);
  NadamState state = NadamState::zeros_like(net);
  EXPECT_THROW(nadam_step(net, scalar_gradient(net, NAN), state, {}), TrainingError);
}

TEST(Scaler, RoundTrip) {
  const Vector data{3.0, -1.0, 7.5, 2.0};
  const Scaler s = Scaler::fit(data);
  EXPECT_EQ(s.data_min, -1.0);
  EXPECT_EQ(s.data_max, 7.5);
  const Vector scaled = s.scale(data);
  EXPECT_EQ(*std::min_element(scaled.begin(), scaled.end()), 0.0);
  EXPECT_EQ(*std::max_element(scaled.begin(), scaled.end()), 1.0);
  const Vector back = s.unscale(scaled);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_NEAR(back[i], data[i], 1e-12);
  EXPECT_THROW(Scaler::fit(Vector{1.0, 1.0}), DomainError);
}

TEST(Train, OverfitsThreeSamples) {
  const DenseMatrix x{{0.1, 0.9, 0.3, 0.5, 0.7}, {0.8, 0.2, 0.6, 0.4, 0.1}, {0.5, 0.5, 0.9, 0.1, 0.3}};
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.batch_size = 3;
  cfg.seed = 7;
  const TrainedAutoencoder ae = train(make_spec({5, 10, 3, 10, 5}), x.transpose(), cfg);
  ASSERT_EQ(ae.loss_history.size(), 2000u);
  EXPECT_LT(ae.loss_history.back(), 1e-4);
  const Vector rec = ae.reconstruct(x.row(1));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(rec[i], x(1, i), 1e-2);
}

TEST(Train, DeterministicAndUsesShortBatch) {
  const DenseMatrix data = random_batch(6, 7, 31);  // 7 samples, batches of 3 -> 3, 3, 1
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 3;
  cfg.seed = 12;
  const NetworkSpec spec = make_spec({6, 4, 2, 4, 6});
  const TrainedAutoencoder a = train(spec, data, cfg);
  const TrainedAutoencoder b = train(spec, data, cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.net, b.net);
  cfg.seed = 13;
  EXPECT_NE(train(spec, data, cfg).loss_history, a.loss_history);
}

TEST(Train, ConfigErrors) {
  const DenseMatrix data = random_batch(6, 4, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 5;
  EXPECT_THROW(train(make_spec({6, 2, 6}), data, cfg), ConfigError);
  cfg.batch_size = 2;
  EXPECT_THROW(train(make_spec({5, 2, 5}), data, cfg), DimensionError);
}

TEST(Persistence, ModelRoundTrip) {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 2;
  const TrainedAutoencoder ae = train(make_spec({6, 4, 2, 4, 6}), random_batch(6, 4, 2), cfg);
  std::stringstream buf;
  write_model(buf, ae);
  const TrainedAutoencoder back = read_model(buf);
  EXPECT_EQ(back.net, ae.net);
  EXPECT_EQ(back.scaler, ae.scaler);
  const Vector x{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  EXPECT_EQ(back.reconstruct(x), ae.reconstruct(x));
}

TEST(Persistence, RejectsForeignHeader) {
  std::stringstream buf("{\"format\": \"something-else\"}\n");
  EXPECT_THROW(read_model(buf), ConfigError);
}

}  // namespace
}  // namespace critrom
