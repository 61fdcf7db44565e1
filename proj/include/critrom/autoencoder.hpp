#pragma once

// Fully-connected ELU autoencoder trained with mini-batch Nadam.
//
// Batches are stored one sample per row so every inner loop walks contiguous
// memory: a layer with weights W (out x in) maps a batch X (m x in) to
// Z = X W^T + b, A = elu(Z).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "critrom/errors.hpp"
#include "critrom/numerics.hpp"
#include "critrom/random.hpp"

namespace critrom {

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_derivative(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

struct NetworkSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  std::size_t latent_index = 0;          // position of the bottleneck in layer_sizes

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t latent_size() const { return layer_sizes.at(latent_index); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }

  void validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("network needs at least input and output sizes");
    for (std::size_t s : layer_sizes) {
      if (s == 0) throw ConfigError("network layer with zero neurons");
    }
    if (latent_index == 0 || latent_index >= layer_sizes.size() - 1) {
      throw ConfigError("latent_index must name a hidden layer");
    }
  }

  bool operator==(const NetworkSpec&) const = default;
};

/// Smallest hidden layer, the first one if several tie.
inline std::size_t bottleneck_of(const std::vector<std::size_t>& sizes) {
  std::size_t best = 1;
  for (std::size_t i = 2; i + 1 < sizes.size(); ++i) {
    if (sizes[i] < sizes[best]) best = i;
  }
  return best;
}

inline NetworkSpec make_spec(std::vector<std::size_t> sizes) {
  NetworkSpec spec{std::move(sizes), 0};
  if (spec.layer_sizes.size() < 3) throw ConfigError("autoencoder needs a hidden layer");
  spec.latent_index = bottleneck_of(spec.layer_sizes);
  spec.validate();
  return spec;
}

/// 1D slab layout: n -> 100 -> 70 -> 50 -> 30 -> 20 -> 16 -> latent -> mirror -> n.
inline NetworkSpec slab1d_network(std::size_t n_in = 100, std::size_t latent = 10) {
  return make_spec({n_in, 100, 70, 50, 30, 20, 16, latent, 16, 20, 30, 50, 70, 100, n_in});
}

/// 2D core layout (also used on 100 SVD coefficients):
/// n -> 100 -> 70 -> 50 -> 30 -> 16 -> 8 -> latent -> mirror -> n.
inline NetworkSpec core2d_network(std::size_t n_in, std::size_t latent = 4) {
  return make_spec({n_in, 100, 70, 50, 30, 16, 8, latent, 8, 16, 30, 50, 70, 100, n_in});
}

struct Layer {
  DenseMatrix w;  // out x in
  Vector b;       // out

  bool operator==(const Layer&) const = default;
};

struct Network {
  NetworkSpec spec;
  std::vector<Layer> layers;

  bool operator==(const Network&) const = default;
};

/// Glorot-uniform weights, zero biases.
inline Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  SplitMix64 rng(seed);
  Network net{spec, {}};
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Layer layer{DenseMatrix(out, in), Vector(out, 0.0)};
    for (double& w : layer.w.data()) w = rng.uniform(-limit, limit);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

inline std::size_t parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers) n += l.w.data().size() + l.b.size();
  return n;
}

// ---------------------------------------------------------------------------
// Scaling

/// Single global min-max map of all entries onto [0, 1].
struct Scaler {
  double data_min = 0.0;
  double data_max = 1.0;

  static Scaler fit(std::span<const double> values) {
    if (values.empty()) throw DimensionError("Scaler::fit: no data");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (!(*hi > *lo)) throw DomainError("Scaler::fit: data has zero range");
    return Scaler{*lo, *hi};
  }

  double scale(double x) const { return (x - data_min) / (data_max - data_min); }
  double unscale(double y) const { return data_min + y * (data_max - data_min); }

  Vector scale(std::span<const double> x) const {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = scale(x[i]);
    return out;
  }
  Vector unscale(std::span<const double> y) const {
    Vector out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = unscale(y[i]);
    return out;
  }

  bool operator==(const Scaler&) const = default;
};

// ---------------------------------------------------------------------------
// Forward pass

/// Pre-activations z[l] and activations a[l] per layer; a[0] is the input.
struct ForwardTrace {
  std::vector<DenseMatrix> z;
  std::vector<DenseMatrix> a;
};

inline void layer_forward(const Layer& layer, const DenseMatrix& x, DenseMatrix& z, DenseMatrix& a) {
  const std::size_t m = x.rows();
  const std::size_t out = layer.w.rows();
  const std::size_t in = layer.w.cols();
  detail::require_dims(x.cols() == in, "layer_forward: input width does not match layer");
  z = DenseMatrix(m, out);
  a = DenseMatrix(m, out);
  for (std::size_t s = 0; s < m; ++s) {
    const double* xs = x.row(s).data();
    double* zs = z.row(s).data();
    double* as = a.row(s).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = layer.w.row(o).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += wo[k] * xs[k];
      zs[o] = acc + layer.b[o];
      as[o] = elu(zs[o]);
    }
  }
}

/// Applies layers [first, last) to a batch.
inline DenseMatrix apply_layers(const Network& net, std::size_t first, std::size_t last, DenseMatrix x) {
  DenseMatrix z, a;
  for (std::size_t l = first; l < last; ++l) {
    layer_forward(net.layers[l], x, z, a);
    x = std::move(a);
  }
  return x;
}

inline ForwardTrace forward_trace(const Network& net, const DenseMatrix& batch) {
  ForwardTrace t;
  const std::size_t n_layers = net.layers.size();
  t.z.resize(n_layers);
  t.a.resize(n_layers + 1);
  t.a[0] = batch;
  for (std::size_t l = 0; l < n_layers; ++l) layer_forward(net.layers[l], t.a[l], t.z[l], t.a[l + 1]);
  return t;
}

inline DenseMatrix forward(const Network& net, const DenseMatrix& batch) {
  return apply_layers(net, 0, net.layers.size(), batch);
}

inline Vector forward(const Network& net, std::span<const double> x) {
  detail::require_dims(x.size() == net.spec.input_size(), "forward: input has wrong length");
  return forward(net, DenseMatrix(1, x.size(), Vector(x.begin(), x.end()))).data();
}

inline Vector encode(const Network& net, std::span<const double> x) {
  detail::require_dims(x.size() == net.spec.input_size(), "encode: input has wrong length");
  return apply_layers(net, 0, net.spec.latent_index, DenseMatrix(1, x.size(), Vector(x.begin(), x.end())))
      .data();
}

inline Vector decode(const Network& net, std::span<const double> latent) {
  detail::require_dims(latent.size() == net.spec.latent_size(), "decode: latent has wrong length");
  return apply_layers(net, net.spec.latent_index, net.layers.size(),
                      DenseMatrix(1, latent.size(), Vector(latent.begin(), latent.end())))
      .data();
}

/// Batch encode/decode, one sample per row.
inline DenseMatrix encode(const Network& net, const DenseMatrix& batch) {
  return apply_layers(net, 0, net.spec.latent_index, batch);
}
inline DenseMatrix decode(const Network& net, const DenseMatrix& latents) {
  return apply_layers(net, net.spec.latent_index, net.layers.size(), latents);
}

// ---------------------------------------------------------------------------
// Loss and gradients

/// (1/m) sum over samples of the squared reconstruction error ||x - x_hat||^2.
inline double reconstruction_loss(const DenseMatrix& batch, const DenseMatrix& output) {
  detail::require_dims(batch.rows() == output.rows() && batch.cols() == output.cols(),
                       "reconstruction_loss: shape mismatch");
  double total = 0.0;
  const auto& x = batch.data();
  const auto& y = output.data();
  for (std::size_t i = 0; i < x.size(); ++i) total += (y[i] - x[i]) * (y[i] - x[i]);
  return total / static_cast<double>(batch.rows());
}

inline double reconstruction_loss(const Network& net, const DenseMatrix& batch) {
  return reconstruction_loss(batch, forward(net, batch));
}

struct Gradients {
  std::vector<Layer> layers;  // same shapes as the network
  double loss = 0.0;
};

inline Gradients zero_gradients(const Network& net) {
  Gradients g;
  for (const auto& l : net.layers) g.layers.push_back({DenseMatrix(l.w.rows(), l.w.cols()), Vector(l.b.size(), 0.0)});
  return g;
}

/// Exact gradient of reconstruction_loss for a batch (one sample per row).
inline Gradients backprop_mse(const Network& net, const DenseMatrix& batch) {
  detail::require_dims(batch.cols() == net.spec.input_size(), "backprop_mse: batch width mismatch");
  const std::size_t m = batch.rows();
  detail::require_dims(m > 0, "backprop_mse: empty batch");
  const ForwardTrace t = forward_trace(net, batch);
  Gradients g = zero_gradients(net);
  const std::size_t n_layers = net.layers.size();
  g.loss = reconstruction_loss(batch, t.a[n_layers]);

  // delta = dL/da for the current layer's output
  DenseMatrix delta(m, net.spec.output_size());
  {
    const double scale = 2.0 / static_cast<double>(m);
    const auto& y = t.a[n_layers].data();
    const auto& x = batch.data();
    auto& d = delta.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = scale * (y[i] - x[i]);
  }
  for (std::size_t l = n_layers; l-- > 0;) {
    const Layer& layer = net.layers[l];
    Layer& gl = g.layers[l];
    const std::size_t out = layer.w.rows();
    const std::size_t in = layer.w.cols();
    const DenseMatrix& z = t.z[l];
    const DenseMatrix& a_out = t.a[l + 1];
    const DenseMatrix& a_in = t.a[l];
    // dL/dz = dL/da * elu'(z); for z <= 0, elu'(z) = a + 1
    for (std::size_t s = 0; s < m; ++s) {
      double* ds = delta.row(s).data();
      const double* zs = z.row(s).data();
      const double* as = a_out.row(s).data();
      for (std::size_t o = 0; o < out; ++o) ds[o] *= zs[o] > 0.0 ? 1.0 : as[o] + 1.0;
    }
    DenseMatrix next;
    if (l > 0) next = DenseMatrix(m, in);
    for (std::size_t s = 0; s < m; ++s) {
      const double* ds = delta.row(s).data();
      const double* xs = a_in.row(s).data();
      double* ns = l > 0 ? next.row(s).data() : nullptr;
      for (std::size_t o = 0; o < out; ++o) {
        const double d = ds[o];
        if (d == 0.0) continue;
        double* gw = gl.w.row(o).data();
        for (std::size_t k = 0; k < in; ++k) gw[k] += d * xs[k];
        gl.b[o] += d;
        if (ns) {
          const double* wo = layer.w.row(o).data();
          for (std::size_t k = 0; k < in; ++k) ns[k] += d * wo[k];
        }
      }
    }
    if (l > 0) delta = std::move(next);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Nadam

struct NadamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct NadamState {
  std::vector<Layer> m, v;
  std::int64_t t = 0;  // completed steps

  static NadamState zeros_like(const Network& net) {
    NadamState s;
    s.m = zero_gradients(net).layers;
    s.v = s.m;
    return s;
  }
};

namespace detail {

inline void nadam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                         std::span<double> v, const NadamHyper& h, double bc1_next, double bc1,
                         double bc2) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
    const double m_hat = h.beta1 * m[i] / bc1_next + (1.0 - h.beta1) * g[i] / bc1;
    const double v_hat = v[i] / bc2;
    w[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
  }
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace detail

/// One Nesterov-accelerated Adam step: the bias-corrected first moment uses
/// the look-ahead momentum beta1 * m_t / (1 - beta1^(t+1)) plus the current
/// gradient term (1 - beta1) g / (1 - beta1^t).
inline void nadam_step(Network& net, const Gradients& grads, NadamState& state, const NadamHyper& hyper) {
  detail::require_dims(grads.layers.size() == net.layers.size() && state.m.size() == net.layers.size(),
                       "nadam_step: gradient/state shapes do not match network");
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    if (!detail::all_finite(grads.layers[l].w.data()) || !detail::all_finite(grads.layers[l].b)) {
      throw TrainingError("non-finite gradient in layer " + std::to_string(l) + " at step " +
                          std::to_string(state.t + 1));
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc1_next = 1.0 - std::pow(hyper.beta1, t + 1.0);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    detail::nadam_update(net.layers[l].w.data(), grads.layers[l].w.data(), state.m[l].w.data(),
                         state.v[l].w.data(), hyper, bc1_next, bc1, bc2);
    detail::nadam_update(net.layers[l].b, grads.layers[l].b, state.m[l].b, state.v[l].b, hyper,
                         bc1_next, bc1, bc2);
  }
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 10000;
  std::size_t batch_size = 100;
  NadamHyper hyper;
  std::uint64_t seed = 1;
};

struct TrainedAutoencoder {
  Network net;
  Scaler scaler;
  std::vector<double> loss_history;  // mean batch loss per epoch
  TrainConfig config;

  /// Physical in, latent out.
  Vector encode(std::span<const double> x) const { return critrom::encode(net, scaler.scale(x)); }
  /// Latent in, physical out.
  Vector decode(std::span<const double> latent) const {
    return scaler.unscale(critrom::decode(net, latent));
  }
  Vector reconstruct(std::span<const double> x) const {
    return scaler.unscale(forward(net, std::span<const double>(scaler.scale(x))));
  }
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Fits the scaler on all snapshot entries, then runs mini-batch Nadam with a
/// per-epoch seeded shuffle. Snapshots hold one sample per column.
inline TrainedAutoencoder train(const NetworkSpec& spec, const DenseMatrix& snapshots,
                                const TrainConfig& config, const EpochCallback& on_epoch = {}) {
  spec.validate();
  if (snapshots.rows() != spec.input_size()) {
    throw DimensionError("train: snapshot length " + std::to_string(snapshots.rows()) +
                         " does not match network input " + std::to_string(spec.input_size()));
  }
  const std::size_t n_samples = snapshots.cols();
  if (n_samples == 0) throw DimensionError("train: no snapshots");
  if (config.batch_size == 0 || config.batch_size > n_samples) {
    throw ConfigError("train: batch size must be in [1, " + std::to_string(n_samples) + "]");
  }
  if (config.epochs < 0) throw ConfigError("train: negative epoch count");

  TrainedAutoencoder out;
  out.config = config;
  out.scaler = Scaler::fit(snapshots.data());
  DenseMatrix data = snapshots.transpose();
  for (double& v : data.data()) v = out.scaler.scale(v);

  out.net = init_network(spec, config.seed);
  SplitMix64 rng = SplitMix64::stream(config.seed, 1);
  NadamState state = NadamState::zeros_like(out.net);
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t width = spec.input_size();
  out.loss_history.reserve(static_cast<std::size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < n_samples; start += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, n_samples - start);
      DenseMatrix batch(m, width);
      for (std::size_t s = 0; s < m; ++s) {
        const auto src = data.row(order[start + s]);
        std::copy(src.begin(), src.end(), batch.row(s).begin());
      }
      Gradients g = backprop_mse(out.net, batch);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("training diverged: loss " + std::to_string(g.loss) + " in epoch " +
                            std::to_string(epoch + 1));
      }
      nadam_step(out.net, g, state, config.hyper);
      loss_sum += g.loss;
      ++n_batches;
    }
    const double epoch_loss = loss_sum / static_cast<double>(n_batches);
    out.loss_history.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, epoch_loss);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: one JSON header line, then W and b (as 1 x out) per layer in
// the binary matrix format.

inline nlohmann::json model_header(const TrainedAutoencoder& ae) {
  return nlohmann::json{{"format", "critrom-autoencoder-1"},
                        {"layer_sizes", ae.net.spec.layer_sizes},
                        {"latent_index", ae.net.spec.latent_index},
                        {"activation", "elu"},
                        {"scaler", {{"min", ae.scaler.data_min}, {"max", ae.scaler.data_max}}},
                        {"seed", ae.config.seed},
                        {"epochs", ae.config.epochs},
                        {"batch_size", ae.config.batch_size},
                        {"optimizer",
                         {{"name", "nadam"},
                          {"learning_rate", ae.config.hyper.learning_rate},
                          {"beta1", ae.config.hyper.beta1},
                          {"beta2", ae.config.hyper.beta2},
                          {"epsilon", ae.config.hyper.epsilon}}},
                        {"final_loss", ae.loss_history.empty() ? 0.0 : ae.loss_history.back()}};
}

inline void write_model(std::ostream& out, const TrainedAutoencoder& ae) {
  out << model_header(ae).dump() << '\n';
  for (const auto& l : ae.net.layers) {
    write_matrix(out, l.w);
    write_matrix(out, DenseMatrix(1, l.b.size(), l.b));
  }
}

inline TrainedAutoencoder read_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("model file: missing header");
  const nlohmann::json h = nlohmann::json::parse(line);
  if (h.value("format", "") != "critrom-autoencoder-1") throw ConfigError("model file: unknown format");
  TrainedAutoencoder ae;
  ae.net.spec.layer_sizes = h.at("layer_sizes").get<std::vector<std::size_t>>();
  ae.net.spec.latent_index = h.at("latent_index").get<std::size_t>();
  ae.net.spec.validate();
  ae.scaler = {h.at("scaler").at("min").get<double>(), h.at("scaler").at("max").get<double>()};
  ae.config.seed = h.at("seed").get<std::uint64_t>();
  ae.config.epochs = h.at("epochs").get<int>();
  ae.config.batch_size = h.at("batch_size").get<std::size_t>();
  const auto& opt = h.at("optimizer");
  ae.config.hyper = {opt.at("learning_rate").get<double>(), opt.at("beta1").get<double>(),
                     opt.at("beta2").get<double>(), opt.at("epsilon").get<double>()};
  for (std::size_t l = 0; l < ae.net.spec.layer_count(); ++l) {
    Layer layer;
    layer.w = read_matrix(in);
    const DenseMatrix b = read_matrix(in);
    if (layer.w.rows() != ae.net.spec.layer_sizes[l + 1] || layer.w.cols() != ae.net.spec.layer_sizes[l] ||
        b.rows() != 1 || b.cols() != layer.w.rows()) {
      throw ConfigError("model file: layer " + std::to_string(l) + " has the wrong shape");
    }
    layer.b = b.data();
    ae.net.layers.push_back(std::move(layer));
  }
  return ae;
}

inline void save_model(const std::string& path, const TrainedAutoencoder& ae) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  write_model(out, ae);
}

inline TrainedAutoencoder load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  return read_model(in);
}

inline void write_loss_csv(std::ostream& out, const std::vector<double>& history) {
  out << "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, history[i]);
    out << buf;
  }
}

}  // namespace critrom
