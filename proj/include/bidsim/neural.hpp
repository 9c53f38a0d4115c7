#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bidsim {

struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense feed-forward network: leaky-ReLU hidden layers, linear output,
/// with per-parameter Adagrad accumulators stored alongside the weights.
struct Mlp {
  std::vector<int> layer_dims;
  std::vector<std::vector<double>> weights;      // [layer] row-major, out x in
  std::vector<std::vector<double>> biases;       // [layer] out
  std::vector<std::vector<double>> acc_weights;  // Adagrad sums of squared grads
  std::vector<std::vector<double>> acc_biases;
  double leak = 0.01;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return weights.size(); }
};

/// Parameters drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline Mlp make_mlp(std::vector<int> layer_dims, double leak, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw DimensionMismatch("make_mlp: need at least input and output dims");
  for (int d : layer_dims) {
    if (d < 1) throw DimensionMismatch("make_mlp: layer widths must be positive");
  }
  Mlp net;
  net.layer_dims = std::move(layer_dims);
  net.leak = leak;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    const int in = net.layer_dims[l];
    const int out = net.layer_dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(static_cast<std::size_t>(out) * in);
    std::vector<double> b(out);
    for (auto& x : w) x = dist(rng);
    for (auto& x : b) x = dist(rng);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
    net.acc_weights.emplace_back(static_cast<std::size_t>(out) * in, 0.0);
    net.acc_biases.emplace_back(out, 0.0);
  }
  return net;
}

namespace detail {

inline double leaky(double z, double leak) { return z > 0.0 ? z : leak * z; }
inline double leaky_grad(double z, double leak) { return z > 0.0 ? 1.0 : leak; }

// Pre-activations per layer; the last layer stays linear.
inline std::vector<std::vector<double>> forward_pass(const Mlp& net, std::span<const double> input) {
  std::vector<std::vector<double>> zs;
  zs.reserve(net.layer_count());
  std::vector<double> act(input.begin(), input.end());
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const int in = net.layer_dims[l];
    const int out = net.layer_dims[l + 1];
    std::vector<double> z(out);
    const double* w = net.weights[l].data();
    for (int j = 0; j < out; ++j) {
      double s = net.biases[l][j];
      const double* row = w + static_cast<std::size_t>(j) * in;
      for (int i = 0; i < in; ++i) s += row[i] * act[i];
      z[j] = s;
    }
    zs.push_back(std::move(z));
    if (l + 1 < net.layer_count()) {
      act.assign(zs.back().size(), 0.0);
      for (std::size_t j = 0; j < act.size(); ++j) act[j] = leaky(zs.back()[j], net.leak);
    }
  }
  return zs;
}

}  // namespace detail

inline std::vector<double> forward(const Mlp& net, std::span<const double> input) {
  if (static_cast<int>(input.size()) != net.input_dim()) {
    throw DimensionMismatch("forward: input length " + std::to_string(input.size()) +
                            " != " + std::to_string(net.input_dim()));
  }
  return detail::forward_pass(net, input).back();
}

struct MlpGradients {
  std::vector<std::vector<double>> d_weights;
  std::vector<std::vector<double>> d_biases;
  std::vector<double> d_input;
};

inline void scale(MlpGradients& g, double s) {
  for (auto& layer : g.d_weights) {
    for (auto& x : layer) x *= s;
  }
  for (auto& layer : g.d_biases) {
    for (auto& x : layer) x *= s;
  }
  for (auto& x : g.d_input) x *= s;
}

/// Exact reverse-mode gradients of forward() against every parameter and the
/// input, for the given upstream gradient at the output.
inline MlpGradients backward(const Mlp& net, std::span<const double> input,
                             std::span<const double> upstream) {
  if (static_cast<int>(input.size()) != net.input_dim()) {
    throw DimensionMismatch("backward: input length mismatch");
  }
  if (static_cast<int>(upstream.size()) != net.output_dim()) {
    throw DimensionMismatch("backward: upstream gradient length mismatch");
  }
  const auto zs = detail::forward_pass(net, input);

  MlpGradients g;
  g.d_weights.resize(net.layer_count());
  g.d_biases.resize(net.layer_count());

  std::vector<double> delta(upstream.begin(), upstream.end());  // dL/dz of current layer
  for (std::size_t l = net.layer_count(); l-- > 0;) {
    const int in = net.layer_dims[l];
    const int out = net.layer_dims[l + 1];
    std::vector<double> below(in);
    if (l == 0) {
      for (int i = 0; i < in; ++i) below[i] = input[i];
    } else {
      for (int i = 0; i < in; ++i) below[i] = detail::leaky(zs[l - 1][i], net.leak);
    }
    auto& dw = g.d_weights[l];
    dw.assign(static_cast<std::size_t>(out) * in, 0.0);
    g.d_biases[l] = delta;
    for (int j = 0; j < out; ++j) {
      for (int i = 0; i < in; ++i) dw[static_cast<std::size_t>(j) * in + i] = delta[j] * below[i];
    }
    std::vector<double> prev(in, 0.0);
    const double* w = net.weights[l].data();
    for (int j = 0; j < out; ++j) {
      const double* row = w + static_cast<std::size_t>(j) * in;
      for (int i = 0; i < in; ++i) prev[i] += delta[j] * row[i];
    }
    if (l > 0) {
      for (int i = 0; i < in; ++i) prev[i] *= detail::leaky_grad(zs[l - 1][i], net.leak);
    }
    delta = std::move(prev);
  }
  g.d_input = std::move(delta);
  return g;
}

/// One Adagrad update: acc += g^2; param += lr * g / sqrt(acc + eps).
/// Callers bake the ascent/descent sign into the gradients.
inline void adagrad_step(Mlp& net, const MlpGradients& grads, double learning_rate,
                         double epsilon = 1e-8) {
  if (learning_rate <= 0.0) throw std::invalid_argument("adagrad_step: learning_rate must be > 0");
  if (grads.d_weights.size() != net.layer_count()) {
    throw DimensionMismatch("adagrad_step: gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    if (grads.d_weights[l].size() != net.weights[l].size() ||
        grads.d_biases[l].size() != net.biases[l].size()) {
      throw DimensionMismatch("adagrad_step: gradient shape mismatch at layer " + std::to_string(l));
    }
    for (std::size_t i = 0; i < net.weights[l].size(); ++i) {
      const double g = grads.d_weights[l][i];
      if (g == 0.0) continue;
      net.acc_weights[l][i] += g * g;
      net.weights[l][i] += learning_rate * g / std::sqrt(net.acc_weights[l][i] + epsilon);
    }
    for (std::size_t i = 0; i < net.biases[l].size(); ++i) {
      const double g = grads.d_biases[l][i];
      if (g == 0.0) continue;
      net.acc_biases[l][i] += g * g;
      net.biases[l][i] += learning_rate * g / std::sqrt(net.acc_biases[l][i] + epsilon);
    }
  }
}

// Snapshot format: magic, layer dims, leak, then raw little-endian doubles
// (weights, biases, both accumulator sets, layer by layer).
inline void save_mlp(const Mlp& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_mlp: cannot open " + path);
  const char magic[8] = {'B', 'S', 'I', 'M', 'M', 'L', 'P', '1'};
  f.write(magic, sizeof(magic));
  const std::uint32_t n = static_cast<std::uint32_t>(net.layer_dims.size());
  f.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (int d : net.layer_dims) {
    const std::uint32_t v = static_cast<std::uint32_t>(d);
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  f.write(reinterpret_cast<const char*>(&net.leak), sizeof(net.leak));
  auto dump = [&](const std::vector<std::vector<double>>& vv) {
    for (const auto& v : vv) {
      f.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
  };
  dump(net.weights);
  dump(net.biases);
  dump(net.acc_weights);
  dump(net.acc_biases);
  if (!f) throw std::runtime_error("save_mlp: write failed for " + path);
}

inline Mlp load_mlp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_mlp: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, "BSIMMLP1", 8) != 0) {
    throw std::runtime_error("load_mlp: bad magic in " + path);
  }
  std::uint32_t n = 0;
  f.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!f || n < 2 || n > 1024) throw std::runtime_error("load_mlp: corrupt layer count");
  std::vector<int> dims(n);
  for (auto& d : dims) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    d = static_cast<int>(v);
  }
  double leak = 0.0;
  f.read(reinterpret_cast<char*>(&leak), sizeof(leak));
  Mlp net = make_mlp(dims, leak, 0);
  auto slurp = [&](std::vector<std::vector<double>>& vv) {
    for (auto& v : vv) {
      f.read(reinterpret_cast<char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
  };
  slurp(net.weights);
  slurp(net.biases);
  slurp(net.acc_weights);
  slurp(net.acc_biases);
  if (!f) throw std::runtime_error("load_mlp: truncated file " + path);
  return net;
}

}  // namespace bidsim
