#include "mprl/net.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "mprl/error.hpp"
#include "mprl/text_io.hpp"

namespace mprl {

namespace {

std::uint64_t next_stamp() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

double activate(Activation a, double x) {
  return a == Activation::ReLU ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

// Derivative expressed through the pre-activation value.
double activate_grad(Activation a, double pre) {
  if (a == Activation::ReLU) return pre > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(pre);
  return 1.0 - t * t;
}

void affine(const DenseLayer& layer, std::span<const double> x, std::vector<double>& y) {
  y.assign(layer.bias.begin(), layer.bias.end());
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double* row = layer.weights.data() + o * layer.in;
    double acc = y[o];
    for (std::size_t i = 0; i < layer.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

constexpr std::string_view kCheckpointMagic = "mprl-params";
constexpr int kCheckpointVersion = 1;

}  // namespace

std::string_view to_string(Activation activation) {
  return activation == Activation::ReLU ? "relu" : "tanh";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu" || name == "ReLU") return Activation::ReLU;
  if (name == "tanh" || name == "Tanh") return Activation::Tanh;
  throw Error(ErrorKind::ParseError, "unknown activation '" + std::string(name) + "'");
}

ModelParams::ModelParams(std::vector<DenseLayer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation), stamp_(next_stamp()) {
  if (layers_.empty()) throw Error(ErrorKind::InvalidDimension, "model needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    if (layer.in == 0 || layer.out == 0 || layer.weights.size() != layer.in * layer.out ||
        layer.bias.size() != layer.out) {
      throw Error(ErrorKind::InvalidDimension, "layer " + std::to_string(l) + " is malformed");
    }
    if (l > 0 && layers_[l - 1].out != layer.in) {
      throw Error(ErrorKind::InvalidDimension,
                  "layer " + std::to_string(l) + " input does not chain with previous output");
    }
  }
}

std::vector<std::size_t> ModelParams::layer_sizes() const {
  std::vector<std::size_t> sizes;
  if (layers_.empty()) return sizes;
  sizes.push_back(layers_.front().in);
  for (const DenseLayer& layer : layers_) sizes.push_back(layer.out);
  return sizes;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& layer : layers_) n += layer.weights.size() + layer.bias.size();
  return n;
}

std::vector<DenseLayer>& ModelParams::mutable_layers() {
  stamp_ = next_stamp();
  return layers_;
}

Gradients Gradients::zeros_like(const ModelParams& params) {
  Gradients g;
  g.layers = params.layers();
  g.fill_zero();
  return g;
}

void Gradients::add(const Gradients& other, double scale) {
  if (other.layers.size() != layers.size()) {
    throw Error(ErrorKind::InvalidDimension, "gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& w = layers[l].weights;
    auto& b = layers[l].bias;
    const auto& ow = other.layers[l].weights;
    const auto& ob = other.layers[l].bias;
    if (ow.size() != w.size() || ob.size() != b.size()) {
      throw Error(ErrorKind::InvalidDimension, "gradient shape mismatch");
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += scale * ow[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += scale * ob[i];
  }
}

void Gradients::fill_zero() {
  for (DenseLayer& layer : layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const DenseLayer& layer : layers) {
    for (double v : layer.weights) s += v * v;
    for (double v : layer.bias) s += v * v;
  }
  return s;
}

ModelParams init_params(std::span<const std::size_t> layer_sizes, std::uint64_t seed, double scale,
                        Activation activation) {
  if (layer_sizes.size() < 2) {
    throw Error(ErrorKind::InvalidDimension, "need at least input and output widths");
  }
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t in = layer_sizes[l];
    const std::size_t out = layer_sizes[l + 1];
    if (in == 0 || out == 0) throw Error(ErrorKind::InvalidDimension, "layer width must be > 0");
    DenseLayer layer{in, out, std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0)};
    if (scale != 0.0) {
      std::normal_distribution<double> dist(0.0, scale / std::sqrt(static_cast<double>(in)));
      for (double& w : layer.weights) w = dist(rng);
    }
    layers.push_back(std::move(layer));
  }
  return ModelParams(std::move(layers), activation);
}

ForwardResult forward(const ModelParams& params, std::span<const double> features,
                      const DropoutSpec& dropout) {
  if (params.layers().empty()) throw Error(ErrorKind::InvalidState, "model has no layers");
  if (features.size() != params.input_width()) {
    throw Error(ErrorKind::InvalidDimension,
                "feature width " + std::to_string(features.size()) + ", model expects " +
                    std::to_string(params.input_width()));
  }
  if (!(dropout.rate >= 0.0 && dropout.rate < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "dropout rate must be in [0, 1)");
  }

  const auto& layers = params.layers();
  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.stamp = params.stamp();
  cache.layer_inputs.reserve(layers.size());
  cache.pre_activations.reserve(layers.size() - 1);

  std::vector<double> x(features.begin(), features.end());
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    std::vector<double> pre;
    affine(layers[l], x, pre);
    cache.layer_inputs.push_back(std::move(x));
    x.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) x[i] = activate(params.activation(), pre[i]);
    cache.pre_activations.push_back(std::move(pre));
  }

  result.embedding = x;
  if (dropout.train && dropout.rate > 0.0) {
    std::mt19937_64 rng(dropout.seed);
    std::bernoulli_distribution keep(1.0 - dropout.rate);
    const double inv_keep = 1.0 / (1.0 - dropout.rate);
    cache.dropout_scale.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      cache.dropout_scale[i] = keep(rng) ? inv_keep : 0.0;
      x[i] *= cache.dropout_scale[i];
    }
  }

  affine(layers.back(), x, result.logits);
  cache.layer_inputs.push_back(std::move(x));
  return result;
}

std::vector<double> predict_logits(const ModelParams& params, std::span<const double> features) {
  return forward(params, features).logits;
}

void accumulate_backward(const ModelParams& params, const ForwardCache& cache,
                         std::span<const double> grad_logits, Gradients& into) {
  const auto& layers = params.layers();
  if (cache.stamp != params.stamp() || cache.layer_inputs.size() != layers.size()) {
    throw Error(ErrorKind::InvalidState, "forward cache does not belong to these parameters");
  }
  if (grad_logits.size() != params.output_width()) {
    throw Error(ErrorKind::InvalidDimension, "gradient width does not match model output");
  }
  if (into.layers.size() != layers.size()) {
    throw Error(ErrorKind::InvalidDimension, "gradient buffer shape mismatch");
  }

  std::vector<double> delta(grad_logits.begin(), grad_logits.end());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    DenseLayer& g = into.layers[l];
    const std::vector<double>& x = cache.layer_inputs[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      g.bias[o] += d;
      if (d == 0.0) continue;
      double* grow = g.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) grow[i] += d * x[i];
    }
    if (l == 0) break;

    std::vector<double> upstream(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = layer.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) upstream[i] += d * row[i];
    }
    if (l == layers.size() - 1 && !cache.dropout_scale.empty()) {
      for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] *= cache.dropout_scale[i];
    }
    const std::vector<double>& pre = cache.pre_activations[l - 1];
    for (std::size_t i = 0; i < upstream.size(); ++i) {
      upstream[i] *= activate_grad(params.activation(), pre[i]);
    }
    delta = std::move(upstream);
  }
}

Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   std::span<const double> grad_logits) {
  Gradients g = Gradients::zeros_like(params);
  accumulate_backward(params, cache, grad_logits, g);
  return g;
}

OptimizerState OptimizerState::for_params(const ModelParams& params, double learning_rate,
                                          double momentum) {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "momentum must be in [0, 1)");
  }
  return {Gradients::zeros_like(params), learning_rate, momentum};
}

void sgd_step(ModelParams& params, const Gradients& grads, OptimizerState& state) {
  const auto& layers = params.layers();
  if (grads.layers.size() != layers.size() || state.velocity.layers.size() != layers.size()) {
    throw Error(ErrorKind::InvalidDimension, "optimizer shapes do not match parameters");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads.layers[l].weights.size() != layers[l].weights.size() ||
        grads.layers[l].bias.size() != layers[l].bias.size() ||
        state.velocity.layers[l].weights.size() != layers[l].weights.size() ||
        state.velocity.layers[l].bias.size() != layers[l].bias.size()) {
      throw Error(ErrorKind::InvalidDimension, "optimizer shapes do not match parameters");
    }
  }

  const auto update = [&](std::vector<double>& w, std::vector<double>& v,
                          const std::vector<double>& g) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = state.momentum * v[i] - state.learning_rate * g[i];
      w[i] += v[i];
    }
  };
  auto& mutable_layers = params.mutable_layers();
  for (std::size_t l = 0; l < mutable_layers.size(); ++l) {
    update(mutable_layers[l].weights, state.velocity.layers[l].weights, grads.layers[l].weights);
    update(mutable_layers[l].bias, state.velocity.layers[l].bias, grads.layers[l].bias);
  }
}

void save_params(const ModelParams& params, std::ostream& out) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "activation " << to_string(params.activation()) << '\n';
  out << "layers";
  for (std::size_t s : params.layer_sizes()) out << ' ' << s;
  out << '\n';
  for (const DenseLayer& layer : params.layers()) {
    out << 'W';
    for (double w : layer.weights) out << ' ' << text::format_double(w);
    out << "\nb";
    for (double b : layer.bias) out << ' ' << text::format_double(b);
    out << '\n';
  }
}

ModelParams load_params(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  const auto next_tokens = [&](std::string_view expect) {
    if (!std::getline(in, line)) {
      throw Error(ErrorKind::ParseError, "checkpoint truncated before '" + std::string(expect) + "'");
    }
    ++line_no;
    auto tokens = text::split_whitespace(line);
    if (tokens.empty() || tokens.front() != expect) {
      throw Error(ErrorKind::ParseError, "checkpoint line " + std::to_string(line_no) +
                                             ": expected '" + std::string(expect) + "'");
    }
    return tokens;
  };

  auto header = next_tokens(kCheckpointMagic);
  if (header.size() != 2 || text::parse_int(header[1]) != kCheckpointVersion) {
    throw Error(ErrorKind::ParseError, "unsupported checkpoint version");
  }
  auto act = next_tokens("activation");
  if (act.size() != 2) throw Error(ErrorKind::ParseError, "malformed activation line");
  const Activation activation = parse_activation(act[1]);

  auto sizes_tok = next_tokens("layers");
  std::vector<std::size_t> sizes;
  for (std::size_t i = 1; i < sizes_tok.size(); ++i) {
    const long long v = text::parse_int(sizes_tok[i]);
    if (v <= 0) throw Error(ErrorKind::ParseError, "layer width must be positive");
    sizes.push_back(static_cast<std::size_t>(v));
  }
  if (sizes.size() < 2) throw Error(ErrorKind::ParseError, "checkpoint needs >= 2 layer widths");

  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer{sizes[l], sizes[l + 1], {}, {}};
    const auto shape_error = [&] {
      return Error(ErrorKind::ParseError,
                   "layer " + std::to_string(l) + " value count does not match its shape");
    };
    // Tokens view `line`, so each line is consumed before the next is read.
    const auto w = next_tokens("W");
    if (w.size() != layer.in * layer.out + 1) throw shape_error();
    for (std::size_t i = 1; i < w.size(); ++i) layer.weights.push_back(text::parse_double(w[i]));
    const auto b = next_tokens("b");
    if (b.size() != layer.out + 1) throw shape_error();
    for (std::size_t i = 1; i < b.size(); ++i) layer.bias.push_back(text::parse_double(b[i]));
    layers.push_back(std::move(layer));
  }
  return ModelParams(std::move(layers), activation);
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidState, "cannot write " + path.string());
  save_params(params, out);
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidState, "cannot read " + path.string());
  return load_params(in);
}

}  // namespace mprl
