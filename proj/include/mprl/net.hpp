#pragma once

// Small fully-connected classifier with hand-written backpropagation.
//
// Every layer but the last is followed by the activation. The input of the
// last layer is the embedding used for retrieval; in training mode a single
// inverted-dropout mask is applied to it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace mprl {

enum class Activation { ReLU, Tanh };

std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out

  bool operator==(const DenseLayer&) const = default;
};

class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(std::vector<DenseLayer> layers, Activation activation);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  Activation activation() const { return activation_; }

  std::size_t input_width() const { return layers_.front().in; }
  std::size_t output_width() const { return layers_.back().out; }
  std::size_t embedding_width() const { return layers_.back().in; }
  std::vector<std::size_t> layer_sizes() const;
  std::size_t parameter_count() const;

  // Changes on every mutation; forward caches record it to detect staleness.
  std::uint64_t stamp() const { return stamp_; }

  // Mutable access for optimizers and tests. Refreshes the stamp.
  std::vector<DenseLayer>& mutable_layers();

  // Compares values only, not the stamp.
  bool operator==(const ModelParams& other) const {
    return activation_ == other.activation_ && layers_ == other.layers_;
  }

 private:
  std::vector<DenseLayer> layers_;
  Activation activation_ = Activation::ReLU;
  std::uint64_t stamp_ = 0;
};

// Same shape as ModelParams; used for parameter gradients and velocities.
struct Gradients {
  std::vector<DenseLayer> layers;

  static Gradients zeros_like(const ModelParams& params);
  void add(const Gradients& other, double scale = 1.0);
  void fill_zero();
  double squared_norm() const;
};

// Weights ~ Normal(0, scale / sqrt(fan_in)), biases zero.
ModelParams init_params(std::span<const std::size_t> layer_sizes, std::uint64_t seed, double scale,
                        Activation activation = Activation::ReLU);

struct DropoutSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;
  bool train = false;
};

struct ForwardCache {
  std::uint64_t stamp = 0;
  std::vector<std::vector<double>> layer_inputs;  // input to each layer (post-dropout for the last)
  std::vector<std::vector<double>> pre_activations;  // hidden layers only
  std::vector<double> dropout_scale;  // per embedding unit; empty when no dropout
};

struct ForwardResult {
  std::vector<double> logits;
  std::vector<double> embedding;  // pre-dropout input of the last layer
  ForwardCache cache;
};

ForwardResult forward(const ModelParams& params, std::span<const double> features,
                      const DropoutSpec& dropout = {});

// Eval-mode logits only.
std::vector<double> predict_logits(const ModelParams& params, std::span<const double> features);

Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   std::span<const double> grad_logits);

// Adds the parameter gradient of one sample into `into`.
void accumulate_backward(const ModelParams& params, const ForwardCache& cache,
                         std::span<const double> grad_logits, Gradients& into);

struct OptimizerState {
  Gradients velocity;
  double learning_rate = 0.1;
  double momentum = 0.9;

  static OptimizerState for_params(const ModelParams& params, double learning_rate,
                                   double momentum);
};

// Classical momentum: v <- momentum*v - lr*g; w <- w + v.
void sgd_step(ModelParams& params, const Gradients& grads, OptimizerState& state);

// Text checkpoint: header, activation, layer sizes, then one line of
// row-major weights and one line of biases per layer at 17 significant digits.
void save_params(const ModelParams& params, std::ostream& out);
ModelParams load_params(std::istream& in);
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace mprl
