#pragma once

// Training over real + generated data under each virtual-label strategy.
//
// Every epoch the merged set (real train split plus generated samples) is
// shuffled with an epoch-seeded generator and cut into mini-batches. Real
// samples take softmax cross-entropy; generated samples take the loss of
// their strategy's virtual label, scaled by lambda. Epochs are 1-based.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mprl/labels.hpp"
#include "mprl/losses.hpp"
#include "mprl/net.hpp"
#include "mprl/synthgen.hpp"

namespace mprl {

enum class Strategy { Baseline, AllInOne, OneHotPseudo, LSRO, sMpRL, dMpRL_I, dMpRL_II };

inline constexpr Strategy kAllStrategies[] = {
    Strategy::Baseline, Strategy::AllInOne, Strategy::OneHotPseudo, Strategy::LSRO,
    Strategy::sMpRL,    Strategy::dMpRL_I,  Strategy::dMpRL_II};

std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view name);
bool uses_generated(Strategy strategy);

struct TrainConfig {
  Strategy strategy = Strategy::dMpRL_II;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr_initial = 0.1;
  double lr_after_decay = 0.01;
  // Epochs 1..decay_epoch use lr_initial, later epochs lr_after_decay.
  std::size_t decay_epoch = 40;
  double momentum = 0.9;
  // Unset: 0.1 for dMpRL_II, 1 otherwise.
  std::optional<double> lambda;
  // dMpRL_II: generated samples contribute from this epoch on.
  std::size_t warmup_epoch = 20;
  TiePolicy tie_policy = TiePolicy::AverageRank;
  GradientMode gradient_mode = GradientMode::AnalyticOfEq13;
  double dropout_rate = 0.5;
  std::uint64_t seed = 1;
  // Hidden widths; the last one is the embedding width.
  std::vector<std::size_t> hidden = {64, 32};
  Activation activation = Activation::ReLU;
  double init_scale = 1.4142135623730951;
  // Number of generated samples (in dataset order) whose argmax class is
  // recorded after every epoch. 0 disables trajectory logging.
  std::size_t track_samples = 0;

  double effective_lambda() const;
  std::size_t head_width(std::size_t num_classes) const;
  double learning_rate(std::size_t epoch) const;
  bool generated_active(std::size_t epoch) const;
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double l1 = 0.0;        // mean real-sample loss
  double l2 = 0.0;        // mean generated-sample loss (unscaled), 0 if none contributed
  double combined = 0.0;  // l1 + lambda * l2
  double train_acc = 0.0;  // argmax accuracy on real samples during the epoch
  double lr = 0.0;
  // Sum over batches of the L2 norm of the generated samples' parameter
  // gradient. Exactly 0 while the generated branch is gated off.
  double generated_grad_norm = 0.0;
  std::size_t generated_terms = 0;

  bool operator==(const EpochRecord&) const = default;
};

struct Trajectory {
  std::uint64_t sample_id = 0;
  std::vector<std::size_t> argmax_class;  // one entry per epoch

  bool operator==(const Trajectory&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool trajectories_enabled = false;
  std::vector<Trajectory> trajectories;

  bool operator==(const TrainHistory&) const = default;
};

using StaticLabels = std::map<std::uint64_t, VirtualLabel>;

struct TrainOptions {
  std::optional<ModelParams> initial_params;
  // sMpRL labels. When absent, a Baseline model is trained with the same
  // config first and used to assign them.
  std::optional<StaticLabels> static_labels;
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
  std::optional<StaticLabels> static_labels;  // sMpRL only
};

TrainResult train(const Dataset& real, const Dataset& generated, const TrainConfig& cfg,
                  const TrainOptions& options = {});

// One MpRL label per generated sample from the pretrained model's softmax.
StaticLabels assign_static_labels(const ModelParams& pretrained, const Dataset& generated,
                                  TiePolicy tie_policy);

// Per tracked sample, its argmax class per epoch. Throws NotRecorded when
// logging was disabled.
const std::vector<Trajectory>& log_label_trajectory(const TrainHistory& history);

// Gradients of one mini-batch, split by origin so the generated branch can be
// inspected on its own. `label_for` is consulted only for generated samples
// and only while generated_active is set.
using LabelFn = std::function<VirtualLabel(const Sample&, const ProbVector&)>;

struct BatchGradients {
  Gradients real;
  Gradients generated;
  CombinedLoss loss;
  std::size_t real_correct = 0;
};

BatchGradients batch_gradients(const ModelParams& params, std::span<const Sample* const> batch,
                               const LabelFn& label_for, const LossConfig& loss_cfg,
                               bool generated_active, const DropoutSpec& dropout);

// epoch,l1,l2,combined,train_acc,lr
void write_history_csv(const TrainHistory& history, std::ostream& out);
// sample_id,epoch,argmax_class
void write_trajectory_csv(const TrainHistory& history, std::ostream& out);

}  // namespace mprl
