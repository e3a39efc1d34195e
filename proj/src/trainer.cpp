#include "mprl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "mprl/error.hpp"
#include "mprl/text_io.hpp"

namespace mprl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kDropoutStream = 0x4450;
constexpr std::uint64_t kRandomAlphaStream = 0x5241;

VirtualLabel random_rank_label(std::size_t num_classes, std::mt19937_64& rng) {
  RankWeights alpha{std::vector<double>(num_classes), TiePolicy::CompetitionOrder};
  std::iota(alpha.alpha.begin(), alpha.alpha.end(), 1.0);
  std::shuffle(alpha.alpha.begin(), alpha.alpha.end(), rng);
  return mprl_label(alpha, num_classes);
}

std::vector<double> first_k(std::span<const double> logits, std::size_t k) {
  return std::vector<double>(logits.begin(), logits.begin() + static_cast<std::ptrdiff_t>(k));
}

}  // namespace

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::Baseline: return "Baseline";
    case Strategy::AllInOne: return "AllInOne";
    case Strategy::OneHotPseudo: return "OneHotPseudo";
    case Strategy::LSRO: return "LSRO";
    case Strategy::sMpRL: return "sMpRL";
    case Strategy::dMpRL_I: return "dMpRL_I";
    case Strategy::dMpRL_II: return "dMpRL_II";
  }
  return "Unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : kAllStrategies) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorKind::ParseError, "unknown strategy '" + std::string(name) + "'");
}

bool uses_generated(Strategy strategy) { return strategy != Strategy::Baseline; }

double TrainConfig::effective_lambda() const {
  if (lambda) return *lambda;
  return strategy == Strategy::dMpRL_II ? 0.1 : 1.0;
}

std::size_t TrainConfig::head_width(std::size_t num_classes) const {
  return strategy == Strategy::AllInOne ? num_classes + 1 : num_classes;
}

double TrainConfig::learning_rate(std::size_t epoch) const {
  return epoch <= decay_epoch ? lr_initial : lr_after_decay;
}

bool TrainConfig::generated_active(std::size_t epoch) const {
  if (!uses_generated(strategy)) return false;
  if (strategy == Strategy::dMpRL_II) return epoch >= warmup_epoch;
  return true;
}

void TrainConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); };
  if (epochs == 0) fail("epochs must be >= 1");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(lr_initial > 0.0) || !(lr_after_decay > 0.0)) fail("learning rates must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  if (!std::isfinite(init_scale) || init_scale < 0.0) fail("init_scale must be >= 0");
  const double lam = effective_lambda();
  if (!std::isfinite(lam) || lam < 0.0) fail("lambda must be >= 0");
  if (uses_generated(strategy) && !(lam > 0.0)) {
    fail("lambda must be > 0 for strategy " + std::string(to_string(strategy)));
  }
  if (strategy == Strategy::dMpRL_II && (warmup_epoch == 0 || warmup_epoch >= epochs)) {
    fail("dMpRL_II needs 1 <= warmup_epoch < epochs (warmup_epoch=" +
         std::to_string(warmup_epoch) + ", epochs=" + std::to_string(epochs) + ")");
  }
  for (std::size_t h : hidden) {
    if (h == 0) fail("hidden widths must be > 0");
  }
}

BatchGradients batch_gradients(const ModelParams& params, std::span<const Sample* const> batch,
                               const LabelFn& label_for, const LossConfig& loss_cfg,
                               bool generated_active, const DropoutSpec& dropout) {
  const std::size_t k = loss_cfg.num_classes();
  const std::size_t width = params.output_width();
  if (width != k && width != k + 1) {
    throw Error(ErrorKind::InvalidDimension, "model head width " + std::to_string(width) +
                                                 " does not fit K=" + std::to_string(k));
  }

  std::vector<ForwardResult> passes;
  passes.reserve(batch.size());
  std::vector<LossTerm> terms;
  terms.reserve(batch.size());
  BatchGradients out{Gradients::zeros_like(params), Gradients::zeros_like(params), {}, 0};

  for (const Sample* s : batch) {
    DropoutSpec d = dropout;
    d.seed = mix_seed(dropout.seed, s->id);
    passes.push_back(forward(params, s->features, d));
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = *batch[i];
    const std::vector<double>& logits = passes[i].logits;
    LossTerm term;
    term.logits = logits;
    if (!s.is_generated()) {
      term.origin = Origin::Real;
      term.label = ground_truth_label(width, *s.real_class);
      if (argmax(std::span<const double>(logits).first(k)) == *s.real_class) ++out.real_correct;
    } else {
      term.origin = Origin::Generated;
      if (generated_active) {
        term.label = label_for(s, softmax(first_k(logits, k)));
      }
    }
    terms.push_back(std::move(term));
  }

  out.loss = combined_loss(terms, loss_cfg, generated_active);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const bool generated = batch[i]->is_generated();
    if (generated && !generated_active) continue;
    accumulate_backward(params, passes[i].cache, out.loss.grads[i],
                        generated ? out.generated : out.real);
  }
  return out;
}

StaticLabels assign_static_labels(const ModelParams& pretrained, const Dataset& generated,
                                  TiePolicy tie_policy) {
  const std::size_t k = generated.num_classes;
  if (pretrained.output_width() != k) {
    throw Error(ErrorKind::InvalidDimension, "pretrained head width " +
                                                 std::to_string(pretrained.output_width()) +
                                                 " != K=" + std::to_string(k));
  }
  if (pretrained.input_width() != generated.feature_dim) {
    throw Error(ErrorKind::InvalidDimension, "pretrained input width does not match features");
  }
  StaticLabels labels;
  for (const Sample& s : generated.samples) {
    const ProbVector p = softmax(predict_logits(pretrained, s.features));
    labels.emplace(s.id, mprl_label(mprl_alpha(p, tie_policy), k));
  }
  return labels;
}

const std::vector<Trajectory>& log_label_trajectory(const TrainHistory& history) {
  if (!history.trajectories_enabled) {
    throw Error(ErrorKind::NotRecorded, "trajectory logging was disabled for this run");
  }
  return history.trajectories;
}

TrainResult train(const Dataset& real, const Dataset& generated, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  real.validate();
  generated.validate();
  const std::size_t k = real.num_classes;
  if (k < 1 || real.feature_dim == 0) throw Error(ErrorKind::InvalidDimension, "empty real dataset");
  if (!generated.samples.empty() &&
      (generated.feature_dim != real.feature_dim || generated.num_classes != k)) {
    throw Error(ErrorKind::InvalidDimension, "generated dataset dims do not match the real dataset");
  }
  for (const Sample& s : generated.samples) {
    if (!s.is_generated()) {
      throw Error(ErrorKind::InvalidState,
                  "generated dataset contains labelled sample " + std::to_string(s.id));
    }
  }
  for (const Sample& s : real.samples) {
    if (s.is_generated()) {
      throw Error(ErrorKind::InvalidState, "real dataset contains unlabelled sample " +
                                               std::to_string(s.id));
    }
  }

  std::vector<const Sample*> merged = real.select(Split::Train);
  if (merged.empty()) throw Error(ErrorKind::InvalidState, "real dataset has no training split");
  const std::size_t n_real = merged.size();
  if (uses_generated(cfg.strategy)) {
    for (const Sample& s : generated.samples) merged.push_back(&s);
  }

  TrainResult result;

  std::optional<StaticLabels> static_labels;
  if (cfg.strategy == Strategy::sMpRL) {
    if (options.static_labels) {
      static_labels = options.static_labels;
    } else {
      TrainConfig pre = cfg;
      pre.strategy = Strategy::Baseline;
      pre.track_samples = 0;
      const TrainResult pretrained = train(real, Dataset{k, real.feature_dim, {}}, pre);
      static_labels = assign_static_labels(pretrained.params, generated, cfg.tie_policy);
    }
    for (const Sample& s : generated.samples) {
      if (!static_labels->count(s.id)) {
        throw Error(ErrorKind::InvalidState, "no static label for generated sample " +
                                                 std::to_string(s.id));
      }
    }
  }

  std::vector<std::size_t> sizes{real.feature_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(cfg.head_width(k));
  ModelParams params = options.initial_params
                           ? *options.initial_params
                           : init_params(sizes, cfg.seed, cfg.init_scale, cfg.activation);
  if (params.input_width() != real.feature_dim || params.output_width() != cfg.head_width(k)) {
    throw Error(ErrorKind::InvalidDimension, "initial parameters do not fit the data");
  }

  const double lambda = cfg.effective_lambda();
  const LossConfig loss_cfg(k, lambda, cfg.gradient_mode);
  OptimizerState opt = OptimizerState::for_params(params, cfg.lr_initial, cfg.momentum);
  std::mt19937_64 alpha_rng(mix_seed(cfg.seed, kRandomAlphaStream));

  TrainHistory& history = result.history;
  history.trajectories_enabled = cfg.track_samples > 0;
  const std::size_t tracked = std::min(cfg.track_samples, generated.samples.size());
  for (std::size_t i = 0; i < tracked; ++i) {
    history.trajectories.push_back({generated.samples[i].id, {}});
  }

  bool first_iteration = true;
  std::vector<std::size_t> order(merged.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(mix_seed(cfg.seed, kShuffleStream), epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    opt.learning_rate = cfg.learning_rate(epoch);
    const bool active = cfg.generated_active(epoch);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = opt.learning_rate;
    double l1_sum = 0.0;
    double l2_sum = 0.0;
    std::size_t real_seen = 0;
    std::size_t real_correct = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Sample*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(merged[order[i]]);

      const bool random_alpha = first_iteration && cfg.strategy == Strategy::dMpRL_I;
      const LabelFn label_for = [&](const Sample& s, const ProbVector& p) -> VirtualLabel {
        switch (cfg.strategy) {
          case Strategy::AllInOne: return all_in_one_label(k);
          case Strategy::LSRO: return lsro_label(k);
          case Strategy::OneHotPseudo: return one_hot_pseudo_label(p);
          case Strategy::sMpRL: return static_labels->at(s.id);
          case Strategy::dMpRL_I:
            if (random_alpha) return random_rank_label(k, alpha_rng);
            return mprl_label(mprl_alpha(p, cfg.tie_policy), k);
          case Strategy::dMpRL_II: return mprl_label(mprl_alpha(p, cfg.tie_policy), k);
          case Strategy::Baseline: break;
        }
        throw Error(ErrorKind::InvalidState, "strategy does not label generated samples");
      };

      const DropoutSpec dropout{cfg.dropout_rate,
                                mix_seed(mix_seed(cfg.seed, kDropoutStream), epoch), true};
      BatchGradients bg = batch_gradients(params, batch, label_for, loss_cfg, active, dropout);
      first_iteration = false;

      l1_sum += bg.loss.l1 * static_cast<double>(bg.loss.num_real);
      l2_sum += bg.loss.l2 * static_cast<double>(bg.loss.num_generated);
      real_seen += bg.loss.num_real;
      real_correct += bg.real_correct;
      rec.generated_terms += bg.loss.num_generated;
      rec.generated_grad_norm += std::sqrt(bg.generated.squared_norm());

      bg.real.add(bg.generated);
      sgd_step(params, bg.real, opt);
    }

    rec.l1 = real_seen ? l1_sum / static_cast<double>(real_seen) : 0.0;
    rec.l2 = rec.generated_terms ? l2_sum / static_cast<double>(rec.generated_terms) : 0.0;
    rec.combined = rec.l1 + lambda * rec.l2;
    rec.train_acc = static_cast<double>(real_correct) / static_cast<double>(n_real);
    if (!std::isfinite(rec.combined)) {
      throw Error(ErrorKind::InvalidState, "loss diverged at epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(rec);

    for (std::size_t i = 0; i < tracked; ++i) {
      const auto logits = predict_logits(params, generated.samples[i].features);
      history.trajectories[i].argmax_class.push_back(
          argmax(std::span<const double>(logits).first(k)));
    }
  }

  result.params = std::move(params);
  result.static_labels = std::move(static_labels);
  return result;
}

void write_history_csv(const TrainHistory& history, std::ostream& out) {
  out << "epoch,l1,l2,combined,train_acc,lr\n";
  for (const EpochRecord& r : history.epochs) {
    out << r.epoch << ',' << text::format_double(r.l1) << ',' << text::format_double(r.l2) << ','
        << text::format_double(r.combined) << ',' << text::format_double(r.train_acc) << ','
        << text::format_double(r.lr) << '\n';
  }
}

void write_trajectory_csv(const TrainHistory& history, std::ostream& out) {
  out << "sample_id,epoch,argmax_class\n";
  for (const Trajectory& t : log_label_trajectory(history)) {
    for (std::size_t e = 0; e < t.argmax_class.size(); ++e) {
      out << t.sample_id << ',' << (e + 1) << ',' << t.argmax_class[e] << '\n';
    }
  }
}

}  // namespace mprl
