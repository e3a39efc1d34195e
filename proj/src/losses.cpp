#include "mprl/losses.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "mprl/error.hpp"

namespace mprl {

std::string_view to_string(GradientMode mode) {
  return mode == GradientMode::PaperEq15 ? "PaperEq15" : "AnalyticOfEq13";
}

LossConfig::LossConfig(std::size_t num_classes, double lambda, GradientMode mode)
    : num_classes_(num_classes), lambda_(lambda), mode_(mode) {
  if (num_classes_ == 0) throw Error(ErrorKind::InvalidDimension, "K must be >= 1");
  if (!(lambda_ >= 0.0) || !std::isfinite(lambda_)) {
    throw Error(ErrorKind::InvalidConfig, "lambda must be finite and >= 0");
  }
}

namespace {

// -sum_k w_k log p_k with grad (sum w) p_k - w_k, scaled by `scale`.
LossOutput soft_target_ce(std::span<const double> logits, std::span<const double> target,
                          double scale) {
  const double lse = log_sum_exp(logits);
  const ProbVector p = softmax(logits);
  const double mass = std::accumulate(target.begin(), target.end(), 0.0);
  LossOutput out{0.0, std::vector<double>(logits.size())};
  double value = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    value -= target[k] * (logits[k] - lse);
    out.grad_logits[k] = scale * (mass * p[k] - target[k]);
  }
  out.value = scale * value;
  return out;
}

void require_width(std::span<const double> logits, std::size_t width) {
  if (logits.size() != width) {
    throw Error(ErrorKind::InvalidDimension,
                "logits have width " + std::to_string(logits.size()) + ", expected " +
                    std::to_string(width));
  }
}

LossOutput mprl_loss_unscaled(std::span<const double> logits, std::span<const double> weights,
                              GradientMode mode) {
  const double sigma = mprl_sigma(weights.size());
  LossOutput out = soft_target_ce(logits, weights, sigma);
  if (mode == GradientMode::PaperEq15) {
    const ProbVector p = softmax(logits);
    for (std::size_t k = 0; k < logits.size(); ++k) {
      out.grad_logits[k] = -sigma * weights[k] * (1.0 - p[k]);
    }
  }
  return out;
}

}  // namespace

LossOutput real_ce_loss(std::span<const double> logits, std::size_t cls) {
  if (logits.empty()) throw Error(ErrorKind::InvalidDimension, "logits are empty");
  if (cls >= logits.size()) {
    throw Error(ErrorKind::InvalidClass, "class " + std::to_string(cls) +
                                             " out of range for width " +
                                             std::to_string(logits.size()));
  }
  const double lse = log_sum_exp(logits);
  const ProbVector p = softmax(logits);
  LossOutput out{lse - logits[cls], std::vector<double>(p.values().begin(), p.values().end())};
  out.grad_logits[cls] -= 1.0;
  return out;
}

LossOutput lsro_loss(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorKind::InvalidDimension, "logits are empty");
  const double inv_k = 1.0 / static_cast<double>(logits.size());
  const double lse = log_sum_exp(logits);
  const ProbVector p = softmax(logits);
  LossOutput out{0.0, std::vector<double>(logits.size())};
  double mean_logit = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    mean_logit += logits[k];
    out.grad_logits[k] = p[k] - inv_k;
  }
  out.value = lse - mean_logit * inv_k;
  return out;
}

LossOutput mprl_generated_loss(std::span<const double> logits, const RankWeights& alpha,
                               const LossConfig& cfg) {
  require_width(logits, cfg.num_classes());
  const VirtualLabel label = mprl_label(alpha, cfg.num_classes());
  LossOutput out = mprl_loss_unscaled(logits, label.weights, cfg.gradient_mode());
  out.value *= cfg.lambda();
  for (double& g : out.grad_logits) g *= cfg.lambda();
  return out;
}

LossOutput virtual_label_loss(std::span<const double> logits, const VirtualLabel& label,
                              GradientMode mode) {
  switch (label.scheme) {
    case Scheme::GroundTruth:
    case Scheme::OneHotPseudo:
    case Scheme::AllInOne:
      require_width(logits, label.weights.size());
      return real_ce_loss(logits, label.source_class.value());
    case Scheme::LSRO:
      require_width(logits, label.weights.size());
      return lsro_loss(logits);
    case Scheme::MpRL:
      require_width(logits, label.weights.size());
      return mprl_loss_unscaled(logits, label.weights, mode);
  }
  throw Error(ErrorKind::InvalidState, "unknown label scheme");
}

CombinedLoss combined_loss(std::span<const LossTerm> batch, const LossConfig& cfg,
                           bool generated_active) {
  CombinedLoss out;
  out.grads.resize(batch.size());
  if (batch.empty()) return out;

  const std::size_t width = batch.front().logits.size();
  for (const LossTerm& term : batch) {
    if (term.logits.size() != width) {
      throw Error(ErrorKind::InvalidDimension, "batch mixes logit widths " +
                                                   std::to_string(width) + " and " +
                                                   std::to_string(term.logits.size()));
    }
    if (term.origin == Origin::Real) {
      ++out.num_real;
    } else if (generated_active) {
      ++out.num_generated;
    }
  }

  const double real_scale = out.num_real ? 1.0 / static_cast<double>(out.num_real) : 0.0;
  const double gen_scale =
      out.num_generated ? cfg.lambda() / static_cast<double>(out.num_generated) : 0.0;

  double l1_sum = 0.0;
  double l2_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LossTerm& term = batch[i];
    if (term.origin == Origin::Real) {
      if (term.label.scheme != Scheme::GroundTruth || !term.label.source_class) {
        throw Error(ErrorKind::InvalidState, "real sample without a ground-truth label");
      }
      LossOutput loss = real_ce_loss(term.logits, *term.label.source_class);
      l1_sum += loss.value;
      for (double& g : loss.grad_logits) g *= real_scale;
      out.grads[i] = std::move(loss.grad_logits);
    } else if (generated_active) {
      LossOutput loss = virtual_label_loss(term.logits, term.label, cfg.gradient_mode());
      l2_sum += loss.value;
      for (double& g : loss.grad_logits) g *= gen_scale;
      out.grads[i] = std::move(loss.grad_logits);
    } else {
      out.grads[i].assign(width, 0.0);
    }
  }

  out.l1 = l1_sum * real_scale;
  out.l2 = out.num_generated ? l2_sum / static_cast<double>(out.num_generated) : 0.0;
  out.value = out.l1 + cfg.lambda() * out.l2;
  return out;
}

}  // namespace mprl
