#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "mprl/labels.hpp"

namespace mprl {

enum class GradientMode {
  // Exact derivative of the generated-sample forward loss with alpha held fixed:
  //   lambda*sigma*((K+1)/2 * p_k - alpha_k/K)
  AnalyticOfEq13,
  // Closed form -lambda*sigma*(alpha_k/K)*(1 - p_k). It is not
  // the derivative of the forward loss; kept for comparison runs.
  PaperEq15,
};

std::string_view to_string(GradientMode mode);

class LossConfig {
 public:
  LossConfig(std::size_t num_classes, double lambda = 1.0,
             GradientMode mode = GradientMode::AnalyticOfEq13);

  std::size_t num_classes() const { return num_classes_; }
  double lambda() const { return lambda_; }
  double sigma() const { return mprl_sigma(num_classes_); }
  GradientMode gradient_mode() const { return mode_; }

  LossConfig with_lambda(double lambda) const { return LossConfig(num_classes_, lambda, mode_); }

 private:
  std::size_t num_classes_;
  double lambda_;
  GradientMode mode_;
};

struct LossOutput {
  double value = 0.0;
  std::vector<double> grad_logits;
};

// Softmax cross-entropy against ground-truth class c:
//   value = -X_c + log sum_j e^{X_j},  grad_k = p_k - [k == c].
LossOutput real_ce_loss(std::span<const double> logits, std::size_t cls);

// Uniform-target loss: value = -(1/K) sum_k X_k + log sum_j e^{X_j},
// grad_k = p_k - 1/K.
LossOutput lsro_loss(std::span<const double> logits);

// value = -lambda*sigma * sum_k (alpha_k/K) * (X_k - log sum_j e^{X_j}).
// alpha is treated as a constant; no gradient flows through the ranking.
LossOutput mprl_generated_loss(std::span<const double> logits, const RankWeights& alpha,
                               const LossConfig& cfg);

// Loss of a generated sample against any virtual label, without the lambda
// factor. MpRL labels include sigma; AllInOne expects logits of width K+1.
LossOutput virtual_label_loss(std::span<const double> logits, const VirtualLabel& label,
                              GradientMode mode = GradientMode::AnalyticOfEq13);

enum class Origin { Real, Generated };

struct LossTerm {
  std::span<const double> logits;
  VirtualLabel label;  // GroundTruth for real samples
  Origin origin = Origin::Real;
};

struct CombinedLoss {
  double value = 0.0;  // mean(l1 terms) + lambda * mean(l2 terms)
  double l1 = 0.0;     // mean real-sample loss
  double l2 = 0.0;     // mean generated-sample loss, unscaled by lambda
  std::size_t num_real = 0;
  std::size_t num_generated = 0;  // generated terms that contributed
  std::vector<std::vector<double>> grads;  // d value / d logits, per term
};

// Batch objective. Real terms are averaged into l1; generated terms are
// averaged into l2 only while generated_active is set, otherwise their
// gradients are exactly zero.
CombinedLoss combined_loss(std::span<const LossTerm> batch, const LossConfig& cfg,
                           bool generated_active);

}  // namespace mprl
