#pragma once

// Virtual-label construction for generated (unlabeled) samples.
//
// Class indices are 0-based throughout. A K-class problem has pre-defined
// classes 0..K-1; the all-in-one scheme adds one extra class at index K.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace mprl {

// Predicted class probabilities. Entries are finite, nonnegative and sum to 1
// within kSumTolerance. Softmax of extreme logits may underflow individual
// entries to exactly 0, so strict positivity is not enforced.
class ProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit ProbVector(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }

 private:
  std::vector<double> values_;
};

enum class TiePolicy {
  CompetitionOrder,  // stable sort, tied entries keep input order
  AverageRank,       // tied entries share the mean of their positions
};

struct RankWeights {
  std::vector<double> alpha;
  TiePolicy tie_policy = TiePolicy::AverageRank;

  std::size_t size() const { return alpha.size(); }
};

enum class Scheme { GroundTruth, AllInOne, OneHotPseudo, LSRO, MpRL };

std::string_view to_string(Scheme scheme);
std::string_view to_string(TiePolicy policy);

struct VirtualLabel {
  Scheme scheme = Scheme::GroundTruth;
  std::vector<double> weights;
  std::optional<std::size_t> source_class;

  bool operator==(const VirtualLabel&) const = default;
};

// Max-shifted softmax. Throws InvalidDimension on empty input.
ProbVector softmax(std::span<const double> logits);

// log(sum_j exp(x_j)), max-shifted.
double log_sum_exp(std::span<const double> logits);

VirtualLabel ground_truth_label(std::size_t num_classes, std::size_t cls);
VirtualLabel lsro_label(std::size_t num_classes);
VirtualLabel all_in_one_label(std::size_t num_classes);

// One-hot at argmax(p); ties go to the lowest index.
VirtualLabel one_hot_pseudo_label(const ProbVector& p);

// alpha_k is the 1-based position of p_k in the ascending sort of p, so the
// least likely class gets 1 and the most likely gets K. Under either policy
// sum(alpha) == K(K+1)/2.
RankWeights mprl_alpha(const ProbVector& p, TiePolicy policy = TiePolicy::AverageRank);

// weights_k = alpha_k / K. Left unnormalized; the 2/(1+K) factor is applied
// by the loss.
VirtualLabel mprl_label(const RankWeights& alpha, std::size_t num_classes);

// Normalization factor 2/(1+K) that brings the MpRL mass sum(alpha_k/K) to 1.
inline double mprl_sigma(std::size_t num_classes) {
  return 2.0 / (1.0 + static_cast<double>(num_classes));
}

std::size_t argmax(std::span<const double> values);

}  // namespace mprl
