#include "mprl/labels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mprl/error.hpp"

namespace mprl {

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) {
    throw Error(ErrorKind::InvalidDimension, "probability vector is empty");
  }
  double sum = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorKind::InvalidDimension, "probability entry is negative or non-finite");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw Error(ErrorKind::InvalidDimension,
                "probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
}

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::GroundTruth: return "GroundTruth";
    case Scheme::AllInOne: return "AllInOne";
    case Scheme::OneHotPseudo: return "OneHotPseudo";
    case Scheme::LSRO: return "LSRO";
    case Scheme::MpRL: return "MpRL";
  }
  return "Unknown";
}

std::string_view to_string(TiePolicy policy) {
  return policy == TiePolicy::AverageRank ? "AverageRank" : "CompetitionOrder";
}

double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) {
    throw Error(ErrorKind::InvalidDimension, "logits are empty");
  }
  const double shift = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - shift);
  return shift + std::log(sum);
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw Error(ErrorKind::InvalidDimension, "logits are empty");
  }
  const double shift = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - shift);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return ProbVector(std::move(out));
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) {
    throw Error(ErrorKind::InvalidDimension, "argmax of empty vector");
  }
  // max_element returns the first maximum, which is the lowest-index rule.
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

VirtualLabel ground_truth_label(std::size_t num_classes, std::size_t cls) {
  if (num_classes == 0) throw Error(ErrorKind::InvalidDimension, "K must be >= 1");
  if (cls >= num_classes) {
    throw Error(ErrorKind::InvalidClass,
                "class " + std::to_string(cls) + " out of range for K=" + std::to_string(num_classes));
  }
  VirtualLabel label{Scheme::GroundTruth, std::vector<double>(num_classes, 0.0), cls};
  label.weights[cls] = 1.0;
  return label;
}

VirtualLabel lsro_label(std::size_t num_classes) {
  if (num_classes == 0) throw Error(ErrorKind::InvalidDimension, "K must be >= 1");
  return {Scheme::LSRO, std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)),
          std::nullopt};
}

VirtualLabel all_in_one_label(std::size_t num_classes) {
  if (num_classes == 0) throw Error(ErrorKind::InvalidDimension, "K must be >= 1");
  VirtualLabel label{Scheme::AllInOne, std::vector<double>(num_classes + 1, 0.0), num_classes};
  label.weights[num_classes] = 1.0;
  return label;
}

VirtualLabel one_hot_pseudo_label(const ProbVector& p) {
  const std::size_t cls = argmax(p.values());
  VirtualLabel label{Scheme::OneHotPseudo, std::vector<double>(p.size(), 0.0), cls};
  label.weights[cls] = 1.0;
  return label;
}

RankWeights mprl_alpha(const ProbVector& p, TiePolicy policy) {
  const std::size_t n = p.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

  RankWeights out{std::vector<double>(n), policy};
  if (policy == TiePolicy::CompetitionOrder) {
    for (std::size_t pos = 0; pos < n; ++pos) {
      out.alpha[order[pos]] = static_cast<double>(pos + 1);
    }
    return out;
  }

  // Runs of exactly equal probabilities occupy positions first+1..last+1.
  std::size_t first = 0;
  while (first < n) {
    std::size_t last = first;
    while (last + 1 < n && p[order[last + 1]] == p[order[first]]) ++last;
    const double mean_rank = 0.5 * static_cast<double>(first + last) + 1.0;
    for (std::size_t pos = first; pos <= last; ++pos) out.alpha[order[pos]] = mean_rank;
    first = last + 1;
  }
  return out;
}

VirtualLabel mprl_label(const RankWeights& alpha, std::size_t num_classes) {
  if (num_classes == 0 || alpha.size() != num_classes) {
    throw Error(ErrorKind::InvalidDimension,
                "alpha has length " + std::to_string(alpha.size()) + ", expected K=" +
                    std::to_string(num_classes));
  }
  VirtualLabel label{Scheme::MpRL, std::vector<double>(num_classes), std::nullopt};
  const double k = static_cast<double>(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) label.weights[i] = alpha.alpha[i] / k;
  return label;
}

}  // namespace mprl
