#pragma once

// Central finite-difference checks of the loss gradients.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mprl {

// |a - n| / max(1, |a|, |n|): relative for entries of magnitude above 1 and
// absolute below, so near-zero gradient entries do not blow up the ratio.
double scaled_error(double analytic, double numeric);

// d f / d x_k by central differences with step h.
std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h = 1e-6);

struct GradcheckRow {
  std::string loss;
  std::size_t num_classes = 0;
  std::size_t trials = 0;
  double max_error = 0.0;
  // Informational rows measure how far a closed form is from the true
  // derivative; they never fail the run.
  bool informational = false;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  double tolerance = 0.0;
  bool all_passed() const;
};

struct GradcheckOptions {
  std::vector<std::size_t> class_counts = {2, 5, 10, 751};
  std::size_t trials = 100;
  double tolerance = 1e-6;
  double logit_stddev = 3.0;
  double step = 1e-6;
  std::uint64_t seed = 20180802;
  bool include_paper_mode = true;
};

// Checks softmax cross-entropy, the uniform-target loss and the MpRL
// generated loss (alpha fixed, random lambda) against finite differences.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

void print_gradcheck(const GradcheckReport& report, std::ostream& out);

}  // namespace mprl
