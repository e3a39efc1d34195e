#include "mprl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "mprl/error.hpp"
#include "mprl/labels.hpp"
#include "mprl/losses.hpp"
#include "mprl/text_io.hpp"

namespace mprl {

double scaled_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double up = f(probe);
    probe[k] = orig - h;
    const double down = f(probe);
    probe[k] = orig;
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

bool GradcheckReport::all_passed() const {
  return std::all_of(rows.begin(), rows.end(),
                     [](const GradcheckRow& r) { return r.informational || r.passed; });
}

namespace {

double max_scaled_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    worst = std::max(worst, scaled_error(analytic[k], numeric[k]));
  }
  return worst;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.trials == 0) throw Error(ErrorKind::InvalidConfig, "trials must be >= 1");
  GradcheckReport report;
  report.tolerance = options.tolerance;
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> logit_dist(0.0, options.logit_stddev);
  std::uniform_real_distribution<double> lambda_dist(0.05, 2.0);

  for (std::size_t k : options.class_counts) {
    if (k == 0) throw Error(ErrorKind::InvalidConfig, "class count must be >= 1");
    GradcheckRow ce{"softmax_ce", k, options.trials};
    GradcheckRow lsro{"lsro", k, options.trials};
    GradcheckRow mprl{"mprl_analytic", k, options.trials};
    GradcheckRow paper{"mprl_paper_eq15_divergence", k, options.trials, 0.0, true, true};
    std::uniform_int_distribution<std::size_t> class_dist(0, k - 1);

    for (std::size_t t = 0; t < options.trials; ++t) {
      std::vector<double> x(k);
      for (double& v : x) v = logit_dist(rng);

      const std::size_t c = class_dist(rng);
      const auto ce_out = real_ce_loss(x, c);
      const auto ce_fd = central_difference(
          [&](std::span<const double> z) { return real_ce_loss(z, c).value; }, x, options.step);
      ce.max_error = std::max(ce.max_error, max_scaled_error(ce_out.grad_logits, ce_fd));

      const auto lsro_out = lsro_loss(x);
      const auto lsro_fd = central_difference(
          [&](std::span<const double> z) { return lsro_loss(z).value; }, x, options.step);
      lsro.max_error = std::max(lsro.max_error, max_scaled_error(lsro_out.grad_logits, lsro_fd));

      const RankWeights alpha = mprl_alpha(softmax(x), TiePolicy::AverageRank);
      const LossConfig analytic(k, lambda_dist(rng), GradientMode::AnalyticOfEq13);
      const auto m_out = mprl_generated_loss(x, alpha, analytic);
      const auto m_fd = central_difference(
          [&](std::span<const double> z) { return mprl_generated_loss(z, alpha, analytic).value; },
          x, options.step);
      mprl.max_error = std::max(mprl.max_error, max_scaled_error(m_out.grad_logits, m_fd));

      if (options.include_paper_mode) {
        const LossConfig closed_form(k, analytic.lambda(), GradientMode::PaperEq15);
        const auto p_out = mprl_generated_loss(x, alpha, closed_form);
        paper.max_error = std::max(paper.max_error, max_scaled_error(p_out.grad_logits, m_fd));
      }
    }
    for (GradcheckRow* row : {&ce, &lsro, &mprl}) {
      row->passed = row->max_error < options.tolerance;
      report.rows.push_back(*row);
    }
    if (options.include_paper_mode) report.rows.push_back(paper);
  }
  return report;
}

void print_gradcheck(const GradcheckReport& report, std::ostream& out) {
  out << "loss,K,trials,max_error,status\n";
  for (const GradcheckRow& r : report.rows) {
    std::string status;
    if (r.informational) {
      status = "info: closed form is not the derivative of the forward loss";
    } else {
      status = r.passed ? "pass" : "FAIL";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", r.max_error);
    out << r.loss << ',' << r.num_classes << ',' << r.trials << ',' << buf << ',' << status << '\n';
  }
  out << "tolerance " << text::format_double(report.tolerance) << ": "
      << (report.all_passed() ? "all checks passed" : "some checks FAILED") << '\n';
}

}  // namespace mprl
