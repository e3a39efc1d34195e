// Acceptance suite: one [PASS]/[FAIL] line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mprl/error.hpp"
#include "mprl/experiment.hpp"
#include "mprl/gradcheck.hpp"
#include "mprl/labels.hpp"
#include "mprl/losses.hpp"
#include "mprl/net.hpp"
#include "mprl/retrieval.hpp"
#include "mprl/synthgen.hpp"
#include "mprl/trainer.hpp"

using namespace mprl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

ProbVector random_probs(std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 3.0);
  std::vector<double> x(k);
  for (double& v : x) v = nd(rng);
  // Occasional exact ties.
  if (k > 2 && rng() % 4 == 0) x[1] = x[0];
  return softmax(x);
}

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckOptions opts;  // K in {2,5,10,751}, 100 trials, tol 1e-6
  const GradcheckReport report = run_gradcheck(opts);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (const auto& row : report.rows) {
    if (!row.informational) worst = std::max(worst, row.max_error);
  }
  return {report.all_passed() && secs < 30.0,
          "max error " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

Outcome normalization_identity() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (TiePolicy policy : {TiePolicy::CompetitionOrder, TiePolicy::AverageRank}) {
    for (std::size_t k = 1; k <= 1000; ++k) {
      const VirtualLabel label = mprl_label(mprl_alpha(random_probs(k, rng), policy), k);
      double sum = 0.0;
      for (double w : label.weights) sum += w;
      worst = std::max(worst, std::abs(mprl_sigma(k) * sum - 1.0));
    }
  }
  return {worst <= 1e-12, "max deviation " + fmt(worst)};
}

Outcome lsro_degeneracy() {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  double worst = 0.0;
  for (std::size_t k : {2, 10, 100}) {
    const LossConfig cfg(k, 1.0);
    for (int t = 0; t < 100; ++t) {
      const std::vector<double> logits(k, shift(rng));
      const RankWeights alpha = mprl_alpha(softmax(logits), TiePolicy::AverageRank);
      const double a = mprl_generated_loss(logits, alpha, cfg).value;
      const double b = lsro_loss(logits).value;
      worst = std::max(worst, std::abs(a - b));
    }
  }
  return {worst <= 1e-12, "max |difference| " + fmt(worst)};
}

Outcome gradient_discrepancy() {
  const std::vector<double> x{0.0, std::log(2.0)};
  const RankWeights alpha{{1.0, 2.0}, TiePolicy::AverageRank};
  const auto analytic = mprl_generated_loss(x, alpha, LossConfig(2, 1.0, GradientMode::AnalyticOfEq13)).grad_logits;
  const auto paper = mprl_generated_loss(x, alpha, LossConfig(2, 1.0, GradientMode::PaperEq15)).grad_logits;
  const double e1 = std::max(std::abs(analytic[0]), std::abs(analytic[1]));
  const double e2 = std::max(std::abs(paper[0] + 2.0 / 9.0), std::abs(paper[1] + 2.0 / 9.0));
  return {e1 <= 1e-12 && e2 <= 1e-12,
          "analytic [" + fmt(analytic[0]) + ", " + fmt(analytic[1]) + "], PaperEq15 form [" + fmt(paper[0], 8) +
              ", " + fmt(paper[1], 8) + "]"};
}

// Rank position of gallery g counting strictly-closer items and equal
// items with lower index.
std::size_t oracle_rank(std::span<const double> d, std::size_t g) {
  std::size_t r = 1;
  for (std::size_t j = 0; j < d.size(); ++j) r += (d[j] < d[g] || (d[j] == d[g] && j < g)) ? 1 : 0;
  return r;
}

Outcome metric_oracle() {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> nq_d(1, 10), ng_d(2, 15), cls(0, 3);
  std::uniform_int_distribution<int> coarse(0, 4);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t nq = nq_d(rng), ng = ng_d(rng);
    DistanceMatrix d{nq, ng, std::vector<double>(nq * ng)};
    // Coarse integer distances force plenty of ties.
    for (double& v : d.values) v = inst % 2 ? static_cast<double>(coarse(rng)) : std::ldexp(static_cast<double>(rng() >> 11), -53);
    std::vector<std::size_t> gl(ng), ql(nq);
    for (auto& c : gl) c = cls(rng);
    for (auto& c : ql) c = gl[rng() % ng];
    const EvalReport r = evaluate(d, ql, gl);

    double map = 0.0;
    std::vector<double> cmc(ng, 0.0);
    for (std::size_t q = 0; q < nq; ++q) {
      std::vector<std::size_t> ranks;
      for (std::size_t g = 0; g < ng; ++g) {
        if (gl[g] == ql[q]) ranks.push_back(oracle_rank(d.row(q), g));
      }
      double ap = 0.0;
      for (std::size_t rk : ranks) {
        ap += static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [&](std::size_t x) { return x <= rk; })) /
              static_cast<double>(rk);
      }
      map += ap / static_cast<double>(ranks.size()) / static_cast<double>(nq);
      const std::size_t first = *std::min_element(ranks.begin(), ranks.end());
      for (std::size_t k = first - 1; k < ng; ++k) cmc[k] += 1.0 / static_cast<double>(nq);
    }
    worst = std::max(worst, std::abs(map - r.mAP));
    for (std::size_t k = 0; k < ng; ++k) worst = std::max(worst, std::abs(cmc[k] - r.cmc[k]));
  }
  DistanceMatrix hand{1, 4, {0.1, 0.2, 0.3, 0.4}};
  const double ap = evaluate(hand, std::vector<std::size_t>{1}, std::vector<std::size_t>{1, 0, 1, 0}).mAP;
  const double hand_err = std::abs(ap - 5.0 / 6.0);
  return {worst <= 1e-12 && hand_err <= 1e-12,
          "max oracle deviation " + fmt(worst) + ", hand case AP " + fmt(ap, 12)};
}

Outcome warmup_gate() {
  RealDataConfig rc;
  rc.seed = 21;
  const Dataset real = make_real_dataset(rc);
  GeneratedDataConfig gc;
  gc.seed = 21;
  const GeneratedData gen = make_generated_dataset(real, gc);
  TrainConfig cfg;  // dMpRL_II, warmup 20, 50 epochs
  cfg.epochs = 25;
  cfg.seed = 21;
  const TrainResult r = train(real, gen.data, cfg);
  bool ok = r.history.epochs.size() == 25;
  double before = 0.0, min_after = INFINITY;
  for (const EpochRecord& e : r.history.epochs) {
    if (e.epoch < 20) {
      before = std::max(before, e.generated_grad_norm);
      ok = ok && e.generated_grad_norm == 0.0;
    } else {
      min_after = std::min(min_after, e.generated_grad_norm);
      ok = ok && e.generated_grad_norm > 0.0;
    }
  }
  return {ok, "epochs 1-19 max norm " + fmt(before) + ", epochs 20-25 min norm " + fmt(min_after)};
}

ExperimentSpec benchmark_spec() {
  ExperimentSpec spec;  // library defaults: K=8, dim 16, 50/class, 50 epochs
  spec.strategies.assign(std::begin(kAllStrategies), std::end(kAllStrategies));
  spec.generated_counts = {400};
  for (std::uint64_t s = 1; s <= 10; ++s) spec.seeds.push_back(s);
  return spec;
}

std::string history_csv(const CellOutcome& o) {
  std::ostringstream out;
  write_history_csv(o.history, out);
  return out.str();
}

Outcome determinism(const ExperimentSpec& spec) {
  bool ok = true;
  std::size_t checked = 0;
  for (Strategy s : {Strategy::dMpRL_II, Strategy::sMpRL, Strategy::dMpRL_I}) {
    const Cell cell{s, 400, 3};
    const CellOutcome a = run_cell(spec, cell);
    const CellOutcome b = run_cell(spec, cell);
    ok = ok && a.ok && b.ok && history_csv(a) == history_csv(b) && to_json(a.report) == to_json(b.report);
    ++checked;
  }
  return {ok, std::to_string(checked) + " cells rerun, history CSV and report JSON compared byte-wise"};
}

struct StrategyStats {
  std::vector<double> rank1, map;
  std::size_t at_ceiling = 0;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
}

// Runs the grid and prints one row per strategy. Returns the number of failed cells.
std::size_t run_table(const ExperimentSpec& spec, std::map<Strategy, StrategyStats>& by) {
  const std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::size_t failures = 0;
  for (const CellOutcome& o : run_cells(spec, expand_grid(spec), jobs)) {
    if (!o.ok) {
      ++failures;
      std::cout << "    cell " << o.cell.name() << " failed: " << o.error << '\n';
      continue;
    }
    StrategyStats& st = by[o.cell.strategy];
    st.rank1.push_back(o.report.rank1);
    st.map.push_back(o.report.mAP);
    st.at_ceiling += o.report.rank1 == 1.0 ? 1 : 0;
  }
  std::printf("    %-13s %5s %8s %8s %8s %8s\n", "strategy", "runs", "rank1", "sd", "mAP", "rank1=1");
  for (Strategy s : spec.strategies) {
    const StrategyStats& a = by[s];
    std::printf("    %-13s %5zu %8.4f %8.4f %8.4f %8zu\n", std::string(to_string(s)).c_str(), a.rank1.size(),
                mean_of(a.rank1), sd_of(a.rank1), mean_of(a.map), a.at_ceiling);
  }
  const double base = mean_of(by[Strategy::Baseline].rank1);
  const double lsro = mean_of(by[Strategy::LSRO].rank1);
  const double dm2 = mean_of(by[Strategy::dMpRL_II].rank1);
  std::printf("    direction dMpRL_II >= LSRO >= Baseline: %s (%.4f, %.4f, %.4f), not gated\n",
              (dm2 >= lsro && lsro >= base) ? "holds" : "does not hold", dm2, lsro, base);
  return failures;
}

Outcome benchmark(const ExperimentSpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();
  std::map<Strategy, StrategyStats> by;
  const std::size_t failures = run_table(spec, by);
  const double secs = seconds_since(t0);
  const double base = mean_of(by[Strategy::Baseline].rank1);
  const double dm2 = mean_of(by[Strategy::dMpRL_II].rank1);

  // The default data is close to the rank-1 ceiling, so the gate above says
  // little on its own. A harder variant is shown for context and not gated.
  ExperimentSpec hard = spec;
  hard.dataset.cluster_spread = 0.6;
  hard.dataset.query_views = 5;
  hard.strategies = {Strategy::Baseline, Strategy::LSRO, Strategy::dMpRL_II};
  std::printf("    harder data (spread %.2f, %zu queries per class), not gated:\n", hard.dataset.cluster_spread,
              hard.dataset.query_views);
  std::map<Strategy, StrategyStats> hard_by;
  run_table(hard, hard_by);

  const bool ok = failures == 0 && dm2 >= base - 0.005 && secs < 300.0;
  return {ok, "dMpRL_II " + fmt(dm2) + " vs Baseline " + fmt(base) + " (floor " + fmt(base - 0.005) + "), " +
                  std::to_string(expand_grid(spec).size()) + " cells in " + fmt(secs, 3) + " s"};
}

Outcome serialization() {
  const Dataset real = make_real_dataset({});
  const GeneratedData gen = make_generated_dataset(real, {});
  bool ok = true;
  for (const Dataset* d : {&real, &gen.data}) {
    std::stringstream buf;
    write_dataset(*d, buf);
    ok = ok && read_dataset(buf) == *d;
  }
  for (Activation act : {Activation::ReLU, Activation::Tanh}) {
    const std::vector<std::size_t> sizes{16, 64, 32, 9};
    const ModelParams p = init_params(sizes, 5, 1.7, act);
    std::stringstream buf;
    save_params(p, buf);
    const ModelParams q = load_params(buf);
    ok = ok && q == p;
    // Bit-level comparison on top of value equality.
    for (std::size_t l = 0; l < p.layers().size() && ok; ++l) {
      ok = std::memcmp(p.layers()[l].weights.data(), q.layers()[l].weights.data(),
                       p.layers()[l].weights.size() * sizeof(double)) == 0;
    }
  }
  return {ok, "real and generated datasets, ReLU and Tanh checkpoints"};
}

}  // namespace

int main() {
  const ExperimentSpec spec = benchmark_spec();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"normalization identity", normalization_identity},
      {"uniform-label degeneracy", lsro_degeneracy},
      {"closed-form gradient discrepancy", gradient_discrepancy},
      {"metric oracle equivalence", metric_oracle},
      {"warm-up gate", warmup_gate},
      {"determinism", [&] { return determinism(spec); }},
      {"synthetic benchmark", [&] { return benchmark(spec); }},
      {"serialization round-trips", serialization},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << (i + 1) << ' ' << criteria[i].first << ": " << o.detail
              << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (criteria.size() - failed) << '/' << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
