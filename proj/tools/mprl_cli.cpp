// mprl: experiment harness for virtual-label training on synthetic data.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 check failure.
// MPRL_VERBOSE=0|1|2 controls progress output on stderr.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mprl/error.hpp"
#include "mprl/experiment.hpp"
#include "mprl/gradcheck.hpp"
#include "mprl/retrieval.hpp"
#include "mprl/text_io.hpp"
#include "mprl/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheck = 3;

int verbosity() {
  const char* v = std::getenv("MPRL_VERBOSE");
  return v ? std::atoi(v) : 1;
}

void info(const std::string& msg) {
  if (verbosity() >= 1) std::cerr << msg << '\n';
}

mprl::ExperimentSpec load_spec(const std::string& path, const std::vector<std::uint64_t>& seed_override) {
  mprl::ExperimentSpec spec = mprl::load_experiment_spec(path);
  if (!seed_override.empty()) spec.seeds = seed_override;
  return spec;
}

int cmd_run(const std::string& spec_path, const std::string& out_override,
            const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
  const mprl::ExperimentSpec spec = load_spec(spec_path, seeds);
  const fs::path out = out_override.empty() ? spec.output_dir : fs::path(out_override);
  const auto cells = mprl::expand_grid(spec);
  info("running " + std::to_string(cells.size()) + " cells into " + out.string());
  const mprl::RunSummary summary = mprl::run_experiment(spec, out, jobs);
  info("wrote " + (out / "summary.csv").string());
  if (summary.failures > 0) {
    std::cerr << summary.failures << " of " << summary.cells << " cells failed; see "
              << (out / "failures.txt").string() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_gradcheck(const std::vector<std::size_t>& classes, std::size_t trials, double tolerance,
                  std::uint64_t seed) {
  mprl::GradcheckOptions opts;
  opts.class_counts = classes;
  opts.trials = trials;
  opts.tolerance = tolerance;
  opts.seed = seed;
  const mprl::GradcheckReport report = mprl::run_gradcheck(opts);
  mprl::print_gradcheck(report, std::cout);
  return report.all_passed() ? kExitOk : kExitCheck;
}

int cmd_trace(const std::string& spec_path, const std::string& out_override, std::size_t samples,
              const std::vector<std::uint64_t>& seeds) {
  const mprl::ExperimentSpec spec = load_spec(spec_path, seeds);
  const fs::path out = out_override.empty() ? spec.output_dir : fs::path(out_override);
  const std::size_t count = *std::max_element(spec.generated_counts.begin(), spec.generated_counts.end());
  const mprl::Cell cell{spec.strategies.front(), count, spec.seeds.front()};
  const mprl::CellData data = mprl::build_cell_data(spec, cell);

  std::size_t tracked = samples;
  if (tracked > data.generated.data.samples.size()) {
    tracked = data.generated.data.samples.size();
    std::cerr << "warning: requested " << samples << " samples but only " << tracked
              << " generated samples exist; clipping\n";
  }

  fs::create_directories(out);
  std::ofstream traj(out / "trajectory.csv");
  std::ofstream sources(out / "trace_sources.csv");
  sources << "sample_id,source_classes,weights\n";
  if (tracked == 0) {
    traj << "sample_id,epoch,argmax_class\n";
    return kExitOk;
  }

  mprl::TrainConfig cfg = mprl::cell_train_config(spec, cell);
  cfg.track_samples = tracked;
  info("tracing " + std::to_string(tracked) + " samples under " + cell.name());
  const mprl::TrainResult result = mprl::train(data.real, data.generated.data, cfg);
  mprl::write_trajectory_csv(result.history, traj);
  for (std::size_t i = 0; i < tracked; ++i) {
    const auto& rec = data.generated.provenance[i];
    sources << data.generated.data.samples[i].id << ',';
    for (std::size_t j = 0; j < rec.source_classes.size(); ++j) {
      sources << (j ? " " : "") << rec.source_classes[j];
    }
    sources << ',';
    for (std::size_t j = 0; j < rec.weights.size(); ++j) {
      sources << (j ? " " : "") << mprl::text::format_fixed(rec.weights[j], 6);
    }
    sources << '\n';
  }
  return kExitOk;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_override,
                 const std::vector<std::uint64_t>& seeds) {
  const mprl::ExperimentSpec spec = load_spec(spec_path, seeds);
  const fs::path out = out_override.empty() ? spec.output_dir : fs::path(out_override);
  const std::size_t count = *std::max_element(spec.generated_counts.begin(), spec.generated_counts.end());
  fs::create_directories(out);
  for (std::uint64_t seed : spec.seeds) {
    const mprl::CellData data = mprl::build_cell_data(spec, {mprl::Strategy::LSRO, count, seed});
    const std::string suffix = "_s" + std::to_string(seed) + ".txt";
    mprl::write_dataset(data.real, out / ("real" + suffix));
    mprl::write_dataset(data.generated.data, out / ("generated_n" + std::to_string(count) + suffix));
    info("wrote datasets for seed " + std::to_string(seed));
  }
  return kExitOk;
}

int cmd_eval(const std::string& query_path, const std::string& gallery_path, const std::string& out_path) {
  const mprl::EmbeddingSet queries = mprl::read_embeddings(fs::path(query_path));
  const mprl::EmbeddingSet gallery = mprl::read_embeddings(fs::path(gallery_path));
  const mprl::EvalReport report =
      mprl::evaluate(mprl::pairwise_sq_euclidean(queries, gallery), queries.labels, gallery.labels);
  const std::string json = mprl::to_json(report);
  if (out_path.empty()) {
    std::cout << json;
  } else {
    std::ofstream(out_path) << json;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual-label training experiments on synthetic data"};
  app.require_subcommand(1);

  std::string spec_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;

  auto* run = app.add_subcommand("run", "train and evaluate every cell of an experiment grid");
  run->add_option("--spec", spec_path, "experiment spec file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (overrides output_dir)");
  run->add_option("--seed", seeds, "run only these seeds");
  run->add_option("--jobs", jobs, "parallel cells")->check(CLI::PositiveNumber);

  std::vector<std::size_t> classes{2, 5, 10, 751};
  std::size_t trials = 100;
  double tolerance = 1e-6;
  std::uint64_t check_seed = 20180802;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");
  gradcheck->add_option("--classes", classes, "class counts K to check")->delimiter(',');
  gradcheck->add_option("--trials", trials, "random logit draws per K")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tolerance", tolerance, "max allowed error");
  gradcheck->add_option("--seed", check_seed, "RNG seed");

  std::size_t samples = 2;
  auto* trace = app.add_subcommand("trace", "record per-epoch argmax class of generated samples");
  trace->add_option("--spec", spec_path, "experiment spec file")->required()->check(CLI::ExistingFile);
  trace->add_option("--out", out_dir, "output directory");
  trace->add_option("--samples", samples, "number of generated samples to track");
  trace->add_option("--seed", seeds, "seed to trace (first one is used)");

  auto* gen = app.add_subcommand("gen-data", "write the real and generated dataset files");
  gen->add_option("--spec", spec_path, "experiment spec file")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "output directory");
  gen->add_option("--seed", seeds, "seeds to generate");

  std::string query_path;
  std::string gallery_path;
  std::string report_path;
  auto* eval = app.add_subcommand("eval", "CMC/mAP report from embedding files");
  eval->add_option("--query", query_path, "query embedding file")->required()->check(CLI::ExistingFile);
  eval->add_option("--gallery", gallery_path, "gallery embedding file")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", report_path, "write the JSON report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return cmd_run(spec_path, out_dir, seeds, jobs);
    if (*gradcheck) return cmd_gradcheck(classes, trials, tolerance, check_seed);
    if (*trace) return cmd_trace(spec_path, out_dir, samples, seeds);
    if (*gen) return cmd_gen_data(spec_path, out_dir, seeds);
    if (*eval) return cmd_eval(query_path, gallery_path, report_path);
  } catch (const mprl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool validation = e.kind() == mprl::ErrorKind::ParseError ||
                            e.kind() == mprl::ErrorKind::InvalidConfig;
    return validation ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
