#pragma once

// Experiment grids: a sectioned key-value spec file expands into
// (strategy, generated count, seed) cells, each trained and evaluated
// independently; results are collected into a summary table.
//
// Spec format (one "key = value" per line, '#' starts a comment, lists are
// comma-separated):
//
//   [dataset]      classes, per_class, dim, cluster_spread, query_views, box_half_width
//   [generated]    mix_size, noise, weighting (dirichlet|equal), concentration
//   [train]        epochs, batch_size, lr_initial, lr_after_decay, decay_epoch,
//                  momentum, lambda, warmup_epoch, tie_policy, gradient_mode,
//                  dropout_rate, hidden, activation, init_scale, track_samples
//   [experiment]   strategies, generated_counts, seeds, output_dir, record_wall_time

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mprl/retrieval.hpp"
#include "mprl/synthgen.hpp"
#include "mprl/trainer.hpp"

namespace mprl {

struct ExperimentSpec {
  RealDataConfig dataset;         // seed is replaced per cell
  GeneratedDataConfig generated;  // count and seed are replaced per cell
  TrainConfig train;              // strategy and seed are replaced per cell
  std::vector<Strategy> strategies;
  std::vector<std::size_t> generated_counts = {0};
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir = "mprl-out";
  bool record_wall_time = false;

  void validate() const;
};

// Throws Error(ParseError) with "<source>:<line>: ..." messages.
ExperimentSpec parse_experiment_spec(std::istream& in, std::string_view source = "<spec>");
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

struct Cell {
  Strategy strategy = Strategy::Baseline;
  std::size_t n_generated = 0;
  std::uint64_t seed = 0;

  std::string name() const;  // e.g. "dMpRL_II_n400_s3"
  bool operator==(const Cell&) const = default;
};

// Strategies in spec order, then counts, then seeds. Baseline ignores the
// generated data, so it runs once per seed with n_generated = 0.
std::vector<Cell> expand_grid(const ExperimentSpec& spec);

struct CellData {
  Dataset real;
  GeneratedData generated;
};

// The real dataset depends only on the seed and the generated set only on
// (seed, count), so every strategy in a seed sees the same data.
CellData build_cell_data(const ExperimentSpec& spec, const Cell& cell);
TrainConfig cell_train_config(const ExperimentSpec& spec, const Cell& cell);

struct CellOutcome {
  Cell cell;
  bool ok = false;
  std::string error;
  EvalReport report;
  TrainHistory history;
  std::optional<ModelParams> params;
  double wall_seconds = 0.0;
};

CellOutcome run_cell(const ExperimentSpec& spec, const Cell& cell);

// Runs every cell with up to `jobs` worker threads. Outcomes come back in
// expand_grid order regardless of scheduling.
std::vector<CellOutcome> run_cells(const ExperimentSpec& spec, const std::vector<Cell>& cells,
                                   std::size_t jobs);

// Per-cell directory contents: history.csv, report.json, params.txt,
// query_embeddings.txt, gallery_embeddings.txt.
void write_cell_artifacts(const ExperimentSpec& spec, const CellOutcome& outcome,
                          const std::filesystem::path& dir);

// strategy,n_generated,seed,rank1,mAP,l1_final,l2_final,wall_seconds
// Per-seed rows in cell order, followed by one "mean" row per
// (strategy, n_generated). wall_seconds is "NA" unless record_wall_time.
void write_summary_csv(const std::vector<CellOutcome>& outcomes, bool record_wall_time,
                       std::ostream& out);

struct RunSummary {
  std::size_t cells = 0;
  std::size_t failures = 0;
};

// Runs the grid and writes cells/<name>/..., summary.csv and, when any cell
// failed, failures.txt under out_dir.
RunSummary run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                          std::size_t jobs);

}  // namespace mprl
