#include "mprl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <thread>

#include "mprl/error.hpp"
#include "mprl/text_io.hpp"

namespace mprl {

namespace {

std::vector<std::string_view> split_list(std::string_view value) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    const std::size_t end = comma == std::string_view::npos ? value.size() : comma;
    const std::string_view item = text::trim(value.substr(start, end - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::size_t parse_count(std::string_view v) {
  const long long n = text::parse_int(v);
  if (n < 0) throw Error(ErrorKind::ParseError, "expected a nonnegative integer, got '" + std::string(v) + "'");
  return static_cast<std::size_t>(n);
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw Error(ErrorKind::ParseError, "expected a boolean, got '" + std::string(v) + "'");
}

TiePolicy parse_tie_policy(std::string_view v) {
  if (v == "AverageRank" || v == "average") return TiePolicy::AverageRank;
  if (v == "CompetitionOrder" || v == "competition") return TiePolicy::CompetitionOrder;
  throw Error(ErrorKind::ParseError, "unknown tie_policy '" + std::string(v) + "'");
}

GradientMode parse_gradient_mode(std::string_view v) {
  if (v == "AnalyticOfEq13" || v == "analytic") return GradientMode::AnalyticOfEq13;
  if (v == "PaperEq15" || v == "paper") return GradientMode::PaperEq15;
  throw Error(ErrorKind::ParseError, "unknown gradient_mode '" + std::string(v) + "'");
}

MixWeighting parse_weighting(std::string_view v) {
  if (v == "dirichlet") return MixWeighting::Dirichlet;
  if (v == "equal") return MixWeighting::Equal;
  throw Error(ErrorKind::ParseError, "unknown weighting '" + std::string(v) + "'");
}

using Setter = std::function<void(ExperimentSpec&, std::string_view)>;

const std::map<std::string, std::map<std::string, Setter>>& spec_keys() {
  static const std::map<std::string, std::map<std::string, Setter>> keys = {
      {"dataset",
       {
           {"classes", [](ExperimentSpec& s, std::string_view v) { s.dataset.num_classes = parse_count(v); }},
           {"per_class", [](ExperimentSpec& s, std::string_view v) { s.dataset.per_class = parse_count(v); }},
           {"dim", [](ExperimentSpec& s, std::string_view v) { s.dataset.dim = parse_count(v); }},
           {"cluster_spread", [](ExperimentSpec& s, std::string_view v) { s.dataset.cluster_spread = text::parse_double(v); }},
           {"query_views", [](ExperimentSpec& s, std::string_view v) { s.dataset.query_views = parse_count(v); }},
           {"box_half_width", [](ExperimentSpec& s, std::string_view v) { s.dataset.box_half_width = text::parse_double(v); }},
       }},
      {"generated",
       {
           {"mix_size", [](ExperimentSpec& s, std::string_view v) { s.generated.mix_size = parse_count(v); }},
           {"noise", [](ExperimentSpec& s, std::string_view v) { s.generated.noise = text::parse_double(v); }},
           {"weighting", [](ExperimentSpec& s, std::string_view v) { s.generated.weighting = parse_weighting(v); }},
           {"concentration", [](ExperimentSpec& s, std::string_view v) { s.generated.concentration = text::parse_double(v); }},
       }},
      {"train",
       {
           {"epochs", [](ExperimentSpec& s, std::string_view v) { s.train.epochs = parse_count(v); }},
           {"batch_size", [](ExperimentSpec& s, std::string_view v) { s.train.batch_size = parse_count(v); }},
           {"lr_initial", [](ExperimentSpec& s, std::string_view v) { s.train.lr_initial = text::parse_double(v); }},
           {"lr_after_decay", [](ExperimentSpec& s, std::string_view v) { s.train.lr_after_decay = text::parse_double(v); }},
           {"decay_epoch", [](ExperimentSpec& s, std::string_view v) { s.train.decay_epoch = parse_count(v); }},
           {"momentum", [](ExperimentSpec& s, std::string_view v) { s.train.momentum = text::parse_double(v); }},
           {"lambda", [](ExperimentSpec& s, std::string_view v) { s.train.lambda = text::parse_double(v); }},
           {"warmup_epoch", [](ExperimentSpec& s, std::string_view v) { s.train.warmup_epoch = parse_count(v); }},
           {"tie_policy", [](ExperimentSpec& s, std::string_view v) { s.train.tie_policy = parse_tie_policy(v); }},
           {"gradient_mode", [](ExperimentSpec& s, std::string_view v) { s.train.gradient_mode = parse_gradient_mode(v); }},
           {"dropout_rate", [](ExperimentSpec& s, std::string_view v) { s.train.dropout_rate = text::parse_double(v); }},
           {"hidden",
            [](ExperimentSpec& s, std::string_view v) {
              s.train.hidden.clear();
              for (auto item : split_list(v)) s.train.hidden.push_back(parse_count(item));
            }},
           {"activation", [](ExperimentSpec& s, std::string_view v) { s.train.activation = parse_activation(v); }},
           {"init_scale", [](ExperimentSpec& s, std::string_view v) { s.train.init_scale = text::parse_double(v); }},
           {"track_samples", [](ExperimentSpec& s, std::string_view v) { s.train.track_samples = parse_count(v); }},
       }},
      {"experiment",
       {
           {"strategies",
            [](ExperimentSpec& s, std::string_view v) {
              s.strategies.clear();
              for (auto item : split_list(v)) s.strategies.push_back(parse_strategy(item));
            }},
           {"generated_counts",
            [](ExperimentSpec& s, std::string_view v) {
              s.generated_counts.clear();
              for (auto item : split_list(v)) s.generated_counts.push_back(parse_count(item));
            }},
           {"seeds",
            [](ExperimentSpec& s, std::string_view v) {
              s.seeds.clear();
              for (auto item : split_list(v)) s.seeds.push_back(static_cast<std::uint64_t>(parse_count(item)));
            }},
           {"output_dir", [](ExperimentSpec& s, std::string_view v) { s.output_dir = std::string(v); }},
           {"record_wall_time", [](ExperimentSpec& s, std::string_view v) { s.record_wall_time = parse_bool(v); }},
       }},
  };
  return keys;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void ExperimentSpec::validate() const {
  if (strategies.empty()) throw Error(ErrorKind::InvalidConfig, "experiment needs at least one strategy");
  if (seeds.empty()) throw Error(ErrorKind::InvalidConfig, "experiment needs at least one seed");
  if (generated_counts.empty()) {
    throw Error(ErrorKind::InvalidConfig, "experiment needs at least one generated count");
  }
  for (Strategy s : strategies) {
    TrainConfig cfg = train;
    cfg.strategy = s;
    cfg.validate();
  }
  if (dataset.num_classes < 2 || dataset.per_class < 4 || dataset.dim < 2) {
    throw Error(ErrorKind::InvalidConfig, "dataset needs classes >= 2, per_class >= 4, dim >= 2");
  }
  if (generated.mix_size < 2 || generated.mix_size > dataset.num_classes) {
    throw Error(ErrorKind::InvalidConfig, "generated.mix_size must be in [2, classes]");
  }
}

ExperimentSpec parse_experiment_spec(std::istream& in, std::string_view source) {
  ExperimentSpec spec;
  const auto& keys = spec_keys();
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& msg) {
    throw Error(ErrorKind::ParseError, std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = text::trim(view);
    if (view.empty()) continue;

    if (view.front() == '[') {
      if (view.back() != ']') fail("unterminated section header");
      section = std::string(text::trim(view.substr(1, view.size() - 2)));
      if (!keys.count(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value'");
    if (section.empty()) fail("key outside of any section");
    const std::string key(text::trim(view.substr(0, eq)));
    const std::string_view value = text::trim(view.substr(eq + 1));
    const auto& section_keys = keys.at(section);
    const auto it = section_keys.find(key);
    if (it == section_keys.end()) fail("unknown key '" + key + "' in [" + section + "]");
    if (value.empty()) fail("empty value for '" + key + "'");
    try {
      it->second(spec, value);
    } catch (const Error& e) {
      fail("'" + key + "': " + e.what());
    }
  }

  try {
    spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, std::string(source) + ":" + std::to_string(line_no) +
                                           ": invalid spec: " + e.what());
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, path.string() + ": cannot open spec file");
  return parse_experiment_spec(in, path.string());
}

std::string Cell::name() const {
  return std::string(to_string(strategy)) + "_n" + std::to_string(n_generated) + "_s" +
         std::to_string(seed);
}

std::vector<Cell> expand_grid(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  for (Strategy s : spec.strategies) {
    if (!uses_generated(s)) {
      for (std::uint64_t seed : spec.seeds) cells.push_back({s, 0, seed});
      continue;
    }
    for (std::size_t n : spec.generated_counts) {
      for (std::uint64_t seed : spec.seeds) cells.push_back({s, n, seed});
    }
  }
  return cells;
}

CellData build_cell_data(const ExperimentSpec& spec, const Cell& cell) {
  RealDataConfig rc = spec.dataset;
  rc.seed = cell.seed;
  CellData data{make_real_dataset(rc), {}};
  data.generated.data = Dataset{rc.num_classes, rc.dim, {}};
  if (cell.n_generated > 0) {
    GeneratedDataConfig gc = spec.generated;
    gc.count = cell.n_generated;
    gc.seed = cell.seed;
    data.generated = make_generated_dataset(data.real, gc);
  }
  return data;
}

TrainConfig cell_train_config(const ExperimentSpec& spec, const Cell& cell) {
  TrainConfig cfg = spec.train;
  cfg.strategy = cell.strategy;
  cfg.seed = cell.seed;
  return cfg;
}

CellOutcome run_cell(const ExperimentSpec& spec, const Cell& cell) {
  CellOutcome outcome;
  outcome.cell = cell;
  const auto start = std::chrono::steady_clock::now();
  try {
    const CellData data = build_cell_data(spec, cell);
    TrainResult trained = train(data.real, data.generated.data, cell_train_config(spec, cell));
    outcome.report = evaluate_model(trained.params, data.real);
    outcome.history = std::move(trained.history);
    outcome.params = std::move(trained.params);
    outcome.ok = true;
  } catch (const std::exception& e) {
    outcome.error = e.what();
  }
  outcome.wall_seconds = seconds_since(start);
  return outcome;
}

std::vector<CellOutcome> run_cells(const ExperimentSpec& spec, const std::vector<Cell>& cells,
                                   std::size_t jobs) {
  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
      outcomes[i] = run_cell(spec, cells[i]);
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, cells.size()));
  if (n_threads == 1) {
    worker();
    return outcomes;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  return outcomes;
}

void write_cell_artifacts(const ExperimentSpec& spec, const CellOutcome& outcome,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "history.csv");
    write_history_csv(outcome.history, out);
  }
  if (!outcome.ok) return;
  {
    std::ofstream out(dir / "report.json");
    out << to_json(outcome.report);
  }
  save_params(*outcome.params, dir / "params.txt");
  const CellData data = build_cell_data(spec, outcome.cell);
  write_embeddings(extract_embeddings(*outcome.params, data.real, Split::Query),
                   dir / "query_embeddings.txt");
  write_embeddings(extract_embeddings(*outcome.params, data.real, Split::Gallery),
                   dir / "gallery_embeddings.txt");
}

void write_summary_csv(const std::vector<CellOutcome>& outcomes, bool record_wall_time,
                       std::ostream& out) {
  out << "strategy,n_generated,seed,rank1,mAP,l1_final,l2_final,wall_seconds\n";
  const auto wall = [&](double seconds) {
    return record_wall_time ? text::format_fixed(seconds, 3) : std::string("NA");
  };

  struct Acc {
    std::size_t n = 0;
    double rank1 = 0, map = 0, l1 = 0, l2 = 0, seconds = 0;
  };
  std::vector<std::pair<std::string, std::size_t>> group_order;
  std::map<std::pair<std::string, std::size_t>, Acc> groups;

  for (const CellOutcome& o : outcomes) {
    if (!o.ok) continue;
    const std::string strategy(to_string(o.cell.strategy));
    const double l1 = o.history.epochs.empty() ? 0.0 : o.history.epochs.back().l1;
    const double l2 = o.history.epochs.empty() ? 0.0 : o.history.epochs.back().l2;
    out << strategy << ',' << o.cell.n_generated << ',' << o.cell.seed << ','
        << text::format_fixed(o.report.rank1, 6) << ',' << text::format_fixed(o.report.mAP, 6) << ','
        << text::format_fixed(l1, 6) << ',' << text::format_fixed(l2, 6) << ',' << wall(o.wall_seconds)
        << '\n';
    const auto key = std::make_pair(strategy, o.cell.n_generated);
    if (!groups.count(key)) group_order.push_back(key);
    Acc& acc = groups[key];
    ++acc.n;
    acc.rank1 += o.report.rank1;
    acc.map += o.report.mAP;
    acc.l1 += l1;
    acc.l2 += l2;
    acc.seconds += o.wall_seconds;
  }
  for (const auto& key : group_order) {
    const Acc& a = groups.at(key);
    const double n = static_cast<double>(a.n);
    out << key.first << ',' << key.second << ",mean," << text::format_fixed(a.rank1 / n, 6) << ','
        << text::format_fixed(a.map / n, 6) << ',' << text::format_fixed(a.l1 / n, 6) << ','
        << text::format_fixed(a.l2 / n, 6) << ',' << wall(a.seconds / n) << '\n';
  }
}

RunSummary run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir,
                          std::size_t jobs) {
  spec.validate();
  const std::vector<Cell> cells = expand_grid(spec);
  const std::vector<CellOutcome> outcomes = run_cells(spec, cells, jobs);

  std::filesystem::create_directories(out_dir / "cells");
  RunSummary summary{cells.size(), 0};
  std::string failures;
  for (const CellOutcome& o : outcomes) {
    try {
      write_cell_artifacts(spec, o, out_dir / "cells" / o.cell.name());
    } catch (const std::exception& e) {
      failures += o.cell.name() + ": artifact write failed: " + e.what() + "\n";
      ++summary.failures;
      continue;
    }
    if (!o.ok) {
      failures += o.cell.name() + ": " + o.error + "\n";
      ++summary.failures;
    }
  }
  {
    std::ofstream out(out_dir / "summary.csv");
    write_summary_csv(outcomes, spec.record_wall_time, out);
  }
  const auto manifest = out_dir / "failures.txt";
  if (summary.failures > 0) {
    std::ofstream out(manifest);
    out << failures;
  } else {
    std::filesystem::remove(manifest);
  }
  return summary;
}

}  // namespace mprl
