#include "mprl/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <string>

#include "mprl/error.hpp"
#include "mprl/text_io.hpp"

namespace mprl {

namespace {

// Independent generator per (seed, purpose) pair.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kMeansStream = 0x6d65616e;
constexpr std::uint64_t kSamplesStream = 0x73616d70;
constexpr std::uint64_t kGeneratedStream = 0x67656e65;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "query") return Split::Query;
  if (s == "gallery") return Split::Gallery;
  throw Error(ErrorKind::ParseError, "unknown split tag '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    case Split::Gallery: return "gallery";
  }
  return "unknown";
}

std::size_t Dataset::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      samples.begin(), samples.end(), [&](const Sample& s) { return s.split == split; }));
}

std::vector<const Sample*> Dataset::select(Split split) const {
  std::vector<const Sample*> out;
  for (const Sample& s : samples) {
    if (s.split == split) out.push_back(&s);
  }
  return out;
}

void Dataset::validate() const {
  std::set<std::uint64_t> ids;
  for (const Sample& s : samples) {
    if (s.features.size() != feature_dim) {
      throw Error(ErrorKind::InvalidDimension,
                  "sample " + std::to_string(s.id) + " has " + std::to_string(s.features.size()) +
                      " features, dataset declares " + std::to_string(feature_dim));
    }
    if (s.real_class && *s.real_class >= num_classes) {
      throw Error(ErrorKind::InvalidClass, "sample " + std::to_string(s.id) + " class out of range");
    }
    if (!ids.insert(s.id).second) {
      throw Error(ErrorKind::InvalidState, "duplicate sample id " + std::to_string(s.id));
    }
  }
}

std::vector<std::vector<double>> class_means(const RealDataConfig& cfg) {
  if (cfg.num_classes < 2) throw Error(ErrorKind::InvalidConfig, "need K >= 2 classes");
  if (cfg.dim < 2) throw Error(ErrorKind::InvalidConfig, "need dim >= 2");
  if (!(cfg.cluster_spread >= 0.0) || !(cfg.box_half_width > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "cluster_spread must be >= 0 and box width > 0");
  }

  const double min_sep = 4.0 * cfg.cluster_spread;
  const double min_sep_sq = min_sep * min_sep;
  std::mt19937_64 rng = stream_rng(cfg.seed, kMeansStream);
  std::uniform_real_distribution<double> coord(-cfg.box_half_width, cfg.box_half_width);

  std::vector<std::vector<double>> means;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < cfg.max_placement_attempts && !placed; ++attempt) {
      std::vector<double> candidate(cfg.dim);
      for (double& v : candidate) v = coord(rng);
      placed = std::all_of(means.begin(), means.end(), [&](const std::vector<double>& m) {
        return squared_distance(m, candidate) >= min_sep_sq;
      });
      if (placed) means.push_back(std::move(candidate));
    }
    if (!placed) {
      throw Error(ErrorKind::GenerationFailure,
                  "could not place class " + std::to_string(c) + " of " +
                      std::to_string(cfg.num_classes) + " with separation " +
                      text::format_fixed(min_sep, 4) + " inside [-" +
                      text::format_fixed(cfg.box_half_width, 4) + ", " +
                      text::format_fixed(cfg.box_half_width, 4) + "]^" + std::to_string(cfg.dim) +
                      " after " + std::to_string(cfg.max_placement_attempts) +
                      " attempts; lower cluster_spread or raise dim");
    }
  }
  return means;
}

Dataset make_real_dataset(const RealDataConfig& cfg) {
  if (cfg.per_class < 4) throw Error(ErrorKind::InvalidConfig, "need per_class >= 4");
  const auto means = class_means(cfg);

  std::mt19937_64 rng = stream_rng(cfg.seed, kSamplesStream);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n_train = cfg.per_class / 2;
  const std::size_t rest = cfg.per_class - n_train;
  const std::size_t n_query = std::clamp<std::size_t>(cfg.query_views, 1, rest - 1);

  Dataset data{cfg.num_classes, cfg.dim, {}};
  data.samples.reserve(cfg.num_classes * cfg.per_class);
  std::uint64_t next_id = 0;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    for (std::size_t i = 0; i < cfg.per_class; ++i) {
      Sample s;
      s.id = next_id++;
      s.real_class = c;
      s.split = i < n_train ? Split::Train : (i < n_train + n_query ? Split::Query : Split::Gallery);
      s.features = means[c];
      if (cfg.cluster_spread > 0.0) {
        for (double& v : s.features) v += cfg.cluster_spread * noise(rng);
      }
      data.samples.push_back(std::move(s));
    }
  }
  return data;
}

GeneratedData make_generated_dataset(const Dataset& real, const GeneratedDataConfig& cfg) {
  if (cfg.count == 0) throw Error(ErrorKind::InvalidConfig, "generated count must be >= 1");
  if (cfg.mix_size < 2 || cfg.mix_size > real.num_classes) {
    throw Error(ErrorKind::InvalidConfig, "mix_size must be in [2, K]");
  }
  if (!(cfg.noise >= 0.0)) throw Error(ErrorKind::InvalidConfig, "noise must be >= 0");
  if (!(cfg.concentration > 0.0) || !std::isfinite(cfg.concentration)) {
    throw Error(ErrorKind::InvalidConfig, "concentration must be > 0");
  }

  std::vector<std::vector<const Sample*>> train_by_class(real.num_classes);
  std::uint64_t next_id = 0;
  for (const Sample& s : real.samples) {
    next_id = std::max(next_id, s.id + 1);
    if (s.split == Split::Train && s.real_class) train_by_class[*s.real_class].push_back(&s);
  }
  std::vector<std::size_t> populated;
  for (std::size_t c = 0; c < real.num_classes; ++c) {
    if (!train_by_class[c].empty()) populated.push_back(c);
  }
  if (populated.empty()) {
    throw Error(ErrorKind::GenerationFailure, "real dataset has no training samples");
  }
  if (populated.size() < cfg.mix_size) {
    throw Error(ErrorKind::GenerationFailure,
                "only " + std::to_string(populated.size()) + " classes have training samples; mix_size is " +
                    std::to_string(cfg.mix_size));
  }

  std::mt19937_64 rng = stream_rng(cfg.seed, kGeneratedStream);
  std::gamma_distribution<double> gamma(cfg.concentration, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  GeneratedData out;
  out.data = Dataset{real.num_classes, real.feature_dim, {}};
  out.data.samples.reserve(cfg.count);
  out.provenance.reserve(cfg.count);

  for (std::size_t n = 0; n < cfg.count; ++n) {
    std::vector<std::size_t> classes;
    std::sample(populated.begin(), populated.end(), std::back_inserter(classes), cfg.mix_size, rng);

    MixRecord record;
    std::vector<const Sample*> sources;
    double total = 0.0;
    for (std::size_t c : classes) {
      const auto& pool = train_by_class[c];
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const Sample* src = pool[pick(rng)];
      sources.push_back(src);
      record.source_ids.push_back(src->id);
      record.source_classes.push_back(c);
      const double w = cfg.weighting == MixWeighting::Equal ? 1.0 : gamma(rng);
      record.weights.push_back(w);
      total += w;
    }
    for (double& w : record.weights) w /= total;

    Sample s;
    s.id = next_id++;
    s.split = Split::Train;
    s.features.assign(real.feature_dim, 0.0);
    for (std::size_t j = 0; j < classes.size(); ++j) {
      for (std::size_t d = 0; d < real.feature_dim; ++d) {
        s.features[d] += record.weights[j] * sources[j]->features[d];
      }
    }
    if (cfg.noise > 0.0) {
      for (double& v : s.features) v += cfg.noise * gauss(rng);
    }
    out.data.samples.push_back(std::move(s));
    out.provenance.push_back(std::move(record));
  }
  return out;
}

void write_dataset(const Dataset& data, std::ostream& out) {
  out << "mprl-dataset 1 " << data.num_classes << ' ' << data.feature_dim << ' '
      << data.samples.size() << ' ' << data.count(Split::Train) << ' '
      << data.count(Split::Query) << ' ' << data.count(Split::Gallery) << '\n';
  for (const Sample& s : data.samples) {
    out << s.id << ' ' << to_string(s.split) << ' ' << (s.is_generated() ? "generated" : "real")
        << ' ' << (s.real_class ? static_cast<long long>(*s.real_class) : -1LL);
    for (double v : s.features) out << ' ' << text::format_double(v);
    out << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "dataset file is empty");
  const auto header = text::split_whitespace(line);
  if (header.size() != 8 || header[0] != "mprl-dataset" || header[1] != "1") {
    throw Error(ErrorKind::ParseError, "line 1: expected 'mprl-dataset 1 K dim n train query gallery'");
  }
  Dataset data;
  data.num_classes = static_cast<std::size_t>(text::parse_int(header[2]));
  data.feature_dim = static_cast<std::size_t>(text::parse_int(header[3]));
  const auto n = static_cast<std::size_t>(text::parse_int(header[4]));
  data.samples.reserve(n);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto tok = text::split_whitespace(line);
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (tok.size() != 4 + data.feature_dim) {
      throw Error(ErrorKind::ParseError, where + "expected " + std::to_string(4 + data.feature_dim) +
                                             " fields, found " + std::to_string(tok.size()));
    }
    Sample s;
    s.id = static_cast<std::uint64_t>(text::parse_int(tok[0]));
    s.split = parse_split(tok[1]);
    const long long cls = text::parse_int(tok[3]);
    if (tok[2] == "real") {
      if (cls < 0) throw Error(ErrorKind::ParseError, where + "real sample without class");
      s.real_class = static_cast<std::size_t>(cls);
    } else if (tok[2] == "generated") {
      if (cls != -1) throw Error(ErrorKind::ParseError, where + "generated sample carries a class");
    } else {
      throw Error(ErrorKind::ParseError, where + "unknown origin '" + std::string(tok[2]) + "'");
    }
    s.features.reserve(data.feature_dim);
    for (std::size_t d = 0; d < data.feature_dim; ++d) {
      s.features.push_back(text::parse_double(tok[4 + d]));
    }
    data.samples.push_back(std::move(s));
  }
  if (data.samples.size() != n) {
    throw Error(ErrorKind::ParseError, "header declares " + std::to_string(n) + " samples, found " +
                                           std::to_string(data.samples.size()));
  }
  data.validate();
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidState, "cannot write " + path.string());
  write_dataset(data, out);
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidState, "cannot read " + path.string());
  return read_dataset(in);
}

}  // namespace mprl
