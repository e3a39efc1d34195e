#include "mprl/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>

#include "mprl/error.hpp"
#include "mprl/text_io.hpp"

namespace mprl {

void EmbeddingSet::validate() const {
  if (labels.size() != ids.size() || vectors.size() != ids.size()) {
    throw Error(ErrorKind::InvalidDimension, "embedding set arrays have different lengths");
  }
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen.insert(ids[i]).second) {
      throw Error(ErrorKind::InvalidState, "duplicate embedding id " + std::to_string(ids[i]));
    }
    if (vectors[i].size() != dim()) {
      throw Error(ErrorKind::InvalidDimension, "embedding vectors differ in length");
    }
    for (double v : vectors[i]) {
      if (!std::isfinite(v)) throw Error(ErrorKind::InvalidState, "non-finite embedding entry");
    }
  }
}

DistanceMatrix pairwise_sq_euclidean(const EmbeddingSet& queries, const EmbeddingSet& gallery) {
  if (queries.size() > 0 && gallery.size() > 0 && queries.dim() != gallery.dim()) {
    throw Error(ErrorKind::InvalidDimension, "query dim " + std::to_string(queries.dim()) +
                                                 " != gallery dim " + std::to_string(gallery.dim()));
  }
  DistanceMatrix d{queries.size(), gallery.size(), std::vector<double>(queries.size() * gallery.size())};
  for (std::size_t i = 0; i < d.rows; ++i) {
    const auto& q = queries.vectors[i];
    for (std::size_t j = 0; j < d.cols; ++j) {
      const auto& g = gallery.vectors[j];
      double s = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) {
        const double diff = q[k] - g[k];
        s += diff * diff;
      }
      d.values[i * d.cols + j] = s;
    }
  }
  return d;
}

EvalReport evaluate(const DistanceMatrix& distances, std::span<const std::size_t> query_labels,
                    std::span<const std::size_t> gallery_labels) {
  if (query_labels.size() != distances.rows || gallery_labels.size() != distances.cols) {
    throw Error(ErrorKind::InvalidDimension, "label counts do not match the distance matrix");
  }
  if (distances.rows == 0) throw Error(ErrorKind::ProtocolViolation, "no queries");

  EvalReport report;
  report.cmc.assign(distances.cols, 0.0);
  std::vector<std::size_t> order(distances.cols);
  double ap_sum = 0.0;

  for (std::size_t q = 0; q < distances.rows; ++q) {
    const auto row = distances.row(q);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });

    std::size_t hits = 0;
    std::size_t first_hit = distances.cols;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (gallery_labels[order[r]] != query_labels[q]) continue;
      ++hits;
      if (first_hit == distances.cols) first_hit = r;
      precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits == 0) {
      throw Error(ErrorKind::ProtocolViolation,
                  "query " + std::to_string(q) + " class " + std::to_string(query_labels[q]) +
                      " has no gallery match");
    }
    ap_sum += precision_sum / static_cast<double>(hits);
    for (std::size_t k = first_hit; k < report.cmc.size(); ++k) report.cmc[k] += 1.0;
  }

  const double nq = static_cast<double>(distances.rows);
  for (double& c : report.cmc) c /= nq;
  report.mAP = ap_sum / nq;
  report.rank1 = report.cmc.empty() ? 0.0 : report.cmc.front();

  if (!(report.mAP >= 0.0 && report.mAP <= 1.0)) {
    throw Error(ErrorKind::InvalidState, "mAP outside [0, 1]");
  }
  if (!std::is_sorted(report.cmc.begin(), report.cmc.end())) {
    throw Error(ErrorKind::InvalidState, "CMC curve is not monotone");
  }
  return report;
}

EmbeddingSet extract_embeddings(const ModelParams& params, const Dataset& data, Split split) {
  EmbeddingSet set;
  for (const Sample& s : data.samples) {
    if (s.split != split || !s.real_class) continue;
    set.ids.push_back(s.id);
    set.labels.push_back(*s.real_class);
    set.vectors.push_back(forward(params, s.features).embedding);
  }
  return set;
}

EvalReport evaluate_model(const ModelParams& params, const Dataset& data) {
  const EmbeddingSet queries = extract_embeddings(params, data, Split::Query);
  const EmbeddingSet gallery = extract_embeddings(params, data, Split::Gallery);
  return evaluate(pairwise_sq_euclidean(queries, gallery), queries.labels, gallery.labels);
}

std::string to_json(const EvalReport& report) {
  std::string out = "{\"rank1\": " + text::format_fixed(report.rank1, 6) +
                    ", \"mAP\": " + text::format_fixed(report.mAP, 6) + ", \"cmc\": [";
  for (std::size_t i = 0; i < report.cmc.size(); ++i) {
    if (i) out += ", ";
    out += text::format_fixed(report.cmc[i], 6);
  }
  out += "]}\n";
  return out;
}

void write_embeddings(const EmbeddingSet& set, std::ostream& out) {
  set.validate();
  out << "mprl-embeddings 1 " << set.size() << ' ' << set.dim() << '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << set.ids[i] << ' ' << set.labels[i];
    for (double v : set.vectors[i]) out << ' ' << text::format_double(v);
    out << '\n';
  }
}

EmbeddingSet read_embeddings(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "embedding file is empty");
  const auto header = text::split_whitespace(line);
  if (header.size() != 4 || header[0] != "mprl-embeddings" || header[1] != "1") {
    throw Error(ErrorKind::ParseError, "line 1: expected 'mprl-embeddings 1 n dim'");
  }
  const auto n = static_cast<std::size_t>(text::parse_int(header[2]));
  const auto dim = static_cast<std::size_t>(text::parse_int(header[3]));
  EmbeddingSet set;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto tok = text::split_whitespace(line);
    if (tok.size() != dim + 2) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(dim + 2) + " fields");
    }
    set.ids.push_back(static_cast<std::uint64_t>(text::parse_int(tok[0])));
    const long long label = text::parse_int(tok[1]);
    if (label < 0) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": negative class");
    }
    set.labels.push_back(static_cast<std::size_t>(label));
    std::vector<double> v;
    v.reserve(dim);
    for (std::size_t d = 0; d < dim; ++d) v.push_back(text::parse_double(tok[2 + d]));
    set.vectors.push_back(std::move(v));
  }
  if (set.size() != n) {
    throw Error(ErrorKind::ParseError, "header declares " + std::to_string(n) + " rows, found " +
                                           std::to_string(set.size()));
  }
  set.validate();
  return set;
}

void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidState, "cannot write " + path.string());
  write_embeddings(set, out);
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidState, "cannot read " + path.string());
  return read_embeddings(in);
}

}  // namespace mprl
