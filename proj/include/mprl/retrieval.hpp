#pragma once

// Retrieval evaluation: squared-Euclidean ranking of a gallery for each
// query, then CMC and mean average precision.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mprl/net.hpp"
#include "mprl/synthgen.hpp"

namespace mprl {

struct EmbeddingSet {
  std::vector<std::uint64_t> ids;
  std::vector<std::size_t> labels;
  std::vector<std::vector<double>> vectors;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().size(); }
  // No duplicate ids, parallel arrays, uniform finite vectors.
  void validate() const;
};

struct DistanceMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols, cols);
  }
};

struct EvalReport {
  double rank1 = 0.0;
  double mAP = 0.0;
  std::vector<double> cmc;  // cmc[k]: fraction of queries with a match in the top k+1
};

DistanceMatrix pairwise_sq_euclidean(const EmbeddingSet& queries, const EmbeddingSet& gallery);

// Gallery is ranked ascending by distance, ties by gallery index. AP is the
// mean of precision at each relevant rank. Throws ProtocolViolation if a
// query class is missing from the gallery.
EvalReport evaluate(const DistanceMatrix& distances, std::span<const std::size_t> query_labels,
                    std::span<const std::size_t> gallery_labels);

// Eval-mode embeddings for every real sample in the given split.
EmbeddingSet extract_embeddings(const ModelParams& params, const Dataset& data, Split split);

EvalReport evaluate_model(const ModelParams& params, const Dataset& data);

// {"rank1": r, "mAP": m, "cmc": [...]} with 6 decimal places.
std::string to_json(const EvalReport& report);

// Embedding file: header "mprl-embeddings 1 <n> <dim>", then lines
// "<id> <class> <values...>".
void write_embeddings(const EmbeddingSet& set, std::ostream& out);
EmbeddingSet read_embeddings(std::istream& in);
void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet read_embeddings(const std::filesystem::path& path);

}  // namespace mprl
