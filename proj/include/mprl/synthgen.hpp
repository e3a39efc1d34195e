#pragma once

// Seeded synthetic data: a K-class Gaussian "real" dataset with a
// train/query/gallery split, and an unlabeled "generated" set built as noisy
// convex mixtures of a few real training samples from distinct classes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace mprl {

enum class Split { Train, Query, Gallery };

std::string_view to_string(Split split);

struct Sample {
  std::uint64_t id = 0;
  Split split = Split::Train;
  std::optional<std::size_t> real_class;  // nullopt for generated samples
  std::vector<double> features;

  bool is_generated() const { return !real_class.has_value(); }
  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<Sample> samples;

  std::size_t count(Split split) const;
  std::vector<const Sample*> select(Split split) const;
  // Checks uniform feature width, unique ids and class ranges.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

struct RealDataConfig {
  std::size_t num_classes = 8;
  std::size_t per_class = 50;
  std::size_t dim = 16;
  double cluster_spread = 0.35;
  std::uint64_t seed = 1;
  // Queries drawn per class from the non-train half; clipped so that at
  // least one gallery sample per class remains.
  std::size_t query_views = 2;
  // Class means are placed in [-box_half_width, box_half_width]^dim.
  double box_half_width = 1.0;
  std::size_t max_placement_attempts = 10000;
};

// Class means are pairwise >= 4*cluster_spread apart. Per class, the first
// half of the samples are train, then query_views queries, the rest gallery.
Dataset make_real_dataset(const RealDataConfig& cfg);

// Class means placed by make_real_dataset for the same config.
std::vector<std::vector<double>> class_means(const RealDataConfig& cfg);

enum class MixWeighting { Dirichlet, Equal };

struct GeneratedDataConfig {
  std::size_t count = 400;
  std::size_t mix_size = 2;
  double noise = 0.05;
  std::uint64_t seed = 1;
  MixWeighting weighting = MixWeighting::Dirichlet;
  // Symmetric Dirichlet parameter; larger values pull weights toward equal.
  double concentration = 4.0;
};

// Diagnostic record of how a generated sample was built. Never passed to
// training.
struct MixRecord {
  std::vector<std::uint64_t> source_ids;
  std::vector<std::size_t> source_classes;
  std::vector<double> weights;
};

struct GeneratedData {
  Dataset data;  // all samples Split::Train, no class labels
  std::vector<MixRecord> provenance;  // parallel to data.samples
};

GeneratedData make_generated_dataset(const Dataset& real, const GeneratedDataConfig& cfg);

// Dataset text file: a header line
//   mprl-dataset 1 <K> <dim> <n_samples> <n_train> <n_query> <n_gallery>
// then one line per sample
//   <id> <train|query|gallery> <real|generated> <class or -1> <features...>
// Numbers use 17 significant digits and '.' as the decimal point.
void write_dataset(const Dataset& data, std::ostream& out);
Dataset read_dataset(std::istream& in);
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace mprl
