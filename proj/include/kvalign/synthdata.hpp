#pragma once

#include "kvalign/fewshot.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kvalign {

/// Synthetic stand-in for backbone, text-encoder and text-to-image features.
/// Noise levels are L2 magnitudes: a Gaussian perturbation with noise s has
/// per-coordinate standard deviation s / sqrt(dim).
struct GeneratorConfig {
  std::size_t class_pool = 64;
  std::size_t dim = 64;
  std::size_t token_count = 9;
  double support_noise = 1.0;
  double query_noise = 1.0;
  double text_shift = 0.5;       ///< L2 distance of the text descriptor from the class center
  double synthetic_shift = 0.5;  ///< L2 distance of each synthetic sample from the class center
  std::uint64_t seed = 0;
  double max_center_cosine = 0.5;
  std::size_t retry_budget = 1000;
  /// Synthetic candidates generated per class before top-K selection against
  /// the text descriptor; 0 means exactly K (no selection).
  std::size_t synthetic_candidates = 0;

  void validate() const;
};

/// Base classes train; novel classes are disjoint and used for held-out
/// evaluation and validation.
enum class Split : std::uint64_t { Base = 0, Novel = 1 };

/// Class centers with their fixed per-class text descriptors.
struct ClassBank {
  Split split = Split::Base;
  std::vector<Embedding> centers;
  std::vector<Embedding> text;
};

enum class Modality { Support, Query, Text, Synthetic };

struct EmbeddingRecord {
  std::int64_t class_id = 0;
  Modality modality = Modality::Support;
  std::vector<double> vector;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

namespace synthdata {

/// class_pool unit vectors with pairwise cosine below max_center_cosine.
/// Throws SeparationUnsatisfiable once a center exceeds the retry budget.
std::vector<Embedding> gen_class_centers(const GeneratorConfig& cfg, Split split = Split::Base);

ClassBank make_class_bank(const GeneratorConfig& cfg, Split split);

/// Seed of the index-th episode drawn for a purpose (training, validation...).
std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index);

/// Samples N distinct classes of the bank and builds an N-way K-shot episode
/// with M queries per class. Everything emitted is unit-normalized.
Episode gen_episode(const GeneratorConfig& cfg, const ClassBank& bank, std::size_t n_way, std::size_t k_shot,
                    std::size_t query_per_class, std::uint64_t episode_seed);

std::string modality_name(Modality m);
Modality parse_modality(const std::string& name);

/// Support samples are written as their pooled features.
std::vector<EmbeddingRecord> episode_records(const Episode& episode);

/// Line-oriented JSON: a header {"format","dim","count"} then one
/// {"class_id","modality","vector"} object per line.
void save_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path);

}  // namespace synthdata
}  // namespace kvalign
