#pragma once

#include "kvalign/embedding.hpp"
#include "kvalign/fusion.hpp"

#include <cstddef>
#include <vector>

namespace kvalign {

struct LabeledTokens {
  std::size_t label = 0;
  TokenSet tokens;
};

struct LabeledEmbedding {
  std::size_t label = 0;
  Embedding embedding;
};

/// One N-way K-shot task. Support and query lists are class-major; labels are
/// 0..N-1 in the order classes were sampled.
struct Episode {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t query_per_class = 0;
  std::vector<LabeledTokens> support;             ///< N*K samples
  std::vector<LabeledEmbedding> query;            ///< N*M samples
  std::vector<Embedding> text_desc;               ///< N per-class text embeddings
  std::vector<std::vector<Embedding>> synthetic;  ///< N x K synthetic visual samples
  std::vector<std::size_t> class_ids;             ///< source class of each label

  /// Throws CountMismatch when counts or labels are inconsistent.
  void validate() const;
};

enum class PrototypeKind { Plain, Text, Vision, Combined };

struct PrototypeSet {
  std::vector<Embedding> per_class;
  PrototypeKind kind = PrototypeKind::Plain;
};

/// Convex-combination weight u in [0, 1].
class FusionFactor {
 public:
  explicit FusionFactor(double u);
  double value() const noexcept { return u_; }

 private:
  double u_;
};

/// What the inference path may use: the text path (through fusion) and the
/// synthetic samples. Disabling vision makes c_v the plain prototype.
struct InferenceConfig {
  FusionConfig fusion;
  bool use_vision = true;
  double temperature = 0.2;
};

namespace fewshot {

/// Normalized token mean of one support sample: the pooled support feature.
Embedding pooled_feature(const TokenSet& tokens);

/// Per-class pooled support features, N x K.
std::vector<std::vector<Embedding>> support_features(const Episode& episode);

/// Per-class mean, normalized. Throws EmptyClass for a class with no samples.
PrototypeSet prototypes(const std::vector<std::vector<Embedding>>& per_class);

/// Per class: the K real support features followed by the K synthetic ones.
std::vector<std::vector<Embedding>> enriched_support(const Episode& episode);

/// c_t: per class, fuse the class text with every support sample, average,
/// normalize.
PrototypeSet prototype_text(const Episode& episode, const ModelParams& params, const FusionConfig& cfg = {});

/// c_v: per-class mean over the enriched (K + K) set, normalized.
PrototypeSet prototype_vis(const Episode& episode);

/// Normalized mean of a class's synthetic samples (the triplet's Z_v).
Embedding aggregate_synthetic(const std::vector<Embedding>& samples);

/// normalize(u c_t + (1 - u) c_v) per class.
PrototypeSet combine_prototypes(const PrototypeSet& text, const PrototypeSet& vision, FusionFactor u);

/// Fraction of queries whose most cosine-similar prototype has their label.
double accuracy(const Episode& episode, const PrototypeSet& prototypes);

double evaluate_episode(const Episode& episode, const ModelParams& params, FusionFactor u, double tau,
                        const InferenceConfig& cfg = {});

/// Grid values 0, step, ..., 1. Throws InvalidArgument unless step divides 1.
std::vector<double> u_grid(double step);

struct SweepPoint {
  double u = 0.0;
  double accuracy = 0.0;
};

/// Mean accuracy over episodes at every grid u; prototypes are built once per
/// episode.
std::vector<SweepPoint> sweep_u(const std::vector<Episode>& episodes, const ModelParams& params, double step,
                                const InferenceConfig& cfg = {});

/// Grid u with the best mean accuracy, ties toward smaller u.
FusionFactor grid_search_u(const std::vector<Episode>& validation, const ModelParams& params, double tau,
                           double step, const InferenceConfig& cfg = {});
FusionFactor best_u(const std::vector<SweepPoint>& sweep);

/// The k candidates most cosine-similar to text, ties broken by input order.
std::vector<Embedding> select_top_k(const std::vector<Embedding>& candidates, const Embedding& text, std::size_t k);

}  // namespace fewshot
}  // namespace kvalign
