#pragma once

#include "kvalign/fewshot.hpp"
#include "kvalign/fusion.hpp"
#include "kvalign/losses.hpp"
#include "kvalign/synthdata.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kvalign {

enum class LossVariant { None, InfoNCE, LinearVolume, KernelVolume };

std::string loss_variant_name(LossVariant v);
LossVariant parse_loss_variant(const std::string& name);
std::string anchor_name(Anchor a);
Anchor parse_anchor(const std::string& name);
std::string fusion_mode_name(FusionMode m);
FusionMode parse_fusion_mode(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t episodes_per_epoch = 50;
  double learning_rate = 5e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossVariant loss_variant = LossVariant::KernelVolume;
  KernelSpec kernel = KernelSpec::rbf(1.0);
  double temperature = 0.2;
  Anchor anchor = Anchor::Text;
  FusionMode fusion_mode = FusionMode::GateAndAttention;
  bool use_text_prompt = true;
  bool use_vision_prompt = true;
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t query_per_class = 15;
  int hidden = 32;
  int heads = 4;
  std::uint64_t seed = 0;

  void validate() const;
  FusionConfig fusion() const { return {fusion_mode, use_text_prompt}; }
  InferenceConfig inference() const { return {fusion(), use_vision_prompt, temperature}; }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double total_loss = 0.0;
  double ce_loss = 0.0;
  double align_loss = 0.0;
  double train_accuracy = 0.0;
  std::size_t degenerate_batches = 0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

using MetricsTrace = std::vector<EpochMetrics>;

namespace trainer {

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;     ///< summed over queries
  double align = 0.0;  ///< the contrastive term that was added (0 for None)
  double accuracy = 0.0;
  std::size_t degenerate = 0;  ///< alignment item terms skipped
  ModelParams gradient;        ///< d total / d params (empty when not requested)
};

/// Sum of query cross-entropies against the text-enhanced prototypes plus the
/// configured alignment term over the episode's per-class triplets.
LossBreakdown total_loss(const Episode& episode, const ModelParams& params, const TrainConfig& cfg,
                         bool with_gradient = true);

struct AdamState {
  ModelParams first_moment;
  ModelParams second_moment;
  std::size_t step = 0;

  static AdamState zeros(const ModelParams& like);
};

/// Adam with decoupled weight decay (the decay multiplies parameters by
/// 1 - lr * weight_decay before the adaptive step).
void optimizer_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
                    double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

ModelParams initial_params(const TrainConfig& cfg, const GeneratorConfig& gen);

struct TrainResult {
  ModelParams params;
  MetricsTrace trace;
};

/// Episodic training on base classes. Deterministic for fixed configs.
TrainResult train(const TrainConfig& cfg, const GeneratorConfig& gen);

/// Episode purposes; each draws from its own seeded stream.
enum Purpose : std::uint64_t { kTrainEpisodes = 1, kValidationEpisodes = 2, kHeldOutEpisodes = 3 };

/// count episodes from the novel split for a purpose.
std::vector<Episode> novel_episodes(const GeneratorConfig& gen, const TrainConfig& cfg, Purpose purpose,
                                    std::size_t count);

struct EvalSummary {
  double mean = 0.0;
  double ci95 = 0.0;  ///< 1.96 * sample std / sqrt(n)
  std::size_t episodes = 0;

  friend bool operator==(const EvalSummary&, const EvalSummary&) = default;
};

EvalSummary summarize(const std::vector<double>& accuracies);

/// One ablation arm: overrides applied on top of the base TrainConfig.
struct Variant {
  std::string name;
  LossVariant loss_variant = LossVariant::KernelVolume;
  KernelSpec kernel = KernelSpec::rbf(1.0);
  Anchor anchor = Anchor::Text;
  bool use_text_prompt = true;
  bool use_vision_prompt = true;
  FusionMode fusion_mode = FusionMode::GateAndAttention;

  TrainConfig apply(TrainConfig base) const;
};

struct AblationConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t heldout_episodes = 200;
  std::size_t validation_episodes = 50;
  double grid_step = 0.1;
  /// Negative: pick u per run by grid search on validation episodes.
  double fixed_u = -1.0;
};

struct AblationRow {
  std::string name;
  EvalSummary summary;
  std::vector<double> per_seed_mean;
  std::vector<double> selected_u;

  friend bool operator==(const AblationRow&, const AblationRow&) = default;
};

/// Trains every variant on every seed (each seed defines its own synthetic
/// world) and evaluates all variants of a seed on the same held-out episodes.
std::vector<AblationRow> ablate(const TrainConfig& base, const GeneratorConfig& gen,
                                const std::vector<Variant>& variants, const AblationConfig& acfg);

/// Seed-specific synthetic world used by ablate().
GeneratorConfig world_for_seed(const GeneratorConfig& gen, std::uint64_t seed);

/// Line-oriented checkpoint: a format line, the head count, then per tensor
/// "tensor <name> <rows> <cols>" followed by one line of values per row.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace trainer
}  // namespace kvalign
