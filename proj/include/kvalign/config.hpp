#pragma once

#include "kvalign/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace kvalign {

struct EvalOptions {
  std::size_t episodes = 200;
  double u = 0.5;
  double grid_step = 0.1;
};

/// Everything a CLI run can be configured with. Sections absent from a file
/// keep their defaults; unknown keys are rejected.
struct RunConfig {
  GeneratorConfig generator;
  TrainConfig train;
  EvalOptions eval;
  trainer::AblationConfig ablation;
  std::vector<trainer::Variant> variants;  ///< empty: the four loss variants

  void validate() const;
};

nlohmann::json to_json(const KernelSpec& k);
nlohmann::json to_json(const GeneratorConfig& g);
nlohmann::json to_json(const TrainConfig& t);
nlohmann::json to_json(const trainer::Variant& v);
nlohmann::json to_json(const RunConfig& c);

/// Overlays the keys present in j onto cfg. Throws FormatError for unknown
/// keys or wrongly typed values.
void apply_json(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// 5-way 1-shot, dim 64, five seeds and 200 held-out episodes, with noise
/// levels at which both the text and the synthetic modality carry signal.
/// configs/standard_toy.json holds the same values.
RunConfig standard_toy_config();

/// None, InfoNCE, LinearVolume and KernelVolume on top of base.
std::vector<trainer::Variant> loss_variants(const TrainConfig& base);
/// Both prompts vs. text-only vs. vision-only, all with the base alignment.
std::vector<trainer::Variant> prompt_variants(const TrainConfig& base);

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

/// UTC time as ISO-8601.
std::string utc_timestamp();

}  // namespace kvalign
