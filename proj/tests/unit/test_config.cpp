#include "kvalign/config.hpp"
#include "kvalign/errors.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace kvalign;
using nlohmann::json;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto dir = std::filesystem::temp_directory_path() / "kvalign_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  RunConfig cfg;
  cfg.generator.dim = 32;
  cfg.generator.text_shift = 0.75;
  cfg.train.kernel = KernelSpec::polynomial(0.5, 3);
  cfg.train.anchor = Anchor::Vision;
  cfg.train.loss_variant = LossVariant::InfoNCE;
  cfg.eval.u = 0.3;
  cfg.ablation.seeds = {7, 8};
  cfg.ablation.fixed_u = 0.4;
  cfg.variants = prompt_variants(cfg.train);
  RunConfig back;
  apply_json(back, to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(back.train.kernel, cfg.train.kernel);
  EXPECT_EQ(back.ablation.seeds, cfg.ablation.seeds);
}

TEST(Config, PartialOverlayKeepsDefaults) {
  RunConfig cfg;
  apply_json(cfg, json::parse(R"({"train": {"epochs": 3, "kernel": "linear"}, "generator": {"seed": 9}})"));
  EXPECT_EQ(cfg.train.epochs, 3u);
  EXPECT_TRUE(cfg.train.kernel.is_linear());
  EXPECT_EQ(cfg.generator.seed, 9u);
  EXPECT_EQ(cfg.generator.dim, GeneratorConfig{}.dim);
  apply_json(cfg, json::parse(R"({"train": {"kernel": {"name": "rbf", "sigma": 2.0}}})"));
  EXPECT_EQ(cfg.train.kernel, KernelSpec::rbf(2.0));
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  RunConfig cfg;
  EXPECT_THROW(apply_json(cfg, json::parse(R"({"trian": {}})")), FormatError);
  EXPECT_THROW(apply_json(cfg, json::parse(R"({"train": {"epoch": 3}})")), FormatError);
  EXPECT_THROW(apply_json(cfg, json::parse(R"({"train": {"epochs": "three"}})")), FormatError);
  EXPECT_THROW(apply_json(cfg, json::parse(R"({"train": {"loss_variant": "triplet"}})")), Error);
  EXPECT_THROW(apply_json(cfg, json::parse(R"([1, 2])")), FormatError);
}

TEST(Config, LoadErrors) {
  EXPECT_THROW(load_config("/nonexistent/kvalign.json"), IoError);
  EXPECT_THROW(load_config(write_temp("bad.json", "{ not json")), FormatError);
  const RunConfig cfg = load_config(write_temp("ok.json", R"({"eval": {"episodes": 12}})"));
  EXPECT_EQ(cfg.eval.episodes, 12u);
}

TEST(Config, VariantSets) {
  const auto loss = loss_variants(TrainConfig{});
  ASSERT_EQ(loss.size(), 4u);
  EXPECT_EQ(loss[0].loss_variant, LossVariant::None);
  EXPECT_EQ(loss[3].loss_variant, LossVariant::KernelVolume);
  const auto prompts = prompt_variants(TrainConfig{});
  ASSERT_EQ(prompts.size(), 3u);
  EXPECT_TRUE(prompts[0].use_text_prompt && prompts[0].use_vision_prompt);
  EXPECT_TRUE(prompts[1].use_text_prompt && !prompts[1].use_vision_prompt);
  EXPECT_TRUE(!prompts[2].use_text_prompt && prompts[2].use_vision_prompt);
  const TrainConfig applied = prompts[2].apply(TrainConfig{});
  EXPECT_FALSE(applied.use_text_prompt);
}

TEST(Config, ManifestContents) {
  RunManifest m;
  m.command = "train";
  m.seed = 3;
  m.started = utc_timestamp();
  m.finished = utc_timestamp();
  m.outputs = {"checkpoint.txt"};
  const json j = m.to_json();
  EXPECT_EQ(j.at("command"), "train");
  EXPECT_EQ(j.at("seed"), 3);
  EXPECT_EQ(j.at("outputs").size(), 1u);
  EXPECT_EQ(m.started.size(), 20u);
  EXPECT_EQ(m.started.back(), 'Z');
}

TEST(Config, StandardToyFileMatchesHelper) {
  const RunConfig file = load_config(std::filesystem::path(KVALIGN_SOURCE_DIR) / "configs" / "standard_toy.json");
  EXPECT_EQ(to_json(file), to_json(standard_toy_config()));
}
