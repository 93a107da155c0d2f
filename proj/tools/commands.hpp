#pragma once

#include "kvalign/cip.hpp"
#include "kvalign/config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace kvalign::cli {

/// Values shared by all subcommands, after flag parsing.
struct Options {
  std::optional<std::filesystem::path> config_path;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = ".";

  std::optional<std::size_t> episodes;
  std::optional<double> u;
  std::optional<double> grid_step;
  std::optional<std::string> kernel;
  std::optional<double> sigma;
  std::optional<double> tau;
  std::optional<std::string> loss_variant;
  std::optional<std::string> anchor;

  std::string prompt_variant = "summary";
  std::string class_name;
  std::vector<std::string> images;
  std::string endpoint;
  std::string model;
  double timeout_seconds = 30.0;
  int retries = 3;

  std::filesystem::path checkpoint;
  std::size_t count = 100;
  std::size_t instances = 200;
  bool inject_bug = false;
};

/// Config file (if any) with command-line overrides applied.
RunConfig resolve(const Options& opt);

int identities(const Options& opt);
int gradcheck(const Options& opt);
int train(const Options& opt);
int eval(const Options& opt);
int ablate(const Options& opt);
int sweep_u(const Options& opt);
int gen_data(const Options& opt);
int gen_prompt(const Options& opt);
int describe(const Options& opt);

}  // namespace kvalign::cli
