#include "commands.hpp"

#include "kvalign/errors.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

int main(int argc, char** argv) {
  using namespace kvalign;
  cli::Options opt;
  CLI::App app{"Kernel-volume alignment for few-shot classification on synthetic embeddings"};
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--config", opt.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", opt.seed, "Seed for training and the synthetic world");
  app.add_option("--out-dir", opt.out_dir, "Directory for output artifacts");
  app.add_option("--episodes", opt.episodes, "Evaluation episodes");
  app.add_option("--u", opt.u, "Fusion factor in [0, 1]");
  app.add_option("--grid-step", opt.grid_step, "Grid step for u sweeps");
  app.add_option("--kernel", opt.kernel, "linear, poly or rbf");
  app.add_option("--sigma", opt.sigma, "RBF bandwidth");
  app.add_option("--tau", opt.tau, "Softmax temperature");
  app.add_option("--loss-variant", opt.loss_variant, "none, infonce, linear_volume or kernel_volume");
  app.add_option("--anchor", opt.anchor, "text or vision");
  app.add_option("--variant", opt.prompt_variant, "Prompt tag set: strategy or summary");
  app.add_option("--endpoint", opt.endpoint, "Chat-completions URL");
  app.add_option("--model", opt.model, "Model identifier sent to the endpoint");
  app.add_option("--timeout", opt.timeout_seconds, "Request timeout in seconds");

  std::function<int()> run;
  auto sub = [&](const char* name, const char* help, int (*fn)(const cli::Options&)) {
    CLI::App* s = app.add_subcommand(name, help);
    s->callback([&run, fn, &opt] { run = [fn, &opt] { return fn(opt); }; });
    return s;
  };

  auto* ids = sub("identities", "Run the volume identity suite", cli::identities);
  ids->add_option("--instances", opt.instances, "Random instances per identity");
  ids->add_flag("--inject-bug", opt.inject_bug)->group("");

  sub("gradcheck", "Finite-difference checks of all analytic gradients", cli::gradcheck)
      ->add_option("--count", opt.count, "Random instances");
  sub("train", "Episodic training; writes checkpoint and metrics", cli::train);
  sub("eval", "Held-out accuracy of a checkpoint", cli::eval)
      ->add_option("--checkpoint", opt.checkpoint)
      ->required();
  sub("ablate", "Train and compare loss variants", cli::ablate);
  sub("sweep-u", "Accuracy as a function of the fusion factor", cli::sweep_u)
      ->add_option("--checkpoint", opt.checkpoint)
      ->required();
  sub("gen-data", "Write synthetic episode embeddings", cli::gen_data);
  auto* gp = sub("gen-prompt", "Print the staged description prompt", cli::gen_prompt);
  gp->add_option("--class-name", opt.class_name)->required();
  gp->add_option("--image", opt.images, "Image reference (repeatable)");
  auto* ds = sub("describe", "Request a class description from an endpoint", cli::describe);
  ds->add_option("--class-name", opt.class_name)->required();
  ds->add_option("--image", opt.images, "Image reference (repeatable)");
  ds->add_option("--retries", opt.retries, "Extra attempts on transient failures");

  CLI11_PARSE(app, argc, argv);
  try {
    return run();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
