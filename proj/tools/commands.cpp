#include "commands.hpp"

#include "kvalign/diagnostics.hpp"
#include "kvalign/errors.hpp"
#include "kvalign/trainer.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace kvalign::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Run {
 public:
  Run(std::string command, const Options& opt, json config, std::uint64_t seed) : opt_(opt) {
    manifest_.command = std::move(command);
    manifest_.config = std::move(config);
    manifest_.seed = seed;
    manifest_.started = utc_timestamp();
    fs::create_directories(opt.out_dir);
  }

  fs::path path(const std::string& name) {
    manifest_.outputs.push_back(name);
    return opt_.out_dir / name;
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream out(path(name));
    if (!out) throw IoError("cannot write " + (opt_.out_dir / name).string());
    out << text;
  }

  void write_json(const std::string& name, const json& j) { write_text(name, j.dump(2) + "\n"); }

  void finish() {
    manifest_.finished = utc_timestamp();
    manifest_.write(opt_.out_dir / (manifest_.command + ".manifest.json"));
  }

 private:
  const Options& opt_;
  RunManifest manifest_;
};

json suite_json(const diagnostics::SuiteReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name},
                      {"instances", c.instances},
                      {"max_error", c.max_error},
                      {"tolerance", c.tolerance},
                      {"passed", c.passed}});
  return {{"passed", r.passed()}, {"checks", checks}};
}

std::string suite_csv(const diagnostics::SuiteReport& r) {
  std::string out = "name,instances,max_error,tolerance,passed\n";
  for (const auto& c : r.checks)
    out += c.name + "," + std::to_string(c.instances) + "," + num(c.max_error) + "," + num(c.tolerance) + "," +
           (c.passed ? "true" : "false") + "\n";
  return out;
}

int report_suite(const std::string& command, const Options& opt, const diagnostics::SuiteReport& report,
                 json config, std::uint64_t seed) {
  Run run(command, opt, std::move(config), seed);
  const json j = suite_json(report);
  run.write_json(command + ".json", j);
  run.write_text(command + ".csv", suite_csv(report));
  run.finish();
  std::cout << j.dump(2) << '\n';
  for (const auto& c : report.checks)
    if (!c.passed) std::cerr << "FAILED " << c.name << ": max error " << num(c.max_error) << '\n';
  return report.passed() ? 0 : 1;
}

std::vector<Episode> heldout(const RunConfig& cfg) {
  return trainer::novel_episodes(cfg.generator, cfg.train, trainer::kHeldOutEpisodes, cfg.eval.episodes);
}

}  // namespace

RunConfig resolve(const Options& opt) {
  RunConfig cfg = opt.config_path ? load_config(*opt.config_path) : RunConfig{};
  if (opt.seed) {
    cfg.train.seed = *opt.seed;
    cfg.generator.seed = *opt.seed;
  }
  if (opt.episodes) {
    cfg.eval.episodes = *opt.episodes;
    cfg.ablation.heldout_episodes = *opt.episodes;
  }
  if (opt.u) {
    cfg.eval.u = *opt.u;
    cfg.ablation.fixed_u = *opt.u;
  }
  if (opt.grid_step) {
    cfg.eval.grid_step = *opt.grid_step;
    cfg.ablation.grid_step = *opt.grid_step;
  }
  if (opt.kernel || opt.sigma) {
    const std::string name = opt.kernel.value_or(cfg.train.kernel.name());
    double sigma = 1.0;
    if (const auto* rbf = std::get_if<RbfKernel>(&cfg.train.kernel.variant())) sigma = rbf->bandwidth;
    cfg.train.kernel = KernelSpec::parse(name, opt.sigma.value_or(sigma));
  }
  if (opt.tau) cfg.train.temperature = *opt.tau;
  if (opt.loss_variant) cfg.train.loss_variant = parse_loss_variant(*opt.loss_variant);
  if (opt.anchor) cfg.train.anchor = parse_anchor(*opt.anchor);
  for (auto& v : cfg.variants) {
    if (opt.kernel || opt.sigma) v.kernel = cfg.train.kernel;
    if (opt.anchor) v.anchor = cfg.train.anchor;
  }
  cfg.validate();
  return cfg;
}

int identities(const Options& opt) {
  const std::uint64_t seed = opt.seed.value_or(0);
  const auto report = diagnostics::volume_identities(seed, opt.instances, opt.inject_bug);
  return report_suite("identities", opt, report, {{"instances", opt.instances}, {"seed", seed}}, seed);
}

int gradcheck(const Options& opt) {
  const std::uint64_t seed = opt.seed.value_or(0);
  const auto report = diagnostics::gradient_checks(seed, opt.count);
  return report_suite("gradcheck", opt, report, {{"count", opt.count}, {"seed", seed}, {"tolerance", 1e-4}}, seed);
}

int train(const Options& opt) {
  const RunConfig cfg = resolve(opt);
  Run run("train", opt, to_json(cfg), cfg.train.seed);
  const auto result = trainer::train(cfg.train, cfg.generator);
  trainer::save_checkpoint(run.path("checkpoint.txt"), result.params);

  std::string csv = "epoch,total_loss,ce_loss,align_loss,train_accuracy,degenerate_batches\n";
  json rows = json::array();
  for (const auto& m : result.trace) {
    csv += std::to_string(m.epoch) + "," + num(m.total_loss) + "," + num(m.ce_loss) + "," + num(m.align_loss) + "," +
           num(m.train_accuracy) + "," + std::to_string(m.degenerate_batches) + "\n";
    rows.push_back({{"epoch", m.epoch},
                    {"total_loss", m.total_loss},
                    {"ce_loss", m.ce_loss},
                    {"align_loss", m.align_loss},
                    {"train_accuracy", m.train_accuracy},
                    {"degenerate_batches", m.degenerate_batches}});
  }
  run.write_text("metrics.csv", csv);
  run.write_json("metrics.json", rows);
  run.finish();
  std::cout << csv;
  return 0;
}

int eval(const Options& opt) {
  const RunConfig cfg = resolve(opt);
  const ModelParams params = trainer::load_checkpoint(opt.checkpoint);
  json config = to_json(cfg);
  config["checkpoint"] = opt.checkpoint.string();
  Run run("eval", opt, config, cfg.train.seed);

  const FusionFactor u(cfg.eval.u);
  std::vector<double> acc;
  std::string csv = "episode,accuracy\n";
  const auto episodes = heldout(cfg);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    acc.push_back(fewshot::evaluate_episode(episodes[i], params, u, cfg.train.temperature, cfg.train.inference()));
    csv += std::to_string(i) + "," + num(acc.back()) + "\n";
  }
  const auto s = trainer::summarize(acc);
  const json j = {{"u", cfg.eval.u}, {"episodes", s.episodes}, {"mean_accuracy", s.mean}, {"ci95", s.ci95}};
  run.write_text("eval_episodes.csv", csv);
  run.write_json("eval.json", j);
  run.finish();
  std::cout << j.dump(2) << '\n';
  return 0;
}

int ablate(const Options& opt) {
  const RunConfig cfg = resolve(opt);
  Run run("ablate", opt, to_json(cfg), cfg.train.seed);
  const auto variants = cfg.variants.empty() ? loss_variants(cfg.train) : cfg.variants;
  const auto rows = trainer::ablate(cfg.train, cfg.generator, variants, cfg.ablation);

  std::string csv = "variant,mean_accuracy,ci95,episodes\n";
  json out = json::array();
  for (const auto& r : rows) {
    csv += r.name + "," + num(r.summary.mean) + "," + num(r.summary.ci95) + "," + std::to_string(r.summary.episodes) +
           "\n";
    out.push_back({{"variant", r.name},
                   {"mean_accuracy", r.summary.mean},
                   {"ci95", r.summary.ci95},
                   {"episodes", r.summary.episodes},
                   {"per_seed_mean", r.per_seed_mean},
                   {"selected_u", r.selected_u}});
  }
  run.write_text("ablation.csv", csv);
  run.write_json("ablation.json", out);
  run.finish();
  std::cout << csv;
  return 0;
}

int sweep_u(const Options& opt) {
  const RunConfig cfg = resolve(opt);
  const ModelParams params = trainer::load_checkpoint(opt.checkpoint);
  json config = to_json(cfg);
  config["checkpoint"] = opt.checkpoint.string();
  Run run("sweep-u", opt, config, cfg.train.seed);

  const auto curve = fewshot::sweep_u(heldout(cfg), params, cfg.eval.grid_step, cfg.train.inference());
  std::string csv = "u,accuracy\n";
  json points = json::array();
  for (const auto& p : curve) {
    csv += num(p.u) + "," + num(p.accuracy) + "\n";
    points.push_back({{"u", p.u}, {"accuracy", p.accuracy}});
  }
  const json j = {{"best_u", fewshot::best_u(curve).value()}, {"curve", points}};
  run.write_text("sweep_u.csv", csv);
  run.write_json("sweep_u.json", j);
  run.finish();
  std::cout << csv;
  return 0;
}

int gen_data(const Options& opt) {
  const RunConfig cfg = resolve(opt);
  Run run("gen-data", opt, to_json(cfg), cfg.generator.seed);
  const std::size_t count = opt.episodes.value_or(1);
  const auto episodes = trainer::novel_episodes(cfg.generator, cfg.train, trainer::kHeldOutEpisodes, count);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "episode_%04zu.jsonl", i);
    synthdata::save_embeddings(run.path(name), synthdata::episode_records(episodes[i]));
  }
  run.finish();
  std::cout << "wrote " << count << " episode file(s) to " << opt.out_dir.string() << '\n';
  return 0;
}

int gen_prompt(const Options& opt) {
  std::cout << cip::build_prompt(opt.class_name, opt.images, parse_prompt_variant(opt.prompt_variant));
  return 0;
}

int describe(const Options& opt) {
  const PromptVariant variant = parse_prompt_variant(opt.prompt_variant);
  ClientConfig client;
  client.endpoint = opt.endpoint;
  client.model = opt.model;
  if (const char* token = std::getenv("KVALIGN_API_TOKEN")) client.token = token;
  client.timeout = std::chrono::milliseconds(static_cast<long long>(opt.timeout_seconds * 1000.0));
  client.max_retries = opt.retries;
  client.validate();

  Run run("describe", opt,
          {{"endpoint", client.endpoint}, {"model", client.model}, {"variant", prompt_variant_name(variant)},
           {"class_name", opt.class_name}, {"images", opt.images}},
          opt.seed.value_or(0));
  const auto d = cip::request_description(client, cip::build_prompt(opt.class_name, opt.images, variant), variant);
  const json j = {{"class_name", opt.class_name}, {"stages", d.stage_outputs}, {"conclusion", d.conclusion},
                  {"complete", d.complete},       {"warnings", d.warnings}};
  run.write_json("description.json", j);
  run.finish();
  std::cout << j.dump(2) << '\n';
  return d.complete ? 0 : 1;
}

}  // namespace kvalign::cli
