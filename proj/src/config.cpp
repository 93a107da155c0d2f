#include "kvalign/config.hpp"

#include "kvalign/errors.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

namespace kvalign {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw FormatError("config section '" + section_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw FormatError("config key '" + section_ + "." + key + "' has the wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw FormatError("unknown config key '" + section_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

KernelSpec read_kernel(const json& j) {
  if (j.is_string()) return KernelSpec::parse(j.get<std::string>());
  std::string name = "rbf";
  double sigma = 1.0;
  double offset = 1.0;
  int degree = 2;
  Reader r(j, "kernel");
  r.get("name", name);
  r.get("sigma", sigma);
  r.get("offset", offset);
  r.get("degree", degree);
  return KernelSpec::parse(name, sigma, offset, degree);
}

void read_variant_fields(Reader& r, LossVariant& loss, KernelSpec& kernel, Anchor& anchor, bool& text, bool& vision,
                         FusionMode& mode) {
  std::string s;
  if (s = loss_variant_name(loss), r.get("loss_variant", s), true) loss = parse_loss_variant(s);
  if (const json* k = r.sub("kernel")) kernel = read_kernel(*k);
  if (s = anchor_name(anchor), r.get("anchor", s), true) anchor = parse_anchor(s);
  r.get("use_text_prompt", text);
  r.get("use_vision_prompt", vision);
  if (s = fusion_mode_name(mode), r.get("fusion_mode", s), true) mode = parse_fusion_mode(s);
}

}  // namespace

json to_json(const KernelSpec& k) {
  return std::visit(
      [](const auto& v) -> json {
        using K = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<K, LinearKernel>) return {{"name", "linear"}};
        else if constexpr (std::is_same_v<K, PolynomialKernel>)
          return {{"name", "poly"}, {"offset", v.offset}, {"degree", v.degree}};
        else return {{"name", "rbf"}, {"sigma", v.bandwidth}};
      },
      k.variant());
}

json to_json(const GeneratorConfig& g) {
  return {{"class_pool", g.class_pool},       {"dim", g.dim},
          {"token_count", g.token_count},     {"support_noise", g.support_noise},
          {"query_noise", g.query_noise},     {"text_shift", g.text_shift},
          {"synthetic_shift", g.synthetic_shift}, {"seed", g.seed},
          {"max_center_cosine", g.max_center_cosine}, {"retry_budget", g.retry_budget},
          {"synthetic_candidates", g.synthetic_candidates}};
}

json to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"episodes_per_epoch", t.episodes_per_epoch},
          {"learning_rate", t.learning_rate},
          {"weight_decay", t.weight_decay},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"epsilon", t.epsilon},
          {"loss_variant", loss_variant_name(t.loss_variant)},
          {"kernel", to_json(t.kernel)},
          {"temperature", t.temperature},
          {"anchor", anchor_name(t.anchor)},
          {"fusion_mode", fusion_mode_name(t.fusion_mode)},
          {"use_text_prompt", t.use_text_prompt},
          {"use_vision_prompt", t.use_vision_prompt},
          {"n_way", t.n_way},
          {"k_shot", t.k_shot},
          {"query_per_class", t.query_per_class},
          {"hidden", t.hidden},
          {"heads", t.heads},
          {"seed", t.seed}};
}

json to_json(const trainer::Variant& v) {
  return {{"name", v.name},
          {"loss_variant", loss_variant_name(v.loss_variant)},
          {"kernel", to_json(v.kernel)},
          {"anchor", anchor_name(v.anchor)},
          {"use_text_prompt", v.use_text_prompt},
          {"use_vision_prompt", v.use_vision_prompt},
          {"fusion_mode", fusion_mode_name(v.fusion_mode)}};
}

json to_json(const RunConfig& c) {
  json variants = json::array();
  for (const auto& v : c.variants) variants.push_back(to_json(v));
  return {{"generator", to_json(c.generator)},
          {"train", to_json(c.train)},
          {"eval", {{"episodes", c.eval.episodes}, {"u", c.eval.u}, {"grid_step", c.eval.grid_step}}},
          {"ablation",
           {{"seeds", c.ablation.seeds},
            {"heldout_episodes", c.ablation.heldout_episodes},
            {"validation_episodes", c.ablation.validation_episodes},
            {"grid_step", c.ablation.grid_step},
            {"fixed_u", c.ablation.fixed_u},
            {"variants", variants}}}};
}

void apply_json(RunConfig& cfg, const json& j) {
  Reader top(j, "config");
  if (const json* g = top.sub("generator")) {
    auto& c = cfg.generator;
    Reader r(*g, "generator");
    r.get("class_pool", c.class_pool);
    r.get("dim", c.dim);
    r.get("token_count", c.token_count);
    r.get("support_noise", c.support_noise);
    r.get("query_noise", c.query_noise);
    r.get("text_shift", c.text_shift);
    r.get("synthetic_shift", c.synthetic_shift);
    r.get("seed", c.seed);
    r.get("max_center_cosine", c.max_center_cosine);
    r.get("retry_budget", c.retry_budget);
    r.get("synthetic_candidates", c.synthetic_candidates);
  }
  if (const json* t = top.sub("train")) {
    auto& c = cfg.train;
    Reader r(*t, "train");
    r.get("epochs", c.epochs);
    r.get("episodes_per_epoch", c.episodes_per_epoch);
    r.get("learning_rate", c.learning_rate);
    r.get("weight_decay", c.weight_decay);
    r.get("beta1", c.beta1);
    r.get("beta2", c.beta2);
    r.get("epsilon", c.epsilon);
    r.get("temperature", c.temperature);
    r.get("n_way", c.n_way);
    r.get("k_shot", c.k_shot);
    r.get("query_per_class", c.query_per_class);
    r.get("hidden", c.hidden);
    r.get("heads", c.heads);
    r.get("seed", c.seed);
    read_variant_fields(r, c.loss_variant, c.kernel, c.anchor, c.use_text_prompt, c.use_vision_prompt,
                        c.fusion_mode);
  }
  if (const json* e = top.sub("eval")) {
    Reader r(*e, "eval");
    r.get("episodes", cfg.eval.episodes);
    r.get("u", cfg.eval.u);
    r.get("grid_step", cfg.eval.grid_step);
  }
  if (const json* a = top.sub("ablation")) {
    auto& c = cfg.ablation;
    Reader r(*a, "ablation");
    r.get("seeds", c.seeds);
    r.get("heldout_episodes", c.heldout_episodes);
    r.get("validation_episodes", c.validation_episodes);
    r.get("grid_step", c.grid_step);
    r.get("fixed_u", c.fixed_u);
    if (const json* vs = r.sub("variants")) {
      if (!vs->is_array()) throw FormatError("ablation.variants must be an array");
      cfg.variants.clear();
      for (const auto& vj : *vs) {
        trainer::Variant v;
        v.kernel = cfg.train.kernel;
        v.anchor = cfg.train.anchor;
        v.fusion_mode = cfg.train.fusion_mode;
        Reader vr(vj, "ablation.variants");
        vr.get("name", v.name);
        read_variant_fields(vr, v.loss_variant, v.kernel, v.anchor, v.use_text_prompt, v.use_vision_prompt,
                            v.fusion_mode);
        if (v.name.empty()) v.name = loss_variant_name(v.loss_variant);
        cfg.variants.push_back(v);
      }
    }
  }
}

void RunConfig::validate() const {
  generator.validate();
  train.validate();
  if (eval.episodes == 0) throw InvalidArgument("eval.episodes must be positive");
  if (!(eval.u >= 0.0 && eval.u <= 1.0)) throw InvalidArgument("eval.u must lie in [0, 1]");
  fewshot::u_grid(eval.grid_step);
  if (ablation.seeds.empty() || ablation.heldout_episodes == 0)
    throw InvalidArgument("ablation needs seeds and held-out episodes");
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FormatError("config " + path.string() + " is not valid JSON");
  RunConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

RunConfig standard_toy_config() {
  RunConfig c;
  c.generator.class_pool = 1000;
  c.generator.dim = 64;
  c.generator.token_count = 9;
  c.generator.support_noise = 4.0;
  c.generator.query_noise = 3.0;
  c.generator.text_shift = 0.7;
  c.generator.synthetic_shift = 2.0;
  c.train.epochs = 10;
  c.train.episodes_per_epoch = 50;
  c.train.learning_rate = 1e-3;
  c.train.n_way = 5;
  c.train.k_shot = 1;
  c.train.query_per_class = 15;
  c.ablation.seeds = {0, 1, 2, 3, 4};
  c.ablation.heldout_episodes = 200;
  c.ablation.validation_episodes = 50;
  return c;
}

std::vector<trainer::Variant> loss_variants(const TrainConfig& base) {
  std::vector<trainer::Variant> out;
  for (LossVariant lv : {LossVariant::None, LossVariant::InfoNCE, LossVariant::LinearVolume, LossVariant::KernelVolume}) {
    trainer::Variant v;
    v.name = loss_variant_name(lv);
    v.loss_variant = lv;
    v.kernel = base.kernel;
    v.anchor = base.anchor;
    v.fusion_mode = base.fusion_mode;
    out.push_back(v);
  }
  return out;
}

std::vector<trainer::Variant> prompt_variants(const TrainConfig& base) {
  trainer::Variant both;
  both.loss_variant = base.loss_variant;
  both.kernel = base.kernel;
  both.anchor = base.anchor;
  both.fusion_mode = base.fusion_mode;
  both.name = "both_prompts";
  trainer::Variant text = both;
  text.name = "text_prompt_only";
  text.use_vision_prompt = false;
  trainer::Variant vision = both;
  vision.name = "vision_prompt_only";
  vision.use_text_prompt = false;
  return {both, text, vision};
}

json RunManifest::to_json() const {
  return {{"command", command}, {"config", config}, {"seed", seed},
          {"started", started}, {"finished", finished}, {"outputs", outputs}};
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace kvalign
