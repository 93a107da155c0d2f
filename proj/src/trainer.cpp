#include "kvalign/trainer.hpp"

#include "kvalign/errors.hpp"
#include "kvalign/rng.hpp"

#include <cmath>
#include <optional>

namespace kvalign {

std::string loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::None: return "none";
    case LossVariant::InfoNCE: return "infonce";
    case LossVariant::LinearVolume: return "linear_volume";
    case LossVariant::KernelVolume: return "kernel_volume";
  }
  throw InvalidArgument("unknown loss variant");
}

LossVariant parse_loss_variant(const std::string& name) {
  if (name == "none") return LossVariant::None;
  if (name == "infonce") return LossVariant::InfoNCE;
  if (name == "linear_volume" || name == "volume") return LossVariant::LinearVolume;
  if (name == "kernel_volume") return LossVariant::KernelVolume;
  throw InvalidArgument("unknown loss variant '" + name + "'");
}

std::string anchor_name(Anchor a) { return a == Anchor::Text ? "text" : "vision"; }

Anchor parse_anchor(const std::string& name) {
  if (name == "text") return Anchor::Text;
  if (name == "vision") return Anchor::Vision;
  throw InvalidArgument("unknown anchor '" + name + "'");
}

std::string fusion_mode_name(FusionMode m) { return m == FusionMode::GateOnly ? "gate" : "gate_attention"; }

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "gate") return FusionMode::GateOnly;
  if (name == "gate_attention") return FusionMode::GateAndAttention;
  throw InvalidArgument("unknown fusion mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
    throw InvalidArgument("invalid Adam moments");
  if (n_way == 0 || k_shot == 0 || query_per_class == 0) throw InvalidArgument("episode sizes must be positive");
  if (hidden < 1 || heads < 1) throw InvalidArgument("hidden and heads must be positive");
}

namespace trainer {
namespace {

// Modalities present for one class, anchor first.
std::vector<ad::Var> alignment_members(Anchor anchor, const std::optional<ad::Var>& text, ad::Var support,
                                       const std::optional<ad::Var>& vision) {
  std::vector<ad::Var> m;
  if (anchor == Anchor::Text && text) {
    m = {*text, support};
    if (vision) m.push_back(*vision);
  } else if (anchor == Anchor::Vision && vision) {
    m = {*vision};
    if (text) m.push_back(*text);
    m.push_back(support);
  } else {
    m = {support};
    if (text) m.push_back(*text);
    if (vision) m.push_back(*vision);
  }
  return m;
}

}  // namespace

LossBreakdown total_loss(const Episode& episode, const ModelParams& params, const TrainConfig& cfg,
                         bool with_gradient) {
  cfg.validate();
  episode.validate();
  ad::Tape tape;
  const auto vars = fusion::graph::ParamVars::bind(tape, params, with_gradient);
  const FusionConfig fcfg = cfg.fusion();
  const std::size_t n = episode.n_way;

  std::vector<std::vector<ad::Var>> fused(n);
  std::vector<ad::Var> text_rows(n);
  for (std::size_t c = 0; c < n; ++c) text_rows[c] = tape.constant(episode.text_desc[c].values().transpose());
  for (const auto& s : episode.support)
    fused[s.label].push_back(fusion::graph::fuse(text_rows[s.label], tape.constant(s.tokens.tokens()), vars, fcfg));

  std::vector<ad::Var> protos(n);
  for (std::size_t c = 0; c < n; ++c) protos[c] = ad::normalize_rows(ad::mean_rows(ad::concat_rows(fused[c])));

  Matrix queries(static_cast<Eigen::Index>(episode.query.size()), params.dim());
  for (std::size_t q = 0; q < episode.query.size(); ++q)
    queries.row(static_cast<Eigen::Index>(q)) = normalize(episode.query[q].embedding).values().transpose();
  const ad::Var logits =
      ad::scale(ad::matmul(tape.constant(queries), ad::transpose(ad::concat_rows(protos))), 1.0 / cfg.temperature);
  const ad::Var log_probs = ad::log_softmax_rows(logits);

  LossBreakdown out;
  std::vector<ad::Var> picks;
  std::size_t correct = 0;
  for (std::size_t q = 0; q < episode.query.size(); ++q) {
    const auto row = static_cast<Eigen::Index>(q);
    const auto label = static_cast<Eigen::Index>(episode.query[q].label);
    picks.push_back(ad::pick(log_probs, row, label));
    Eigen::Index arg = 0;
    logits.value().row(row).maxCoeff(&arg);
    if (arg == label) ++correct;
  }
  const ad::Var ce = ad::scale(ad::add_n(picks), -1.0);
  out.ce = ce.scalar();
  out.accuracy = static_cast<double>(correct) / static_cast<double>(episode.query.size());

  ad::Var total = ce;
  if (cfg.loss_variant != LossVariant::None) {
    std::vector<std::vector<ad::Var>> items;
    for (std::size_t c = 0; c < n; ++c) {
      std::optional<ad::Var> text;
      std::optional<ad::Var> vision;
      if (cfg.use_text_prompt) text = ad::normalize_rows(fusion::graph::project_text(text_rows[c], vars));
      if (cfg.use_vision_prompt)
        vision = tape.constant(fewshot::aggregate_synthetic(episode.synthetic.at(c)).values().transpose());
      items.push_back(alignment_members(cfg.anchor, text, protos[c], vision));
    }
    if (items.front().size() >= 2) {
      ad::Var align;
      switch (cfg.loss_variant) {
        case LossVariant::InfoNCE: align = losses::graph::infonce(tape, items, cfg.temperature); break;
        case LossVariant::LinearVolume: {
          auto term = losses::graph::volume_contrastive(tape, items, cfg.temperature, KernelSpec::linear(), true);
          align = term.loss;
          out.degenerate = term.skipped;
          break;
        }
        case LossVariant::KernelVolume: {
          auto term = losses::graph::volume_contrastive(tape, items, cfg.temperature, cfg.kernel, true);
          align = term.loss;
          out.degenerate = term.skipped;
          break;
        }
        case LossVariant::None: break;
      }
      out.align = align.scalar();
      total = ad::add(ce, align);
    }
  }
  out.total = total.scalar();
  if (with_gradient) {
    tape.backward(total);
    out.gradient = vars.gradient(tape);
  }
  return out;
}

AdamState AdamState::zeros(const ModelParams& like) {
  return {ModelParams::zeros_like(like), ModelParams::zeros_like(like), 0};
}

void optimizer_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr, double weight_decay,
                    double beta1, double beta2, double epsilon) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i]->rows() != g[i]->rows() || p[i]->cols() != g[i]->cols() || p[i]->rows() != m[i]->rows() ||
        p[i]->cols() != m[i]->cols())
      throw ShapeMismatch("optimizer: gradient/state shape differs from parameters");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    *p[i] *= 1.0 - lr * weight_decay;
    *m[i] = beta1 * *m[i] + (1.0 - beta1) * *g[i];
    *v[i] = beta2 * *v[i] + (1.0 - beta2) * g[i]->cwiseAbs2();
    p[i]->array() -= lr * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + epsilon);
  }
}

ModelParams initial_params(const TrainConfig& cfg, const GeneratorConfig& gen) {
  const int dim = static_cast<int>(gen.dim);
  return ModelParams::init(dim, dim, cfg.hidden, cfg.heads, Rng::derive(cfg.seed, {0x1a17ULL}));
}

TrainResult train(const TrainConfig& cfg, const GeneratorConfig& gen) {
  cfg.validate();
  gen.validate();
  TrainResult result{initial_params(cfg, gen), {}};
  if (cfg.epochs == 0 || cfg.episodes_per_epoch == 0) return result;
  const ClassBank bank = synthdata::make_class_bank(gen, Split::Base);
  AdamState state = AdamState::zeros(result.params);

  std::size_t index = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch + 1;
    for (std::size_t e = 0; e < cfg.episodes_per_epoch; ++e, ++index) {
      const Episode ep = synthdata::gen_episode(gen, bank, cfg.n_way, cfg.k_shot, cfg.query_per_class,
                                                synthdata::episode_seed(cfg.seed, kTrainEpisodes, index));
      const LossBreakdown r = total_loss(ep, result.params, cfg);
      optimizer_step(result.params, r.gradient, state, cfg.learning_rate, cfg.weight_decay, cfg.beta1, cfg.beta2,
                     cfg.epsilon);
      m.total_loss += r.total;
      m.ce_loss += r.ce;
      m.align_loss += r.align;
      m.train_accuracy += r.accuracy;
      m.degenerate_batches += r.degenerate;
    }
    const double k = static_cast<double>(cfg.episodes_per_epoch);
    m.total_loss /= k;
    m.ce_loss /= k;
    m.align_loss /= k;
    m.train_accuracy /= k;
    result.trace.push_back(m);
  }
  return result;
}

std::vector<Episode> novel_episodes(const GeneratorConfig& gen, const TrainConfig& cfg, Purpose purpose,
                                    std::size_t count) {
  const ClassBank bank = synthdata::make_class_bank(gen, Split::Novel);
  std::vector<Episode> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(synthdata::gen_episode(gen, bank, cfg.n_way, cfg.k_shot, cfg.query_per_class,
                                         synthdata::episode_seed(gen.seed, purpose, i)));
  return out;
}

EvalSummary summarize(const std::vector<double>& acc) {
  EvalSummary s;
  s.episodes = acc.size();
  if (acc.empty()) return s;
  for (double a : acc) s.mean += a;
  s.mean /= static_cast<double>(acc.size());
  if (acc.size() > 1) {
    double var = 0.0;
    for (double a : acc) var += (a - s.mean) * (a - s.mean);
    var /= static_cast<double>(acc.size() - 1);
    s.ci95 = 1.96 * std::sqrt(var / static_cast<double>(acc.size()));
  }
  return s;
}

TrainConfig Variant::apply(TrainConfig base) const {
  base.loss_variant = loss_variant;
  base.kernel = kernel;
  base.anchor = anchor;
  base.use_text_prompt = use_text_prompt;
  base.use_vision_prompt = use_vision_prompt;
  base.fusion_mode = fusion_mode;
  return base;
}

GeneratorConfig world_for_seed(const GeneratorConfig& gen, std::uint64_t seed) {
  GeneratorConfig g = gen;
  g.seed = Rng::derive(gen.seed, {0xab1aULL, seed});
  return g;
}

std::vector<AblationRow> ablate(const TrainConfig& base, const GeneratorConfig& gen,
                                const std::vector<Variant>& variants, const AblationConfig& acfg) {
  if (variants.empty()) throw InvalidArgument("ablation needs at least one variant");
  if (acfg.seeds.empty() || acfg.heldout_episodes == 0) throw InvalidArgument("ablation needs seeds and episodes");
  std::vector<AblationRow> rows(variants.size());
  std::vector<std::vector<double>> pooled(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) rows[v].name = variants[v].name;

  for (std::uint64_t seed : acfg.seeds) {
    const GeneratorConfig world = world_for_seed(gen, seed);
    TrainConfig seeded = base;
    seeded.seed = seed;
    const auto heldout = novel_episodes(world, seeded, kHeldOutEpisodes, acfg.heldout_episodes);
    std::vector<Episode> validation;
    if (acfg.fixed_u < 0.0) validation = novel_episodes(world, seeded, kValidationEpisodes, acfg.validation_episodes);

    for (std::size_t v = 0; v < variants.size(); ++v) {
      const TrainConfig cfg = variants[v].apply(seeded);
      const TrainResult trained = train(cfg, world);
      const InferenceConfig inf = cfg.inference();
      const FusionFactor u = acfg.fixed_u < 0.0
                                 ? fewshot::grid_search_u(validation, trained.params, cfg.temperature, acfg.grid_step, inf)
                                 : FusionFactor(acfg.fixed_u);
      double sum = 0.0;
      for (const auto& ep : heldout) {
        const double a = fewshot::evaluate_episode(ep, trained.params, u, cfg.temperature, inf);
        pooled[v].push_back(a);
        sum += a;
      }
      rows[v].per_seed_mean.push_back(sum / static_cast<double>(heldout.size()));
      rows[v].selected_u.push_back(u.value());
    }
  }
  for (std::size_t v = 0; v < variants.size(); ++v) rows[v].summary = summarize(pooled[v]);
  return rows;
}

}  // namespace trainer
}  // namespace kvalign
