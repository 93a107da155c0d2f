#include "kvalign/fewshot.hpp"

#include "kvalign/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace kvalign {

void Episode::validate() const {
  if (n_way == 0 || k_shot == 0 || query_per_class == 0) throw CountMismatch("episode sizes must be positive");
  if (support.size() != n_way * k_shot) throw CountMismatch("support count is not N*K");
  if (query.size() != n_way * query_per_class) throw CountMismatch("query count is not N*M");
  if (text_desc.size() != n_way) throw CountMismatch("need one text descriptor per class");
  if (!synthetic.empty() && synthetic.size() != n_way) throw CountMismatch("need synthetic samples per class");
  std::vector<std::size_t> per_class(n_way, 0);
  for (const auto& s : support) {
    if (s.label >= n_way) throw CountMismatch("support label out of range");
    ++per_class[s.label];
  }
  for (std::size_t c : per_class)
    if (c != k_shot) throw CountMismatch("support labels do not cover 0..N-1 with K each");
  std::fill(per_class.begin(), per_class.end(), 0);
  for (const auto& q : query) {
    if (q.label >= n_way) throw CountMismatch("query label out of range");
    ++per_class[q.label];
  }
  for (std::size_t c : per_class)
    if (c != query_per_class) throw CountMismatch("query labels do not cover 0..N-1 with M each");
}

FusionFactor::FusionFactor(double u) : u_(u) {
  if (!(u >= 0.0 && u <= 1.0)) throw InvalidArgument("fusion factor must lie in [0, 1]");
}

namespace fewshot {

Embedding pooled_feature(const TokenSet& tokens) { return normalize(tokens.average()); }

std::vector<std::vector<Embedding>> support_features(const Episode& episode) {
  std::vector<std::vector<Embedding>> out(episode.n_way);
  for (const auto& s : episode.support) {
    if (s.label >= episode.n_way) throw CountMismatch("support label out of range");
    out[s.label].push_back(pooled_feature(s.tokens));
  }
  return out;
}

PrototypeSet prototypes(const std::vector<std::vector<Embedding>>& per_class) {
  PrototypeSet out;
  out.kind = PrototypeKind::Plain;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c].empty()) throw EmptyClass("class " + std::to_string(c) + " has no support samples");
    Vector mean = Vector::Zero(static_cast<Eigen::Index>(common_dim(per_class[c])));
    for (const auto& e : per_class[c]) mean += e.values();
    out.per_class.push_back(normalize(Vector(mean / static_cast<double>(per_class[c].size()))));
  }
  return out;
}

std::vector<std::vector<Embedding>> enriched_support(const Episode& episode) {
  if (episode.synthetic.size() != episode.n_way) throw CountMismatch("episode has no synthetic samples per class");
  auto out = support_features(episode);
  for (std::size_t c = 0; c < episode.n_way; ++c) {
    if (episode.synthetic[c].size() != episode.k_shot)
      throw CountMismatch("class " + std::to_string(c) + " needs K synthetic samples");
    out[c].insert(out[c].end(), episode.synthetic[c].begin(), episode.synthetic[c].end());
  }
  return out;
}

PrototypeSet prototype_text(const Episode& episode, const ModelParams& params, const FusionConfig& cfg) {
  std::vector<std::vector<Embedding>> fused(episode.n_way);
  for (const auto& s : episode.support)
    fused.at(s.label).push_back(fusion::fuse(episode.text_desc.at(s.label), s.tokens, params, cfg));
  PrototypeSet out = prototypes(fused);
  out.kind = PrototypeKind::Text;
  return out;
}

PrototypeSet prototype_vis(const Episode& episode) {
  PrototypeSet out = prototypes(enriched_support(episode));
  out.kind = PrototypeKind::Vision;
  return out;
}

Embedding aggregate_synthetic(const std::vector<Embedding>& samples) {
  if (samples.empty()) throw EmptyClass("no synthetic samples to aggregate");
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(common_dim(samples)));
  for (const auto& e : samples) mean += e.values();
  return normalize(mean);
}

PrototypeSet combine_prototypes(const PrototypeSet& text, const PrototypeSet& vision, FusionFactor u) {
  if (text.kind != PrototypeKind::Text || vision.kind != PrototypeKind::Vision)
    throw KindMismatch("combine_prototypes needs Text and Vision prototype sets");
  if (text.per_class.size() != vision.per_class.size()) throw CountMismatch("prototype sets differ in class count");
  PrototypeSet out;
  out.kind = PrototypeKind::Combined;
  const double w = u.value();
  for (std::size_t c = 0; c < text.per_class.size(); ++c) {
    if (text.per_class[c].dim() != vision.per_class[c].dim()) throw DimensionMismatch("prototype dims differ");
    out.per_class.push_back(
        normalize(Vector(w * text.per_class[c].values() + (1.0 - w) * vision.per_class[c].values())));
  }
  return out;
}

namespace {

std::size_t predict(const Vector& query, const std::vector<Embedding>& protos) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < protos.size(); ++c) {
    const double s = query.dot(protos[c].values());
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

PrototypeSet vision_or_plain(const Episode& episode, bool use_vision) {
  if (use_vision) return prototype_vis(episode);
  PrototypeSet p = prototypes(support_features(episode));
  p.kind = PrototypeKind::Vision;
  return p;
}

}  // namespace

double accuracy(const Episode& episode, const PrototypeSet& protos) {
  if (protos.per_class.empty()) throw EmptyPrototypes("no prototypes");
  if (episode.query.empty()) throw CountMismatch("episode has no queries");
  std::size_t correct = 0;
  for (const auto& q : episode.query)
    if (predict(normalize(q.embedding).values(), protos.per_class) == q.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(episode.query.size());
}

double evaluate_episode(const Episode& episode, const ModelParams& params, FusionFactor u, double tau,
                        const InferenceConfig& cfg) {
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be > 0");
  episode.validate();
  const PrototypeSet c_t = prototype_text(episode, params, cfg.fusion);
  const PrototypeSet c_v = vision_or_plain(episode, cfg.use_vision);
  // softmax(cos / tau) is monotone in cos, so the argmax needs no tau
  return accuracy(episode, combine_prototypes(c_t, c_v, u));
}

std::vector<double> u_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw InvalidArgument("grid step must lie in (0, 1]");
  const double n = 1.0 / step;
  const double rounded = std::round(n);
  if (std::abs(n - rounded) > 1e-9) throw InvalidArgument("grid step must divide 1 evenly");
  const auto count = static_cast<std::size_t>(rounded);
  std::vector<double> grid(count + 1);
  for (std::size_t i = 0; i <= count; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(count);
  return grid;
}

std::vector<SweepPoint> sweep_u(const std::vector<Episode>& episodes, const ModelParams& params, double step,
                                const InferenceConfig& cfg) {
  if (episodes.empty()) throw EmptyValidation("no validation episodes");
  const auto grid = u_grid(step);
  std::vector<double> totals(grid.size(), 0.0);
  for (const auto& ep : episodes) {
    ep.validate();
    const PrototypeSet c_t = prototype_text(ep, params, cfg.fusion);
    const PrototypeSet c_v = vision_or_plain(ep, cfg.use_vision);
    for (std::size_t g = 0; g < grid.size(); ++g)
      totals[g] += accuracy(ep, combine_prototypes(c_t, c_v, FusionFactor(grid[g])));
  }
  std::vector<SweepPoint> out;
  for (std::size_t g = 0; g < grid.size(); ++g)
    out.push_back({grid[g], totals[g] / static_cast<double>(episodes.size())});
  return out;
}

FusionFactor best_u(const std::vector<SweepPoint>& sweep) {
  if (sweep.empty()) throw EmptyValidation("empty sweep");
  const SweepPoint* best = &sweep.front();
  for (const auto& p : sweep)
    if (p.accuracy > best->accuracy) best = &p;
  return FusionFactor(best->u);
}

FusionFactor grid_search_u(const std::vector<Episode>& validation, const ModelParams& params, double tau,
                           double step, const InferenceConfig& cfg) {
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be > 0");
  if (validation.empty()) throw EmptyValidation("no validation episodes");
  return best_u(sweep_u(validation, params, step, cfg));
}

std::vector<Embedding> select_top_k(const std::vector<Embedding>& candidates, const Embedding& text, std::size_t k) {
  if (candidates.size() < k)
    throw InsufficientCandidates("need " + std::to_string(k) + " candidates, have " +
                                 std::to_string(candidates.size()));
  const Vector t = normalize(text).values();
  std::vector<double> score(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].dim() != text.dim()) throw DimensionMismatch("candidate dim differs from text");
    score[i] = normalize(candidates[i]).values().dot(t);
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<Embedding> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(candidates[order[i]]);
  return out;
}

}  // namespace fewshot
}  // namespace kvalign
