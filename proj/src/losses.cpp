#include "kvalign/losses.hpp"

#include "kvalign/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kvalign::losses {
namespace {

double log_sum_exp(const Vector& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

// Members of a triplet with the anchor first.
std::vector<Embedding> members(const EmbeddingTriplet& t, Anchor anchor) {
  if (anchor == Anchor::Text) return {t.text, t.support, t.vision};
  return {t.vision, t.text, t.support};
}

std::vector<std::vector<ad::Var>> graph_items(ad::Tape& tape, const AlignmentBatch& batch, Anchor anchor,
                                              std::vector<ad::Var>& ordered) {
  std::vector<std::vector<ad::Var>> items;
  for (const auto& t : batch.triplets) {
    const ad::Var text = tape.variable(t.text.values().transpose());
    const ad::Var support = tape.variable(t.support.values().transpose());
    const ad::Var vision = tape.variable(t.vision.values().transpose());
    ordered.insert(ordered.end(), {text, support, vision});
    if (anchor == Anchor::Text) items.push_back({text, support, vision});
    else items.push_back({vision, text, support});
  }
  return items;
}

}  // namespace

void validate(const AlignmentBatch& batch, const LossConfig& cfg) {
  if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature))
    throw InvalidArgument("temperature must be > 0");
  if (batch.triplets.empty()) throw InvalidArgument("alignment batch is empty");
  const std::size_t d = batch.triplets.front().text.dim();
  for (const auto& t : batch.triplets) {
    for (const Embedding* e : {&t.text, &t.support, &t.vision}) {
      if (e->dim() != d) throw DimensionMismatch("triplet members differ in dimension");
      if (std::abs(e->norm() - 1.0) >= 1e-9) throw InvalidArgument("triplet members must be unit-normalized");
    }
  }
}

Matrix volume_matrix(const AlignmentBatch& batch, const LossConfig& cfg) {
  validate(batch, cfg);
  const auto b = static_cast<Eigen::Index>(batch.size());
  Matrix v(b, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto anchor_j = members(batch.triplets[static_cast<std::size_t>(j)], cfg.anchor);
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto data_i = members(batch.triplets[static_cast<std::size_t>(i)], cfg.anchor);
      v(j, i) = geometry::kernel_volume(cfg.kernel, {anchor_j[0], data_i[1], data_i[2]});
    }
  }
  return v;
}

double d2a_from_volumes(const Matrix& volumes, double tau) {
  const Eigen::Index b = volumes.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Vector logits = -volumes.col(i) / tau;
    total += log_sum_exp(logits) - logits[i];
  }
  return total / static_cast<double>(b);
}

double a2d_from_volumes(const Matrix& volumes, double tau) {
  const Eigen::Index b = volumes.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Vector logits = -volumes.row(i).transpose() / tau;
    total += log_sum_exp(logits) - logits[i];
  }
  return total / static_cast<double>(b);
}

double loss_d2a(const AlignmentBatch& batch, const LossConfig& cfg) {
  return d2a_from_volumes(volume_matrix(batch, cfg), cfg.temperature);
}

double loss_a2d(const AlignmentBatch& batch, const LossConfig& cfg) {
  return a2d_from_volumes(volume_matrix(batch, cfg), cfg.temperature);
}

double loss_align(const AlignmentBatch& batch, const LossConfig& cfg) {
  const Matrix v = volume_matrix(batch, cfg);
  return 0.5 * (d2a_from_volumes(v, cfg.temperature) + a2d_from_volumes(v, cfg.temperature));
}

double loss_linear_volume(const AlignmentBatch& batch, const LossConfig& cfg) {
  LossConfig linear = cfg;
  linear.kernel = KernelSpec::linear();
  return loss_align(batch, linear);
}

double loss_infonce(const AlignmentBatch& batch, const LossConfig& cfg) {
  validate(batch, cfg);
  const auto b = static_cast<Eigen::Index>(batch.size());
  std::vector<std::vector<Embedding>> m;
  for (const auto& t : batch.triplets) m.push_back(members(t, cfg.anchor));

  double total = 0.0;
  for (std::size_t other = 1; other <= 2; ++other) {
    Matrix s(b, b);
    for (Eigen::Index i = 0; i < b; ++i)
      for (Eigen::Index j = 0; j < b; ++j)
        s(i, j) = normalize(m[static_cast<std::size_t>(i)][0]).values().dot(
                      normalize(m[static_cast<std::size_t>(j)][other]).values()) /
                  cfg.temperature;
    double rows = 0.0;
    double cols = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
      rows += log_sum_exp(s.row(i).transpose()) - s(i, i);
      cols += log_sum_exp(s.col(i)) - s(i, i);
    }
    total += 0.5 * (rows + cols) / static_cast<double>(b);
  }
  return total / 2.0;
}

double evaluate(Objective objective, const AlignmentBatch& batch, const LossConfig& cfg) {
  switch (objective) {
    case Objective::D2A: return loss_d2a(batch, cfg);
    case Objective::A2D: return loss_a2d(batch, cfg);
    case Objective::Align: return loss_align(batch, cfg);
    case Objective::InfoNCE: return loss_infonce(batch, cfg);
    case Objective::LinearVolume: return loss_linear_volume(batch, cfg);
  }
  throw InvalidArgument("unknown objective");
}

ObjectiveGradient evaluate_with_gradient(Objective objective, const AlignmentBatch& batch, const LossConfig& cfg) {
  validate(batch, cfg);
  ad::Tape tape;
  std::vector<ad::Var> ordered;
  const auto items = graph_items(tape, batch, cfg.anchor, ordered);
  ad::Var root;
  switch (objective) {
    case Objective::D2A: root = graph::d2a(tape, items, cfg.temperature, cfg.kernel); break;
    case Objective::A2D: root = graph::a2d(tape, items, cfg.temperature, cfg.kernel); break;
    case Objective::Align:
      root = graph::volume_contrastive(tape, items, cfg.temperature, cfg.kernel, false).loss;
      break;
    case Objective::InfoNCE: root = graph::infonce(tape, items, cfg.temperature); break;
    case Objective::LinearVolume:
      root = graph::volume_contrastive(tape, items, cfg.temperature, KernelSpec::linear(), false).loss;
      break;
  }
  tape.backward(root);
  ObjectiveGradient out;
  out.value = root.scalar();
  for (const auto& v : ordered) out.gradient.per_input.push_back(tape.grad(v).row(0).transpose());
  return out;
}

std::vector<double> classify(const Embedding& query, const std::vector<Embedding>& prototypes, double tau) {
  if (prototypes.empty()) throw EmptyPrototypes("no prototypes to classify against");
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be > 0");
  const Vector q = normalize(query).values();
  Vector logits(static_cast<Eigen::Index>(prototypes.size()));
  for (std::size_t i = 0; i < prototypes.size(); ++i) {
    if (prototypes[i].dim() != query.dim()) throw DimensionMismatch("prototype dim differs from query");
    logits[static_cast<Eigen::Index>(i)] = q.dot(normalize(prototypes[i]).values()) / tau;
  }
  const double lse = log_sum_exp(logits);
  std::vector<double> probs(prototypes.size());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(logits[static_cast<Eigen::Index>(i)] - lse);
  return probs;
}

double cross_entropy(const std::vector<double>& probs, std::size_t label) {
  if (label >= probs.size()) throw IndexOutOfRange("label " + std::to_string(label) + " out of range");
  double s = 0.0;
  for (double p : probs) s += p;
  if (std::abs(s - 1.0) > 1e-9) throw InvalidArgument("probabilities do not sum to 1");
  return -std::log(probs[label]);
}

namespace graph {
namespace {

using Items = std::vector<std::vector<ad::Var>>;

struct VolumeGrid {
  std::vector<std::vector<ad::Var>> vol;  // vol[j][i] = Vol(anchor_j, data_i)
  std::vector<std::vector<bool>> degenerate;
};

VolumeGrid build_grid(const Items& items, const KernelSpec& kernel) {
  const std::size_t b = items.size();
  const std::size_t width = items.front().size();
  for (const auto& it : items)
    if (it.size() != width || width < 2) throw ShapeMismatch("alignment items must share 2+ members");
  VolumeGrid g;
  g.vol.assign(b, std::vector<ad::Var>(b));
  g.degenerate.assign(b, std::vector<bool>(b, false));
  for (std::size_t j = 0; j < b; ++j)
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<ad::Var> rows{items[j][0]};
      rows.insert(rows.end(), items[i].begin() + 1, items[i].end());
      std::vector<Vector> raw;
      for (const auto& r : rows) raw.push_back(r.value().row(0).transpose());
      g.degenerate[j][i] = grads::is_degenerate(kernel, raw);
      g.vol[j][i] = grads::kernel_volume_node(kernel, rows);
    }
  return g;
}

// Mean over items of -log softmax(-V/tau)[i]; by_column selects D2A.
ad::Var contrastive_direction(ad::Tape& tape, const VolumeGrid& g, double tau, bool by_column, bool skip,
                              std::size_t& skipped) {
  const std::size_t b = g.vol.size();
  std::vector<ad::Var> terms;
  for (std::size_t i = 0; i < b; ++i) {
    bool bad = false;
    std::vector<ad::Var> logits;
    for (std::size_t j = 0; j < b; ++j) {
      const std::size_t r = by_column ? j : i;
      const std::size_t c = by_column ? i : j;
      bad = bad || g.degenerate[r][c];
      logits.push_back(ad::scale(g.vol[r][c], -1.0 / tau));
    }
    if (bad) {
      if (!skip) throw DegenerateConfiguration("singular kernel Gram in alignment batch");
      ++skipped;
      continue;
    }
    terms.push_back(ad::pick(ad::log_softmax_rows(ad::concat_cols(logits)), 0, static_cast<Eigen::Index>(i)));
  }
  if (terms.empty()) return tape.constant(Matrix::Zero(1, 1));
  return ad::scale(ad::add_n(terms), -1.0 / static_cast<double>(terms.size()));
}

}  // namespace

AlignmentTerm volume_contrastive(ad::Tape& tape, const Items& items, double tau, const KernelSpec& kernel,
                                 bool skip_degenerate) {
  if (items.empty()) throw InvalidArgument("alignment batch is empty");
  AlignmentTerm out;
  if (items.size() == 1) {
    out.loss = tape.constant(Matrix::Zero(1, 1));
    return out;
  }
  const VolumeGrid g = build_grid(items, kernel);
  const ad::Var d = contrastive_direction(tape, g, tau, true, skip_degenerate, out.skipped);
  const ad::Var a = contrastive_direction(tape, g, tau, false, skip_degenerate, out.skipped);
  out.loss = ad::scale(ad::add(d, a), 0.5);
  return out;
}

ad::Var d2a(ad::Tape& tape, const Items& items, double tau, const KernelSpec& kernel) {
  if (items.size() == 1) return tape.constant(Matrix::Zero(1, 1));
  std::size_t skipped = 0;
  return contrastive_direction(tape, build_grid(items, kernel), tau, true, false, skipped);
}

ad::Var a2d(ad::Tape& tape, const Items& items, double tau, const KernelSpec& kernel) {
  if (items.size() == 1) return tape.constant(Matrix::Zero(1, 1));
  std::size_t skipped = 0;
  return contrastive_direction(tape, build_grid(items, kernel), tau, false, false, skipped);
}

ad::Var infonce(ad::Tape&, const Items& items, double tau) {
  if (items.empty()) throw InvalidArgument("alignment batch is empty");
  const std::size_t width = items.front().size();
  const auto b = static_cast<Eigen::Index>(items.size());
  auto stack = [&](std::size_t slot) {
    std::vector<ad::Var> rows;
    for (const auto& it : items) rows.push_back(it.at(slot));
    return ad::normalize_rows(ad::concat_rows(rows));
  };
  const ad::Var anchors = stack(0);
  std::vector<ad::Var> pair_losses;
  for (std::size_t other = 1; other < width; ++other) {
    const ad::Var s = ad::scale(ad::matmul(anchors, ad::transpose(stack(other))), 1.0 / tau);
    const ad::Var row_lp = ad::log_softmax_rows(s);
    const ad::Var col_lp = ad::log_softmax_rows(ad::transpose(s));
    std::vector<ad::Var> diag;
    for (Eigen::Index i = 0; i < b; ++i) {
      diag.push_back(ad::pick(row_lp, i, i));
      diag.push_back(ad::pick(col_lp, i, i));
    }
    pair_losses.push_back(ad::scale(ad::add_n(diag), -0.5 / static_cast<double>(b)));
  }
  return ad::scale(ad::add_n(pair_losses), 1.0 / static_cast<double>(pair_losses.size()));
}

}  // namespace graph
}  // namespace kvalign::losses
