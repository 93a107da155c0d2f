#include "kvalign/diagnostics.hpp"

#include "kvalign/geometry.hpp"
#include "kvalign/grads.hpp"
#include "kvalign/losses.hpp"
#include "kvalign/rng.hpp"
#include "kvalign/synthdata.hpp"
#include "kvalign/trainer.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace kvalign::diagnostics {

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

namespace {

void observe(CheckResult& c, double err) {
  ++c.instances;
  if (!(err <= c.max_error)) c.max_error = std::isnan(err) ? INFINITY : err;
  c.passed = c.max_error <= c.tolerance;
}

Vector random_unit(Rng& rng, int dim) { return rng.unit_vector(static_cast<std::size_t>(dim)); }

Matrix random_orthogonal(Rng& rng, int dim) {
  Matrix a(dim, dim);
  for (int i = 0; i < dim; ++i) a.col(i) = rng.gaussian_vector(static_cast<std::size_t>(dim), 1.0);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ();
}

std::vector<Embedding> as_embeddings(const std::vector<Vector>& vs) {
  return std::vector<Embedding>(vs.begin(), vs.end());
}

}  // namespace

SuiteReport volume_identities(std::uint64_t seed, std::size_t instances, bool inject_bug) {
  CheckResult sine{"two_vector_sine", 0, 0.0, 1e-9};
  CheckResult triple{"three_vector_expansion", 0, 0.0, 1e-12};
  CheckResult norm{"single_vector_norm", 0, 0.0, 1e-12};
  CheckResult over{"overcomplete_collapse", 0, 0.0, 1e-9};
  CheckResult ortho{"orthogonal_invariance", 0, 0.0, 1e-9};
  CheckResult psd{"rbf_gram_psd", 0, 0.0, 1e-10};
  CheckResult linear{"linear_kernel_consistency", 0, 0.0, 1e-12};

  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng(Rng::derive(seed, {0x1de7ULL, i}));
    const int dim = 3 + static_cast<int>(rng.below(14));

    {
      const Vector u = random_unit(rng, dim);
      Vector w = rng.gaussian_vector(static_cast<std::size_t>(dim), 1.0);
      w -= w.dot(u) * u;
      w.normalize();
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const Vector v = std::cos(theta) * u + std::sin(theta) * w;
      observe(sine, std::abs(geometry::volume(as_embeddings({u, v})) - std::sin(theta)));
    }
    {
      const Vector t = random_unit(rng, dim), s = random_unit(rng, dim), v = random_unit(rng, dim);
      const double ts = t.dot(s), sv = s.dot(v), tv = t.dot(v);
      const double cross = (inject_bug ? -2.0 : 2.0) * ts * sv * tv;
      const double expansion = 1.0 - sv * sv - ts * ts - tv * tv + cross;
      observe(triple, std::abs(geometry::det_psd(geometry::gram(as_embeddings({t, s, v}))) - expansion));
    }
    {
      const Vector x = rng.gaussian_vector(static_cast<std::size_t>(dim), rng.uniform(0.1, 10.0));
      observe(norm, std::abs(geometry::volume(as_embeddings({x})) - x.norm()));
    }
    {
      std::vector<Vector> vs;
      for (int k = 0; k <= dim; ++k) vs.push_back(rng.gaussian_vector(static_cast<std::size_t>(dim), 1.0));
      observe(over, geometry::volume(as_embeddings(vs), static_cast<std::size_t>(dim) + 1));
    }
    {
      const Matrix q = random_orthogonal(rng, dim);
      const std::size_t k = 2 + rng.below(static_cast<std::uint64_t>(std::min(dim, 5) - 1));
      std::vector<Vector> vs, rotated;
      for (std::size_t j = 0; j < k; ++j) {
        vs.push_back(rng.gaussian_vector(static_cast<std::size_t>(dim), 1.0));
        rotated.push_back(q * vs.back());
      }
      observe(ortho, std::abs(geometry::volume(as_embeddings(vs)) - geometry::volume(as_embeddings(rotated))));
    }
    {
      const std::size_t k = 2 + rng.below(6);
      std::vector<Vector> vs;
      for (std::size_t j = 0; j < k; ++j) vs.push_back(random_unit(rng, dim));
      const KernelSpec spec = KernelSpec::rbf(rng.uniform(0.2, 3.0));
      observe(psd, std::max(0.0, -geometry::min_eigenvalue(geometry::kernel_gram(spec, as_embeddings(vs)))));
    }
    {
      const Vector a = random_unit(rng, dim), b = random_unit(rng, dim), c = random_unit(rng, dim);
      const auto vs = as_embeddings({a, b, c});
      observe(linear, std::abs(geometry::kernel_volume(KernelSpec::linear(), vs) - geometry::volume(vs)));
    }
  }
  return {{sine, triple, norm, over, ortho, psd, linear}};
}

namespace {

constexpr int kDim = 8;

Vector stack(const std::vector<Vector>& parts) {
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.size();
  Vector out(n);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

AlignmentBatch unpack_batch(const Vector& x, std::size_t b) {
  AlignmentBatch batch;
  for (std::size_t i = 0; i < b; ++i) {
    auto seg = [&](std::size_t slot) {
      return normalize(Vector(x.segment(static_cast<Eigen::Index>((3 * i + slot) * kDim), kDim)));
    };
    batch.triplets.push_back({seg(0), seg(1), seg(2)});
  }
  return batch;
}

// Losses are evaluated on normalized members, so the analytic gradient is
// pulled back through normalization for the comparison.
Vector pull_back_normalize(const Vector& raw, const Vector& grad_unit) {
  const double n = raw.norm();
  const Vector u = raw / n;
  return (grad_unit - u * u.dot(grad_unit)) / n;
}

GeneratorConfig small_world(std::uint64_t seed) {
  GeneratorConfig g;
  g.class_pool = 8;
  g.dim = kDim;
  g.token_count = 3;
  g.max_center_cosine = 0.9;
  g.seed = seed;
  return g;
}

struct ParameterInstance {
  TrainConfig cfg;
  ModelParams params;
  Episode episode;
};

ParameterInstance parameter_instance(std::uint64_t seed, std::size_t i, std::size_t attempt, const KernelSpec& spec,
                                     Anchor anchor, LossVariant variant) {
  ParameterInstance inst;
  TrainConfig& tc = inst.cfg;
  tc.n_way = 3;
  tc.k_shot = 1 + (i / 2) % 2;
  tc.query_per_class = 2;
  tc.hidden = 4;
  tc.heads = 2;
  tc.kernel = spec;
  tc.anchor = anchor;
  tc.loss_variant = variant;
  tc.seed = Rng::derive(seed, {0x7a11ULL, i, attempt});
  const GeneratorConfig gen = small_world(tc.seed);
  inst.params = trainer::initial_params(tc, gen);
  inst.episode = synthdata::gen_episode(gen, synthdata::make_class_bank(gen, Split::Base), tc.n_way, tc.k_shot,
                                        tc.query_per_class, tc.seed);
  return inst;
}

// Central differences at h = 1e-5 carry ~1e-11 absolute round-off, so a
// component much smaller than 1e-6 cannot be resolved at 1e-4 relative error.
constexpr double kResolvable = 1e-6;
constexpr std::size_t kMaxAttempts = 64;

bool resolvable(const Vector& g) {
  for (double v : g)
    if (v != 0.0 && std::abs(v) < kResolvable) return false;
  return true;
}

}  // namespace

SuiteReport gradient_checks(std::uint64_t seed, std::size_t count, double tolerance) {
  CheckResult vol{"kernel_volume", 0, 0.0, tolerance};
  CheckResult d2a{"loss_d2a", 0, 0.0, tolerance};
  CheckResult a2d{"loss_a2d", 0, 0.0, tolerance};
  CheckResult align{"loss_align", 0, 0.0, tolerance};
  CheckResult fuse{"fusion", 0, 0.0, tolerance};
  CheckResult total{"total_loss", 0, 0.0, tolerance};

  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(Rng::derive(seed, {0x96adULL, i}));
    const KernelSpec spec = KernelSpec::rbf(rng.uniform(0.5, 2.0));

    std::vector<Vector> vs;
    do {
      vs = {random_unit(rng, kDim), random_unit(rng, kDim), random_unit(rng, kDim)};
    } while (grads::is_degenerate(spec, vs));
    const auto f_vol = [&](const Vector& x) {
      return geometry::kernel_volume(spec, {Embedding(Vector(x.segment(0, kDim))), Embedding(Vector(x.segment(kDim, kDim))),
                                            Embedding(Vector(x.segment(2 * kDim, kDim)))});
    };
    observe(vol, grads::grad_check(f_vol, stack(grads::grad_kernel_volume(spec, vs).per_input), stack(vs), tolerance)
                     .max_relative_error);

    const std::size_t b = 3;
    LossConfig cfg;
    cfg.kernel = spec;
    cfg.anchor = rng.below(2) ? Anchor::Text : Anchor::Vision;
    const losses::Objective objectives[] = {losses::Objective::D2A, losses::Objective::A2D, losses::Objective::Align};
    std::vector<Vector> raw;
    std::vector<Vector> pulled[3];
    for (std::size_t attempt = 0;; ++attempt) {
      raw.clear();
      for (std::size_t j = 0; j < 3 * b; ++j) raw.push_back(rng.gaussian_vector(kDim, 1.0));
      bool ok = true;
      for (std::size_t o = 0; o < 3; ++o) {
        const auto g = losses::evaluate_with_gradient(objectives[o], unpack_batch(stack(raw), b), cfg).gradient.per_input;
        pulled[o].clear();
        for (std::size_t j = 0; j < g.size(); ++j) pulled[o].push_back(pull_back_normalize(raw[j], g[j]));
        ok = ok && resolvable(stack(pulled[o]));
      }
      if (ok || attempt + 1 == kMaxAttempts) break;
    }
    const Vector x = stack(raw);
    CheckResult* outs[] = {&d2a, &a2d, &align};
    for (std::size_t o = 0; o < 3; ++o) {
      const auto f = [&](const Vector& y) { return losses::evaluate(objectives[o], unpack_batch(y, b), cfg); };
      observe(*outs[o], grads::grad_check(f, stack(pulled[o]), x, tolerance).max_relative_error);
    }

    const LossVariant variants[] = {LossVariant::KernelVolume, LossVariant::InfoNCE, LossVariant::LinearVolume};
    for (std::size_t attempt = 0;; ++attempt) {
      const auto inst = parameter_instance(seed, i, attempt, spec, cfg.anchor, variants[i % 3]);
      const Vector theta = inst.params.flatten();
      const Matrix weights = rng.gaussian_vector(kDim, 1.0).transpose();
      const FusionConfig fc{i % 2 ? FusionMode::GateOnly : FusionMode::GateAndAttention, true};
      const auto forward = [&](ad::Tape& tape, const ModelParams& p, bool trainable) {
        const auto vars = fusion::graph::ParamVars::bind(tape, p, trainable);
        const ad::Var z = fusion::graph::fuse(tape.constant(inst.episode.text_desc[0].values().transpose()),
                                              tape.constant(inst.episode.support[0].tokens.tokens()), vars, fc);
        return std::make_pair(vars, ad::sum(ad::hadamard(z, tape.constant(weights))));
      };
      ad::Tape tape;
      const auto [vars, out] = forward(tape, inst.params, true);
      tape.backward(out);
      const Vector fusion_grad = vars.gradient(tape).flatten();
      const auto loss = trainer::total_loss(inst.episode, inst.params, inst.cfg, true);
      const Vector loss_grad = loss.gradient.flatten();
      if ((!resolvable(fusion_grad) || !resolvable(loss_grad)) && attempt + 1 < kMaxAttempts) continue;

      const auto f_fuse = [&](const Vector& y) {
        ModelParams p = inst.params;
        p.assign(y);
        ad::Tape t;
        return forward(t, p, false).second.scalar();
      };
      observe(fuse, grads::grad_check(f_fuse, fusion_grad, theta, tolerance).max_relative_error);
      const auto f_loss = [&](const Vector& y) {
        ModelParams p = inst.params;
        p.assign(y);
        return trainer::total_loss(inst.episode, p, inst.cfg, false).total;
      };
      observe(total, grads::grad_check(f_loss, loss_grad, theta, tolerance).max_relative_error);
      break;
    }
  }
  return {{vol, d2a, a2d, align, fuse, total}};
}

}  // namespace kvalign::diagnostics
