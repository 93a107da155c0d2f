#include "kvalign/errors.hpp"
#include "kvalign/fewshot.hpp"
#include "kvalign/synthdata.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace kvalign;

namespace {

struct World {
  GeneratorConfig gen;
  ClassBank bank;
  ModelParams params;
};

World small_world() {
  World w;
  w.gen.class_pool = 10;
  w.gen.dim = 12;
  w.gen.token_count = 3;
  w.gen.seed = 4;
  w.bank = synthdata::make_class_bank(w.gen, Split::Novel);
  w.params = ModelParams::init(12, 12, 6, 2, 8);
  return w;
}

Vector unit_mean(const std::vector<Embedding>& es) {
  Vector s = Vector::Zero(static_cast<Eigen::Index>(es.front().dim()));
  for (const auto& e : es) s += e.values();
  return s / s.norm();
}

}  // namespace

TEST(Prototypes, NormalizedClassMeans) {
  const std::vector<std::vector<Embedding>> per_class{{Embedding{1.0, 0.0}, Embedding{0.0, 1.0}},
                                                     {Embedding{0.0, -2.0}}};
  const auto p = fewshot::prototypes(per_class);
  EXPECT_EQ(p.kind, PrototypeKind::Plain);
  EXPECT_NEAR(p.per_class[0][0], std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(p.per_class[0][1], std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(p.per_class[1][1], -1.0, 1e-15);
  EXPECT_THROW(fewshot::prototypes({{Embedding{1.0, 0.0}}, {}}), EmptyClass);
}

TEST(Prototypes, VisionUsesRealAndSyntheticSamples) {
  const World w = small_world();
  const Episode ep = synthdata::gen_episode(w.gen, w.bank, 3, 2, 2, 1);
  const auto enriched = fewshot::enriched_support(ep);
  const auto feats = fewshot::support_features(ep);
  const auto cv = fewshot::prototype_vis(ep);
  EXPECT_EQ(cv.kind, PrototypeKind::Vision);
  for (std::size_t c = 0; c < 3; ++c) {
    ASSERT_EQ(enriched[c].size(), 4u);
    EXPECT_EQ(enriched[c][0], feats[c][0]);
    EXPECT_EQ(enriched[c][3], ep.synthetic[c][1]);
    EXPECT_LT((cv.per_class[c].values() - unit_mean(enriched[c])).norm(), 1e-14);
  }
}

TEST(Prototypes, PooledFeatureIsNormalizedTokenMean) {
  const TokenSet ts(Matrix{{1.0, 0.0}, {1.0, 2.0}});
  const Embedding e = fewshot::pooled_feature(ts);
  EXPECT_NEAR(e[0], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(e[1], 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Prototypes, TextPrototypeAveragesFusedSupport) {
  const World w = small_world();
  const Episode ep = synthdata::gen_episode(w.gen, w.bank, 3, 3, 1, 2);
  const auto ct = fewshot::prototype_text(ep, w.params);
  EXPECT_EQ(ct.kind, PrototypeKind::Text);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<Embedding> fused;
    for (const auto& s : ep.support)
      if (s.label == c) fused.push_back(fusion::fuse(ep.text_desc[c], s.tokens, w.params, {}));
    EXPECT_LT((ct.per_class[c].values() - unit_mean(fused)).norm(), 1e-13);
  }
}

TEST(Combine, ConvexCombinationEndpoints) {
  const PrototypeSet t{{Embedding{1.0, 0.0}}, PrototypeKind::Text};
  const PrototypeSet v{{Embedding{0.0, 1.0}}, PrototypeKind::Vision};
  EXPECT_NEAR(fewshot::combine_prototypes(t, v, FusionFactor(1.0)).per_class[0][0], 1.0, 1e-15);
  EXPECT_NEAR(fewshot::combine_prototypes(t, v, FusionFactor(0.0)).per_class[0][1], 1.0, 1e-15);
  const auto half = fewshot::combine_prototypes(t, v, FusionFactor(0.5));
  EXPECT_EQ(half.kind, PrototypeKind::Combined);
  EXPECT_NEAR(half.per_class[0][0], std::sqrt(0.5), 1e-15);
  const auto q = fewshot::combine_prototypes(t, v, FusionFactor(0.25)).per_class[0];
  EXPECT_NEAR(q[0] / q[1], 1.0 / 3.0, 1e-14);
}

TEST(Combine, Errors) {
  EXPECT_THROW(FusionFactor(-0.1), InvalidArgument);
  EXPECT_THROW(FusionFactor(1.1), InvalidArgument);
  EXPECT_THROW(FusionFactor(std::nan("")), InvalidArgument);
  const PrototypeSet t{{Embedding{1.0, 0.0}}, PrototypeKind::Text};
  const PrototypeSet v{{Embedding{0.0, 1.0}, Embedding{1.0, 1.0}}, PrototypeKind::Vision};
  EXPECT_THROW(fewshot::combine_prototypes(t, v, FusionFactor(0.5)), CountMismatch);
  EXPECT_THROW(fewshot::combine_prototypes(t, t, FusionFactor(0.5)), KindMismatch);
}

TEST(Accuracy, CountsNearestPrototype) {
  Episode ep;
  ep.n_way = 2;
  ep.k_shot = 1;
  ep.query_per_class = 2;
  ep.query = {{0, Embedding{1.0, 0.1}}, {0, Embedding{-1.0, 0.2}}, {1, Embedding{0.1, 1.0}}, {1, Embedding{0.0, 2.0}}};
  const PrototypeSet p{{Embedding{1.0, 0.0}, Embedding{0.0, 1.0}}, PrototypeKind::Plain};
  EXPECT_DOUBLE_EQ(fewshot::accuracy(ep, p), 0.75);
}

TEST(Evaluate, EndpointsMatchSinglePrototypes) {
  const World w = small_world();
  const Episode ep = synthdata::gen_episode(w.gen, w.bank, 4, 2, 3, 3);
  EXPECT_DOUBLE_EQ(fewshot::evaluate_episode(ep, w.params, FusionFactor(1.0), 0.2),
                   fewshot::accuracy(ep, fewshot::prototype_text(ep, w.params)));
  EXPECT_DOUBLE_EQ(fewshot::evaluate_episode(ep, w.params, FusionFactor(0.0), 0.2),
                   fewshot::accuracy(ep, fewshot::prototype_vis(ep)));
  InferenceConfig no_vision;
  no_vision.use_vision = false;
  EXPECT_DOUBLE_EQ(fewshot::evaluate_episode(ep, w.params, FusionFactor(0.0), 0.2, no_vision),
                   fewshot::accuracy(ep, fewshot::prototypes(fewshot::support_features(ep))));
}

TEST(Sweep, GridAndSelection) {
  EXPECT_EQ(fewshot::u_grid(0.25), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(fewshot::u_grid(0.1).size(), 11u);
  EXPECT_THROW(fewshot::u_grid(0.3), InvalidArgument);
  EXPECT_THROW(fewshot::u_grid(0.0), InvalidArgument);
  EXPECT_DOUBLE_EQ(fewshot::best_u({{0.0, 0.5}, {0.5, 0.7}, {1.0, 0.7}}).value(), 0.5);
  EXPECT_THROW(fewshot::best_u({}), EmptyValidation);
}

TEST(Sweep, AgreesWithPerEpisodeEvaluation) {
  const World w = small_world();
  std::vector<Episode> eps;
  for (std::uint64_t s = 0; s < 4; ++s) eps.push_back(synthdata::gen_episode(w.gen, w.bank, 3, 1, 2, s));
  const auto sweep = fewshot::sweep_u(eps, w.params, 0.5);
  ASSERT_EQ(sweep.size(), 3u);
  for (const auto& pt : sweep) {
    double mean = 0.0;
    for (const auto& ep : eps) mean += fewshot::evaluate_episode(ep, w.params, FusionFactor(pt.u), 0.2);
    EXPECT_NEAR(pt.accuracy, mean / 4.0, 1e-15);
  }
  EXPECT_EQ(fewshot::grid_search_u(eps, w.params, 0.2, 0.5).value(), fewshot::best_u(sweep).value());
  EXPECT_THROW(fewshot::grid_search_u({}, w.params, 0.2, 0.5), EmptyValidation);
}

TEST(SelectTopK, OrdersBySimilarityWithStableTies) {
  const Embedding text{1.0, 0.0};
  const std::vector<Embedding> c{Embedding{0.0, 1.0}, Embedding{1.0, 1.0}, Embedding{2.0, 2.0}, Embedding{1.0, 0.0}};
  const auto top = fewshot::select_top_k(c, text, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0], c[3]);
  EXPECT_EQ(top[1], c[1]);
  EXPECT_EQ(top[2], c[2]);
  EXPECT_THROW(fewshot::select_top_k(c, text, 5), InsufficientCandidates);
}

TEST(EpisodeValidation, DetectsInconsistentCounts) {
  const World w = small_world();
  Episode ep = synthdata::gen_episode(w.gen, w.bank, 3, 2, 2, 1);
  EXPECT_NO_THROW(ep.validate());
  Episode missing = ep;
  missing.query.pop_back();
  EXPECT_THROW(missing.validate(), CountMismatch);
  Episode bad_label = ep;
  bad_label.support[0].label = 7;
  EXPECT_THROW(bad_label.validate(), CountMismatch);
  Episode synth = ep;
  synth.synthetic.pop_back();
  EXPECT_THROW(synth.validate(), CountMismatch);
}
