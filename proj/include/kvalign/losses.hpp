#pragma once

#include "kvalign/autodiff.hpp"
#include "kvalign/geometry.hpp"
#include "kvalign/grads.hpp"

#include <cstddef>
#include <vector>

namespace kvalign {

enum class Anchor { Text, Vision };

/// One class's (text, fused support, synthetic vision) embeddings.
struct EmbeddingTriplet {
  Embedding text;
  Embedding support;
  Embedding vision;
};

/// B triplets, one per class of the episode. The other B - 1 classes act as
/// negatives in the contrastive denominators.
struct AlignmentBatch {
  std::vector<EmbeddingTriplet> triplets;

  std::size_t size() const noexcept { return triplets.size(); }
};

struct LossConfig {
  double temperature = 0.2;
  KernelSpec kernel = KernelSpec::rbf(1.0);
  Anchor anchor = Anchor::Text;
};

namespace losses {

enum class Objective { D2A, A2D, Align, InfoNCE, LinearVolume };

void validate(const AlignmentBatch& batch, const LossConfig& cfg);

/// V(j, i) = Vol_H(anchor_j, data_i), where the data slots are the two
/// non-anchor members of triplet i.
Matrix volume_matrix(const AlignmentBatch& batch, const LossConfig& cfg);

/// -(1/B) sum_i log softmax_j(-V(j, i)/tau)[i]  (anchor varies)
double d2a_from_volumes(const Matrix& volumes, double tau);
/// -(1/B) sum_i log softmax_j(-V(i, j)/tau)[i]  (data pair varies)
double a2d_from_volumes(const Matrix& volumes, double tau);

double loss_d2a(const AlignmentBatch& batch, const LossConfig& cfg);
double loss_a2d(const AlignmentBatch& batch, const LossConfig& cfg);
double loss_align(const AlignmentBatch& batch, const LossConfig& cfg);
/// Symmetric pairwise InfoNCE between the anchor and each other modality.
double loss_infonce(const AlignmentBatch& batch, const LossConfig& cfg);
/// loss_align with the kernel forced to Linear.
double loss_linear_volume(const AlignmentBatch& batch, const LossConfig& cfg);

double evaluate(Objective objective, const AlignmentBatch& batch, const LossConfig& cfg);

/// Value and gradient of an objective w.r.t. every triplet member, ordered
/// text, support, vision per triplet.
struct ObjectiveGradient {
  double value = 0.0;
  grads::GradientSet gradient;
};
ObjectiveGradient evaluate_with_gradient(Objective objective, const AlignmentBatch& batch,
                                         const LossConfig& cfg);

/// Softmax over cos(query, prototype)/tau.
std::vector<double> classify(const Embedding& query, const std::vector<Embedding>& prototypes, double tau);

double cross_entropy(const std::vector<double>& probs, std::size_t label);

/// Tape forms used by the trainer. Each item lists its members with the
/// anchor first; items may hold two or three members.
namespace graph {

struct AlignmentTerm {
  ad::Var loss;
  std::size_t skipped = 0;  ///< item terms dropped for a singular kernel Gram
};

/// ½(L_D2A + L_A2D). With skip_degenerate, any item whose row or column of
/// volumes touches a singular Gram is left out of that direction's mean;
/// otherwise such a batch throws DegenerateConfiguration.
AlignmentTerm volume_contrastive(ad::Tape& tape, const std::vector<std::vector<ad::Var>>& items,
                                 double tau, const KernelSpec& kernel, bool skip_degenerate);

ad::Var d2a(ad::Tape& tape, const std::vector<std::vector<ad::Var>>& items, double tau,
            const KernelSpec& kernel);
ad::Var a2d(ad::Tape& tape, const std::vector<std::vector<ad::Var>>& items, double tau,
            const KernelSpec& kernel);

ad::Var infonce(ad::Tape& tape, const std::vector<std::vector<ad::Var>>& items, double tau);

}  // namespace graph
}  // namespace losses
}  // namespace kvalign
