#pragma once

#include "kvalign/autodiff.hpp"
#include "kvalign/embedding.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kvalign {

/// T tokens of a shared dimension, stored as the rows of a matrix.
class TokenSet {
 public:
  TokenSet() = default;
  explicit TokenSet(Matrix tokens);
  explicit TokenSet(const std::vector<Embedding>& tokens);

  std::size_t size() const noexcept { return static_cast<std::size_t>(tokens_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(tokens_.cols()); }
  const Matrix& tokens() const noexcept { return tokens_; }
  Embedding token(std::size_t i) const;
  /// Mean token.
  Vector average() const { return tokens_.colwise().mean().transpose(); }

 private:
  Matrix tokens_;
};

/// Channel gate: beta = sigmoid(sigmoid([text; avg] W1) W2).
struct GateParams {
  Matrix w1;  ///< (2 dim) x hidden
  Matrix w2;  ///< hidden x dim
};

/// Multi-head self-attention. Head h owns columns [h d, (h+1) d) of the
/// query/key/value projections.
struct AttentionParams {
  int heads = 1;
  Matrix wq;  ///< dim x dim
  Matrix wk;
  Matrix wv;
  Matrix wo;  ///< output projection, dim x dim

  int head_dim() const { return static_cast<int>(wq.cols()) / heads; }
};

/// Every trainable parameter: channel gate, attention, and the linear map
/// from the text-encoder space into the embedding space.
struct ModelParams {
  GateParams gate;
  AttentionParams attention;
  Matrix text_projection;  ///< text_dim x dim

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from the portable RNG.
  static ModelParams init(int dim, int text_dim, int hidden, int heads, std::uint64_t seed);
  /// Same shapes, all zeros.
  static ModelParams zeros_like(const ModelParams& p);

  int dim() const { return static_cast<int>(text_projection.cols()); }
  int text_dim() const { return static_cast<int>(text_projection.rows()); }
  int hidden() const { return static_cast<int>(gate.w1.cols()); }

  /// Parameter tensors in a fixed order (gate.w1, gate.w2, wq, wk, wv, wo,
  /// text_projection).
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
  static const std::vector<std::string>& tensor_names();

  std::size_t parameter_count() const;
  Vector flatten() const;
  void assign(const Vector& flat);

  /// Throws ShapeMismatch on inconsistent shapes.
  void validate() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

enum class FusionMode { GateOnly, GateAndAttention };

struct FusionConfig {
  FusionMode mode = FusionMode::GateAndAttention;
  /// When false the text slot is empty: zeros in the gate input and no text
  /// token in attention.
  bool use_text = true;
};

namespace fusion {

struct GateOutput {
  Embedding beta;
  TokenSet modulated;
};

/// text is already in embedding space (projected).
GateOutput channel_gate(const Embedding& text, const TokenSet& support, const GateParams& p);

/// Multi-head attention output (AV)W without the residual path.
TokenSet self_attend(const TokenSet& ts, const AttentionParams& p);

/// Row-softmax attention matrices, one per head (test/inspection helper).
std::vector<Matrix> attention_weights(const TokenSet& ts, const AttentionParams& p);

/// Projects the raw text, gates the support tokens, optionally prepends the
/// text token and applies a residual attention block (x + MSA(x)), then
/// averages the support-derived tokens and
/// normalizes.
Embedding fuse(const Embedding& text_raw, const TokenSet& support, const ModelParams& params,
               const FusionConfig& cfg);

Embedding project_text(const Embedding& text_raw, const ModelParams& params);

/// Tape forms.
namespace graph {

struct ParamVars {
  ad::Var w1, w2, wq, wk, wv, wo, text_projection;
  int heads = 1;

  /// Each tensor becomes a variable (trainable) or a constant.
  static ParamVars bind(ad::Tape& tape, const ModelParams& p, bool trainable);
  ModelParams gradient(const ad::Tape& tape) const;
};

/// Returns (beta 1 x d, modulated tokens T x d).
std::pair<ad::Var, ad::Var> channel_gate(ad::Var text, ad::Var tokens, const ParamVars& p);
ad::Var self_attend(ad::Var tokens, const ParamVars& p);
ad::Var project_text(ad::Var text_raw, const ParamVars& p);
/// Unit-norm Z_s as a 1 x d row.
ad::Var fuse(ad::Var text_raw, ad::Var tokens, const ParamVars& p, const FusionConfig& cfg);

}  // namespace graph
}  // namespace fusion
}  // namespace kvalign
