#include "kvalign/fusion.hpp"

#include "kvalign/errors.hpp"
#include "kvalign/rng.hpp"

#include <cmath>
#include <string>

namespace kvalign {

TokenSet::TokenSet(Matrix tokens) : tokens_(std::move(tokens)) {
  if (tokens_.rows() < 1) throw InvalidArgument("token set needs at least one token");
  if (!tokens_.allFinite()) throw InvalidArgument("token set has non-finite entries");
}

TokenSet::TokenSet(const std::vector<Embedding>& tokens) : TokenSet(stack_rows(tokens)) {}

Embedding TokenSet::token(std::size_t i) const {
  return Embedding(tokens_.row(static_cast<Eigen::Index>(i)).transpose());
}

namespace {

Matrix uniform_init(Rng& rng, int rows, int cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols)
    throw ShapeMismatch(std::string(name) + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                        ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
}

}  // namespace

ModelParams ModelParams::init(int dim, int text_dim, int hidden, int heads, std::uint64_t seed) {
  if (dim < 1 || text_dim < 1 || hidden < 1 || heads < 1 || dim % heads != 0)
    throw InvalidArgument("model shapes need positive sizes and heads dividing dim");
  Rng rng(seed);
  ModelParams p;
  p.gate.w1 = uniform_init(rng, 2 * dim, hidden);
  p.gate.w2 = uniform_init(rng, hidden, dim);
  p.attention.heads = heads;
  p.attention.wq = uniform_init(rng, dim, dim);
  p.attention.wk = uniform_init(rng, dim, dim);
  p.attention.wv = uniform_init(rng, dim, dim);
  p.attention.wo = uniform_init(rng, dim, dim);
  p.text_projection = uniform_init(rng, text_dim, dim);
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& src) {
  ModelParams p = src;
  for (Matrix* m : p.tensors()) m->setZero();
  return p;
}

std::vector<Matrix*> ModelParams::tensors() {
  return {&gate.w1, &gate.w2, &attention.wq, &attention.wk, &attention.wv, &attention.wo, &text_projection};
}

std::vector<const Matrix*> ModelParams::tensors() const {
  return {&gate.w1, &gate.w2, &attention.wq, &attention.wk, &attention.wv, &attention.wo, &text_projection};
}

const std::vector<std::string>& ModelParams::tensor_names() {
  static const std::vector<std::string> names{"gate.w1", "gate.w2", "attention.wq", "attention.wk",
                                              "attention.wv", "attention.wo", "text_projection"};
  return names;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

Vector ModelParams::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  for (const Matrix* m : tensors()) {
    flat.segment(at, m->size()) = m->reshaped();
    at += m->size();
  }
  return flat;
}

void ModelParams::assign(const Vector& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count()))
    throw ShapeMismatch("flat parameter vector has the wrong length");
  Eigen::Index at = 0;
  for (Matrix* m : tensors()) {
    m->reshaped() = flat.segment(at, m->size());
    at += m->size();
  }
}

void ModelParams::validate() const {
  const Eigen::Index d = text_projection.cols();
  const Eigen::Index h = gate.w1.cols();
  if (d < 1 || h < 1) throw ShapeMismatch("empty model parameters");
  expect_shape(gate.w1, 2 * d, h, "gate.w1");
  expect_shape(gate.w2, h, d, "gate.w2");
  for (const Matrix* m : {&attention.wq, &attention.wk, &attention.wv, &attention.wo})
    expect_shape(*m, d, d, "attention projection");
  if (attention.heads < 1 || d % attention.heads != 0)
    throw ShapeMismatch("attention heads must divide the embedding dim");
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.attention.heads != b.attention.heads) return false;
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i]->rows() != tb[i]->rows() || ta[i]->cols() != tb[i]->cols()) return false;
    if (*ta[i] != *tb[i]) return false;
  }
  return true;
}

namespace fusion {
namespace graph {

ParamVars ParamVars::bind(ad::Tape& tape, const ModelParams& p, bool trainable) {
  p.validate();
  auto make = [&](const Matrix& m) { return trainable ? tape.variable(m) : tape.constant(m); };
  ParamVars v;
  v.w1 = make(p.gate.w1);
  v.w2 = make(p.gate.w2);
  v.wq = make(p.attention.wq);
  v.wk = make(p.attention.wk);
  v.wv = make(p.attention.wv);
  v.wo = make(p.attention.wo);
  v.text_projection = make(p.text_projection);
  v.heads = p.attention.heads;
  return v;
}

ModelParams ParamVars::gradient(const ad::Tape& tape) const {
  ModelParams g;
  g.gate.w1 = tape.grad(w1);
  g.gate.w2 = tape.grad(w2);
  g.attention.heads = heads;
  g.attention.wq = tape.grad(wq);
  g.attention.wk = tape.grad(wk);
  g.attention.wv = tape.grad(wv);
  g.attention.wo = tape.grad(wo);
  g.text_projection = tape.grad(text_projection);
  return g;
}

std::pair<ad::Var, ad::Var> channel_gate(ad::Var text, ad::Var tokens, const ParamVars& p) {
  if (text.rows() != 1 || text.cols() != tokens.cols() || p.w1.rows() != 2 * tokens.cols())
    throw ShapeMismatch("channel gate: text/token/weight shapes disagree");
  const ad::Var input = ad::concat_cols({text, ad::mean_rows(tokens)});
  const ad::Var hidden = ad::sigmoid(ad::matmul(input, p.w1));
  const ad::Var beta = ad::sigmoid(ad::matmul(hidden, p.w2));
  return {beta, ad::mul_rowwise(tokens, beta)};
}

ad::Var self_attend(ad::Var tokens, const ParamVars& p) {
  const Eigen::Index d = tokens.cols();
  if (p.wq.rows() != d || d % p.heads != 0) throw ShapeMismatch("self attention: token dim mismatch");
  const Eigen::Index dh = d / p.heads;
  const ad::Var q = ad::matmul(tokens, p.wq);
  const ad::Var k = ad::matmul(tokens, p.wk);
  const ad::Var v = ad::matmul(tokens, p.wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> heads;
  for (int h = 0; h < p.heads; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * dh, dh);
    const ad::Var kh = ad::slice_cols(k, h * dh, dh);
    const ad::Var vh = ad::slice_cols(v, h * dh, dh);
    const ad::Var a = ad::row_softmax(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
    heads.push_back(ad::matmul(a, vh));
  }
  return ad::matmul(ad::concat_cols(heads), p.wo);
}

ad::Var project_text(ad::Var text_raw, const ParamVars& p) {
  if (text_raw.rows() != 1 || text_raw.cols() != p.text_projection.rows())
    throw ShapeMismatch("text embedding does not match the projection input dim");
  return ad::matmul(text_raw, p.text_projection);
}

ad::Var fuse(ad::Var text_raw, ad::Var tokens, const ParamVars& p, const FusionConfig& cfg) {
  ad::Tape& tape = *tokens.tape();
  const Eigen::Index t = tokens.rows();
  const ad::Var text = cfg.use_text ? project_text(text_raw, p) : tape.constant(Matrix::Zero(1, tokens.cols()));
  const ad::Var modulated = channel_gate(text, tokens, p).second;
  ad::Var support = modulated;
  if (cfg.mode == FusionMode::GateAndAttention) {
    const ad::Var seq = cfg.use_text ? ad::concat_rows({text, modulated}) : modulated;
    const ad::Var attended = ad::add(seq, self_attend(seq, p));
    support = cfg.use_text ? ad::slice_rows(attended, 1, t) : attended;
  }
  return ad::normalize_rows(ad::mean_rows(support));
}

}  // namespace graph

GateOutput channel_gate(const Embedding& text, const TokenSet& support, const GateParams& p) {
  const Eigen::Index d = static_cast<Eigen::Index>(support.dim());
  if (text.dim() != support.dim() || p.w1.rows() != 2 * d || p.w2.cols() != d || p.w1.cols() != p.w2.rows())
    throw ShapeMismatch("channel gate: text/token/weight shapes disagree");
  ad::Tape tape;
  graph::ParamVars v;
  v.w1 = tape.constant(p.w1);
  v.w2 = tape.constant(p.w2);
  const auto [beta, modulated] =
      graph::channel_gate(tape.constant(text.values().transpose()), tape.constant(support.tokens()), v);
  return {Embedding(beta.value().row(0).transpose()), TokenSet(modulated.value())};
}

TokenSet self_attend(const TokenSet& ts, const AttentionParams& p) {
  const Eigen::Index d = static_cast<Eigen::Index>(ts.dim());
  if (p.heads < 1 || d % p.heads != 0) throw ShapeMismatch("attention heads must divide the token dim");
  for (const Matrix* m : {&p.wq, &p.wk, &p.wv, &p.wo})
    if (m->rows() != d || m->cols() != d) throw ShapeMismatch("attention projections must be dim x dim");
  ad::Tape tape;
  graph::ParamVars v;
  v.wq = tape.constant(p.wq);
  v.wk = tape.constant(p.wk);
  v.wv = tape.constant(p.wv);
  v.wo = tape.constant(p.wo);
  v.heads = p.heads;
  return TokenSet(graph::self_attend(tape.constant(ts.tokens()), v).value());
}

std::vector<Matrix> attention_weights(const TokenSet& ts, const AttentionParams& p) {
  const Eigen::Index d = static_cast<Eigen::Index>(ts.dim());
  if (p.heads < 1 || d % p.heads != 0 || p.wq.rows() != d) throw ShapeMismatch("attention shapes disagree");
  const Eigen::Index dh = d / p.heads;
  const Matrix q = ts.tokens() * p.wq;
  const Matrix k = ts.tokens() * p.wk;
  std::vector<Matrix> out;
  for (int h = 0; h < p.heads; ++h) {
    Matrix s = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() / std::sqrt(static_cast<double>(dh));
    s = (s.colwise() - s.rowwise().maxCoeff()).array().exp().matrix();
    s.array().colwise() /= s.rowwise().sum().array();
    out.push_back(std::move(s));
  }
  return out;
}

Embedding project_text(const Embedding& text_raw, const ModelParams& params) {
  if (static_cast<Eigen::Index>(text_raw.dim()) != params.text_projection.rows())
    throw ShapeMismatch("text embedding does not match the projection input dim");
  return Embedding((text_raw.values().transpose() * params.text_projection).transpose());
}

Embedding fuse(const Embedding& text_raw, const TokenSet& support, const ModelParams& params,
               const FusionConfig& cfg) {
  if (static_cast<Eigen::Index>(support.dim()) != params.text_projection.cols())
    throw ShapeMismatch("support tokens do not match the model dim");
  ad::Tape tape;
  const auto vars = graph::ParamVars::bind(tape, params, false);
  const ad::Var out =
      graph::fuse(tape.constant(text_raw.values().transpose()), tape.constant(support.tokens()), vars, cfg);
  return normalize(Vector(out.value().row(0).transpose()));
}

}  // namespace fusion
}  // namespace kvalign
