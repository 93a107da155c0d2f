#include "kvalign/synthdata.hpp"

#include "kvalign/errors.hpp"
#include "kvalign/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>

namespace kvalign {

void GeneratorConfig::validate() const {
  if (class_pool == 0 || dim == 0 || token_count == 0)
    throw InvalidArgument("class_pool, dim and token_count must be positive");
  for (double v : {support_noise, query_noise, text_shift, synthetic_shift})
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("noise and shift parameters must be finite and >= 0");
  if (!(max_center_cosine > -1.0 && max_center_cosine <= 1.0))
    throw InvalidArgument("max_center_cosine must lie in (-1, 1]");
}

namespace synthdata {
namespace {

enum Stream : std::uint64_t { kCenters = 1, kText = 2 };

Vector perturb(Rng& rng, const Vector& center, double magnitude) {
  const auto d = center.size();
  return center + rng.gaussian_vector(d, magnitude / std::sqrt(static_cast<double>(d)));
}

}  // namespace

std::vector<Embedding> gen_class_centers(const GeneratorConfig& cfg, Split split) {
  cfg.validate();
  Rng rng(Rng::derive(cfg.seed, {kCenters, static_cast<std::uint64_t>(split)}));
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  std::vector<Embedding> centers;
  centers.reserve(cfg.class_pool);
  while (centers.size() < cfg.class_pool) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt <= cfg.retry_budget && !placed; ++attempt) {
      const Vector c = rng.unit_vector(d);
      bool ok = true;
      for (const auto& other : centers)
        if (c.dot(other.values()) >= cfg.max_center_cosine) {
          ok = false;
          break;
        }
      if (ok) {
        centers.emplace_back(c, true);
        placed = true;
      }
    }
    if (!placed)
      throw SeparationUnsatisfiable("could not place class center " + std::to_string(centers.size()) + " within " +
                                    std::to_string(cfg.retry_budget) + " retries");
  }
  return centers;
}

ClassBank make_class_bank(const GeneratorConfig& cfg, Split split) {
  ClassBank bank;
  bank.split = split;
  bank.centers = gen_class_centers(cfg, split);
  for (std::size_t c = 0; c < bank.centers.size(); ++c) {
    Rng rng(Rng::derive(cfg.seed, {kText, static_cast<std::uint64_t>(split), c}));
    const Vector offset = cfg.text_shift * rng.unit_vector(static_cast<Eigen::Index>(cfg.dim));
    bank.text.push_back(normalize(Vector(bank.centers[c].values() + offset)));
  }
  return bank;
}

std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  return Rng::derive(seed, {0xe915ULL, purpose, index});
}

Episode gen_episode(const GeneratorConfig& cfg, const ClassBank& bank, std::size_t n_way, std::size_t k_shot,
                    std::size_t query_per_class, std::uint64_t seed) {
  cfg.validate();
  if (n_way == 0 || k_shot == 0 || query_per_class == 0) throw InvalidArgument("episode sizes must be positive");
  if (n_way > bank.centers.size()) throw InvalidArgument("n_way exceeds the class pool");
  if (bank.text.size() != bank.centers.size()) throw CountMismatch("class bank text/center counts differ");

  Rng rng(seed);
  std::vector<std::size_t> pool(bank.centers.size());
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < n_way; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }

  const std::size_t candidates = std::max(cfg.synthetic_candidates, k_shot);
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.query_per_class = query_per_class;
  ep.synthetic.resize(n_way);
  for (std::size_t label = 0; label < n_way; ++label) {
    const std::size_t cls = pool[label];
    const Vector& center = bank.centers[cls].values();
    ep.class_ids.push_back(cls);
    ep.text_desc.push_back(bank.text[cls]);
    for (std::size_t k = 0; k < k_shot; ++k) {
      Matrix tokens(static_cast<Eigen::Index>(cfg.token_count), d);
      for (Eigen::Index t = 0; t < tokens.rows(); ++t)
        tokens.row(t) = normalize(perturb(rng, center, cfg.support_noise)).values().transpose();
      ep.support.push_back({label, TokenSet(std::move(tokens))});
    }
    for (std::size_t m = 0; m < query_per_class; ++m)
      ep.query.push_back({label, normalize(perturb(rng, center, cfg.query_noise))});
    std::vector<Embedding> synth;
    for (std::size_t s = 0; s < candidates; ++s)
      synth.push_back(normalize(Vector(center + cfg.synthetic_shift * rng.unit_vector(d))));
    ep.synthetic[label] =
        candidates > k_shot ? fewshot::select_top_k(synth, bank.text[cls], k_shot) : std::move(synth);
  }
  return ep;
}

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::Support: return "support";
    case Modality::Query: return "query";
    case Modality::Text: return "text";
    case Modality::Synthetic: return "synthetic";
  }
  throw InvalidArgument("unknown modality");
}

Modality parse_modality(const std::string& name) {
  if (name == "support") return Modality::Support;
  if (name == "query") return Modality::Query;
  if (name == "text") return Modality::Text;
  if (name == "synthetic") return Modality::Synthetic;
  throw FormatError("unknown modality '" + name + "'");
}

std::vector<EmbeddingRecord> episode_records(const Episode& ep) {
  auto to_vec = [](const Embedding& e) { return std::vector<double>(e.values().begin(), e.values().end()); };
  std::vector<EmbeddingRecord> out;
  for (const auto& s : ep.support)
    out.push_back({static_cast<std::int64_t>(ep.class_ids.at(s.label)), Modality::Support,
                   to_vec(fewshot::pooled_feature(s.tokens))});
  for (const auto& q : ep.query)
    out.push_back({static_cast<std::int64_t>(ep.class_ids.at(q.label)), Modality::Query, to_vec(q.embedding)});
  for (std::size_t c = 0; c < ep.n_way; ++c) {
    const auto id = static_cast<std::int64_t>(ep.class_ids.at(c));
    out.push_back({id, Modality::Text, to_vec(ep.text_desc[c])});
    for (const auto& s : ep.synthetic.at(c)) out.push_back({id, Modality::Synthetic, to_vec(s)});
  }
  return out;
}

void save_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records) {
  const std::size_t dim = records.empty() ? 0 : records.front().vector.size();
  for (const auto& r : records)
    if (r.vector.size() != dim) throw DimensionMismatch("records differ in vector length");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  nlohmann::json header{{"format", "kvalign-embeddings"}, {"version", 1}, {"dim", dim}, {"count", records.size()}};
  out << header.dump() << '\n';
  for (const auto& r : records) {
    nlohmann::json line{{"class_id", r.class_id}, {"modality", modality_name(r.modality)}, {"vector", r.vector}};
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing header line");
  std::size_t dim = 0;
  std::size_t count = 0;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", std::string()) != "kvalign-embeddings") throw FormatError("not an embedding file");
    dim = header.at("dim").get<std::size_t>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad header: ") + e.what());
  }
  std::vector<EmbeddingRecord> records;
  records.reserve(count);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EmbeddingRecord r;
      r.class_id = j.at("class_id").get<std::int64_t>();
      r.modality = parse_modality(j.at("modality").get<std::string>());
      r.vector = j.at("vector").get<std::vector<double>>();
      if (r.vector.size() != dim)
        throw FormatError("line " + std::to_string(line_no) + ": vector length " + std::to_string(r.vector.size()) +
                          " does not match header dim " + std::to_string(dim));
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (records.size() != count)
    throw FormatError("header declares " + std::to_string(count) + " records, file holds " +
                      std::to_string(records.size()));
  return records;
}

}  // namespace synthdata
}  // namespace kvalign
