#pragma once

#include "kvalign/embedding.hpp"
#include "kvalign/rng.hpp"
#include "oracles.hpp"

#include <vector>

namespace testing_helpers {

inline oracle::Vec to_vec(const kvalign::Vector& v) { return oracle::Vec(v.data(), v.data() + v.size()); }
inline oracle::Vec to_vec(const kvalign::Embedding& e) { return to_vec(e.values()); }

inline kvalign::Vector from_vec(const oracle::Vec& v) {
  kvalign::Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

inline oracle::Mat to_mat(const kvalign::Matrix& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

inline kvalign::Embedding random_unit(kvalign::Rng& rng, int dim) {
  return kvalign::Embedding(rng.unit_vector(dim), true);
}

}  // namespace testing_helpers
