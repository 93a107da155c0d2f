#include "kvalign/errors.hpp"
#include "kvalign/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace kvalign::trainer {

namespace {
constexpr const char* kMagic = "kvalign-checkpoint";
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  params.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kMagic << " 1\n";
  out << "heads " << params.attention.heads << '\n';
  const auto tensors = params.tensors();
  const auto& names = ModelParams::tensor_names();
  char buf[32];
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const Matrix& m = *tensors[i];
    out << "tensor " << names[i] << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
        out << (c ? " " : "") << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic || version != 1) throw FormatError("not a checkpoint file");
  std::string key;
  ModelParams p;
  if (!(in >> key >> p.attention.heads) || key != "heads") throw FormatError("missing heads line");
  const auto tensors = p.tensors();
  const auto& names = ModelParams::tensor_names();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    std::string tag;
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(in >> tag >> name >> rows >> cols) || tag != "tensor" || name != names[i] || rows < 1 || cols < 1)
      throw FormatError("bad tensor header for " + names[i]);
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        if (!(in >> m(r, c))) throw FormatError("truncated tensor " + names[i]);
    *tensors[i] = std::move(m);
  }
  try {
    p.validate();
  } catch (const ShapeMismatch& e) {
    throw FormatError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return p;
}

}  // namespace kvalign::trainer
