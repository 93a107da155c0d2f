#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace kvalign::diagnostics {

struct CheckResult {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

struct SuiteReport {
  std::vector<CheckResult> checks;
  bool passed() const;
};

/// Volume identities over random instances: sine law, three-vector expansion,
/// k=1 norm, k > dim collapse, orthogonal invariance, RBF Gram PSD, linear
/// kernel consistency. inject_bug flips the sign of the cross term of the
/// three-vector expansion (negative control).
SuiteReport volume_identities(std::uint64_t seed, std::size_t instances, bool inject_bug = false);

/// Finite-difference checks of the kernel volume, the contrastive losses, the
/// fusion block and the full training objective on count seeded instances.
SuiteReport gradient_checks(std::uint64_t seed, std::size_t count, double tolerance = 1e-4);

}  // namespace kvalign::diagnostics
