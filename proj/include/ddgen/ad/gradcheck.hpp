#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "ddgen/ad/graph.hpp"

namespace ddgen::ad {

/// A scalar-valued block: records its computation on `graph` starting from
/// the probe input and returns a 1x1 node.
using ScalarBlock = std::function<Var(Graph& graph, Var probe)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// Entries checked per tensor; 0 checks every entry.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0x5eed;
  bool check_probe = true;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_entry;
  std::size_t entries_checked = 0;
};

/// Compares reverse-mode gradients with central differences over the probe
/// and every parameter in `params` (may be null). The error per entry is
/// |analytic - numeric| / max(1, |numeric|). Throws std::domain_error when
/// the block produces a non-finite value.
GradCheckReport grad_check(const ScalarBlock& block, const Matrix& probe,
                           ParameterStore* params, const GradCheckOptions& options = {});

/// Reduces a tensor output to a scalar through a fixed pseudo-random weight
/// pattern, so every output entry contributes a distinct gradient.
Var random_projection(Var out, std::uint64_t seed);

}  // namespace ddgen::ad
