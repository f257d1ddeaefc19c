#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mklstm/autodiff.hpp"

namespace mklstm {

// Central finite-difference verification of the tape's backward rules.
// Always runs in 64-bit; parameters are perturbed exhaustively, so the
// total parameter count is capped.

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::int64_t worst_index = -1;
  double analytic = 0.0, numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-4;
  bool passed = false;
  double max_rel_err = 0.0;
  std::string worst_tensor;

  std::string summary() const;
};

// Builds the scalar loss from leaves bound to `params` (same order).
using GradCheckBuild =
    std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

GradCheckReport gradient_check(
    std::vector<std::pair<std::string, Tensor<double>>> params,
    const GradCheckBuild& build, double tolerance = 1e-4, double step = 1e-5);

}  // namespace mklstm
