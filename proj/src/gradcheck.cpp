#include "mklstm/gradcheck.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mklstm {
namespace {

double eval(const std::vector<std::pair<std::string, Tensor<double>>>& params,
            const GradCheckBuild& build) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  leaves.reserve(params.size());
  for (const auto& [name, value] : params) leaves.push_back(tape.leaf(value, false, name));
  Var<double> root = build(tape, leaves);
  if (root.shape() != Shape{1, 1, 1, 1})
    throw std::invalid_argument("gradient_check: computation must end in a scalar");
  return root.value().data[0];
}

// Relative error with a small-denominator guard so near-zero gradient pairs
// compare absolutely at tolerance * 1e-2.
double rel_err(double a, double n) {
  const double denom = std::max({std::abs(a), std::abs(n), 1e-2});
  return std::abs(a - n) / denom;
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err
     << " tol=" << tolerance;
  if (!passed) os << " worst=" << worst_tensor;
  return os.str();
}

GradCheckReport gradient_check(
    std::vector<std::pair<std::string, Tensor<double>>> params,
    const GradCheckBuild& build, double tolerance, double step) {
  std::int64_t total = 0;
  for (const auto& [name, value] : params) total += value.size();
  if (total > 10000)
    throw std::invalid_argument(
        "gradient_check: too many parameters to perturb exhaustively (" +
        std::to_string(total) + " > 10000)");

  // analytic gradients
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& [name, value] : params)
      leaves.push_back(tape.leaf(value, true, name));
    Var<double> root = build(tape, leaves);
    if (root.shape() != Shape{1, 1, 1, 1})
      throw std::invalid_argument("gradient_check: computation must end in a scalar");
    tape.backward(root);
    for (const Var<double>& leaf : leaves) {
      const Tensor<double>* g = tape.grad_of(leaf);
      analytic.push_back(g ? *g : Tensor<double>(leaf.shape()));
    }
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    GradCheckEntry entry;
    entry.name = params[pi].first;
    Tensor<double>& theta = params[pi].second;
    for (std::int64_t i = 0; i < theta.size(); ++i) {
      const double saved = theta.data[i];
      theta.data[i] = saved + step;
      const double f_plus = eval(params, build);
      theta.data[i] = saved - step;
      const double f_minus = eval(params, build);
      theta.data[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double err = rel_err(analytic[pi].data[i], numeric);
      if (err > entry.max_rel_err) {
        entry.max_rel_err = err;
        entry.worst_index = i;
        entry.analytic = analytic[pi].data[i];
        entry.numeric = numeric;
      }
    }
    if (entry.max_rel_err > report.max_rel_err) {
      report.max_rel_err = entry.max_rel_err;
      report.worst_tensor = entry.name;
    }
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace mklstm
