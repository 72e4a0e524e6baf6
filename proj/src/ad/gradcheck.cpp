#include "ddgen/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "ddgen/ad/ops.hpp"

namespace ddgen::ad {
namespace {

double evaluate(const ScalarBlock& block, const Matrix& probe) {
  Graph g;
  Var out = block(g, g.constant(probe));
  if (out.value().size() != 1) {
    throw ShapeError("grad_check: block must return a 1x1 value, got " +
                     out.value().shape_string());
  }
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw std::domain_error("grad_check: block produced a non-finite value");
  return v;
}

std::vector<std::size_t> pick_entries(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(const ScalarBlock& block, const Matrix& probe, ParameterStore* params,
                           const GradCheckOptions& options) {
  if (params) params->zero_grad();
  Matrix probe_grad;
  {
    Graph g;
    Var x = g.variable(probe);
    Var out = block(g, x);
    if (out.value().size() != 1) {
      throw ShapeError("grad_check: block must return a 1x1 value, got " +
                       out.value().shape_string());
    }
    if (!std::isfinite(out.value()[0])) {
      throw std::domain_error("grad_check: block produced a non-finite value");
    }
    g.backward(out);
    probe_grad = g.grad(x);
  }

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  auto consider = [&](double analytic, double numeric, const std::string& label) {
    if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
      throw std::domain_error("grad_check: non-finite gradient at " + label);
    }
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
    ++report.entries_checked;
    if (err >= report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_entry = label;
    }
  };

  if (options.check_probe) {
    Matrix x = probe;
    for (std::size_t i : pick_entries(x.size(), options.max_entries_per_tensor, rng)) {
      const double orig = x[i];
      x[i] = orig + options.eps;
      const double up = evaluate(block, x);
      x[i] = orig - options.eps;
      const double down = evaluate(block, x);
      x[i] = orig;
      consider(probe_grad[i], (up - down) / (2.0 * options.eps),
               "probe[" + std::to_string(i) + "]");
    }
  }

  if (params) {
    for (Parameter& p : *params) {
      const Matrix analytic = p.grad;
      for (std::size_t i : pick_entries(p.value.size(), options.max_entries_per_tensor, rng)) {
        const double orig = p.value[i];
        p.value[i] = orig + options.eps;
        const double up = evaluate(block, probe);
        p.value[i] = orig - options.eps;
        const double down = evaluate(block, probe);
        p.value[i] = orig;
        consider(analytic[i], (up - down) / (2.0 * options.eps),
                 p.name + "[" + std::to_string(i) + "]");
      }
    }
  }
  return report;
}

Var random_projection(Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix w(out.value().rows(), out.value().cols());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
  return sum(mul(out, out.graph()->constant(std::move(w))));
}

}  // namespace ddgen::ad
