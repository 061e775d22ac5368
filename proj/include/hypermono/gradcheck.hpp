#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hypermono/autodiff.hpp"

namespace hypermono::ad {

struct GradCheckEntry {
  std::string name;
  Index coordinates = 0;  // how many coordinates were compared
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  Index max_coordinates = 256;  // per tensor; a seeded sample when larger
  std::uint64_t seed = 0;
  // Central stencil width: 2 gives (f(x+h) - f(x-h)) / 2h, 4 the
  // fourth-order (f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h.
  int points = 4;
  // Denominator floor of |a - b| / max(|a|, |b|, floor). Gradients below it
  // are compared in absolute terms; rounding in f(x +- h) alone reaches
  // ~1e-9 at h = 1e-5 for losses of order 10.
  double floor = 1e-4;
};

// The closure records a scalar loss on the given tape. It must be
// deterministic (dropout off); the comparison is tape gradient versus a
// central finite difference.
using LossClosure = std::function<Var(Tape&)>;

GradCheckReport grad_check(const LossClosure& closure, ParameterStore& params,
                           const GradCheckOptions& options = {});

double relative_error(double a, double b, double floor);

}  // namespace hypermono::ad
