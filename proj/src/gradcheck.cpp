#include "hypermono/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hypermono/errors.hpp"

namespace hypermono::ad {

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradCheckReport grad_check(const LossClosure& closure, ParameterStore& params,
                           const GradCheckOptions& options) {
  if (!(options.h > 0)) throw ArgumentError("grad_check: step h must be positive");
  if (options.points != 2 && options.points != 4) throw ArgumentError("grad_check: stencil must have 2 or 4 points");
  auto evaluate = [&]() {
    Tape tape;
    const double f = closure(tape).item();
    if (!std::isfinite(f)) throw NumericError("grad_check: closure returned a non-finite value");
    return f;
  };

  params.zero_grad();
  {
    Tape tape;
    Var loss = closure(tape);
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: closure returned a non-finite value");
    tape.backward(loss);
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  std::mt19937_64 rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = params[pi];
    std::vector<Index> coords(static_cast<std::size_t>(p.value.size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (static_cast<Index>(coords.size()) > options.max_coordinates) {
      std::vector<Index> sample;
      std::sample(coords.begin(), coords.end(), std::back_inserter(sample),
                  static_cast<std::size_t>(options.max_coordinates), rng);
      coords = std::move(sample);
    }
    GradCheckEntry entry{p.name, static_cast<Index>(coords.size()), 0.0, 0.0};
    for (Index c : coords) {
      const double orig = p.value[c];
      auto at = [&](double offset) {
        p.value[c] = orig + offset;
        return evaluate();
      };
      const double h = options.h;
      double numeric = 0.0;
      if (options.points == 2) {
        numeric = (at(h) - at(-h)) / (2.0 * h);
      } else {
        numeric = (at(-2 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2 * h)) / (12.0 * h);
      }
      p.value[c] = orig;
      const double analytic = p.grad[c];
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic, numeric, options.floor));
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(analytic - numeric));
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  params.zero_grad();
  return report;
}

}  // namespace hypermono::ad
