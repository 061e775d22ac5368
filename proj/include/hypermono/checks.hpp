#pragma once

// Seeded property scans and gradient checks behind the verification commands.

#include <cstddef>
#include <cstdint>

#include "hypermono/gradcheck.hpp"
#include "hypermono/harness.hpp"

namespace hypermono::checks {

struct ShrinkScan {
  std::size_t instances = 0;  // instances with shrunk aperture <= source aperture everywhere
  std::size_t attempts = 0;   // draws including the discarded ones
  std::size_t contained = 0;
  double max_edge_error = 0.0;  // lower-edge identity residual, modulo 2pi
  bool passed(double edge_tolerance = 1e-12) const {
    return instances > 0 && contained == instances && max_edge_error <= edge_tolerance;
  }
};

// Random cone parameters, source cones and qualifier embeddings; keeps
// drawing until `instances` draws satisfy the aperture precondition.
ShrinkScan shrink_containment_scan(std::size_t instances, std::uint64_t seed, ad::Index dim = 8);

struct IntersectScan {
  std::size_t instances = 0;
  std::size_t within_bound = 0;  // aperture <= elementwise min of inputs
  std::size_t in_range = 0;      // output is a valid cone
  bool passed() const { return instances > 0 && within_bound == instances && in_range == instances; }
};

IntersectScan intersection_bound_scan(std::size_t instances, std::uint64_t seed, ad::Index dim = 8,
                                      std::size_t max_cones = 5);

// Finite-difference check of the summed joint loss (both directions) over
// the first `facts` training facts, preferring qualified ones. Dropout off.
ad::GradCheckReport model_grad_check(const harness::TrainConfig& cfg, const hkg::DatasetBundle& bundle,
                                     std::size_t facts, const ad::GradCheckOptions& options);

}  // namespace hypermono::checks
