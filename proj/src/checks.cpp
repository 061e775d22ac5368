#include "hypermono/checks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hypermono/cone.hpp"
#include "hypermono/errors.hpp"

namespace hypermono::checks {

using ad::Index;
using ad::Tensor;
using ad::Var;

namespace {

constexpr double kPi = std::numbers::pi;

Tensor random_vector(std::mt19937_64& rng, Index d, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(ad::Shape{d});
  for (Index i = 0; i < d; ++i) t[i] = u(rng);
  return t;
}

Tensor normal_vector(std::mt19937_64& rng, Index d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(ad::Shape{d});
  for (Index i = 0; i < d; ++i) t[i] = n(rng);
  return t;
}

// Parameters are redrawn every this many instances.
constexpr std::size_t kParamRefresh = 50;

}  // namespace

ShrinkScan shrink_containment_scan(std::size_t instances, std::uint64_t seed, Index dim) {
  if (instances == 0) throw ArgumentError("shrink scan needs at least one instance");
  ShrinkScan scan;
  ad::ParameterStore store;
  cone::ConeParams params(store, "cone", dim);
  std::mt19937_64 rng(seed);
  const std::size_t max_attempts = 200 * instances;
  while (scan.instances < instances && scan.attempts < max_attempts) {
    if (scan.attempts % kParamRefresh == 0) store.init_uniform(0.6, ad::mix_key(seed, scan.attempts));
    ++scan.attempts;
    ad::Tape tape;
    cone::ConeVar source{tape.constant(random_vector(rng, dim, -kPi, kPi)),
                         tape.constant(random_vector(rng, dim, 1e-3, 2 * kPi))};
    cone::ShrinkTrace trace;
    auto out = cone::shrink(tape, source, tape.constant(normal_vector(rng, dim)),
                            tape.constant(normal_vector(rng, dim)), tape.constant(normal_vector(rng, dim)), params,
                            &trace);
    const auto src = source.value();
    const auto res = out.value();
    if ((res.aperture > src.aperture).any()) continue;
    ++scan.instances;
    scan.contained += cone::contains(src, res);
    const auto& off = trace.offset.value().data().array();
    for (Index i = 0; i < dim; ++i) {
      const double lhs = res.axis[i] - res.aperture[i] / 2;
      const double rhs = src.axis[i] - src.aperture[i] / 2 + off[i] / 2;
      scan.max_edge_error = std::max(scan.max_edge_error, std::abs(cone::wrap_angle(lhs - rhs)));
    }
  }
  return scan;
}

IntersectScan intersection_bound_scan(std::size_t instances, std::uint64_t seed, Index dim, std::size_t max_cones) {
  if (instances == 0 || max_cones == 0) throw ArgumentError("intersection scan needs instances and cones");
  IntersectScan scan;
  ad::ParameterStore store;
  cone::ConeParams params(store, "cone", dim);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> count(1, max_cones);
  for (std::size_t n = 0; n < instances; ++n) {
    if (n % kParamRefresh == 0) store.init_uniform(1.0, ad::mix_key(seed, n));
    ad::Tape tape;
    std::vector<cone::ConeVar> cones;
    const std::size_t k = count(rng);
    Eigen::ArrayXd lowest = Eigen::ArrayXd::Constant(dim, 2 * kPi);
    for (std::size_t c = 0; c < k; ++c) {
      cones.push_back({tape.constant(random_vector(rng, dim, -kPi, kPi)),
                       tape.constant(random_vector(rng, dim, 0.0, 2 * kPi))});
      lowest = lowest.min(cones.back().aperture.value().data().array());
    }
    const auto out = cone::intersect(tape, cones, params).value();
    ++scan.instances;
    scan.within_bound += (out.aperture <= lowest).all();
    scan.in_range += out.valid();
  }
  return scan;
}

ad::GradCheckReport model_grad_check(const harness::TrainConfig& cfg_in, const hkg::DatasetBundle& bundle,
                                     std::size_t facts, const ad::GradCheckOptions& options) {
  auto cfg = cfg_in;
  cfg.dropout = 0.0;
  cfg.validate();
  const auto& train = bundle.train();
  if (train.empty() || facts == 0) throw ArgumentError("grad check needs at least one training fact");
  std::vector<const hkg::HyperFact*> chosen;
  for (const auto& f : train)
    if (f.qualifiers.size() >= 2 && chosen.size() < facts) chosen.push_back(&f);
  for (const auto& f : train)
    if (chosen.size() < facts && std::find(chosen.begin(), chosen.end(), &f) == chosen.end()) chosen.push_back(&f);

  model::HyperMono net(cfg.model_config(), bundle.vocab().entities.size(), bundle.vocab().relations.size(), cfg.seed);
  const auto& graph = bundle.train_graph();
  auto closure = [&](ad::Tape& tape) {
    auto pass = net.begin(tape, false, 0, cfg.seed, cfg.seed);
    std::optional<Var> total;
    for (const auto* f : chosen)
      for (auto dir : {hkg::Direction::Tail, hkg::Direction::Head}) {
        auto out = net.joint_forward(pass, *f, dir, graph);
        total = total ? *total + out.joint : out.joint;
      }
    return *total;
  };
  return ad::grad_check(closure, net.params(), options);
}

}  // namespace hypermono::checks
