// Acceptance gate. Prints one PASS / FAIL / SKIP line per criterion and exits
// nonzero when any criterion fails. Usage:
//   acceptance [--datasets DIR] [criterion ids...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "hypermono/checks.hpp"
#include "hypermono/cone.hpp"
#include "hypermono/harness.hpp"
#include "hypermono/synthetic.hpp"
#include "support.hpp"

using namespace hypermono;
namespace fs = std::filesystem;

namespace {

// Thresholds, fixed here and nowhere else.
constexpr std::size_t kMonoSamples = 10000;
constexpr double kMonoSeconds = 10.0;
constexpr std::size_t kConeInstances = 10000;
constexpr double kEdgeTolerance = 1e-12;
constexpr double kConeSeconds = 5.0;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 120.0;
constexpr int kToyGraphs = 100;
constexpr double kMetricSeconds = 30.0;
constexpr std::size_t kDeskEpochs = 300;
constexpr double kMinMrr = 0.95;
constexpr double kMinHits1 = 0.90;
constexpr double kLearnSeconds = 600.0;
constexpr double kMinSeparation = 0.15;
constexpr double kSeparationSeconds = 600.0;
constexpr std::size_t kAblationEpochs = 10;
constexpr double kAblationSeconds = 900.0;

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ad::Tensor uniform(std::mt19937_64& rng, ad::Index d, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  ad::Tensor t(ad::Shape{d});
  for (ad::Index i = 0; i < d; ++i) t[i] = u(rng);
  return t;
}

ad::Tensor normal(std::mt19937_64& rng, ad::Index d) {
  std::normal_distribution<double> n;
  ad::Tensor t(ad::Shape{d});
  for (ad::Index i = 0; i < d; ++i) t[i] = n(rng);
  return t;
}

// The learning bundle: 50 entities, 5 relations, 200 facts.
hkg::SyntheticBundle desk_bundle() { return hkg::gen_synthetic(hkg::SyntheticSpec{}); }

// Every fact is qualified; groups of 3 heads x 3 tails share one relation,
// so each (h, r) and (r, t) has 3 answers until the qualifier pins one down.
hkg::SyntheticBundle disambiguation_bundle() {
  hkg::SyntheticSpec s;
  s.qualified_fraction = 1.0;
  s.tails_per_group = 3;
  s.heads_per_group = 3;
  return hkg::gen_synthetic(s);
}

harness::TrainConfig desk_config() {
  auto c = harness::TrainConfig::preset("desk-scale");
  c.epochs = kDeskEpochs;
  c.seed = 0;
  return c;
}

// Trained runs shared between criteria.
struct Runs {
  std::optional<harness::TrainResult> desk;
  fs::path desk_dir;
  std::optional<harness::TrainResult> disamb_full;
  std::optional<hkg::SyntheticBundle> disamb;
  double desk_seconds = 0, disamb_seconds = 0;

  harness::TrainResult& desk_run(const hkg::DatasetBundle& bundle) {
    if (!desk) {
      desk_dir = testing::scratch_dir("acceptance_desk_a");
      Stopwatch w;
      desk = harness::train(desk_config(), bundle, {desk_dir});
      desk_seconds = w.seconds();
    }
    return *desk;
  }

  harness::TrainResult& disamb_run() {
    if (!disamb) disamb = disambiguation_bundle();
    if (!disamb_full) {
      Stopwatch w;
      disamb_full = harness::train(desk_config(), disamb->bundle);
      disamb_seconds = w.seconds();
    }
    return *disamb_full;
  }
};

Outcome c1_monotonicity() {
  const auto data = desk_bundle();
  Stopwatch w;
  const auto report = hkg::check_monotonicity(data.bundle.filter_graph(), kMonoSamples, 1);
  const double t = w.seconds();
  return verdict(report.samples == kMonoSamples && report.violations.empty() && t < kMonoSeconds,
                 fmt("%zu pairs, %zu violations, %zu strict shrinks, %.2fs", report.samples, report.violations.size(),
                     report.strict_shrinks, t));
}

// Independent route: own draws, containment by walking arcs, the lower edge
// recomputed from the shrink's raw inputs.
struct OracleShrink {
  std::size_t kept = 0, contained = 0;
  double edge = 0;
};

OracleShrink shrink_oracle(std::size_t instances, std::uint64_t seed, ad::Index d) {
  constexpr double pi = std::numbers::pi;
  OracleShrink o;
  ad::ParameterStore store;
  cone::ConeParams params(store, "cone", d);
  std::mt19937_64 rng(seed);
  for (std::size_t n = 0; o.kept < instances && n < 200 * instances; ++n) {
    if (n % 37 == 0) store.init_uniform(0.6, seed + n);
    ad::Tape tape;
    cone::ConeVar src{tape.constant(uniform(rng, d, -pi, pi)), tape.constant(uniform(rng, d, 1e-3, 2 * pi))};
    cone::ShrinkTrace tr;
    const auto out = cone::shrink(tape, src, tape.constant(normal(rng, d)), tape.constant(normal(rng, d)),
                                  tape.constant(normal(rng, d)), params, &tr)
                         .value();
    const auto s = src.value();
    if ((out.aperture > s.aperture).any()) continue;
    ++o.kept;
    bool all = true;
    for (ad::Index i = 0; i < d; ++i) {
      all = all && testing::arc_oracle(s.axis[i], s.aperture[i], out.axis[i], out.aperture[i], 1e-9);
      const double x = tr.x.value()[i];
      const double beta_s = 1.0 / (1.0 + std::exp(-(pi * std::tanh(x) + pi)));
      const double offset = (s.aperture[i] - beta_s) / (1.0 + std::exp(-pi * std::tanh(x)));
      const double lower_out = out.axis[i] - out.aperture[i] / 2;
      const double lower_want = s.axis[i] - s.aperture[i] / 2 + offset / 2;
      o.edge = std::max(o.edge, std::abs(std::remainder(lower_out - lower_want, 2 * pi)));
    }
    o.contained += all;
  }
  return o;
}

Outcome c2_shrink() {
  Stopwatch w;
  const auto scan = checks::shrink_containment_scan(kConeInstances, 2024, 8);
  const double t = w.seconds();
  const auto o = shrink_oracle(kConeInstances, 77, 8);
  const bool ok = scan.instances == kConeInstances && scan.passed(kEdgeTolerance) && t < kConeSeconds &&
                  o.kept == kConeInstances && o.contained == o.kept && o.edge <= kEdgeTolerance;
  return verdict(ok, fmt("scan %zu/%zu contained, edge %.1e, %.2fs; oracle %zu/%zu contained, edge %.1e",
                         scan.contained, scan.instances, scan.max_edge_error, t, o.contained, o.kept, o.edge));
}

Outcome c3_intersection() {
  Stopwatch w;
  const auto scan = checks::intersection_bound_scan(kConeInstances, 2025, 8);
  const double t = w.seconds();
  // Independent recomputation of the bound on fresh draws.
  constexpr double pi = std::numbers::pi;
  ad::ParameterStore store;
  cone::ConeParams params(store, "cone", 8);
  std::mt19937_64 rng(91);
  std::uniform_int_distribution<int> count(1, 6);
  std::size_t within = 0;
  for (std::size_t n = 0; n < kConeInstances; ++n) {
    if (n % 41 == 0) store.init_uniform(1.0, 500 + n);
    ad::Tape tape;
    std::vector<cone::ConeVar> cones;
    const int k = count(rng);
    for (int j = 0; j < k; ++j)
      cones.push_back({tape.constant(uniform(rng, 8, -pi, pi)), tape.constant(uniform(rng, 8, 0.0, 2 * pi))});
    const auto out = cone::intersect(tape, cones, params).value();
    bool ok = true;
    for (ad::Index i = 0; i < 8; ++i) {
      double lowest = 2 * pi;
      for (const auto& c : cones) lowest = std::min(lowest, c.aperture.value()[i]);
      ok = ok && out.aperture[i] <= lowest;
    }
    within += ok;
  }
  const bool ok = scan.instances == kConeInstances && scan.passed() && t < kConeSeconds && within == kConeInstances;
  return verdict(ok, fmt("scan %zu/%zu within bound, %.2fs; oracle %zu/%zu", scan.within_bound, scan.instances, t,
                         within, kConeInstances));
}

Outcome c4_gradient() {
  auto cfg = harness::TrainConfig::preset("desk-scale");
  cfg.dim = 16;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.ff_width = 32;
  cfg.seed = 3;
  hkg::SyntheticSpec spec;
  spec.entities = 20;
  spec.facts = 40;
  spec.seed = 3;
  const auto data = hkg::gen_synthetic(spec);
  ad::GradCheckOptions opt;
  opt.tolerance = kGradTolerance;
  opt.max_coordinates = 128;
  opt.seed = 3;
  Stopwatch w;
  const auto report = checks::model_grad_check(cfg, data.bundle, 2, opt);
  const double t = w.seconds();
  ad::Index coords = 0;
  std::string worst;
  double worst_err = -1;
  for (const auto& e : report.entries) {
    coords += e.coordinates;
    if (e.max_rel_error > worst_err) {
      worst_err = e.max_rel_error;
      worst = e.name;
    }
  }
  return verdict(report.max_rel_error < kGradTolerance && t < kGradSeconds,
                 fmt("max rel error %.2e (%s) over %ld coordinates in %zu blocks, %.1fs", report.max_rel_error,
                     worst.c_str(), static_cast<long>(coords), report.entries.size(), t));
}

Outcome c5_metrics() {
  Stopwatch w;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> ents(2, 8), rels(1, 3), nfacts(1, 12), tie(0, 3);
  int equal = 0;
  std::size_t queries = 0;
  for (int g = 0; g < kToyGraphs; ++g) {
    auto builder = testing::random_graph(rng, ents(rng), rels(rng), nfacts(rng));
    const auto graph = builder.graph();
    const auto n = static_cast<Eigen::Index>(builder.vocab->entities.size());
    std::map<std::pair<std::size_t, int>, Eigen::VectorXd> table;
    for (std::size_t i = 0; i < graph.facts().size(); ++i) {
      for (int dir = 0; dir < 2; ++dir) {
        Eigen::VectorXd s(n);
        for (Eigen::Index e = 0; e < n; ++e) s[e] = tie(rng) * 0.5;
        table[{i, dir}] = s;
      }
    }
    // Scores are looked up by fact position and direction.
    harness::Scorer scorer = [&](const hkg::Query& q, const hkg::HyperFact& source) {
      const auto pos = static_cast<std::size_t>(&source - graph.facts().data());
      return table.at({pos, q.direction == hkg::Direction::Tail ? 1 : 0});
    };
    const auto report = harness::evaluate(scorer, graph.facts(), graph);

    std::vector<double> inv[2];
    std::vector<int> h1[2], h3[2], h10[2];
    for (std::size_t i = 0; i < graph.facts().size(); ++i) {
      const auto& f = graph.facts()[i];
      for (int dir = 0; dir < 2; ++dir) {
        const auto d = dir == 1 ? hkg::Direction::Tail : hkg::Direction::Head;
        const auto q = hkg::Query::from_fact(f, d);
        const int gold = (dir == 1 ? f.tail : f.head).value;
        const auto r = testing::brute_force_rank(q, table.at({i, dir}), graph.facts(), gold);
        inv[dir].push_back(1.0 / static_cast<double>(r));
        h1[dir].push_back(r <= 1);
        h3[dir].push_back(r <= 3);
        h10[dir].push_back(r <= 10);
      }
    }
    auto mean = [](const auto& v) {
      double s = 0;
      for (auto x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    const harness::DirectionMetrics* got[2] = {&report.head, &report.tail};
    bool same = true;
    for (int dir = 0; dir < 2; ++dir) {
      same = same && got[dir]->mrr == mean(inv[dir]) && got[dir]->hits1 == mean(h1[dir]) &&
             got[dir]->hits3 == mean(h3[dir]) && got[dir]->hits10 == mean(h10[dir]);
    }
    same = same && report.mean.mrr == 0.5 * (mean(inv[0]) + mean(inv[1])) &&
           report.mean.hits1 == 0.5 * (mean(h1[0]) + mean(h1[1])) &&
           report.mean.hits3 == 0.5 * (mean(h3[0]) + mean(h3[1])) &&
           report.mean.hits10 == 0.5 * (mean(h10[0]) + mean(h10[1]));
    equal += same;
    queries += report.queries.size();
  }
  const double t = w.seconds();
  return verdict(equal == kToyGraphs && t < kMetricSeconds,
                 fmt("%d/%d graphs identical (%zu queries), %.2fs", equal, kToyGraphs, queries, t));
}

Outcome c6_learning(Runs& runs) {
  const auto data = desk_bundle();
  auto& r = runs.desk_run(data.bundle);
  const auto rep = harness::evaluate(*r.model, data.bundle, "train", model::Stage::Fine);
  const double first = r.epoch_losses.front();
  const double at200 = r.epoch_losses.at(199);
  return verdict(rep.mean.mrr >= kMinMrr && rep.mean.hits1 >= kMinHits1 && runs.desk_seconds < kLearnSeconds,
                 fmt("fine MRR %.4f H1 %.4f H3 %.4f H10 %.4f; loss %.3f -> %.3f at epoch 200 (-%.1f%%); %.0fs",
                     rep.mean.mrr, rep.mean.hits1, rep.mean.hits3, rep.mean.hits10, first, at200,
                     100.0 * (1.0 - at200 / first), runs.desk_seconds));
}

Outcome c7_separation(Runs& runs) {
  auto& r = runs.disamb_run();
  const auto& b = runs.disamb->bundle;
  const auto coarse = harness::evaluate(*r.model, b, "train", model::Stage::Coarse);
  const auto fine = harness::evaluate(*r.model, b, "train", model::Stage::Fine);
  const double gap = fine.mean.mrr - coarse.mean.mrr;
  return verdict(gap >= kMinSeparation && runs.disamb_seconds < kSeparationSeconds,
                 fmt("fine MRR %.4f (head %.4f tail %.4f), coarse MRR %.4f (head %.4f tail %.4f), gap %.4f; %.0fs",
                     fine.mean.mrr, fine.head.mrr, fine.tail.mrr, coarse.mean.mrr, coarse.head.mrr, coarse.tail.mrr,
                     gap, runs.disamb_seconds));
}

Outcome c8_ablations(Runs& runs) {
  Stopwatch w;
  const auto data = desk_bundle();
  std::string detail;
  bool all_ran = true;
  for (const char* key : {"ablate.cna", "ablate.fna", "ablate.lei", "ablate.gei", "ablate.csb"}) {
    auto cfg = desk_config();
    cfg.epochs = kAblationEpochs;
    cfg.set(key, "true");
    try {
      const auto r = harness::train(cfg, data.bundle);
      const auto rep = harness::evaluate(*r.model, data.bundle, "train", model::Stage::Default);
      detail += fmt("%s ok (MRR %.3f); ", key + 7, rep.mean.mrr);
    } catch (const std::exception& e) {
      all_ran = false;
      detail += fmt("%s threw: %s; ", key + 7, e.what());
    }
  }
  auto& full = runs.disamb_run();
  const auto& b = runs.disamb->bundle;
  auto cfg = desk_config();
  cfg.ablate.csb = true;
  const auto no_csb = harness::train(cfg, b);
  const double full_mrr = harness::evaluate(*full.model, b, "train", model::Stage::Fine).mean.mrr;
  const double csb_mrr = harness::evaluate(*no_csb.model, b, "train", model::Stage::Fine).mean.mrr;
  const double t = w.seconds();
  detail += fmt("disambiguation fine MRR: full %.4f, w/o CSB %.4f; %.0fs", full_mrr, csb_mrr, t);
  return verdict(all_ran && csb_mrr <= full_mrr && t < kAblationSeconds, detail);
}

Outcome c9_determinism(Runs& runs) {
  const auto data = desk_bundle();
  runs.desk_run(data.bundle);
  const auto dir_b = testing::scratch_dir("acceptance_desk_b");
  harness::train(desk_config(), data.bundle, {dir_b});
  const bool ckpt = slurp(runs.desk_dir / "model.ckpt") == slurp(dir_b / "model.ckpt");
  const bool loss = slurp(runs.desk_dir / "losses.csv") == slurp(dir_b / "losses.csv");
  return verdict(ckpt && loss, fmt("checkpoint %s, losses.csv %s (%zu bytes)", ckpt ? "identical" : "DIFFERENT",
                                   loss ? "identical" : "DIFFERENT", slurp(dir_b / "model.ckpt").size()));
}

struct Table1Row {
  const char* dir;
  std::size_t train, valid, test, entities, relations;  // valid 0: no valid split
};

// Published counts for the three full datasets.
constexpr Table1Row kTable1[] = {
    {"WD50K", 166435, 23913, 46159, 47155, 531},
    {"WikiPeople", 294439, 37715, 37712, 34825, 178},
    {"JF17K", 76379, 0, 24568, 28645, 501},
};

Outcome c10_datasets(const fs::path& root) {
  std::string detail;
  bool ok = true;
  int found = 0;
  for (const auto& row : kTable1) {
    const auto dir = root / row.dir;
    if (!fs::exists(dir / "train.txt")) continue;
    ++found;
    const auto stats = hkg::compute_stats(hkg::load_dataset(dir));
    std::map<std::string, std::size_t> count;
    for (const auto& s : stats.splits) count[s.split] = s.facts;
    const bool match = count["train"] == row.train && count["test"] == row.test &&
                       (row.valid == 0 ? !count.contains("valid") : count["valid"] == row.valid) &&
                       stats.entities == row.entities && stats.relations == row.relations;
    ok = ok && match;
    detail += fmt("%s %s (train %zu valid %zu test %zu entities %zu relations %zu); ", row.dir,
                  match ? "matches" : "MISMATCH", count["train"], count["valid"], count["test"], stats.entities,
                  stats.relations);
  }
  if (found == 0) return {Status::Skip, "no published dataset files under " + root.string()};
  return verdict(ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  fs::path datasets = fs::path(HYPERMONO_SOURCE_DIR) / "data";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--datasets" && i + 1 < argc) {
      datasets = argv[++i];
    } else {
      try {
        only.insert(std::stoi(a));
      } catch (const std::exception&) {
        std::cerr << "usage: acceptance [--datasets DIR] [criterion ids...]\n";
        return 2;
      }
    }
  }

  Runs runs;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"oracle monotonicity", c1_monotonicity},
      {"cone-shrink containment", c2_shrink},
      {"intersection bound", c3_intersection},
      {"gradient fidelity", c4_gradient},
      {"metric oracle equivalence", c5_metrics},
      {"desk-scale learning", [&] { return c6_learning(runs); }},
      {"qualifier-dependence separation", [&] { return c7_separation(runs); }},
      {"ablation soundness", [&] { return c8_ablations(runs); }},
      {"determinism", [&] { return c9_determinism(runs); }},
      {"dataset fidelity", [&] { return c10_datasets(datasets); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Skip ? "SKIP" : "FAIL";
    failures += o.status == Status::Fail;
    std::cout << tag << " " << id << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
