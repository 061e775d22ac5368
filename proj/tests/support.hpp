#pragma once

#include <filesystem>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hypermono/hkg.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hypermono_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Builds facts from tab-free label lists: {h, r, t, a1, v1, ...}.
struct GraphBuilder {
  std::shared_ptr<hypermono::hkg::Vocabularies> vocab = std::make_shared<hypermono::hkg::Vocabularies>();
  std::vector<hypermono::hkg::HyperFact> facts;

  GraphBuilder& add(std::initializer_list<std::string> fields) {
    std::string line;
    for (const auto& f : fields) line += (line.empty() ? "" : "\t") + f;
    facts.push_back(hypermono::hkg::parse_fact_line(line, *vocab));
    return *this;
  }
  hypermono::hkg::EntityId e(const std::string& label) const {
    return hypermono::hkg::EntityId{*vocab->entities.find(label)};
  }
  hypermono::hkg::RelationId r(const std::string& label) const {
    return hypermono::hkg::RelationId{*vocab->relations.find(label)};
  }
  hypermono::hkg::HyperGraph graph() const { return hypermono::hkg::HyperGraph(facts, vocab); }
};

// The basketball example: four team memberships sharing start/end qualifiers,
// three of which also list a teammate.
inline GraphBuilder harden_graph() {
  GraphBuilder g;
  g.add({"James_Harden", "member_of_team", "Brooklyn_Nets", "start_time", "2019", "end_time", "2023"});
  g.add({"James_Harden", "member_of_team", "Houston_Rockets", "start_time", "2019", "end_time", "2023", "teammate",
         "PJ_Tucker"});
  g.add({"James_Harden", "member_of_team", "Los_Angeles_Clippers", "start_time", "2019", "end_time", "2023",
         "teammate", "PJ_Tucker"});
  g.add({"James_Harden", "member_of_team", "Philadelphia_76ers", "start_time", "2019", "end_time", "2023",
         "teammate", "PJ_Tucker", "part_of", "Atlantic_Division"});
  g.add({"James_Harden", "award_received", "scoring_champion"});
  g.add({"James_Harden", "participant_in", "2012_Summer_Olympics"});
  g.add({"PJ_Tucker", "member_of_team", "Houston_Rockets"});
  return g;
}

// Random small graph over `entities` labels e1..eN (plus qualifiers).
inline GraphBuilder random_graph(std::mt19937_64& rng, int entities, int relations, int facts, int max_q = 2) {
  GraphBuilder g;
  std::uniform_int_distribution<int> ent(1, entities), rel(1, relations), nq(0, max_q);
  for (int i = 0; i < facts; ++i) {
    std::vector<std::string> f{"e" + std::to_string(ent(rng)), "r" + std::to_string(rel(rng)),
                               "e" + std::to_string(ent(rng))};
    const int q = nq(rng);
    std::string line = f[0] + "\t" + f[1] + "\t" + f[2];
    for (int k = 0; k < q; ++k) line += "\ta" + std::to_string(rel(rng)) + "\te" + std::to_string(ent(rng));
    g.facts.push_back(hypermono::hkg::parse_fact_line(line, *g.vocab));
  }
  return g;
}

// Independent arc oracle: walks the inner arc in small steps and checks that
// every visited angle is within half the outer aperture of the outer axis.
// The point opposite the outer axis is tested on its own, since the gap
// around it can be narrower than a step.
inline bool arc_oracle(double oa, double ob, double ia, double ib, double tol) {
  if (ob >= 2 * std::numbers::pi - tol) return true;
  if (ib > ob + tol) return false;
  if (std::abs(std::remainder(oa + std::numbers::pi - ia, 2 * std::numbers::pi)) < ib / 2 - tol) return false;
  const int steps = 512;
  for (int k = 0; k <= steps; ++k) {
    const double p = ia - ib / 2 + ib * k / steps;
    const double dist = std::abs(std::remainder(p - oa, 2 * std::numbers::pi));
    if (dist > ob / 2 + tol) return false;
  }
  return true;
}

// Ranking oracle that shares nothing with the harness: answers come from a
// direct scan of the facts, candidates are materialized and sorted, and gold
// is placed after every candidate with an equal score.
inline bool scan_matches(const hypermono::hkg::HyperFact& f, const hypermono::hkg::Query& q) {
  using hypermono::hkg::Direction;
  if (f.relation != q.relation) return false;
  if ((q.direction == Direction::Tail ? f.head : f.tail) != q.known) return false;
  const auto have = f.qualifier_set();
  for (const auto& p : q.qualifiers)
    if (std::find(have.begin(), have.end(), p) == have.end()) return false;
  return true;
}

inline std::size_t brute_force_rank(const hypermono::hkg::Query& q, const Eigen::VectorXd& scores,
                                    const std::vector<hypermono::hkg::HyperFact>& filter_facts, int gold) {
  std::vector<char> answer(static_cast<std::size_t>(scores.size()), 0);
  for (const auto& f : filter_facts) {
    if (!scan_matches(f, q)) continue;
    const auto e = q.direction == hypermono::hkg::Direction::Tail ? f.tail : f.head;
    answer[static_cast<std::size_t>(e.value)] = 1;
  }
  // (score, is_gold) sorted by score descending, gold last among equals.
  std::vector<std::pair<double, int>> cands;
  for (int e = 1; e < scores.size(); ++e)
    if (e == gold || !answer[static_cast<std::size_t>(e)]) cands.push_back({scores[e], e == gold ? 1 : 0});
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (cands[i].second == 1) return i + 1;
  return 0;
}

}  // namespace testing
