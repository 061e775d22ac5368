#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hypermono/hkg.hpp"

namespace hypermono::hkg {

// Desk-scale generator. Qualified facts come in groups that share relation
// r: every (head, tail) combination of a group is a fact whose main triple
// alone is ambiguous, and a group-specific qualifier attribute with a
// per-fact value makes the fully qualified query unique.
struct SyntheticSpec {
  std::size_t entities = 50;
  std::size_t relations = 5;
  std::size_t facts = 200;
  std::uint64_t seed = 7;
  std::size_t tails_per_group = 3;
  std::size_t heads_per_group = 1;
  double qualified_fraction = 0.5;
  std::size_t max_qualifiers = 2;  // disambiguating pair plus up to max-1 extras
  double test_fraction = 0.0;
};

struct GroundTruth {
  Query query;  // tail query with the fact's full qualifier set
  std::vector<EntityId> answers;
};

struct SyntheticBundle {
  DatasetBundle bundle;
  std::vector<GroundTruth> truth;  // one per fact, train split first
};

SyntheticBundle gen_synthetic(const SyntheticSpec& spec);

// One line per query: known, relation, qualifiers... then "=>" and answers.
void write_ground_truth(const std::filesystem::path& path, const SyntheticBundle& data);

}  // namespace hypermono::hkg
