#pragma once

// Hyper-relational knowledge graph: facts, vocabularies, adjacency, the exact
// query-answer oracle and dataset scenario construction.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hypermono::hkg {

template <typename Tag>
struct StrongId {
  std::int32_t value = -1;

  constexpr StrongId() = default;
  constexpr explicit StrongId(std::int32_t v) : value(v) {}
  constexpr auto operator<=>(const StrongId&) const = default;
  constexpr std::size_t index() const { return static_cast<std::size_t>(value); }
};

using EntityId = StrongId<struct EntityTag>;
using RelationId = StrongId<struct RelationTag>;

// Interns string labels to contiguous indices starting at 0.
class Vocabulary {
 public:
  std::int32_t intern(std::string_view label);
  std::optional<std::int32_t> find(std::string_view label) const;
  const std::string& label(std::int32_t id) const;
  std::size_t size() const { return labels_.size(); }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::int32_t> index_;
};

inline constexpr std::string_view kMaskLabel = "[MASK]";
inline constexpr EntityId kMaskEntity{0};

// Entity vocabulary always starts with the mask token at index 0.
struct Vocabularies {
  Vocabulary entities;
  Vocabulary relations;

  Vocabularies();
  // Number of real entities, excluding the mask token.
  std::size_t num_entities() const { return entities.size() - 1; }
  std::size_t num_relations() const { return relations.size(); }
};

struct QualifierPair {
  RelationId attribute;
  EntityId value;
  auto operator<=>(const QualifierPair&) const = default;
};

struct HyperFact {
  EntityId head;
  RelationId relation;
  EntityId tail;
  std::vector<QualifierPair> qualifiers;  // storage order, duplicates allowed

  bool is_plain() const { return qualifiers.empty(); }
  // Sorted, deduplicated qualifier set used by every containment test.
  std::vector<QualifierPair> qualifier_set() const;
  bool same_triple(const HyperFact& o) const {
    return head == o.head && relation == o.relation && tail == o.tail;
  }
  bool operator==(const HyperFact&) const = default;
};

// Parses "h \t r \t t [\t a \t v]*" interning labels into `vocab`.
HyperFact parse_fact_line(std::string_view line, Vocabularies& vocab, std::size_t line_number = 1);
std::string format_fact_line(const HyperFact& fact, const Vocabularies& vocab);

std::vector<HyperFact> read_fact_file(const std::filesystem::path& path, Vocabularies& vocab);
void write_fact_file(const std::filesystem::path& path, std::span<const HyperFact> facts,
                     const Vocabularies& vocab);

enum class Direction { Head, Tail };

std::string_view to_string(Direction d);

// (known, r, ?, Q) for tail prediction or (?, r, known, Q) for head prediction.
struct Query {
  EntityId known;
  RelationId relation;
  Direction direction = Direction::Tail;
  std::vector<QualifierPair> qualifiers;  // sorted and deduplicated

  static Query make(EntityId known, RelationId relation, Direction direction,
                    std::vector<QualifierPair> qualifiers);
  static Query from_fact(const HyperFact& fact, Direction direction);
};

enum class NeighborMode { Triple, Hyper };

class HyperGraph {
 public:
  HyperGraph() = default;
  HyperGraph(std::vector<HyperFact> facts, std::shared_ptr<const Vocabularies> vocab);

  const std::vector<HyperFact>& facts() const { return facts_; }
  const Vocabularies& vocab() const { return *vocab_; }
  std::shared_ptr<const Vocabularies> vocab_ptr() const { return vocab_; }

  // Indices into facts() of the neighbors headed by `e`. Triple mode lists
  // one fact per distinct main triple; hyper mode lists every fact.
  std::span<const std::size_t> adjacency(EntityId e, NeighborMode mode) const;

  // Facts sharing the fixed slots of a query.
  std::span<const std::size_t> facts_with_head_relation(EntityId h, RelationId r) const;
  std::span<const std::size_t> facts_with_relation_tail(RelationId r, EntityId t) const;

  bool operator==(const HyperGraph& o) const;

 private:
  void build_indices();

  std::vector<HyperFact> facts_;
  std::shared_ptr<const Vocabularies> vocab_;
  std::vector<std::vector<std::size_t>> triple_adj_;
  std::vector<std::vector<std::size_t>> hyper_adj_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_head_relation_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_relation_tail_;
};

// Facts headed by `entity`; a seeded uniform sample of `limit` when more
// exist. Facts sharing the main triple of `exclude` are skipped. Triple mode
// returns main triples with qualifiers stripped.
std::vector<HyperFact> neighbors(const HyperGraph& graph, EntityId entity, NeighborMode mode,
                                 std::size_t limit, std::uint64_t seed,
                                 const HyperFact* exclude = nullptr);

// Exact answer set of a query over the graph, sorted ascending.
std::vector<EntityId> answers(const Query& query, const HyperGraph& graph);

struct MonotonicityViolation {
  Query smaller;  // Q1
  Query larger;   // Q2 with Q1 ⊆ Q2
};

struct MonotonicityReport {
  std::size_t samples = 0;
  std::size_t strict_shrinks = 0;  // pairs where |Ans(q2)| < |Ans(q1)|
  std::vector<MonotonicityViolation> violations;
};

MonotonicityReport check_monotonicity(const HyperGraph& graph, std::size_t samples,
                                      std::uint64_t seed);

struct Provenance {
  std::string scenario = "mixed-percentage-mixed-qualifier";
  double percentage = 0.0;  // 0 when not a fixed-percentage subset
  int arity = 0;            // qualifier count for fixed-qualifier subsets
};

class DatasetBundle {
 public:
  DatasetBundle(std::shared_ptr<const Vocabularies> vocab, std::vector<HyperFact> train,
                std::optional<std::vector<HyperFact>> valid, std::vector<HyperFact> test,
                Provenance provenance = {});

  const Vocabularies& vocab() const { return *vocab_; }
  std::shared_ptr<const Vocabularies> vocab_ptr() const { return vocab_; }
  const std::vector<HyperFact>& train() const { return train_; }
  bool has_valid() const { return valid_.has_value(); }
  const std::vector<HyperFact>& valid() const;
  const std::vector<HyperFact>& test() const { return test_; }
  const std::vector<HyperFact>& split(std::string_view name) const;
  const Provenance& provenance() const { return provenance_; }

  // Neighborhood graph for the model (train split only).
  const HyperGraph& train_graph() const { return train_graph_; }
  // Union of all splits, used for filtered ranking.
  const HyperGraph& filter_graph() const { return filter_graph_; }

 private:
  std::shared_ptr<const Vocabularies> vocab_;
  std::vector<HyperFact> train_;
  std::optional<std::vector<HyperFact>> valid_;
  std::vector<HyperFact> test_;
  Provenance provenance_;
  HyperGraph train_graph_;
  HyperGraph filter_graph_;
};

DatasetBundle load_dataset(const std::filesystem::path& directory, Provenance provenance = {});
void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& directory);

struct SubsetMode {
  enum class Kind { FixedPercentage, FixedQualifier } kind = Kind::FixedQualifier;
  double value = 1;

  // "fixed-qualifier:N" or "fixed-percentage:P"
  static SubsetMode parse(std::string_view text);
};

DatasetBundle build_subset(const DatasetBundle& bundle, SubsetMode mode, std::uint64_t seed = 0);

struct SplitStats {
  std::string split;
  std::size_t facts = 0;
  std::size_t entities = 0;
  std::size_t relations = 0;
  double qualified_ratio = 0.0;
};

struct DatasetStats {
  std::vector<SplitStats> splits;  // train, [valid], test
  std::size_t entities = 0;        // over the union of splits
  std::size_t relations = 0;
};

SplitStats split_stats(std::string_view name, std::span<const HyperFact> facts);
DatasetStats compute_stats(const DatasetBundle& bundle);
void write_stats(std::ostream& os, const DatasetStats& stats);
void write_stats_csv(std::ostream& os, const DatasetStats& stats);

}  // namespace hypermono::hkg

template <typename Tag>
struct std::hash<hypermono::hkg::StrongId<Tag>> {
  std::size_t operator()(const hypermono::hkg::StrongId<Tag>& id) const noexcept {
    return std::hash<std::int32_t>{}(id.value);
  }
};
