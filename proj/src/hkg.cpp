#include "hypermono/hkg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "hypermono/errors.hpp"

namespace hypermono::hkg {

namespace {

std::uint64_t pack(std::int32_t a, std::int32_t b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

bool is_subset(std::span<const QualifierPair> sub, std::span<const QualifierPair> super) {
  return std::includes(super.begin(), super.end(), sub.begin(), sub.end());
}

}  // namespace

std::int32_t Vocabulary::intern(std::string_view label) {
  std::string key(label);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  auto id = static_cast<std::int32_t>(labels_.size());
  labels_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

std::optional<std::int32_t> Vocabulary::find(std::string_view label) const {
  if (auto it = index_.find(std::string(label)); it != index_.end()) return it->second;
  return std::nullopt;
}

const std::string& Vocabulary::label(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= labels_.size())
    throw VocabularyError("vocabulary index " + std::to_string(id) + " out of range");
  return labels_[static_cast<std::size_t>(id)];
}

Vocabularies::Vocabularies() { entities.intern(kMaskLabel); }

std::vector<QualifierPair> HyperFact::qualifier_set() const {
  std::vector<QualifierPair> out = qualifiers;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

HyperFact parse_fact_line(std::string_view line, Vocabularies& vocab, std::size_t line_number) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto fields = split_tabs(line);
  if (fields.size() < 3) throw ParseError(line_number, "expected at least 3 tab-separated fields");
  if (fields.size() % 2 == 0)
    throw ParseError(line_number, "qualifier attribute without a value (even field count)");
  for (auto f : fields)
    if (f.empty()) throw ParseError(line_number, "empty field");

  HyperFact fact;
  fact.head = EntityId{vocab.entities.intern(fields[0])};
  fact.relation = RelationId{vocab.relations.intern(fields[1])};
  fact.tail = EntityId{vocab.entities.intern(fields[2])};
  for (std::size_t i = 3; i < fields.size(); i += 2) {
    fact.qualifiers.push_back({RelationId{vocab.relations.intern(fields[i])},
                               EntityId{vocab.entities.intern(fields[i + 1])}});
  }
  return fact;
}

std::string format_fact_line(const HyperFact& fact, const Vocabularies& vocab) {
  std::string out = vocab.entities.label(fact.head.value);
  out += '\t';
  out += vocab.relations.label(fact.relation.value);
  out += '\t';
  out += vocab.entities.label(fact.tail.value);
  for (const auto& q : fact.qualifiers) {
    out += '\t';
    out += vocab.relations.label(q.attribute.value);
    out += '\t';
    out += vocab.entities.label(q.value.value);
  }
  return out;
}

std::vector<HyperFact> read_fact_file(const std::filesystem::path& path, Vocabularies& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<HyperFact> facts;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    facts.push_back(parse_fact_line(line, vocab, n));
  }
  return facts;
}

void write_fact_file(const std::filesystem::path& path, std::span<const HyperFact> facts,
                     const Vocabularies& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& f : facts) out << format_fact_line(f, vocab) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::string_view to_string(Direction d) { return d == Direction::Head ? "head" : "tail"; }

Query Query::make(EntityId known, RelationId relation, Direction direction,
                  std::vector<QualifierPair> qualifiers) {
  std::sort(qualifiers.begin(), qualifiers.end());
  qualifiers.erase(std::unique(qualifiers.begin(), qualifiers.end()), qualifiers.end());
  return Query{known, relation, direction, std::move(qualifiers)};
}

Query Query::from_fact(const HyperFact& fact, Direction direction) {
  return make(direction == Direction::Tail ? fact.head : fact.tail, fact.relation, direction,
              fact.qualifiers);
}

HyperGraph::HyperGraph(std::vector<HyperFact> facts, std::shared_ptr<const Vocabularies> vocab)
    : facts_(std::move(facts)), vocab_(std::move(vocab)) {
  if (!vocab_) throw ArgumentError("graph requires vocabularies");
  for (const auto& f : facts_) {
    auto check_e = [&](EntityId e) {
      if (e.value < 0 || e.index() >= vocab_->entities.size())
        throw VocabularyError("entity id " + std::to_string(e.value) + " not in vocabulary");
    };
    auto check_r = [&](RelationId r) {
      if (r.value < 0 || r.index() >= vocab_->relations.size())
        throw VocabularyError("relation id " + std::to_string(r.value) + " not in vocabulary");
    };
    check_e(f.head);
    check_e(f.tail);
    check_r(f.relation);
    for (const auto& q : f.qualifiers) {
      check_r(q.attribute);
      check_e(q.value);
    }
  }
  build_indices();
}

void HyperGraph::build_indices() {
  const std::size_t n = vocab_->entities.size();
  triple_adj_.assign(n, {});
  hyper_adj_.assign(n, {});
  by_head_relation_.clear();
  by_relation_tail_.clear();
  std::set<std::tuple<std::int32_t, std::int32_t, std::int32_t>> seen_triples;
  for (std::size_t i = 0; i < facts_.size(); ++i) {
    const auto& f = facts_[i];
    hyper_adj_[f.head.index()].push_back(i);
    if (seen_triples.emplace(f.head.value, f.relation.value, f.tail.value).second)
      triple_adj_[f.head.index()].push_back(i);
    by_head_relation_[pack(f.head.value, f.relation.value)].push_back(i);
    by_relation_tail_[pack(f.relation.value, f.tail.value)].push_back(i);
  }
}

std::span<const std::size_t> HyperGraph::adjacency(EntityId e, NeighborMode mode) const {
  const auto& adj = mode == NeighborMode::Triple ? triple_adj_ : hyper_adj_;
  if (e.value < 0 || e.index() >= adj.size()) return {};
  return adj[e.index()];
}

std::span<const std::size_t> HyperGraph::facts_with_head_relation(EntityId h, RelationId r) const {
  auto it = by_head_relation_.find(pack(h.value, r.value));
  if (it == by_head_relation_.end()) return {};
  return it->second;
}

std::span<const std::size_t> HyperGraph::facts_with_relation_tail(RelationId r, EntityId t) const {
  auto it = by_relation_tail_.find(pack(r.value, t.value));
  if (it == by_relation_tail_.end()) return {};
  return it->second;
}

bool HyperGraph::operator==(const HyperGraph& o) const {
  return facts_ == o.facts_ && triple_adj_ == o.triple_adj_ && hyper_adj_ == o.hyper_adj_ &&
         by_head_relation_ == o.by_head_relation_ && by_relation_tail_ == o.by_relation_tail_;
}

std::vector<HyperFact> neighbors(const HyperGraph& graph, EntityId entity, NeighborMode mode,
                                 std::size_t limit, std::uint64_t seed, const HyperFact* exclude) {
  if (limit == 0) throw ArgumentError("neighbor limit must be >= 1");
  std::vector<std::size_t> pool;
  for (auto i : graph.adjacency(entity, mode)) {
    if (exclude && graph.facts()[i].same_triple(*exclude)) continue;
    pool.push_back(i);
  }
  if (pool.size() > limit) {
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(entity.value + 1)));
    std::vector<std::size_t> chosen;
    chosen.reserve(limit);
    std::sample(pool.begin(), pool.end(), std::back_inserter(chosen), limit, rng);
    pool = std::move(chosen);
  }
  std::vector<HyperFact> out;
  out.reserve(pool.size());
  for (auto i : pool) {
    HyperFact f = graph.facts()[i];
    if (mode == NeighborMode::Triple) f.qualifiers.clear();
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<EntityId> answers(const Query& query, const HyperGraph& graph) {
  const bool tail = query.direction == Direction::Tail;
  auto candidates = tail ? graph.facts_with_head_relation(query.known, query.relation)
                         : graph.facts_with_relation_tail(query.relation, query.known);
  std::vector<EntityId> out;
  for (auto i : candidates) {
    const auto& f = graph.facts()[i];
    if (query.qualifiers.empty() || is_subset(query.qualifiers, f.qualifier_set()))
      out.push_back(tail ? f.tail : f.head);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

MonotonicityReport check_monotonicity(const HyperGraph& graph, std::size_t samples,
                                      std::uint64_t seed) {
  if (samples == 0) throw ArgumentError("sample count must be >= 1");
  if (graph.facts().empty()) throw ArgumentError("monotonicity check needs a nonempty graph");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_fact(0, graph.facts().size() - 1);
  std::uniform_int_distribution<std::int32_t> pick_rel(
      0, static_cast<std::int32_t>(graph.vocab().relations.size()) - 1);
  std::uniform_int_distribution<std::int32_t> pick_ent(
      1, static_cast<std::int32_t>(graph.vocab().entities.size()) - 1);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution rare(0.25);

  MonotonicityReport report;
  report.samples = samples;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto& fact = graph.facts()[pick_fact(rng)];
    const auto dir = coin(rng) ? Direction::Tail : Direction::Head;
    std::vector<QualifierPair> q2;
    for (const auto& q : fact.qualifier_set())
      if (coin(rng)) q2.push_back(q);
    if (rare(rng) && graph.vocab().entities.size() > 1)
      q2.push_back({RelationId{pick_rel(rng)}, EntityId{pick_ent(rng)}});
    std::vector<QualifierPair> q1;
    const bool equal = rare(rng);
    for (const auto& q : q2)
      if (equal || coin(rng)) q1.push_back(q);

    auto small = Query::make(dir == Direction::Tail ? fact.head : fact.tail, fact.relation, dir, q1);
    auto large = Query::make(small.known, small.relation, dir, q2);
    auto a1 = answers(small, graph);
    auto a2 = answers(large, graph);
    if (!std::includes(a1.begin(), a1.end(), a2.begin(), a2.end()))
      report.violations.push_back({small, large});
    else if (a2.size() < a1.size())
      ++report.strict_shrinks;
  }
  return report;
}

DatasetBundle::DatasetBundle(std::shared_ptr<const Vocabularies> vocab, std::vector<HyperFact> train,
                             std::optional<std::vector<HyperFact>> valid, std::vector<HyperFact> test,
                             Provenance provenance)
    : vocab_(std::move(vocab)),
      train_(std::move(train)),
      valid_(std::move(valid)),
      test_(std::move(test)),
      provenance_(std::move(provenance)) {
  train_graph_ = HyperGraph(train_, vocab_);
  std::vector<HyperFact> all = train_;
  if (valid_) all.insert(all.end(), valid_->begin(), valid_->end());
  all.insert(all.end(), test_.begin(), test_.end());
  filter_graph_ = HyperGraph(std::move(all), vocab_);
}

const std::vector<HyperFact>& DatasetBundle::valid() const {
  static const std::vector<HyperFact> empty;
  return valid_ ? *valid_ : empty;
}

const std::vector<HyperFact>& DatasetBundle::split(std::string_view name) const {
  if (name == "train") return train_;
  if (name == "valid") return valid();
  if (name == "test") return test_;
  throw ArgumentError("unknown split '" + std::string(name) + "'");
}

DatasetBundle load_dataset(const std::filesystem::path& directory, Provenance provenance) {
  const auto train_path = directory / "train.txt";
  const auto valid_path = directory / "valid.txt";
  const auto test_path = directory / "test.txt";
  if (!std::filesystem::exists(train_path)) throw IoError("missing " + train_path.string());
  if (!std::filesystem::exists(test_path)) throw IoError("missing " + test_path.string());

  auto vocab = std::make_shared<Vocabularies>();
  auto train = read_fact_file(train_path, *vocab);
  std::optional<std::vector<HyperFact>> valid;
  if (std::filesystem::exists(valid_path)) valid = read_fact_file(valid_path, *vocab);
  auto test = read_fact_file(test_path, *vocab);
  return DatasetBundle(std::move(vocab), std::move(train), std::move(valid), std::move(test),
                       std::move(provenance));
}

void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  write_fact_file(directory / "train.txt", bundle.train(), bundle.vocab());
  if (bundle.has_valid()) write_fact_file(directory / "valid.txt", bundle.valid(), bundle.vocab());
  write_fact_file(directory / "test.txt", bundle.test(), bundle.vocab());
}

SubsetMode SubsetMode::parse(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw ArgumentError("subset mode must be fixed-qualifier:N or fixed-percentage:P");
  auto kind = text.substr(0, colon);
  std::string num(text.substr(colon + 1));
  SubsetMode mode;
  try {
    std::size_t used = 0;
    mode.value = std::stod(num, &used);
    if (used != num.size()) throw std::invalid_argument(num);
  } catch (const std::exception&) {
    throw ArgumentError("bad subset value '" + num + "'");
  }
  if (kind == "fixed-qualifier") {
    mode.kind = Kind::FixedQualifier;
    if (mode.value < 1 || mode.value != std::floor(mode.value))
      throw ArgumentError("fixed-qualifier count must be an integer >= 1");
  } else if (kind == "fixed-percentage") {
    mode.kind = Kind::FixedPercentage;
    if (!(mode.value > 0 && mode.value <= 100))
      throw ArgumentError("fixed-percentage must lie in (0, 100]");
  } else {
    throw ArgumentError("unknown subset mode '" + std::string(kind) + "'");
  }
  return mode;
}

namespace {

std::vector<HyperFact> subset_split(const std::vector<HyperFact>& facts, const SubsetMode& mode,
                                    std::mt19937_64& rng) {
  std::vector<HyperFact> out;
  if (mode.kind == SubsetMode::Kind::FixedQualifier) {
    const auto n = static_cast<std::size_t>(mode.value);
    for (const auto& f : facts)
      if (f.qualifiers.size() == n) out.push_back(f);
    return out;
  }
  std::vector<std::size_t> plain;
  std::size_t qualified = 0;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    if (facts[i].is_plain())
      plain.push_back(i);
    else
      ++qualified;
  }
  const double p = mode.value;
  auto wanted = static_cast<std::size_t>(std::llround(static_cast<double>(qualified) * (100.0 - p) / p));
  wanted = std::min(wanted, plain.size());
  std::vector<std::size_t> chosen;
  std::sample(plain.begin(), plain.end(), std::back_inserter(chosen), wanted, rng);
  std::vector<bool> keep(facts.size(), false);
  for (std::size_t i = 0; i < facts.size(); ++i) keep[i] = !facts[i].is_plain();
  for (auto i : chosen) keep[i] = true;
  for (std::size_t i = 0; i < facts.size(); ++i)
    if (keep[i]) out.push_back(facts[i]);
  return out;
}

// Re-interns every label so that vocabularies cover exactly the subset.
std::vector<HyperFact> reintern(const std::vector<HyperFact>& facts, const Vocabularies& from,
                                Vocabularies& to) {
  std::vector<HyperFact> out;
  out.reserve(facts.size());
  for (const auto& f : facts) {
    HyperFact g;
    g.head = EntityId{to.entities.intern(from.entities.label(f.head.value))};
    g.relation = RelationId{to.relations.intern(from.relations.label(f.relation.value))};
    g.tail = EntityId{to.entities.intern(from.entities.label(f.tail.value))};
    for (const auto& q : f.qualifiers)
      g.qualifiers.push_back({RelationId{to.relations.intern(from.relations.label(q.attribute.value))},
                              EntityId{to.entities.intern(from.entities.label(q.value.value))}});
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

DatasetBundle build_subset(const DatasetBundle& bundle, SubsetMode mode, std::uint64_t seed) {
  if (mode.kind == SubsetMode::Kind::FixedPercentage && !(mode.value > 0 && mode.value <= 100))
    throw ArgumentError("fixed-percentage must lie in (0, 100]");
  if (mode.kind == SubsetMode::Kind::FixedQualifier && mode.value < 1)
    throw ArgumentError("fixed-qualifier count must be >= 1");

  std::mt19937_64 rng(seed);
  auto train = subset_split(bundle.train(), mode, rng);
  std::optional<std::vector<HyperFact>> valid;
  if (bundle.has_valid()) valid = subset_split(bundle.valid(), mode, rng);
  auto test = subset_split(bundle.test(), mode, rng);
  if (train.empty() && test.empty() && (!valid || valid->empty()))
    throw EmptySubsetError("subset is empty");

  auto vocab = std::make_shared<Vocabularies>();
  train = reintern(train, bundle.vocab(), *vocab);
  if (valid) valid = reintern(*valid, bundle.vocab(), *vocab);
  test = reintern(test, bundle.vocab(), *vocab);

  Provenance prov;
  if (mode.kind == SubsetMode::Kind::FixedPercentage) {
    prov.scenario = "fixed-percentage-mixed-qualifier";
    prov.percentage = mode.value;
  } else {
    prov.scenario = "fixed-percentage-fixed-qualifier";
    prov.percentage = 100.0;
    prov.arity = static_cast<int>(mode.value);
  }
  return DatasetBundle(std::move(vocab), std::move(train), std::move(valid), std::move(test), prov);
}

SplitStats split_stats(std::string_view name, std::span<const HyperFact> facts) {
  SplitStats s;
  s.split = std::string(name);
  s.facts = facts.size();
  std::set<EntityId> ents;
  std::set<RelationId> rels;
  std::size_t qualified = 0;
  for (const auto& f : facts) {
    ents.insert(f.head);
    ents.insert(f.tail);
    rels.insert(f.relation);
    for (const auto& q : f.qualifiers) {
      rels.insert(q.attribute);
      ents.insert(q.value);
    }
    if (!f.is_plain()) ++qualified;
  }
  s.entities = ents.size();
  s.relations = rels.size();
  s.qualified_ratio = facts.empty() ? 0.0 : static_cast<double>(qualified) / static_cast<double>(facts.size());
  return s;
}

DatasetStats compute_stats(const DatasetBundle& bundle) {
  DatasetStats st;
  st.splits.push_back(split_stats("train", bundle.train()));
  if (bundle.has_valid()) st.splits.push_back(split_stats("valid", bundle.valid()));
  st.splits.push_back(split_stats("test", bundle.test()));
  auto all = split_stats("all", bundle.filter_graph().facts());
  st.entities = all.entities;
  st.relations = all.relations;
  return st;
}

void write_stats(std::ostream& os, const DatasetStats& stats) {
  for (const auto& s : stats.splits) os << s.split << ": " << s.facts << '\n';
  bool has_valid = std::any_of(stats.splits.begin(), stats.splits.end(),
                               [](const SplitStats& s) { return s.split == "valid"; });
  if (!has_valid) os << "valid: -\n";
  os << "entities: " << stats.entities << '\n';
  os << "relations: " << stats.relations << '\n';
}

void write_stats_csv(std::ostream& os, const DatasetStats& stats) {
  os << "split,facts,entities,relations,qualified_ratio\n";
  for (const auto& s : stats.splits) {
    std::ostringstream ratio;
    ratio << std::fixed << std::setprecision(6) << s.qualified_ratio;
    os << s.split << ',' << s.facts << ',' << s.entities << ',' << s.relations << ',' << ratio.str()
       << '\n';
  }
}

}  // namespace hypermono::hkg
