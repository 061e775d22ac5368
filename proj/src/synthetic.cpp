#include "hypermono/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <tuple>

#include "hypermono/errors.hpp"

namespace hypermono::hkg {

namespace {

using Triple = std::tuple<std::int32_t, std::int32_t, std::int32_t>;
using Pair = std::pair<std::int32_t, std::int32_t>;

template <typename Rng>
std::size_t uniform(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

SyntheticBundle gen_synthetic(const SyntheticSpec& spec) {
  if (spec.entities < 2 || spec.relations < 1 || spec.facts < 1)
    throw ArgumentError("synthetic spec needs >= 2 entities, >= 1 relation and >= 1 fact");
  if (spec.tails_per_group < 1 || spec.heads_per_group < 1 || spec.max_qualifiers < 1)
    throw ArgumentError("group sizes and qualifier cap must be >= 1");
  if (!(spec.qualified_fraction >= 0 && spec.qualified_fraction <= 1) ||
      !(spec.test_fraction >= 0 && spec.test_fraction < 1))
    throw ArgumentError("fractions must lie in [0, 1]");
  const std::size_t n_ent = spec.entities;
  const std::size_t n_rel = spec.relations;
  if (spec.facts > n_ent * (n_ent - 1) * n_rel)
    throw ArgumentError("more facts requested than distinct main triples");
  const std::size_t group_size = spec.heads_per_group * spec.tails_per_group;
  if (spec.heads_per_group + spec.tails_per_group > n_ent || group_size > n_ent)
    throw ArgumentError("group does not fit into the entity set");
  if (spec.max_qualifiers > 1 && n_rel < 2)
    throw ArgumentError("extra qualifiers need a second relation");

  auto vocab = std::make_shared<Vocabularies>();
  std::vector<EntityId> ents;
  std::vector<RelationId> rels;
  for (std::size_t i = 0; i < n_ent; ++i)
    ents.emplace_back(vocab->entities.intern("e" + std::to_string(i)));
  for (std::size_t i = 0; i < n_rel; ++i)
    rels.emplace_back(vocab->relations.intern("r" + std::to_string(i)));

  std::mt19937_64 rng(spec.seed);
  const auto wanted_qualified = static_cast<std::size_t>(
      std::llround(static_cast<double>(spec.facts) * spec.qualified_fraction));
  const std::size_t groups = wanted_qualified / group_size;

  std::set<Triple> used_triples;
  std::set<Pair> used_head_rel;  // (h, r) owned by a group
  std::set<Pair> used_rel_tail;  // (r, t) owned by a group
  std::vector<HyperFact> facts;

  std::size_t attempts = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    bool placed = false;
    while (!placed) {
      if (++attempts > 100000) throw ArgumentError("synthetic spec infeasible: cannot place groups");
      const auto r = rels[uniform(rng, n_rel)];
      std::vector<EntityId> pool = ents;
      std::shuffle(pool.begin(), pool.end(), rng);
      std::vector<EntityId> heads(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.heads_per_group));
      std::vector<EntityId> tails(pool.begin() + static_cast<std::ptrdiff_t>(spec.heads_per_group),
                                  pool.begin() + static_cast<std::ptrdiff_t>(spec.heads_per_group + spec.tails_per_group));
      bool clash = false;
      for (auto h : heads) clash |= used_head_rel.count({h.value, r.value}) > 0;
      for (auto t : tails) clash |= used_rel_tail.count({r.value, t.value}) > 0;
      if (clash) continue;

      const auto attr = rels[uniform(rng, n_rel)];
      std::vector<EntityId> values = ents;
      std::shuffle(values.begin(), values.end(), rng);
      std::size_t v = 0;
      for (auto h : heads) {
        for (auto t : tails) {
          HyperFact f{h, r, t, {{attr, values[v++]}}};
          const std::size_t extras = uniform(rng, spec.max_qualifiers);
          for (std::size_t e = 0; e < extras; ++e) {
            RelationId a;
            do {
              a = rels[uniform(rng, n_rel)];
            } while (a == attr);
            f.qualifiers.push_back({a, ents[uniform(rng, n_ent)]});
          }
          used_triples.emplace(h.value, r.value, t.value);
          facts.push_back(std::move(f));
        }
      }
      for (auto h : heads) used_head_rel.insert({h.value, r.value});
      for (auto t : tails) used_rel_tail.insert({r.value, t.value});
      placed = true;
    }
  }

  attempts = 0;
  while (facts.size() < spec.facts) {
    if (++attempts > 1000000) throw ArgumentError("synthetic spec infeasible: cannot place plain facts");
    auto h = ents[uniform(rng, n_ent)];
    auto t = ents[uniform(rng, n_ent)];
    auto r = rels[uniform(rng, n_rel)];
    if (h == t) continue;
    if (used_head_rel.count({h.value, r.value}) || used_rel_tail.count({r.value, t.value})) continue;
    if (!used_triples.emplace(h.value, r.value, t.value).second) continue;
    facts.push_back(HyperFact{h, r, t, {}});
  }

  std::shuffle(facts.begin(), facts.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(facts.size()) * spec.test_fraction));
  std::vector<HyperFact> test(facts.end() - static_cast<std::ptrdiff_t>(n_test), facts.end());
  facts.resize(facts.size() - n_test);

  Provenance prov;
  prov.scenario = "synthetic";
  DatasetBundle bundle(vocab, std::move(facts), std::nullopt, std::move(test), prov);

  SyntheticBundle out{std::move(bundle), {}};
  for (const auto* split : {&out.bundle.train(), &out.bundle.test()}) {
    for (const auto& f : *split) {
      auto q = Query::from_fact(f, Direction::Tail);
      out.truth.push_back({q, answers(q, out.bundle.filter_graph())});
    }
  }
  return out;
}

void write_ground_truth(const std::filesystem::path& path, const SyntheticBundle& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& vocab = data.bundle.vocab();
  for (const auto& gt : data.truth) {
    out << vocab.entities.label(gt.query.known.value) << '\t'
        << vocab.relations.label(gt.query.relation.value);
    for (const auto& q : gt.query.qualifiers)
      out << '\t' << vocab.relations.label(q.attribute.value) << '\t' << vocab.entities.label(q.value.value);
    out << "\t=>";
    for (auto a : gt.answers) out << '\t' << vocab.entities.label(a.value);
    out << '\n';
  }
}

}  // namespace hypermono::hkg
