#include "hypermono/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hypermono/errors.hpp"

namespace hypermono::model {

using hkg::Direction;
using hkg::EntityId;
using hkg::HyperFact;
using hkg::NeighborMode;
using hkg::QualifierPair;
using hkg::Query;
using seqenc::Role;
using seqenc::Token;
using seqenc::TokenSequence;
using seqenc::Vocab;

Pooling parse_pooling(std::string_view s) {
  if (s == "columnwise") return Pooling::Columnwise;
  if (s == "per-vector") return Pooling::PerVector;
  throw ConfigError("unknown pooling '" + std::string(s) + "' (columnwise | per-vector)");
}

EncoderSharing parse_sharing(std::string_view s) {
  if (s == "split") return EncoderSharing::Split;
  if (s == "shared") return EncoderSharing::Shared;
  if (s == "separate") return EncoderSharing::Separate;
  throw ConfigError("unknown encoder sharing '" + std::string(s) + "' (split | shared | separate)");
}

std::string to_string(Pooling p) { return p == Pooling::Columnwise ? "columnwise" : "per-vector"; }

std::string to_string(EncoderSharing s) {
  switch (s) {
    case EncoderSharing::Split: return "split";
    case EncoderSharing::Shared: return "shared";
    case EncoderSharing::Separate: return "separate";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  if (s == "default") return Stage::Default;
  if (s == "coarse") return Stage::Coarse;
  if (s == "fine") return Stage::Fine;
  if (s == "combined") return Stage::Combined;
  throw ArgumentError("unknown stage '" + std::string(s) + "' (default | coarse | fine | combined)");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Default: return "default";
    case Stage::Coarse: return "coarse";
    case Stage::Fine: return "fine";
    case Stage::Combined: return "combined";
  }
  return "?";
}

void ModelConfig::validate() const {
  encoder.validate();
  if (!(std::isfinite(gamma) && gamma >= 0.0)) throw ConfigError("gamma must be finite and >= 0");
  if (max_neighbors < 1) throw ConfigError("max_neighbors must be >= 1");
  if (max_qualifiers < 1) throw ConfigError("max_qualifiers must be >= 1");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must lie in [0, 1)");
  if (!(init_range > 0.0)) throw ConfigError("init_range must be positive");
  if (!(lambda1 > 0.0 && lambda2 > 0.0)) throw ConfigError("lambda1 and lambda2 must be positive");
  if (ablate.cna && ablate.fna) throw ConfigError("ablating both cna and fna leaves no branch to train");
  if (ablate.lei && ablate.gei) throw ConfigError("ablating both lei and gei leaves nothing to pool");
}

std::vector<Var> lei_scores(std::span<const Var> mask_vectors, Var entity_matrix) {
  std::vector<Var> out;
  out.reserve(mask_vectors.size());
  for (const auto& m : mask_vectors) out.push_back(ad::matmul_nt(m, entity_matrix));
  return out;
}

Var gei_score(std::span<const Var> lei) {
  if (lei.empty()) throw ArgumentError("gei_score: empty score list");
  if (lei.size() == 1) return lei[0];
  return ad::mean(ad::stack(lei), 0);
}

Var pool_predictions(std::span<const Var> vectors, double gamma, Pooling pooling) {
  if (vectors.empty()) throw ArgumentError("pool_predictions: no vectors");
  if (vectors.size() == 1) return vectors[0];
  Var s = ad::stack(vectors);  // [m, N]
  if (pooling == Pooling::PerVector) {
    Var w = ad::softmax(gamma * ad::mean(s, 1));
    return ad::matmul(w, s);
  }
  Var w = ad::transpose(ad::softmax(gamma * ad::transpose(s)));
  return ad::sum(w * s, 0);
}

Var head_loss(Var logits, EntityId target, double smoothing) {
  const Index n = logits.value().size();
  if (target.value < 0 || target.value >= n)
    throw ArgumentError("head_loss: target " + std::to_string(target.value) + " outside " + std::to_string(n) +
                        " candidates");
  const Index t[1] = {target.value};
  return ad::cross_entropy(logits, t, smoothing);
}

HyperMono::HyperMono(ModelConfig cfg, std::size_t entity_rows, std::size_t relation_rows, std::uint64_t seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (entity_rows < 2) throw ArgumentError("model needs at least one entity besides the mask");
  if (relation_rows < 1) throw ArgumentError("model needs at least one relation");
  const Index d = cfg_.dim();
  entities_ = &store_.add("model/ent", ad::Shape{static_cast<Index>(entity_rows), d});
  relations_ = &store_.add("model/rel", ad::Shape{static_cast<Index>(relation_rows), d});

  auto make = [&](const std::string& name) {
    encoders_.push_back(std::make_unique<seqenc::Encoder>(store_, name, cfg_.encoder));
    return encoders_.size() - 1;
  };
  switch (cfg_.sharing) {
    case EncoderSharing::Shared: {
      const auto e = make("shared");
      encoder_index_ = {e, e, e, e};
      break;
    }
    case EncoderSharing::Split: {
      const auto c = make("cna");
      const auto f = make("fna");
      encoder_index_[kCna] = encoder_index_[kTp] = c;
      encoder_index_[kFna] = encoder_index_[kQmp] = f;
      break;
    }
    case EncoderSharing::Separate:
      encoder_index_[kCna] = make("cna");
      encoder_index_[kFna] = make("fna");
      encoder_index_[kTp] = make("tp");
      encoder_index_[kQmp] = make("qmp");
      break;
  }
  cone_ = cone::ConeParams(store_, "cone", d);
  cone_.lambda1 = cfg_.lambda1;
  cone_.lambda2 = cfg_.lambda2;
  cone_.strict_containment = cfg_.strict_containment;
  initialize(seed);
}

void HyperMono::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (auto& p : store_) {
    auto& data = p->value.data();
    if (ends_with(p->name, "/w")) {
      const double fan = static_cast<double>(p->value.extent(0) + p->value.extent(1));
      const double limit = std::sqrt(6.0 / fan);
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Index i = 0; i < data.size(); ++i) data[i] = u(rng);
    } else if (ends_with(p->name, "/gain")) {
      data.setOnes();
    } else if (ends_with(p->name, "/b") || ends_with(p->name, "/shift")) {
      data.setZero();
    } else {
      std::uniform_real_distribution<double> u(-cfg_.init_range, cfg_.init_range);
      for (Index i = 0; i < data.size(); ++i) data[i] = u(rng);
    }
  }
}

Pass HyperMono::begin(ad::Tape& tape, bool train, std::uint64_t dropout_key, std::uint64_t neighbor_seed,
                      std::uint64_t qualifier_seed) const {
  Pass p;
  p.tape = &tape;
  p.train = train;
  p.dropout_key = dropout_key;
  p.neighbor_seed = neighbor_seed;
  p.qualifier_seed = qualifier_seed;
  p.random_truncation = train;
  p.entities = tape.param(*entities_);
  p.relations = tape.param(*relations_);
  return p;
}

std::vector<QualifierPair> HyperMono::cap_qualifiers(Pass& pass, std::vector<QualifierPair> qs,
                                                     std::uint64_t salt) const {
  if (qs.size() <= cfg_.max_qualifiers) return qs;
  if (!pass.random_truncation) {
    qs.resize(cfg_.max_qualifiers);
    return qs;
  }
  std::vector<QualifierPair> out;
  std::mt19937_64 rng(ad::mix_key(pass.qualifier_seed, salt));
  std::sample(qs.begin(), qs.end(), std::back_inserter(out), cfg_.max_qualifiers, rng);
  return out;
}

namespace {

std::uint64_t fact_salt(EntityId h, hkg::RelationId r, EntityId t) {
  return ad::mix_key(ad::mix_key(static_cast<std::uint64_t>(h.value), static_cast<std::uint64_t>(r.value)),
                     static_cast<std::uint64_t>(t.value));
}

void append_qualifiers(TokenSequence& seq, std::span<const QualifierPair> qs) {
  for (const auto& q : qs) {
    seq.tokens.push_back(Token{Vocab::Relation, q.attribute.value, Role::Attribute, std::nullopt});
    seq.tokens.push_back(Token{Vocab::Entity, q.value.value, Role::Value, std::nullopt});
  }
}

// {known, r, [mask]} for tail prediction, {[mask], r, known} for head prediction.
TokenSequence query_sequence(const Query& q, std::span<const QualifierPair> qs, std::optional<Var> aggregate) {
  TokenSequence seq;
  const Token mask{Vocab::Entity, hkg::kMaskEntity.value, Role::Mask, std::nullopt};
  const Token rel{Vocab::Relation, q.relation.value, Role::Relation, std::nullopt};
  if (q.direction == Direction::Tail) {
    seq.tokens = {Token{Vocab::Entity, q.known.value, Role::Head, aggregate}, rel, mask};
  } else {
    seq.tokens = {mask, rel, Token{Vocab::Entity, q.known.value, Role::Tail, aggregate}};
  }
  append_qualifiers(seq, qs);
  return seq;
}

std::size_t known_position(const Query& q) { return q.direction == Direction::Tail ? 0 : 2; }

}  // namespace

NeighborEncoding HyperMono::neighbor_mask_embed(Pass& pass, EntityId anchor, NeighborMode mode,
                                                const hkg::HyperGraph& graph, const HyperFact* exclude) const {
  NeighborEncoding out;
  out.facts = hkg::neighbors(graph, anchor, mode, cfg_.max_neighbors, pass.neighbor_seed, exclude);
  const auto& enc = encoder(mode == NeighborMode::Triple ? kCna : kFna);
  for (const auto& f : out.facts) {
    TokenSequence seq;
    seq.tokens = {Token{Vocab::Entity, hkg::kMaskEntity.value, Role::Mask, std::nullopt},
                  Token{Vocab::Relation, f.relation.value, Role::Relation, std::nullopt},
                  Token{Vocab::Entity, f.tail.value, Role::Tail, std::nullopt}};
    if (mode == NeighborMode::Hyper) {
      const auto qs = cap_qualifiers(pass, f.qualifier_set(), fact_salt(f.head, f.relation, f.tail));
      append_qualifiers(seq, qs);
    }
    Var h = enc.encode(*pass.tape, seq, pass.entities, pass.relations, pass.train, pass.next_key());
    out.mask_vectors.push_back(ad::row(h, 0));
  }
  if (out.mask_vectors.empty()) {
    out.fallback = true;
    if (anchor.value < 0 || anchor.value >= pass.entities.value().rows())
      throw VocabularyError("entity id " + std::to_string(anchor.value) + " outside the embedding table");
    out.aggregate = ad::row(pass.entities, anchor.value);
  } else {
    out.aggregate = out.mask_vectors.size() == 1 ? out.mask_vectors[0] : ad::mean(ad::stack(out.mask_vectors), 0);
  }
  return out;
}

Var HyperMono::pool_branch(std::span<const Var> mask_vectors, Var entity_matrix) const {
  auto lei = lei_scores(mask_vectors, entity_matrix);
  std::vector<Var> pool;
  if (!cfg_.ablate.lei) pool = lei;
  if (!cfg_.ablate.gei) pool.push_back(gei_score(lei));
  return pool_predictions(pool, cfg_.gamma, cfg_.pooling);
}

Prediction HyperMono::tp_forward(Pass& pass, const Query& query, std::optional<Var> aggregate,
                                 std::optional<EntityId> target) const {
  const auto seq = query_sequence(query, {}, aggregate);
  Var h = encoder(kTp).encode(*pass.tape, seq, pass.entities, pass.relations, pass.train, pass.next_key());
  Prediction out;
  out.logits = ad::matmul_nt(ad::row(h, static_cast<Index>(seq.mask_position())), pass.entities);
  if (target) out.loss = head_loss(out.logits, *target, cfg_.label_smoothing);
  return out;
}

QmpPrediction HyperMono::qmp_forward(Pass& pass, const Query& query, std::optional<Var> aggregate,
                                     std::optional<EntityId> target) const {
  const auto seq = query_sequence(query, query.qualifiers, aggregate);
  ad::Tape& tape = *pass.tape;
  Var h = encoder(kQmp).encode(tape, seq, pass.entities, pass.relations, pass.train, pass.next_key());
  Var e_known = ad::row(h, static_cast<Index>(known_position(query)));
  Var e_rel = ad::row(h, 1);

  QmpPrediction out;
  auto c_h = cone::embed_to_cone(tape, e_known, cone_.head_embed, cone_.lambda1, cone_.lambda2);
  auto c_r = cone::embed_to_cone(tape, e_rel, cone_.relation_embed, cone_.lambda1, cone_.lambda2);
  out.projected = cone::project(tape, c_h, c_r, cone_);
  if (cfg_.ablate.csb) {
    out.answer = out.projected;
  } else if (query.qualifiers.empty()) {
    out.answer = cone::intersect(tape, std::span<const cone::ConeVar>(&out.projected, 1), cone_);
  } else {
    for (std::size_t i = 0; i < query.qualifiers.size(); ++i) {
      Var e_a = ad::row(h, static_cast<Index>(3 + 2 * i));
      Var e_v = ad::row(h, static_cast<Index>(4 + 2 * i));
      out.shrunk.push_back(cone::shrink(tape, out.projected, e_rel, e_a, e_v, cone_));
    }
    out.answer = cone::intersect(tape, out.shrunk, cone_);
  }
  out.logits = cone::cone_to_logits(tape, out.answer, pass.entities, cone_);
  if (target) out.loss = head_loss(out.logits, *target, cfg_.label_smoothing);
  return out;
}

ForwardOutput HyperMono::joint_forward(Pass& pass, const HyperFact& fact, Direction direction,
                                       const hkg::HyperGraph& graph) const {
  ForwardOutput out;
  out.direction = direction;
  Query query = Query::from_fact(fact, direction);
  query.qualifiers = cap_qualifiers(pass, std::move(query.qualifiers), fact_salt(fact.head, fact.relation, fact.tail));
  const EntityId target = direction == Direction::Tail ? fact.tail : fact.head;
  const EntityId anchor = query.known;

  std::vector<Var> losses;
  if (!cfg_.ablate.cna) {
    out.triple = neighbor_mask_embed(pass, anchor, NeighborMode::Triple, graph, &fact);
    if (!out.triple.fallback) {
      out.anchor_triple_logits = pool_branch(out.triple.mask_vectors, pass.entities);
      out.loss_triple_anchor = head_loss(out.anchor_triple_logits, anchor, cfg_.label_smoothing);
      losses.push_back(out.loss_triple_anchor);
    }
    out.coarse = tp_forward(pass, query, out.triple.aggregate, target);
    out.loss_triple_target = out.coarse.loss;
    losses.push_back(out.loss_triple_target);
  }
  if (!cfg_.ablate.fna) {
    out.hyper = neighbor_mask_embed(pass, anchor, NeighborMode::Hyper, graph, &fact);
    if (!out.hyper.fallback) {
      out.anchor_hyper_logits = pool_branch(out.hyper.mask_vectors, pass.entities);
      out.loss_hyper_anchor = head_loss(out.anchor_hyper_logits, anchor, cfg_.label_smoothing);
      losses.push_back(out.loss_hyper_anchor);
    }
    out.fine = qmp_forward(pass, query, out.hyper.aggregate, target);
    out.loss_hyper_target = out.fine.loss;
    losses.push_back(out.loss_hyper_target);
  }
  out.joint = losses[0];
  for (std::size_t i = 1; i < losses.size(); ++i) out.joint = out.joint + losses[i];
  return out;
}

Stage HyperMono::resolve_stage(Stage stage, const Query& query) const {
  if (stage == Stage::Default) {
    if (cfg_.ablate.cna) return Stage::Fine;
    if (cfg_.ablate.fna) return Stage::Coarse;
    return query.qualifiers.empty() ? Stage::Coarse : Stage::Fine;
  }
  if ((stage == Stage::Coarse || stage == Stage::Combined) && cfg_.ablate.cna)
    throw ConfigError("stage " + to_string(stage) + " needs the coarse branch, which is ablated");
  if ((stage == Stage::Fine || stage == Stage::Combined) && cfg_.ablate.fna)
    throw ConfigError("stage " + to_string(stage) + " needs the fine branch, which is ablated");
  return stage;
}

Eigen::VectorXd HyperMono::predict(const Query& query_in, const hkg::HyperGraph& graph, Stage stage,
                                   const HyperFact* exclude) const {
  const Stage s = resolve_stage(stage, query_in);
  ad::Tape tape;
  Pass pass = begin(tape, false, 0, kEvalSeed, 0);
  Query query = query_in;
  query.qualifiers = cap_qualifiers(pass, std::move(query.qualifiers), 0);

  Eigen::VectorXd scores = Eigen::VectorXd::Zero(static_cast<Index>(entity_rows()));
  if (s == Stage::Coarse || s == Stage::Combined) {
    auto nb = neighbor_mask_embed(pass, query.known, NeighborMode::Triple, graph, exclude);
    scores += ad::softmax(tp_forward(pass, query, nb.aggregate, std::nullopt).logits).value().data();
  }
  if (s == Stage::Fine || s == Stage::Combined) {
    auto nb = neighbor_mask_embed(pass, query.known, NeighborMode::Hyper, graph, exclude);
    scores += ad::softmax(qmp_forward(pass, query, nb.aggregate, std::nullopt).logits).value().data();
  }
  return scores;
}

}  // namespace hypermono::model
