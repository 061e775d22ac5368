#include "hypermono/seqenc.hpp"

#include "hypermono/errors.hpp"

namespace hypermono::seqenc {

using ad::Index;
using ad::Var;

std::string to_string(Role r) {
  switch (r) {
    case Role::Head: return "head";
    case Role::Relation: return "relation";
    case Role::Mask: return "mask";
    case Role::Attribute: return "attribute";
    case Role::Value: return "value";
    case Role::Tail: return "tail";
  }
  return "?";
}

std::size_t TokenSequence::mask_position() const {
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i].role == Role::Mask) return i;
  throw ArgumentError("token sequence has no mask position");
}

void TokenSequence::validate() const {
  if (tokens.empty()) throw ArgumentError("empty token sequence");
  if (tokens.size() < 3) throw ArgumentError("token sequence shorter than 3");
  int masks = 0;
  for (const auto& t : tokens) masks += t.role == Role::Mask;
  if (masks != 1) throw ArgumentError("token sequence needs exactly one mask, has " + std::to_string(masks));
  if ((tokens.size() - 3) % 2 != 0) throw ArgumentError("qualifier region has an unpaired token");
  for (std::size_t i = 3; i < tokens.size(); ++i) {
    const Role want = (i - 3) % 2 == 0 ? Role::Attribute : Role::Value;
    if (tokens[i].role != want)
      throw ArgumentError("position " + std::to_string(i) + " should be " + to_string(want) + ", is " +
                          to_string(tokens[i].role));
  }
}

void EncoderConfig::validate() const {
  if (dim < 1) throw ConfigError("encoder dim must be positive");
  if (layers < 1) throw ConfigError("encoder needs at least one layer");
  if (heads < 1 || dim % heads != 0)
    throw ConfigError("encoder dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
  if (ff_width < 1) throw ConfigError("feed-forward width must be positive");
  if (!(input_dropout >= 0.0 && input_dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

Encoder::Encoder(ad::ParameterStore& store, const std::string& name, EncoderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::string p = "enc/" + name;
  const Index d = cfg_.dim;
  if (cfg_.role_embeddings) roles_ = &store.add(p + "/roles", ad::Shape{kRoleCount, d});
  for (Index l = 0; l < cfg_.layers; ++l) {
    const std::string b = p + "/layer" + std::to_string(l);
    blocks_.push_back(Block{ad::LayerNorm(store, b + "/ln1", d), ad::Linear(store, b + "/q", d, d),
                            ad::Linear(store, b + "/k", d, d), ad::Linear(store, b + "/v", d, d),
                            ad::Linear(store, b + "/o", d, d), ad::LayerNorm(store, b + "/ln2", d),
                            ad::Mlp(store, b + "/ff", d, cfg_.ff_width, d)});
  }
  final_ln_ = ad::LayerNorm(store, p + "/ln_out", d);
}

Var Encoder::encode(ad::Tape& tape, const TokenSequence& seq, Var entities, Var relations, bool train,
                    std::uint64_t key) const {
  seq.validate();
  const Index d = cfg_.dim;
  std::vector<Var> rows;
  rows.reserve(seq.size());
  std::vector<Index> role_ids;
  role_ids.reserve(seq.size());
  for (const auto& t : seq.tokens) {
    role_ids.push_back(static_cast<Index>(t.role));
    if (t.embedding) {
      if (t.embedding->shape() != ad::Shape{d})
        throw ShapeError("encode: override has shape " + ad::shape_string(t.embedding->shape()) + ", expected [" +
                         std::to_string(d) + "]");
      rows.push_back(*t.embedding);
      continue;
    }
    Var table = t.vocab == Vocab::Entity ? entities : relations;
    const Index n = table.value().rows();
    if (t.id < 0 || t.id >= n)
      throw VocabularyError(std::string(t.vocab == Vocab::Entity ? "entity" : "relation") + " id " +
                            std::to_string(t.id) + " outside vocabulary of " + std::to_string(n));
    rows.push_back(ad::row(table, t.id));
  }
  Var x = ad::stack(rows);
  if (roles_) x = x + ad::gather_rows(tape.param(*roles_), role_ids);
  x = ad::dropout(x, cfg_.input_dropout, ad::mix_key(key, 0), train);

  const double inner_rate = cfg_.sublayer_dropout ? cfg_.input_dropout : 0.0;
  std::uint64_t site = 1;
  for (const auto& b : blocks_) {
    Var h = b.ln_attn(tape, x);
    Var att = b.o(tape, ad::multi_head_attention(b.q(tape, h), b.k(tape, h), b.v(tape, h), cfg_.heads));
    x = x + ad::dropout(att, inner_rate, ad::mix_key(key, site++), train);
    Var ff = b.ff(tape, b.ln_ff(tape, x));
    x = x + ad::dropout(ff, inner_rate, ad::mix_key(key, site++), train);
  }
  return final_ln_(tape, x);
}

}  // namespace hypermono::seqenc
