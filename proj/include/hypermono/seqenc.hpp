#pragma once

// Pre-LN transformer encoder over token sequences of entities, relations, the
// mask placeholder and qualifier pairs. Positions carry role embeddings only.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hypermono/autodiff.hpp"
#include "hypermono/layers.hpp"

namespace hypermono::seqenc {

enum class Role : std::uint8_t { Head = 0, Relation, Mask, Attribute, Value, Tail };
inline constexpr ad::Index kRoleCount = 6;

std::string to_string(Role r);

enum class Vocab : std::uint8_t { Entity, Relation };

struct Token {
  Vocab vocab = Vocab::Entity;
  std::int32_t id = 0;
  Role role = Role::Head;
  // Replaces the table lookup when set (used to inject aggregated embeddings).
  std::optional<ad::Var> embedding;
};

struct TokenSequence {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  // Index of the single Mask-role token.
  std::size_t mask_position() const;
  // Length >= 3, exactly one mask, attribute/value alternating after the
  // first three positions. Raises ArgumentError.
  void validate() const;
};

struct EncoderConfig {
  ad::Index dim = 32;
  ad::Index layers = 2;
  ad::Index heads = 2;
  ad::Index ff_width = 64;
  double input_dropout = 0.0;
  bool sublayer_dropout = false;  // also drop after attention and feed-forward
  bool role_embeddings = true;

  void validate() const;  // ConfigError
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(ad::ParameterStore& store, const std::string& name, EncoderConfig cfg);

  // [L, d] contextual embeddings. `entities` and `relations` are the tape
  // nodes of the embedding tables. Dropout masks derive from `key`.
  ad::Var encode(ad::Tape& tape, const TokenSequence& seq, ad::Var entities, ad::Var relations, bool train,
                 std::uint64_t key) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    ad::LayerNorm ln_attn;
    ad::Linear q, k, v, o;
    ad::LayerNorm ln_ff;
    ad::Mlp ff;
  };
  EncoderConfig cfg_;
  ad::Parameter* roles_ = nullptr;
  std::vector<Block> blocks_;
  ad::LayerNorm final_ln_;
};

}  // namespace hypermono::seqenc
