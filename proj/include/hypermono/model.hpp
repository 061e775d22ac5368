#pragma once

// The two-stage network. A head neighborhood encoder aggregates the known
// entity's neighbors (triple-only and qualifier-aware) and a missing-entity
// predictor scores candidates from the main triple (coarse) and through the
// cone shrink block (fine). Everything is written for tail prediction; head
// prediction mirrors it with the tail as the known entity.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hypermono/autodiff.hpp"
#include "hypermono/cone.hpp"
#include "hypermono/hkg.hpp"
#include "hypermono/seqenc.hpp"

namespace hypermono::model {

using ad::Index;
using ad::Var;

// true = the component is removed.
struct Ablations {
  bool cna = false;  // coarse neighborhood aggregator and triple predictor
  bool fna = false;  // fine neighborhood aggregator and qualifier predictor
  bool lei = false;  // pool over the global vector only
  bool gei = false;  // pool over the local vectors only
  bool csb = false;  // use the projected cone without shrink or intersection
};

enum class Pooling { Columnwise, PerVector };
// split: CNA+TP share one encoder, FNA+QMP another.
enum class EncoderSharing { Split, Shared, Separate };

Pooling parse_pooling(std::string_view s);
EncoderSharing parse_sharing(std::string_view s);
std::string to_string(Pooling p);
std::string to_string(EncoderSharing s);

struct ModelConfig {
  seqenc::EncoderConfig encoder;  // encoder.dim is the embedding width d
  double gamma = 4.0;
  std::size_t max_neighbors = 3;
  std::size_t max_qualifiers = 6;
  double label_smoothing = 0.0;
  double init_range = 0.02;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  bool strict_containment = false;
  Pooling pooling = Pooling::Columnwise;
  EncoderSharing sharing = EncoderSharing::Split;
  Ablations ablate;

  Index dim() const { return encoder.dim; }
  void validate() const;  // ConfigError
};

enum class Stage { Default, Coarse, Fine, Combined };
Stage parse_stage(std::string_view s);
std::string to_string(Stage s);

// Per-pass state: tape, embedding table nodes, dropout key and sampling seeds.
struct Pass {
  ad::Tape* tape = nullptr;
  bool train = false;
  std::uint64_t dropout_key = 0;
  std::uint64_t neighbor_seed = 0;
  std::uint64_t qualifier_seed = 0;
  bool random_truncation = false;  // seeded subset instead of the first entries
  Var entities;
  Var relations;
  std::uint64_t calls = 0;

  std::uint64_t next_key() { return ad::mix_key(dropout_key, calls++); }
};

struct NeighborEncoding {
  std::vector<hkg::HyperFact> facts;
  std::vector<Var> mask_vectors;  // one [d] row per neighbor
  Var aggregate;                  // mean of mask_vectors, or the raw embedding
  bool fallback = false;          // no neighbors
};

struct Prediction {
  Var logits;  // [N]
  Var loss;    // invalid when no target was given
};

struct QmpPrediction : Prediction {
  cone::ConeVar projected;
  std::vector<cone::ConeVar> shrunk;
  cone::ConeVar answer;
};

// One direction of one fact. Unused branches keep invalid Vars and zero loss.
struct ForwardOutput {
  hkg::Direction direction = hkg::Direction::Tail;
  NeighborEncoding triple;  // N^h
  NeighborEncoding hyper;   // M^h
  Var anchor_triple_logits;  // P^h
  Var anchor_hyper_logits;   // Q^h
  Prediction coarse;         // p^t
  QmpPrediction fine;        // q^t
  Var loss_triple_anchor, loss_hyper_anchor, loss_triple_target, loss_hyper_target;
  Var joint;

  static double value_or_zero(const Var& v) { return v.valid() ? v.item() : 0.0; }
};

// Free kernels of the aggregator.
std::vector<Var> lei_scores(std::span<const Var> mask_vectors, Var entity_matrix);
Var gei_score(std::span<const Var> lei);
Var pool_predictions(std::span<const Var> vectors, double gamma, Pooling pooling = Pooling::Columnwise);
Var head_loss(Var logits, hkg::EntityId target, double smoothing);

class HyperMono {
 public:
  // entity_rows includes the mask row at index 0.
  HyperMono(ModelConfig cfg, std::size_t entity_rows, std::size_t relation_rows, std::uint64_t seed);
  HyperMono(const HyperMono&) = delete;
  HyperMono& operator=(const HyperMono&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterStore& params() { return store_; }
  const ad::ParameterStore& params() const { return store_; }
  const cone::ConeParams& cone_params() const { return cone_; }
  std::size_t entity_rows() const { return static_cast<std::size_t>(entities_->value.extent(0)); }
  std::size_t relation_rows() const { return static_cast<std::size_t>(relations_->value.extent(0)); }

  Pass begin(ad::Tape& tape, bool train, std::uint64_t dropout_key = 0, std::uint64_t neighbor_seed = 0,
             std::uint64_t qualifier_seed = 0) const;

  // Qualifiers capped at max_qualifiers: seeded subset in training passes,
  // the leading entries otherwise.
  std::vector<hkg::QualifierPair> cap_qualifiers(Pass& pass, std::vector<hkg::QualifierPair> qs,
                                                 std::uint64_t salt) const;

  NeighborEncoding neighbor_mask_embed(Pass& pass, hkg::EntityId anchor, hkg::NeighborMode mode,
                                       const hkg::HyperGraph& graph, const hkg::HyperFact* exclude) const;

  // Coarse prediction from the main triple. `aggregate` overrides the known
  // entity's input embedding.
  Prediction tp_forward(Pass& pass, const hkg::Query& query, std::optional<Var> aggregate,
                        std::optional<hkg::EntityId> target) const;
  QmpPrediction qmp_forward(Pass& pass, const hkg::Query& query, std::optional<Var> aggregate,
                            std::optional<hkg::EntityId> target) const;

  ForwardOutput joint_forward(Pass& pass, const hkg::HyperFact& fact, hkg::Direction direction,
                              const hkg::HyperGraph& graph) const;

  // Scores over all entity rows (probabilities, or their sum for Combined).
  Eigen::VectorXd predict(const hkg::Query& query, const hkg::HyperGraph& graph, Stage stage,
                          const hkg::HyperFact* exclude = nullptr) const;
  Stage resolve_stage(Stage stage, const hkg::Query& query) const;

  static constexpr std::uint64_t kEvalSeed = 0x5eed;

 private:
  enum Site { kCna = 0, kFna, kTp, kQmp };
  const seqenc::Encoder& encoder(Site s) const { return *encoders_[encoder_index_[s]]; }
  Var pool_branch(std::span<const Var> mask_vectors, Var entity_matrix) const;
  void initialize(std::uint64_t seed);

  ModelConfig cfg_;
  ad::ParameterStore store_;
  ad::Parameter* entities_ = nullptr;
  ad::Parameter* relations_ = nullptr;
  std::vector<std::unique_ptr<seqenc::Encoder>> encoders_;
  std::array<std::size_t, 4> encoder_index_{};
  cone::ConeParams cone_;
};

}  // namespace hypermono::model
