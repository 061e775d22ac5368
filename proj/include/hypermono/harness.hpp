#pragma once

// Training loop and filtered-ranking evaluation.

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hypermono/hkg.hpp"
#include "hypermono/model.hpp"

namespace hypermono::harness {

struct TrainConfig {
  double lr = 1e-3;
  double label_smoothing = 0.0;
  ad::Index dim = 32;
  double gamma = 4.0;
  double init_range = 0.02;
  std::size_t max_neighbors = 3;
  std::size_t max_qualifiers = 6;
  ad::Index layers = 2;
  ad::Index heads = 2;
  ad::Index ff_width = 64;
  double dropout = 0.0;
  bool sublayer_dropout = false;
  bool role_embeddings = true;
  std::size_t epochs = 300;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::size_t warmup_steps = 0;
  double lr_floor = 0.0;
  double weight_decay = 0.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  bool strict_containment = false;
  model::Pooling pooling = model::Pooling::Columnwise;
  model::EncoderSharing sharing = model::EncoderSharing::Split;
  model::Ablations ablate;

  static TrainConfig preset(std::string_view name);  // desk-scale | paper-scale
  void set(std::string_view key, std::string_view value);  // ConfigError on unknown key or bad value
  void validate() const;
  model::ModelConfig model_config() const;
};

// Flat "key = value" lines; '#' starts a comment.
void apply_config(std::istream& in, TrainConfig& cfg);
void apply_config_file(const std::filesystem::path& path, TrainConfig& cfg);
void write_config(std::ostream& os, const TrainConfig& cfg);

struct LossRow {
  std::size_t step = 0;
  // Summed over the batch and both prediction directions. "h" terms are the
  // neighborhood losses on the known entity, "t" terms the missing-entity losses.
  double triple_h = 0, hyper_h = 0, triple_t = 0, hyper_t = 0, joint = 0;
  double lr = 0;
};

void write_losses_csv(std::ostream& os, const std::vector<LossRow>& rows);

struct TrainResult {
  std::unique_ptr<model::HyperMono> model;  // holds the selected (best) parameters
  std::vector<LossRow> losses;
  std::vector<double> epoch_losses;  // mean joint loss per step, per epoch
  std::vector<double> valid_mrr;     // per epoch, only with a valid split
  std::size_t best_epoch = 0;        // 1-based
  std::optional<std::filesystem::path> checkpoint;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // model.ckpt, train.cfg, losses.csv
  model::Stage select_stage = model::Stage::Default;
};

TrainResult train(const TrainConfig& cfg, const hkg::DatasetBundle& bundle, const TrainOptions& options = {});

// Rank of `gold` after removing every other true answer of `query` in the
// filter graph and the mask row. Ties count against gold.
std::size_t filtered_rank(const hkg::Query& query, const Eigen::VectorXd& scores, const hkg::HyperGraph& filter,
                          hkg::EntityId gold);

struct DirectionMetrics {
  std::size_t queries = 0;
  double mrr = 0, hits1 = 0, hits3 = 0, hits10 = 0;
};

DirectionMetrics aggregate(std::span<const std::size_t> ranks);

struct RankedQuery {
  std::size_t fact = 0;
  hkg::Direction direction = hkg::Direction::Tail;
  std::size_t rank = 0;
};

struct RankReport {
  std::vector<RankedQuery> queries;
  DirectionMetrics head, tail, mean;  // mean averages the two directions
};

void write_metrics_csv(std::ostream& os, const RankReport& report);

using Scorer = std::function<Eigen::VectorXd(const hkg::Query&, const hkg::HyperFact& source)>;

// Both directions of every fact, scored by `scorer`.
RankReport evaluate(const Scorer& scorer, std::span<const hkg::HyperFact> facts, const hkg::HyperGraph& filter);

RankReport evaluate(const model::HyperMono& model, const hkg::DatasetBundle& bundle, std::string_view split,
                    model::Stage stage);

// Rebuilds the model from a config and checkpoint; CompatibilityError when
// the checkpoint does not fit the bundle's vocabulary.
std::unique_ptr<model::HyperMono> load_model(const TrainConfig& cfg, const std::filesystem::path& checkpoint,
                                             const hkg::DatasetBundle& bundle);

}  // namespace hypermono::harness
