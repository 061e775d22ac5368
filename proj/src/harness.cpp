#include "hypermono/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "hypermono/checkpoint.hpp"
#include "hypermono/errors.hpp"
#include "hypermono/optim.hpp"

namespace hypermono::harness {

using hkg::Direction;
using hkg::EntityId;

TrainConfig TrainConfig::preset(std::string_view name) {
  TrainConfig c;
  if (name == "desk-scale") {
    c.lr = 1e-3;
    c.label_smoothing = 0.0;
    c.dim = 32;
    c.layers = 2;
    c.heads = 2;
    c.ff_width = 64;
    c.dropout = 0.0;
    c.epochs = 300;
    c.warmup_steps = 200;
    return c;
  }
  if (name == "paper-scale") {
    c.lr = 6e-4;
    c.label_smoothing = 0.8;
    c.dim = 200;
    c.gamma = 4.0;
    c.init_range = 0.02;
    c.max_neighbors = 3;
    c.max_qualifiers = 6;
    c.layers = 8;
    c.heads = 8;
    c.ff_width = 800;
    c.dropout = 0.7;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (desk-scale | paper-scale)");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end)
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

}  // namespace

void TrainConfig::set(std::string_view key, std::string_view value) {
  auto d = [&] { return parse_number<double>(key, value); };
  auto u = [&] { return parse_number<std::size_t>(key, value); };
  auto i = [&] { return parse_number<ad::Index>(key, value); };
  auto b = [&] { return parse_bool(key, value); };
  if (key == "lr") lr = d();
  else if (key == "label_smoothing") label_smoothing = d();
  else if (key == "dim") dim = i();
  else if (key == "gamma") gamma = d();
  else if (key == "init_range") init_range = d();
  else if (key == "max_neighbors") max_neighbors = u();
  else if (key == "max_qualifiers") max_qualifiers = u();
  else if (key == "layers") layers = i();
  else if (key == "heads") heads = i();
  else if (key == "ff_width") ff_width = i();
  else if (key == "dropout") dropout = d();
  else if (key == "sublayer_dropout") sublayer_dropout = b();
  else if (key == "role_embeddings") role_embeddings = b();
  else if (key == "epochs") epochs = u();
  else if (key == "batch_size") batch_size = u();
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "warmup_steps") warmup_steps = u();
  else if (key == "lr_floor") lr_floor = d();
  else if (key == "weight_decay") weight_decay = d();
  else if (key == "lambda1") lambda1 = d();
  else if (key == "lambda2") lambda2 = d();
  else if (key == "strict_containment") strict_containment = b();
  else if (key == "pooling") pooling = model::parse_pooling(value);
  else if (key == "encoder_sharing") sharing = model::parse_sharing(value);
  else if (key == "ablate.cna") ablate.cna = b();
  else if (key == "ablate.fna") ablate.fna = b();
  else if (key == "ablate.lei") ablate.lei = b();
  else if (key == "ablate.gei") ablate.gei = b();
  else if (key == "ablate.csb") ablate.csb = b();
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

model::ModelConfig TrainConfig::model_config() const {
  model::ModelConfig m;
  m.encoder.dim = dim;
  m.encoder.layers = layers;
  m.encoder.heads = heads;
  m.encoder.ff_width = ff_width;
  m.encoder.input_dropout = dropout;
  m.encoder.sublayer_dropout = sublayer_dropout;
  m.encoder.role_embeddings = role_embeddings;
  m.gamma = gamma;
  m.max_neighbors = max_neighbors;
  m.max_qualifiers = max_qualifiers;
  m.label_smoothing = label_smoothing;
  m.init_range = init_range;
  m.lambda1 = lambda1;
  m.lambda2 = lambda2;
  m.strict_containment = strict_containment;
  m.pooling = pooling;
  m.sharing = sharing;
  m.ablate = ablate;
  return m;
}

void TrainConfig::validate() const {
  model_config().validate();
  if (!(std::isfinite(lr) && lr >= 0.0)) throw ConfigError("lr must be finite and >= 0");
  if (!(lr_floor >= 0.0 && lr_floor <= lr)) throw ConfigError("lr_floor must lie in [0, lr]");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

void apply_config(std::istream& in, TrainConfig& cfg) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::string_view v(line);
    if (auto c = v.find('#'); c != std::string_view::npos) v = v.substr(0, c);
    const std::string body = trim(v);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError("config line " + std::to_string(n) + ": empty key or value");
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
}

void apply_config_file(const std::filesystem::path& path, TrainConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  apply_config(in, cfg);
}

void write_config(std::ostream& os, const TrainConfig& c) {
  auto flag = [](bool b) { return b ? "true" : "false"; };
  os << std::setprecision(17);
  os << "lr = " << c.lr << "\n"
     << "label_smoothing = " << c.label_smoothing << "\n"
     << "dim = " << c.dim << "\n"
     << "gamma = " << c.gamma << "\n"
     << "init_range = " << c.init_range << "\n"
     << "max_neighbors = " << c.max_neighbors << "\n"
     << "max_qualifiers = " << c.max_qualifiers << "\n"
     << "layers = " << c.layers << "\n"
     << "heads = " << c.heads << "\n"
     << "ff_width = " << c.ff_width << "\n"
     << "dropout = " << c.dropout << "\n"
     << "sublayer_dropout = " << flag(c.sublayer_dropout) << "\n"
     << "role_embeddings = " << flag(c.role_embeddings) << "\n"
     << "epochs = " << c.epochs << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "seed = " << c.seed << "\n"
     << "warmup_steps = " << c.warmup_steps << "\n"
     << "lr_floor = " << c.lr_floor << "\n"
     << "weight_decay = " << c.weight_decay << "\n"
     << "lambda1 = " << c.lambda1 << "\n"
     << "lambda2 = " << c.lambda2 << "\n"
     << "strict_containment = " << flag(c.strict_containment) << "\n"
     << "pooling = " << model::to_string(c.pooling) << "\n"
     << "encoder_sharing = " << model::to_string(c.sharing) << "\n"
     << "ablate.cna = " << flag(c.ablate.cna) << "\n"
     << "ablate.fna = " << flag(c.ablate.fna) << "\n"
     << "ablate.lei = " << flag(c.ablate.lei) << "\n"
     << "ablate.gei = " << flag(c.ablate.gei) << "\n"
     << "ablate.csb = " << flag(c.ablate.csb) << "\n";
}

void write_losses_csv(std::ostream& os, const std::vector<LossRow>& rows) {
  os << "step,L_triple_h,L_hyper_h,L_triple_t,L_hyper_t,L_joint,lr\n";
  os << std::setprecision(10);
  for (const auto& r : rows)
    os << r.step << ',' << r.triple_h << ',' << r.hyper_h << ',' << r.triple_t << ',' << r.hyper_t << ','
       << r.joint << ',' << r.lr << '\n';
}

TrainResult train(const TrainConfig& cfg, const hkg::DatasetBundle& bundle, const TrainOptions& options) {
  cfg.validate();
  const auto& facts = bundle.train();
  if (facts.empty()) throw ArgumentError("train split is empty");
  TrainResult result;
  result.model = std::make_unique<model::HyperMono>(cfg.model_config(), bundle.vocab().entities.size(),
                                                    bundle.vocab().relations.size(), cfg.seed);
  auto& net = *result.model;
  auto& params = net.params();
  ad::AdamW opt(params, ad::AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});

  const std::size_t steps_per_epoch = (facts.size() + cfg.batch_size - 1) / cfg.batch_size;
  ad::LrSchedule schedule{cfg.lr, cfg.warmup_steps, cfg.epochs * steps_per_epoch, cfg.lr_floor};
  if (schedule.warmup_steps >= schedule.total_steps) schedule.warmup_steps = schedule.total_steps / 10;

  std::vector<std::size_t> order(facts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(ad::mix_key(cfg.seed, 0x5a5a));
  const auto& graph = bundle.train_graph();

  std::vector<ad::CheckpointRecord> best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t qualifier_seed = ad::mix_key(cfg.seed ^ 0x9u, epoch);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const double lr = ad::lr_at(step + 1, schedule);
      ad::Tape tape;
      tape.step = step;
      auto pass = net.begin(tape, true, ad::mix_key(cfg.seed, step), ad::mix_key(cfg.seed ^ 0x3u, step),
                            qualifier_seed);
      LossRow row;
      row.step = step + 1;
      row.lr = lr;
      std::optional<ad::Var> total;
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < stop; ++i) {
        for (Direction dir : {Direction::Tail, Direction::Head}) {
          auto out = net.joint_forward(pass, facts[order[i]], dir, graph);
          row.triple_h += model::ForwardOutput::value_or_zero(out.loss_triple_anchor);
          row.hyper_h += model::ForwardOutput::value_or_zero(out.loss_hyper_anchor);
          row.triple_t += model::ForwardOutput::value_or_zero(out.loss_triple_target);
          row.hyper_t += model::ForwardOutput::value_or_zero(out.loss_hyper_target);
          total = total ? *total + out.joint : out.joint;
        }
      }
      row.joint = total->item();
      if (!std::isfinite(row.joint)) throw NumericError("non-finite loss at step " + std::to_string(row.step));
      params.zero_grad();
      tape.backward(*total);
      opt.step(lr);
      epoch_sum += row.joint;
      result.losses.push_back(row);
    }
    const double epoch_mean = epoch_sum / static_cast<double>(steps_per_epoch);
    result.epoch_losses.push_back(epoch_mean);

    double score = -epoch_mean;
    if (bundle.has_valid() && !bundle.valid().empty()) {
      score = evaluate(net, bundle, "valid", options.select_stage).mean.mrr;
      result.valid_mrr.push_back(score);
    }
    if (score > best_score) {
      best_score = score;
      best = ad::snapshot(params);
      result.best_epoch = epoch;
    }
  }
  ad::restore(best, params);

  if (options.out_dir) {
    const auto& dir = *options.out_dir;
    std::filesystem::create_directories(dir);
    ad::write_checkpoint(dir / "model.ckpt", best);
    result.checkpoint = dir / "model.ckpt";
    std::ofstream cfg_out(dir / "train.cfg", std::ios::binary);
    write_config(cfg_out, cfg);
    std::ofstream loss_out(dir / "losses.csv", std::ios::binary);
    write_losses_csv(loss_out, result.losses);
    if (!cfg_out || !loss_out) throw IoError("failed writing training outputs to " + dir.string());
  }
  return result;
}

std::size_t filtered_rank(const hkg::Query& query, const Eigen::VectorXd& scores, const hkg::HyperGraph& filter,
                          EntityId gold) {
  const auto n = static_cast<std::size_t>(scores.size());
  if (gold.value <= 0 || gold.index() >= n)
    throw ArgumentError("filtered_rank: gold " + std::to_string(gold.value) + " outside candidates");
  if (!scores.allFinite()) throw NumericError("filtered_rank: non-finite scores");
  std::vector<char> skip(n, 0);
  skip[hkg::kMaskEntity.index()] = 1;
  for (EntityId e : hkg::answers(query, filter))
    if (e.index() < n) skip[e.index()] = 1;
  skip[gold.index()] = 0;
  const double g = scores[gold.value];
  std::size_t rank = 1;
  for (std::size_t e = 0; e < n; ++e)
    if (!skip[e] && e != gold.index() && scores[static_cast<Eigen::Index>(e)] >= g) ++rank;
  return rank;
}

DirectionMetrics aggregate(std::span<const std::size_t> ranks) {
  DirectionMetrics m;
  m.queries = ranks.size();
  if (ranks.empty()) return m;
  for (auto r : ranks) {
    m.mrr += 1.0 / static_cast<double>(r);
    m.hits1 += r <= 1;
    m.hits3 += r <= 3;
    m.hits10 += r <= 10;
  }
  const double q = static_cast<double>(ranks.size());
  m.mrr /= q;
  m.hits1 /= q;
  m.hits3 /= q;
  m.hits10 /= q;
  return m;
}

void write_metrics_csv(std::ostream& os, const RankReport& report) {
  os << "direction,MRR,H1,H3,H10\n" << std::fixed << std::setprecision(6);
  auto line = [&](const char* name, const DirectionMetrics& m) {
    os << name << ',' << m.mrr << ',' << m.hits1 << ',' << m.hits3 << ',' << m.hits10 << '\n';
  };
  line("head", report.head);
  line("tail", report.tail);
  line("mean", report.mean);
}

RankReport evaluate(const Scorer& scorer, std::span<const hkg::HyperFact> facts, const hkg::HyperGraph& filter) {
  RankReport report;
  std::vector<std::size_t> head_ranks, tail_ranks;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    for (Direction dir : {Direction::Head, Direction::Tail}) {
      const auto query = hkg::Query::from_fact(facts[i], dir);
      const EntityId gold = dir == Direction::Tail ? facts[i].tail : facts[i].head;
      const auto rank = filtered_rank(query, scorer(query, facts[i]), filter, gold);
      report.queries.push_back({i, dir, rank});
      (dir == Direction::Head ? head_ranks : tail_ranks).push_back(rank);
    }
  }
  report.head = aggregate(head_ranks);
  report.tail = aggregate(tail_ranks);
  report.mean.queries = report.head.queries + report.tail.queries;
  report.mean.mrr = 0.5 * (report.head.mrr + report.tail.mrr);
  report.mean.hits1 = 0.5 * (report.head.hits1 + report.tail.hits1);
  report.mean.hits3 = 0.5 * (report.head.hits3 + report.tail.hits3);
  report.mean.hits10 = 0.5 * (report.head.hits10 + report.tail.hits10);
  return report;
}

RankReport evaluate(const model::HyperMono& model, const hkg::DatasetBundle& bundle, std::string_view split,
                    model::Stage stage) {
  const auto& facts = bundle.split(split);
  if (facts.empty()) throw ArgumentError("split '" + std::string(split) + "' is empty");
  const auto& graph = bundle.train_graph();
  Scorer scorer = [&](const hkg::Query& q, const hkg::HyperFact& source) {
    return model.predict(q, graph, stage, &source);
  };
  return evaluate(scorer, facts, bundle.filter_graph());
}

std::unique_ptr<model::HyperMono> load_model(const TrainConfig& cfg, const std::filesystem::path& checkpoint,
                                             const hkg::DatasetBundle& bundle) {
  const auto records = ad::read_checkpoint(checkpoint);
  const std::size_t want = bundle.vocab().entities.size();
  for (const auto& r : records)
    if (r.name == "model/ent" && r.value.rank() == 2 && static_cast<std::size_t>(r.value.extent(0)) != want)
      throw CompatibilityError("checkpoint has " + std::to_string(r.value.extent(0)) + " entity rows, dataset has " +
                               std::to_string(want));
  auto net = std::make_unique<model::HyperMono>(cfg.model_config(), want, bundle.vocab().relations.size(), cfg.seed);
  ad::restore(records, net->params());
  return net;
}

}  // namespace hypermono::harness
