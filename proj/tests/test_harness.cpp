#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "hypermono/checkpoint.hpp"
#include "hypermono/errors.hpp"
#include "hypermono/harness.hpp"
#include "hypermono/synthetic.hpp"
#include "support.hpp"

using namespace hypermono;
using namespace hypermono::harness;
using hkg::Direction;
using hkg::EntityId;
using hkg::Query;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig tiny_config() {
  auto c = TrainConfig::preset("desk-scale");
  c.dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.ff_width = 16;
  c.epochs = 3;
  c.warmup_steps = 5;
  c.seed = 4;
  return c;
}

hkg::SyntheticBundle tiny_bundle(double test_fraction = 0.0) {
  hkg::SyntheticSpec s;
  s.entities = 16;
  s.relations = 3;
  s.facts = 24;
  s.seed = 9;
  s.test_fraction = test_fraction;
  return hkg::gen_synthetic(s);
}

// Six real entities: e1 r e2/e3/e4 plus qualified and unrelated facts.
testing::GraphBuilder six_entity_graph() {
  testing::GraphBuilder g;
  g.add({"e1", "r", "e2"});
  g.add({"e1", "r", "e3"});
  g.add({"e1", "r", "e4", "a", "e5"});
  g.add({"e5", "r", "e6"});
  g.add({"e6", "s", "e1"});
  return g;
}

}  // namespace

TEST_CASE("filtered_rank examples") {
  auto g = six_entity_graph();
  const auto graph = g.graph();
  const auto q = Query::make(g.e("e1"), g.r("r"), Direction::Tail, {});
  Eigen::VectorXd s(7);  // mask, e1 .. e6

  SUBCASE("unique maximum ranks first") {
    s << 9, 0.1, 0.2, 0.9, 0.3, 0.4, 0.5;
    CHECK(filtered_rank(q, s, graph, g.e("e3")) == 1);
  }
  SUBCASE("other true answers above gold are filtered") {
    // e2 and e4 answer the query and outrank e3; e6 is a genuine miss.
    s << 0, 0.1, 0.9, 0.5, 0.95, 0.2, 0.6;
    CHECK(filtered_rank(q, s, graph, g.e("e3")) == 2);
    CHECK(testing::brute_force_rank(q, s, graph.facts(), g.e("e3").value) == 2);
  }
  SUBCASE("all-equal scores put gold last") {
    s.setConstant(0.25);
    const auto q2 = Query::make(g.e("e5"), g.r("r"), Direction::Tail, {});
    CHECK(filtered_rank(q2, s, graph, g.e("e6")) == 6);
    // Two other answers are filtered out of the e1 query.
    CHECK(filtered_rank(q, s, graph, g.e("e3")) == 4);
  }
  SUBCASE("qualified queries filter only qualified answers") {
    s << 0, 0.1, 0.9, 0.8, 0.5, 0.2, 0.6;
    const auto qq = Query::make(g.e("e1"), g.r("r"), Direction::Tail, {{g.r("a"), g.e("e5")}});
    CHECK(filtered_rank(qq, s, graph, g.e("e4")) == 4);
  }
  SUBCASE("errors") {
    s.setZero();
    CHECK_THROWS_AS(filtered_rank(q, s, graph, EntityId{7}), ArgumentError);
    CHECK_THROWS_AS(filtered_rank(q, s, graph, hkg::kMaskEntity), ArgumentError);
    s[3] = NAN;
    CHECK_THROWS_AS(filtered_rank(q, s, graph, g.e("e3")), NumericError);
  }
}

TEST_CASE("filtered rank equals the brute-force ranker and never exceeds the raw rank") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> coarse(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = testing::random_graph(rng, 6, 2, 10);
    const auto graph = g.graph();
    const auto n = static_cast<Eigen::Index>(g.vocab->entities.size());
    for (const auto& f : graph.facts()) {
      for (auto dir : {Direction::Head, Direction::Tail}) {
        Eigen::VectorXd s(n);
        for (Eigen::Index i = 0; i < n; ++i) s[i] = coarse(rng) * 0.25;  // frequent ties
        const auto q = Query::from_fact(f, dir);
        const EntityId gold = dir == Direction::Tail ? f.tail : f.head;
        const auto r = filtered_rank(q, s, graph, gold);
        CHECK(r == testing::brute_force_rank(q, s, graph.facts(), gold.value));
        std::size_t raw = 1;
        for (Eigen::Index e = 1; e < n; ++e) raw += e != gold.value && s[e] >= s[gold.value];
        CHECK(r <= raw);
      }
    }
  }
}

TEST_CASE("aggregate metrics") {
  const std::vector<std::size_t> ranks{1, 2, 4};
  const auto m = aggregate(ranks);
  CHECK(m.mrr == doctest::Approx((1 + 0.5 + 0.25) / 3.0).epsilon(1e-15));
  CHECK(m.hits1 == doctest::Approx(1.0 / 3));
  CHECK(m.hits3 == doctest::Approx(2.0 / 3));
  CHECK(m.hits10 == 1.0);

  const std::vector<std::size_t> perfect(5, 1);
  const auto p = aggregate(perfect);
  CHECK(p.mrr == 1.0);
  CHECK(p.hits1 == 1.0);
  CHECK(p.hits10 == 1.0);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> r(1, 30);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> v(1 + trial % 9);
    for (auto& x : v) x = r(rng);
    const auto a = aggregate(v);
    CHECK(a.hits1 <= a.hits3);
    CHECK(a.hits3 <= a.hits10);
    CHECK(a.mrr > 0.0);
    CHECK(a.mrr <= 1.0);
  }
}

TEST_CASE("evaluate averages the two directions") {
  auto g = six_entity_graph();
  const auto graph = g.graph();
  const auto n = static_cast<Eigen::Index>(g.vocab->entities.size());
  // Scores by entity index: head queries see a constant, tail queries see the index.
  Scorer scorer = [&](const Query& q, const hkg::HyperFact&) {
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = q.direction == Direction::Tail ? static_cast<double>(i) : 0.0;
    return s;
  };
  const auto report = evaluate(scorer, graph.facts(), graph);
  CHECK(report.queries.size() == 2 * graph.facts().size());
  CHECK(report.head.queries == graph.facts().size());
  CHECK(report.mean.mrr == doctest::Approx(0.5 * (report.head.mrr + report.tail.mrr)));
  CHECK(report.mean.hits1 == doctest::Approx(0.5 * (report.head.hits1 + report.tail.hits1)));

  std::vector<std::size_t> head, tail;
  for (std::size_t i = 0; i < graph.facts().size(); ++i) {
    const auto& f = graph.facts()[i];
    for (auto dir : {Direction::Head, Direction::Tail}) {
      const auto q = Query::from_fact(f, dir);
      const auto gold = dir == Direction::Tail ? f.tail : f.head;
      (dir == Direction::Head ? head : tail)
          .push_back(testing::brute_force_rank(q, scorer(q, f), graph.facts(), gold.value));
    }
  }
  CHECK(aggregate(head).mrr == report.head.mrr);
  CHECK(aggregate(tail).mrr == report.tail.mrr);

  std::ostringstream csv;
  write_metrics_csv(csv, report);
  CHECK(csv.str().rfind("direction,MRR,H1,H3,H10\nhead,", 0) == 0);
}

TEST_CASE("config parsing") {
  TrainConfig c;
  std::istringstream in("# comment\nlr = 0.01  # trailing\n\n dim=16\nablate.csb = true\npooling = per-vector\n");
  apply_config(in, c);
  CHECK(c.lr == 0.01);
  CHECK(c.dim == 16);
  CHECK(c.ablate.csb);
  CHECK(c.pooling == model::Pooling::PerVector);

  std::istringstream unknown("lr = 1\nbogus = 3\n");
  try {
    apply_config(unknown, c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(c.set("dim", "16.5"), ConfigError);
  CHECK_THROWS_AS(c.set("ablate.cna", "maybe"), ConfigError);
  std::istringstream no_eq("lr 0.1\n");
  CHECK_THROWS_AS(apply_config(no_eq, c), ConfigError);
  CHECK_THROWS_AS(apply_config_file("/nonexistent/train.cfg", c), IoError);

  SUBCASE("write_config round trip") {
    auto a = TrainConfig::preset("paper-scale");
    a.seed = 99;
    a.ablate.gei = true;
    a.sharing = model::EncoderSharing::Separate;
    std::ostringstream out;
    write_config(out, a);
    TrainConfig b;
    std::istringstream back(out.str());
    apply_config(back, b);
    std::ostringstream again;
    write_config(again, b);
    CHECK(again.str() == out.str());
  }
  SUBCASE("validation") {
    auto v = tiny_config();
    CHECK_NOTHROW(v.validate());
    v.lr = -1;
    CHECK_THROWS_AS(v.validate(), ConfigError);
    v = tiny_config();
    v.epochs = 0;
    CHECK_THROWS_AS(v.validate(), ConfigError);
    v = tiny_config();
    v.heads = 3;
    CHECK_THROWS_AS(v.validate(), ConfigError);
  }
}

TEST_CASE("presets") {
  const auto p = TrainConfig::preset("paper-scale");
  CHECK(p.lr == 6e-4);
  CHECK(p.label_smoothing == 0.8);
  CHECK(p.dim == 200);
  CHECK(p.gamma == 4.0);
  CHECK(p.init_range == 0.02);
  CHECK(p.max_neighbors == 3);
  CHECK(p.max_qualifiers == 6);
  CHECK(p.layers == 8);
  CHECK(p.heads == 8);
  CHECK(p.dropout == 0.7);
  CHECK_NOTHROW(p.validate());

  const auto d = TrainConfig::preset("desk-scale");
  CHECK(d.dim == 32);
  CHECK(d.layers == 2);
  CHECK(d.heads == 2);
  CHECK_NOTHROW(d.validate());
  CHECK_THROWS_AS(TrainConfig::preset("laptop"), ConfigError);
}

TEST_CASE("training is deterministic and writes its outputs") {
  const auto data = tiny_bundle();
  const auto dir_a = testing::scratch_dir("train_a");
  const auto dir_b = testing::scratch_dir("train_b");
  const auto a = train(tiny_config(), data.bundle, {dir_a});
  const auto b = train(tiny_config(), data.bundle, {dir_b});
  REQUIRE(a.checkpoint);
  CHECK(slurp(dir_a / "model.ckpt") == slurp(dir_b / "model.ckpt"));
  CHECK(slurp(dir_a / "losses.csv") == slurp(dir_b / "losses.csv"));
  CHECK(slurp(dir_a / "losses.csv").rfind("step,L_triple_h,L_hyper_h,L_triple_t,L_hyper_t,L_joint,lr\n", 0) == 0);
  CHECK(a.losses.size() == 3 * data.bundle.train().size());
  CHECK(a.epoch_losses.size() == 3);
  CHECK(a.best_epoch >= 1);

  auto other = tiny_config();
  other.seed = 5;
  const auto c = train(other, data.bundle);
  CHECK_FALSE(c.losses[0].joint == a.losses[0].joint);

  SUBCASE("a saved model reloads with identical predictions") {
    TrainConfig cfg;
    apply_config_file(dir_a / "train.cfg", cfg);
    const auto loaded = load_model(cfg, dir_a / "model.ckpt", data.bundle);
    const auto q = Query::from_fact(data.bundle.train()[0], Direction::Tail);
    const auto& graph = data.bundle.train_graph();
    CHECK(loaded->predict(q, graph, model::Stage::Combined) == a.model->predict(q, graph, model::Stage::Combined));

    hkg::SyntheticSpec bigger;
    bigger.entities = 30;
    bigger.facts = 24;
    const auto mismatch = hkg::gen_synthetic(bigger);
    CHECK_THROWS_AS(load_model(cfg, dir_a / "model.ckpt", mismatch.bundle), CompatibilityError);
  }
}

TEST_CASE("zero learning rate leaves the parameters untouched") {
  const auto data = tiny_bundle();
  auto cfg = tiny_config();
  cfg.lr = 0.0;
  cfg.epochs = 2;
  const auto result = train(cfg, data.bundle);
  model::HyperMono fresh(cfg.model_config(), data.bundle.vocab().entities.size(),
                         data.bundle.vocab().relations.size(), cfg.seed);
  for (std::size_t i = 0; i < fresh.params().size(); ++i) {
    CHECK(fresh.params()[i].name == result.model->params()[i].name);
    CHECK(fresh.params()[i].value == result.model->params()[i].value);
  }
}

TEST_CASE("validation split drives model selection") {
  const auto data = tiny_bundle();
  hkg::DatasetBundle with_valid(data.bundle.vocab_ptr(), data.bundle.train(),
                                std::vector<hkg::HyperFact>(data.bundle.train().begin(),
                                                            data.bundle.train().begin() + 6),
                                data.bundle.train());
  auto cfg = tiny_config();
  cfg.epochs = 2;
  const auto r = train(cfg, with_valid);
  REQUIRE(r.valid_mrr.size() == 2);
  const auto best = std::max_element(r.valid_mrr.begin(), r.valid_mrr.end()) - r.valid_mrr.begin();
  CHECK(r.best_epoch == static_cast<std::size_t>(best) + 1);
  const auto report = evaluate(*r.model, with_valid, "valid", model::Stage::Default);
  CHECK(report.mean.mrr == doctest::Approx(r.valid_mrr[static_cast<std::size_t>(best)]));
}

TEST_CASE("evaluate on a model rejects empty splits") {
  const auto data = tiny_bundle();
  auto cfg = tiny_config();
  cfg.epochs = 1;
  const auto r = train(cfg, data.bundle);
  CHECK_THROWS_AS(evaluate(*r.model, data.bundle, "test", model::Stage::Default), ArgumentError);
  const auto report = evaluate(*r.model, data.bundle, "train", model::Stage::Coarse);
  CHECK(report.queries.size() == 2 * data.bundle.train().size());
  for (const auto& q : report.queries) CHECK(q.rank >= 1);
}
