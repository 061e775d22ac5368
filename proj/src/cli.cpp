#include "hypermono/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "hypermono/checkpoint.hpp"
#include "hypermono/checks.hpp"
#include "hypermono/errors.hpp"
#include "hypermono/harness.hpp"
#include "hypermono/synthetic.hpp"

namespace hypermono::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string data;
  std::string out;
  std::string config;
  std::string preset = "desk-scale";
  std::optional<std::uint64_t> seed;
  std::string stage = "default";
  std::string mode;
  std::size_t samples = 10000;
  std::string split = "test";
  // synth
  hkg::SyntheticSpec synth;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

harness::TrainConfig resolve_config(const Options& o) {
  auto cfg = harness::TrainConfig::preset(o.preset);
  if (!o.config.empty()) harness::apply_config_file(o.config, cfg);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

hkg::DatasetBundle require_data(const Options& o) {
  if (o.data.empty()) throw ArgumentError("--data is required");
  return hkg::load_dataset(o.data);
}

int cmd_stats(const Options& o, std::ostream& out) {
  const auto bundle = require_data(o);
  const auto stats = hkg::compute_stats(bundle);
  hkg::write_stats(out, stats);
  if (!o.out.empty()) {
    auto os = open_out(fs::path(o.out) / "stats.csv");
    hkg::write_stats_csv(os, stats);
  }
  return kExitOk;
}

int cmd_subset(const Options& o, std::ostream& out) {
  if (o.mode.empty()) throw ArgumentError("--mode is required");
  if (o.out.empty()) throw ArgumentError("--out is required");
  const auto mode = hkg::SubsetMode::parse(o.mode);
  const auto bundle = require_data(o);
  const auto subset = hkg::build_subset(bundle, mode, o.seed.value_or(0));
  hkg::save_dataset(subset, o.out);
  hkg::write_stats(out, hkg::compute_stats(subset));
  return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ArgumentError("--out is required");
  auto spec = o.synth;
  if (o.seed) spec.seed = *o.seed;
  const auto data = hkg::gen_synthetic(spec);
  hkg::save_dataset(data.bundle, o.out);
  hkg::write_ground_truth(fs::path(o.out) / "ground_truth.txt", data);
  hkg::write_stats(out, hkg::compute_stats(data.bundle));
  return kExitOk;
}

void print_metrics(std::ostream& out, const harness::RankReport& r) {
  out << std::fixed << std::setprecision(6);
  for (auto [name, m] : {std::pair{"head", &r.head}, std::pair{"tail", &r.tail}, std::pair{"mean", &r.mean}})
    out << name << ": MRR " << m->mrr << " H1 " << m->hits1 << " H3 " << m->hits3 << " H10 " << m->hits10 << "\n";
}

int cmd_train(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ArgumentError("--out is required");
  const auto cfg = resolve_config(o);
  const auto bundle = require_data(o);
  harness::TrainOptions topt;
  topt.out_dir = fs::path(o.out);
  topt.select_stage = model::parse_stage(o.stage);
  const auto result = harness::train(cfg, bundle, topt);
  out << "steps: " << result.losses.size() << "\n";
  out << "best_epoch: " << result.best_epoch << "\n";
  out << std::setprecision(6) << "final_epoch_loss: " << result.epoch_losses.back() << "\n";
  out << "checkpoint: " << result.checkpoint->string() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ArgumentError("--out is required (the training output directory)");
  const fs::path dir(o.out);
  auto cfg = harness::TrainConfig::preset(o.preset);
  if (fs::exists(dir / "train.cfg")) harness::apply_config_file(dir / "train.cfg", cfg);
  if (!o.config.empty()) harness::apply_config_file(o.config, cfg);
  cfg.validate();
  const auto bundle = require_data(o);
  const auto net = harness::load_model(cfg, dir / "model.ckpt", bundle);
  const auto report = harness::evaluate(*net, bundle, o.split, model::parse_stage(o.stage));
  auto os = open_out(dir / "metrics.csv");
  harness::write_metrics_csv(os, report);
  print_metrics(out, report);
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  auto cfg = resolve_config(o);
  const auto bundle = o.data.empty() ? [&] {
    hkg::SyntheticSpec spec;
    spec.entities = 12;
    spec.relations = 3;
    spec.facts = 20;
    spec.seed = cfg.seed;
    return hkg::gen_synthetic(spec).bundle;
  }()
                                     : hkg::load_dataset(o.data);
  ad::GradCheckOptions gopt;
  gopt.seed = cfg.seed;
  const auto report = checks::model_grad_check(cfg, bundle, 2, gopt);
  std::optional<std::ofstream> csv;
  if (!o.out.empty()) {
    csv = open_out(fs::path(o.out) / "gradcheck.csv");
    *csv << "parameter,coordinates,max_rel_error,max_abs_error\n" << std::setprecision(6);
  }
  out << std::scientific << std::setprecision(3);
  for (const auto& e : report.entries) {
    out << e.name << ": " << e.max_rel_error << " (" << e.coordinates << " coords)\n";
    if (csv) *csv << e.name << ',' << e.coordinates << ',' << e.max_rel_error << ',' << e.max_abs_error << '\n';
  }
  out << "max_rel_error: " << report.max_rel_error << "\n";
  out << "result: " << (report.passed() ? "pass" : "fail") << "\n";
  return report.passed() ? kExitOk : kExitInvalid;
}

int cmd_conecheck(const Options& o, std::ostream& out) {
  const auto seed = o.seed.value_or(0);
  const auto shrink = checks::shrink_containment_scan(o.samples, seed);
  const auto inter = checks::intersection_bound_scan(o.samples, ad::mix_key(seed, 1));
  out << "shrink_instances: " << shrink.instances << "\n"
      << "shrink_contained: " << shrink.contained << "\n"
      << std::scientific << std::setprecision(3) << "lower_edge_max_error: " << shrink.max_edge_error << "\n"
      << "intersect_instances: " << inter.instances << "\n"
      << "intersect_within_bound: " << inter.within_bound << "\n";
  const bool ok = shrink.passed() && inter.passed();
  out << "result: " << (ok ? "pass" : "fail") << "\n";
  return ok ? kExitOk : kExitInvalid;
}

int cmd_monocheck(const Options& o, std::ostream& out) {
  const auto bundle = o.data.empty() ? hkg::gen_synthetic({}).bundle : hkg::load_dataset(o.data);
  const auto report = hkg::check_monotonicity(bundle.filter_graph(), o.samples, o.seed.value_or(0));
  out << "samples: " << report.samples << "\n"
      << "strict_shrinks: " << report.strict_shrinks << "\n"
      << "violations: " << report.violations.size() << "\n";
  return report.violations.empty() ? kExitOk : kExitInvalid;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hyper-relational knowledge graph completion with cone-shrink qualifiers", "hypermono"};
  app.require_subcommand(1);
  Options o;

  auto data = [&](CLI::App* c, bool required = false) {
    auto* opt = c->add_option("--data", o.data, "dataset directory (train.txt, [valid.txt], test.txt)");
    if (required) opt->required();
  };
  auto outdir = [&](CLI::App* c, const std::string& help) { c->add_option("--out", o.out, help); };
  auto seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "random seed"); };
  auto config = [&](CLI::App* c) {
    c->add_option("--config", o.config, "flat key = value config file");
    c->add_option("--preset", o.preset, "desk-scale | paper-scale")->check(CLI::IsMember({"desk-scale", "paper-scale"}));
  };
  const auto stage_check = CLI::IsMember({"default", "coarse", "fine", "combined"});

  auto* stats = app.add_subcommand("stats", "print dataset counts");
  data(stats, true);
  outdir(stats, "also write stats.csv here");

  auto* subset = app.add_subcommand("subset", "build a fixed-qualifier or fixed-percentage subset");
  data(subset, true);
  outdir(subset, "output dataset directory");
  subset->add_option("--mode", o.mode, "fixed-qualifier:N | fixed-percentage:P")->required();
  seed(subset);

  auto* synth = app.add_subcommand("synth", "generate a synthetic bundle with ground truth");
  outdir(synth, "output dataset directory");
  seed(synth);
  synth->add_option("--entities", o.synth.entities);
  synth->add_option("--relations", o.synth.relations);
  synth->add_option("--facts", o.synth.facts);
  synth->add_option("--tails-per-group", o.synth.tails_per_group);
  synth->add_option("--heads-per-group", o.synth.heads_per_group);
  synth->add_option("--qualified-fraction", o.synth.qualified_fraction);
  synth->add_option("--max-qualifiers", o.synth.max_qualifiers);
  synth->add_option("--test-fraction", o.synth.test_fraction);

  auto* train = app.add_subcommand("train", "train a model");
  data(train, true);
  outdir(train, "output directory (model.ckpt, train.cfg, losses.csv)");
  config(train);
  seed(train);
  train->add_option("--stage", o.stage, "stage used for validation-based selection")->check(stage_check);

  auto* eval = app.add_subcommand("eval", "filtered ranking of a trained model");
  data(eval, true);
  outdir(eval, "training output directory; metrics.csv is written here");
  config(eval);
  eval->add_option("--stage", o.stage, "default | coarse | fine | combined")->check(stage_check);
  eval->add_option("--split", o.split, "train | valid | test")->check(CLI::IsMember({"train", "valid", "test"}));

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the joint loss");
  data(gradcheck);
  outdir(gradcheck, "also write gradcheck.csv here");
  config(gradcheck);
  seed(gradcheck);

  auto* conecheck = app.add_subcommand("conecheck", "shrink containment and intersection bound scans");
  seed(conecheck);
  conecheck->add_option("--samples", o.samples, "instances per scan")->check(CLI::PositiveNumber);

  auto* monocheck = app.add_subcommand("monocheck", "qualifier monotonicity of the exact answer oracle");
  data(monocheck);
  seed(monocheck);
  monocheck->add_option("--samples", o.samples, "query pairs")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitInvalid;
  }

  try {
    if (*stats) return cmd_stats(o, out);
    if (*subset) return cmd_subset(o, out);
    if (*synth) return cmd_synth(o, out);
    if (*train) return cmd_train(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*gradcheck) return cmd_gradcheck(o, out);
    if (*conecheck) return cmd_conecheck(o, out);
    if (*monocheck) return cmd_monocheck(o, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace hypermono::cli
