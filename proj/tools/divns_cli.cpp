// Command-line experiment runner: synth, prepare, train, ablate, toy, eval.

#include "divns/experiment.hpp"
#include "divns/synthetic.hpp"
#include "divns/toy.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace divns;

namespace {

fs::path default_out_root() {
  if (const char* env = std::getenv("DIVNS_OUT_ROOT"); env && *env) return env;
  return "runs";
}

struct TrainFlags {
  std::string data;
  std::string sampler = "divns";
  std::string variant = "full";
  std::size_t m = 10, r = 4, omega = 1;
  double lambda = 0.5;
  int d = 64;
  std::size_t batch = 2048;
  std::vector<double> lr{1e-4, 5e-4, 1e-3};
  std::vector<double> l2{1e-5, 1e-4, 1e-3};
  int epochs = 200;
  int patience = 10;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out;
  unsigned threads = 1;
  bool dump_diagnostics = false;
  std::string config;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--data", f.data, "prepared snapshot directory");
  app->add_option("--config", f.config, "key = value file; command-line flags override it");
  app->add_option("--sampler", f.sampler, "rns | pns | dns | divns");
  app->add_option("--variant", f.variant, "full | no_synthesis | uniform_cache | plain_kdpp");
  app->add_option("--m", f.m, "candidates per positive");
  app->add_option("--r", f.r, "cache ratio");
  app->add_option("--lambda", f.lambda, "mixup weight on the hard negative");
  app->add_option("--omega", f.omega, "negatives per positive");
  app->add_option("--d", f.d, "embedding dimension");
  app->add_option("--batch", f.batch, "mini-batch size");
  app->add_option("--lr", f.lr, "learning-rate grid")->delimiter(',');
  app->add_option("--l2", f.l2, "l2 grid")->delimiter(',');
  app->add_option("--epochs", f.epochs, "maximum epochs");
  app->add_option("--patience", f.patience, "early-stopping patience (0 disables)");
  app->add_option("--seeds", f.seeds, "seed list")->delimiter(',');
  app->add_option("--out", f.out, "output directory");
  app->add_option("--threads", f.threads, "worker threads");
  app->add_flag("--dump-diagnostics", f.dump_diagnostics, "write per-user DPP diagnostics");
}

ExperimentSpec to_spec(const TrainFlags& f, const CLI::App* app, const std::string& default_leaf) {
  ExperimentSpec spec;
  DivnsConfig& c = spec.config;
  if (!f.config.empty()) apply_config(spec, load_config_file(f.config));
  auto given = [&](const char* name) { return app->count(name) > 0; };
  // Flags beat the config file; the file beats built-in defaults.
  auto pick = [&](const char* name, auto& dst, const auto& src) {
    if (given(name) || f.config.empty()) dst = src;
  };
  if (given("--data") || spec.data.empty()) spec.data = f.data;
  if (given("--sampler") || f.config.empty()) c.sampler = parse_sampler(f.sampler);
  if (given("--variant") || f.config.empty()) c.variant = parse_variant(f.variant);
  pick("--m", c.m, f.m);
  pick("--r", c.r, f.r);
  pick("--lambda", c.lambda, f.lambda);
  pick("--omega", c.omega, f.omega);
  pick("--d", c.dim, f.d);
  pick("--batch", c.batch, f.batch);
  pick("--lr", spec.learning_rates, f.lr);
  pick("--l2", spec.l2_weights, f.l2);
  pick("--epochs", c.epochs, f.epochs);
  pick("--patience", c.patience, f.patience);
  pick("--seeds", spec.seeds, f.seeds);
  pick("--threads", c.threads, f.threads);
  if (f.dump_diagnostics) spec.dump_diagnostics = true;
  if (given("--out") || spec.out.empty()) spec.out = f.out.empty() ? default_out_root() / default_leaf : fs::path(f.out);
  if (spec.data.empty()) throw Error("--data is required");
  return spec;
}

void print_summary(const ExperimentResult& r) {
  std::cout << "lr=" << r.learning_rate << " l2=" << r.l2 << " seeds=" << r.runs.size() << '\n';
  for (const auto& [key, ms] : r.test) std::cout << "  test " << key << " = " << ms.mean << " +- " << ms.stddev << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diversity-aware negative sampling for implicit-feedback recommenders"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic MovieLens-100K-sized interaction log");
  std::string synth_out;
  std::uint64_t synth_seed = 7;
  SyntheticSpec synth_spec;
  synth->add_option("--out", synth_out, "output file")->required();
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--users", synth_spec.num_users);
  synth->add_option("--items", synth_spec.num_items);
  synth->add_option("--interactions", synth_spec.target_interactions);
  synth->add_option("--popularity-weight", synth_spec.popularity_weight);
  synth->add_option("--affinity", synth_spec.affinity);
  synth->add_option("--clusters", synth_spec.clusters);
  synth->add_option("--latent-dim", synth_spec.latent_dim);
  synth->add_option("--item-spread", synth_spec.item_spread);
  synth->add_option("--user-topics", synth_spec.user_topics);

  // prepare
  auto* prep = app.add_subcommand("prepare", "k-core filter, index and split a raw log into a snapshot");
  std::string prep_data, prep_out, prep_format = "tsv";
  int k_core = 5;
  std::uint64_t prep_seed = 2024;
  prep->add_option("--data", prep_data, "raw interaction file")->required();
  prep->add_option("--out", prep_out, "snapshot directory")->required();
  prep->add_option("--format", prep_format, "tsv | csv | literal delimiter such as ::");
  prep->add_option("--k-core", k_core, "minimum interactions per user and item");
  prep->add_option("--seed", prep_seed, "split seed");

  // train / ablate
  auto* tr = app.add_subcommand("train", "train over seeds and an (lr, l2) grid");
  TrainFlags train_flags;
  add_train_flags(tr, train_flags);

  auto* ab = app.add_subcommand("ablate", "sweep one axis and emit one row per setting");
  TrainFlags ablate_flags;
  std::string axis_name = "r";
  add_train_flags(ab, ablate_flags);
  ab->add_option("--axis", axis_name, "r | lambda | omega | variant | sampling");

  // toy
  auto* toy = app.add_subcommand("toy", "uniform vs greedy k-DPP selection on clustered embeddings");
  ToyOptions toy_opt;
  std::uint64_t toy_seed = 1;
  std::string toy_out;
  toy->add_option("--clusters", toy_opt.clusters);
  toy->add_option("--items-per-cluster", toy_opt.items_per_cluster);
  toy->add_option("--k", toy_opt.k);
  toy->add_option("--dim", toy_opt.dim);
  toy->add_option("--spread", toy_opt.spread);
  toy->add_option("--seed", toy_seed);
  toy->add_option("--out", toy_out, "output directory");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a snapshot split");
  std::string ev_data, ev_ckpt, ev_split = "test";
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--split", ev_split, "validation | test");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      std::ofstream out(synth_out);
      if (!out) throw Error("cannot write " + synth_out);
      generate_synthetic_log(out, synth_spec, synth_seed);
    } else if (*prep) {
      const PrepareStats st = cmd_prepare(prep_data, prep_out, InputFormat::parse(prep_format), k_core, prep_seed);
      std::cout << "records=" << st.raw_records << " interactions=" << st.interactions << " users=" << st.users
                << " items=" << st.items << " sha1=" << st.snapshot_hash << '\n';
    } else if (*tr) {
      const ExperimentSpec spec = to_spec(train_flags, tr, "train");
      print_summary(cmd_train(spec));
      std::cout << "wrote " << spec.out.string() << '\n';
    } else if (*ab) {
      const ExperimentSpec spec = to_spec(ablate_flags, ab, "ablate_" + axis_name);
      const PreparedData data = read_snapshot(spec.data);
      const auto rows = cmd_ablate(spec, parse_axis(axis_name), data,
                                   git_blob_sha1_of_file(spec.data / "interactions.tsv"));
      for (const auto& row : rows) {
        std::cout << axis_name << '=' << row.label << "  ndcg@20=" << row.result.test_mean("ndcg@20")
                  << "  recall@20=" << row.result.test_mean("recall@20") << '\n';
      }
      std::cout << "wrote " << (spec.out / "ablation.tsv").string() << '\n';
    } else if (*toy) {
      const fs::path out = toy_out.empty() ? default_out_root() / "toy" : fs::path(toy_out);
      fs::create_directories(out);
      const ClusteredEmbeddings emb = make_clustered_embeddings(toy_opt, toy_seed);
      const ToySelection sel = run_toy(emb, toy_opt.k, toy_seed);
      {
        std::ofstream p(out / "points.tsv");
        write_toy_points(p, emb, sel);
        std::ofstream u(out / "uniform.tsv");
        write_toy_selection(u, emb, sel.uniform);
        std::ofstream d(out / "dpp.tsv");
        write_toy_selection(d, emb, sel.dpp);
        std::ofstream s(out / "summary.tsv");
        s << "method\tk\tdiversity\tmodal_cluster_fraction\n";
        s << "uniform\t" << sel.uniform.size() << '\t' << detail::fixed(sel.uniform_diversity, 8) << '\t'
          << detail::fixed(sel.uniform_modal_fraction, 8) << '\n';
        s << "dpp\t" << sel.dpp.size() << '\t' << detail::fixed(sel.dpp_diversity, 8) << '\t'
          << detail::fixed(sel.dpp_modal_fraction, 8) << '\n';
      }
      std::cout << "uniform diversity=" << sel.uniform_diversity << " modal=" << sel.uniform_modal_fraction << '\n'
                << "dpp     diversity=" << sel.dpp_diversity << " modal=" << sel.dpp_modal_fraction << '\n'
                << "wrote " << out.string() << '\n';
    } else if (*ev) {
      const PreparedData data = read_snapshot(ev_data);
      const auto [table, state] = load_checkpoint(ev_ckpt);
      const MetricsReport rep = evaluate(table, data, parse_split_tag(ev_split), kDefaultKs);
      write_metrics_header(std::cout);
      write_metrics_rows(std::cout, rep, 0);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
