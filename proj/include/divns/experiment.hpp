#ifndef DIVNS_EXPERIMENT_HPP
#define DIVNS_EXPERIMENT_HPP

#include "divns/dataset.hpp"
#include "divns/divns.hpp"
#include "divns/eval.hpp"
#include "divns/hash.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace divns {

inline constexpr std::string_view kManifestSchema = "divns-run v1";

struct PrepareStats {
  std::size_t raw_records = 0;
  std::size_t interactions = 0;
  Index users = 0;
  Index items = 0;
  std::string snapshot_hash;
};

/// load -> k-core -> binarize/index -> split.
inline PreparedData prepare_dataset(const RawInteractionLog& log, int k_core, std::uint64_t seed) {
  ImplicitDataset ds = binarize_and_index(k_core_filter(log, k_core));
  DataSplit sp = split(ds, seed);
  return PreparedData(std::move(ds), std::move(sp));
}

inline PrepareStats cmd_prepare(const std::filesystem::path& raw, const std::filesystem::path& out,
                                const InputFormat& format, int k_core, std::uint64_t seed) {
  const RawInteractionLog log = load_interactions(raw, format);
  const PreparedData data = prepare_dataset(log, k_core, seed);
  write_snapshot(out, data.dataset, data.split);
  PrepareStats st;
  st.raw_records = log.size();
  st.interactions = data.dataset.num_interactions();
  st.users = data.dataset.num_users;
  st.items = data.dataset.num_items;
  st.snapshot_hash = git_blob_sha1_of_file(out / "interactions.tsv");
  return st;
}

/// Everything one cmd_train invocation needs. Learning-rate and l2 lists
/// with more than one entry trigger a grid search on validation NDCG@20.
struct ExperimentSpec {
  std::filesystem::path data;
  DivnsConfig config;
  std::vector<double> learning_rates{1e-3};
  std::vector<double> l2_weights{1e-4};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::filesystem::path out;  // empty: nothing written
  bool dump_diagnostics = false;
  bool save_checkpoints = true;

  void validate() const {
    if (learning_rates.empty() || l2_weights.empty() || seeds.empty()) throw Error("experiment: grids must be nonempty");
    for (std::size_t a = 0; a < seeds.size(); ++a)
      for (std::size_t b = a + 1; b < seeds.size(); ++b)
        if (seeds[a] == seeds[b]) throw Error("experiment: seeds must be distinct");
    config.validate();
  }
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

struct SeedRun {
  std::uint64_t seed = 0;
  TrainResult result;
  double mean_training_seconds = 0.0;  // sampling + dpp + optimization per epoch
};

struct ExperimentResult {
  double learning_rate = 0.0;
  double l2 = 0.0;
  std::vector<SeedRun> runs;
  std::map<std::string, MeanStd> test;        // "ndcg@20" -> mean/std
  std::map<std::string, MeanStd> validation;  // best-epoch validation

  double test_mean(const std::string& key) const { return test.at(key).mean; }
};

namespace detail {

inline std::map<std::string, MeanStd> summarize(const std::vector<const MetricsReport*>& reports) {
  std::map<std::string, std::vector<double>> cols;
  for (const auto* r : reports) {
    for (const auto& [k, m] : r->at_k) {
      cols["ndcg@" + std::to_string(k)].push_back(m.ndcg);
      cols["recall@" + std::to_string(k)].push_back(m.recall);
    }
  }
  std::map<std::string, MeanStd> out;
  for (const auto& [key, xs] : cols) out[key] = mean_std(xs);
  return out;
}

inline std::string fixed(double x, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline nlohmann::json config_json(const DivnsConfig& c) {
  return {{"sampler", std::string(to_string(c.sampler))},
          {"variant", std::string(to_string(c.variant))},
          {"m", c.m},
          {"r", c.r},
          {"lambda", c.lambda},
          {"omega", c.omega},
          {"epochs", c.epochs},
          {"patience", c.patience},
          {"d", c.dim},
          {"batch", c.batch},
          {"lr", c.learning_rate},
          {"l2", c.l2},
          {"init_stddev", c.init_stddev},
          {"pns_beta", c.pns_beta},
          {"clamp_penalty", c.clamp_penalty},
          {"exclude_validation_at_test", c.ranking.exclude_validation_at_test}};
}

}  // namespace detail

inline ExperimentResult run_seeds(const PreparedData& data, DivnsConfig config, double lr, double l2,
                                  std::span<const std::uint64_t> seeds, bool diagnostics) {
  ExperimentResult res;
  res.learning_rate = lr;
  res.l2 = l2;
  config.learning_rate = lr;
  config.l2 = l2;
  config.diagnostics = diagnostics;
  for (std::uint64_t seed : seeds) {
    DivnsConfig c = config;
    c.seed = seed;
    SeedRun run;
    run.seed = seed;
    run.result = train(data, c);
    double total = 0.0;
    for (const auto& t : run.result.timings) total += t.training();
    run.mean_training_seconds = run.result.timings.empty() ? 0.0 : total / static_cast<double>(run.result.timings.size());
    res.runs.push_back(std::move(run));
  }
  std::vector<const MetricsReport*> tests, vals;
  for (const auto& r : res.runs) {
    if (r.result.test) tests.push_back(&*r.result.test);
    if (r.result.best_epoch >= 0) vals.push_back(&r.result.validation[static_cast<std::size_t>(r.result.best_epoch)]);
  }
  res.test = detail::summarize(tests);
  res.validation = detail::summarize(vals);
  return res;
}

/// Writes metrics.tsv, summary.tsv, timings.tsv, metrics.json, manifest.json
/// and per-seed checkpoints/diagnostics into `out`.
inline void write_experiment(const std::filesystem::path& out, const ExperimentSpec& spec,
                             const ExperimentResult& res, const std::string& data_hash) {
  std::filesystem::create_directories(out);
  {
    std::ofstream m(out / "metrics.tsv");
    m << "# " << kMetricsSchema << "\n";
    write_metrics_header(m);
    for (const auto& run : res.runs) {
      for (std::size_t e = 0; e < run.result.validation.size(); ++e) {
        m << run.seed << '\t' << e << "\ttrain\t0\tloss\t" << detail::fixed(run.result.epoch_loss[e]) << '\n';
        write_metrics_rows(m, run.result.validation[e], run.seed);
      }
      if (run.result.test) write_metrics_rows(m, *run.result.test, run.seed);
    }
  }
  {
    std::ofstream s(out / "summary.tsv");
    s << "# " << kMetricsSchema << "\n";
    s << "split\tmetric\tmean\tstd\tseeds\n";
    for (const auto& [key, ms] : res.validation)
      s << "validation\t" << key << '\t' << detail::fixed(ms.mean) << '\t' << detail::fixed(ms.stddev) << '\t' << res.runs.size() << '\n';
    for (const auto& [key, ms] : res.test)
      s << "test\t" << key << '\t' << detail::fixed(ms.mean) << '\t' << detail::fixed(ms.stddev) << '\t' << res.runs.size() << '\n';
  }
  {
    std::ofstream t(out / "timings.tsv");
    t << "seed\tepoch\tsampling_s\tdpp_s\toptimization_s\tevaluation_s\n";
    for (const auto& run : res.runs) {
      for (std::size_t e = 0; e < run.result.timings.size(); ++e) {
        const auto& pt = run.result.timings[e];
        t << run.seed << '\t' << e << '\t' << detail::fixed(pt.sampling, 6) << '\t' << detail::fixed(pt.dpp, 6)
          << '\t' << detail::fixed(pt.optimization, 6) << '\t' << detail::fixed(pt.evaluation, 6) << '\n';
      }
    }
  }
  nlohmann::json metrics = nlohmann::json::object();
  metrics["schema"] = std::string(kMetricsSchema);
  for (const auto& run : res.runs) {
    nlohmann::json r;
    r["seed"] = run.seed;
    r["best_epoch"] = run.result.best_epoch;
    r["epochs_run"] = run.result.epochs_run;
    if (run.result.test) r["test"] = to_json(*run.result.test);
    nlohmann::json val = nlohmann::json::array();
    for (const auto& v : run.result.validation) val.push_back(to_json(v));
    r["validation"] = val;
    metrics["runs"].push_back(r);
  }
  for (const auto& [key, ms] : res.test) metrics["test_summary"][key] = {{"mean", ms.mean}, {"std", ms.stddev}};
  std::ofstream(out / "metrics.json") << metrics.dump(2) << '\n';

  nlohmann::json manifest;
  manifest["schema"] = std::string(kManifestSchema);
  manifest["data"] = spec.data.string();
  manifest["data_sha1"] = data_hash;
  manifest["config"] = detail::config_json(spec.config);
  manifest["config"]["lr"] = res.learning_rate;
  manifest["config"]["l2"] = res.l2;
  manifest["lr_grid"] = spec.learning_rates;
  manifest["l2_grid"] = spec.l2_weights;
  manifest["seeds"] = spec.seeds;
  manifest["files"] = {"metrics.tsv", "summary.tsv", "metrics.json", "timings.tsv"};
  std::ofstream(out / "manifest.json") << manifest.dump(2) << '\n';

  for (const auto& run : res.runs) {
    if (spec.save_checkpoints) {
      save_checkpoint(out / ("checkpoint_seed" + std::to_string(run.seed) + ".bin"), run.result.table,
                      run.result.optimizer);
    }
    if (spec.dump_diagnostics && !run.result.diagnostics.empty()) {
      std::ofstream d(out / ("dpp_seed" + std::to_string(run.seed) + ".tsv"));
      write_dpp_diagnostics(d, run.result.diagnostics);
      std::ofstream r(out / ("diversity_seed" + std::to_string(run.seed) + ".tsv"));
      r << "epoch\tusers\tmean_diversity\tmean_uniform_diversity\tgap\n";
      for (const auto& e : diversity_report(run.result.diagnostics)) {
        r << e.epoch << '\t' << e.users << '\t' << (e.mean_diversity ? detail::fixed(*e.mean_diversity, 8) : "NA")
          << '\t' << (e.mean_uniform_diversity ? detail::fixed(*e.mean_uniform_diversity, 8) : "NA") << '\t'
          << (e.gap ? detail::fixed(*e.gap, 8) : "NA") << '\n';
      }
    }
  }
}

/// Runs the (lr, l2) grid over all seeds, keeps the setting with the best
/// seed-averaged validation NDCG@20 and writes its outputs.
inline ExperimentResult cmd_train(const ExperimentSpec& spec, const PreparedData& data,
                                  const std::string& data_hash = {}) {
  spec.validate();
  std::optional<ExperimentResult> best;
  for (double lr : spec.learning_rates) {
    for (double l2 : spec.l2_weights) {
      ExperimentResult r = run_seeds(data, spec.config, lr, l2, spec.seeds, spec.dump_diagnostics);
      const double score = r.validation.count("ndcg@20") ? r.validation.at("ndcg@20").mean : -1.0;
      if (!best || score > best->validation.at("ndcg@20").mean) best = std::move(r);
    }
  }
  if (!spec.out.empty()) write_experiment(spec.out, spec, *best, data_hash);
  return std::move(*best);
}

inline ExperimentResult cmd_train(const ExperimentSpec& spec) {
  const PreparedData data = read_snapshot(spec.data);
  const auto path = spec.data / "interactions.tsv";
  return cmd_train(spec, data, git_blob_sha1_of_file(path));
}

// ---------------------------------------------------------------------------
// Ablation sweeps
// ---------------------------------------------------------------------------

enum class AblationAxis { kR, kLambda, kOmega, kVariant, kSampling };

inline AblationAxis parse_axis(std::string_view s) {
  if (s == "r") return AblationAxis::kR;
  if (s == "lambda") return AblationAxis::kLambda;
  if (s == "omega") return AblationAxis::kOmega;
  if (s == "variant") return AblationAxis::kVariant;
  if (s == "sampling") return AblationAxis::kSampling;
  throw Error("unknown ablation axis: " + std::string(s));
}

struct AblationSetting {
  std::string label;
  DivnsConfig config;
};

/// The grid for one axis applied to `base`.
inline std::vector<AblationSetting> ablation_grid(AblationAxis axis, const DivnsConfig& base) {
  std::vector<AblationSetting> out;
  auto add = [&](std::string label, DivnsConfig c) { out.push_back({std::move(label), std::move(c)}); };
  DivnsConfig divns = base;
  divns.sampler = SamplerKind::kDivns;
  switch (axis) {
    case AblationAxis::kR:
      for (std::size_t r : {1, 2, 4, 6}) {
        DivnsConfig c = divns;
        c.r = r;
        add(std::to_string(r), c);
      }
      break;
    case AblationAxis::kLambda:
      for (double l : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        DivnsConfig c = divns;
        c.lambda = l;
        add(detail::fixed(l, 1), c);
      }
      break;
    case AblationAxis::kOmega:
      for (std::size_t w : {1, 4, 8, 16}) add(std::to_string(w), apply_sampling_ratio(base, w));
      break;
    case AblationAxis::kVariant:
      for (Variant v : {Variant::kFull, Variant::kNoSynthesis, Variant::kUniformCache, Variant::kPlainKdpp}) {
        DivnsConfig c = divns;
        c.variant = v;
        add(std::string(to_string(v)), c);
      }
      break;
    case AblationAxis::kSampling:
      for (Variant v : {Variant::kFull, Variant::kPlainKdpp, Variant::kUniformCache}) {
        DivnsConfig c = divns;
        c.variant = v;
        add(v == Variant::kFull ? "augmented_kdpp" : v == Variant::kPlainKdpp ? "plain_kdpp" : "uniform", c);
      }
      break;
  }
  return out;
}

struct AblationRow {
  std::string label;
  ExperimentResult result;
};

inline std::vector<AblationRow> cmd_ablate(const ExperimentSpec& base, AblationAxis axis, const PreparedData& data,
                                           const std::string& data_hash = {}) {
  std::vector<AblationRow> rows;
  for (auto& setting : ablation_grid(axis, base.config)) {
    ExperimentSpec spec = base;
    spec.config = setting.config;
    if (!base.out.empty()) spec.out = base.out / ("setting_" + setting.label);
    rows.push_back({setting.label, cmd_train(spec, data, data_hash)});
  }
  if (!base.out.empty()) {
    std::filesystem::create_directories(base.out);
    std::ofstream t(base.out / "ablation.tsv");
    t << "# " << kMetricsSchema << "\n";
    t << "setting\tndcg@10\trecall@10\tndcg@20\trecall@20\tndcg@20_std\n";
    for (const auto& row : rows) {
      const auto& ts = row.result.test;
      t << row.label << '\t' << detail::fixed(ts.at("ndcg@10").mean) << '\t' << detail::fixed(ts.at("recall@10").mean)
        << '\t' << detail::fixed(ts.at("ndcg@20").mean) << '\t' << detail::fixed(ts.at("recall@20").mean) << '\t'
        << detail::fixed(ts.at("ndcg@20").stddev) << '\n';
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// key = value configuration files
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> parse_config_text(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view v = detail::trim(line);
    if (v.empty() || v.front() == '#') continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) throw ParseError("config line needs key = value", line_no);
    std::string key(detail::trim(v.substr(0, eq)));
    std::string val(detail::trim(v.substr(eq + 1)));
    while (!key.empty() && key.back() == ' ') key.pop_back();
    while (!val.empty() && val.front() == ' ') val.erase(val.begin());
    if (key.empty()) throw ParseError("empty config key", line_no);
    kv[key] = val;
  }
  return kv;
}

inline std::map<std::string, std::string> load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config: " + path.string());
  return parse_config_text(in);
}

inline std::vector<double> parse_double_list(std::string_view s) {
  std::vector<double> out;
  for (auto f : detail::split_fields(s, ",")) {
    auto v = detail::parse_number<double>(f);
    if (!v) throw Error("bad number list: " + std::string(s));
    out.push_back(*v);
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seed_list(std::string_view s) {
  std::vector<std::uint64_t> out;
  for (auto f : detail::split_fields(s, ",")) {
    auto v = detail::parse_number<std::uint64_t>(f);
    if (!v) throw Error("bad seed list: " + std::string(s));
    out.push_back(*v);
  }
  return out;
}

/// Applies recognised keys to `spec`; unknown keys are an error.
inline void apply_config(ExperimentSpec& spec, const std::map<std::string, std::string>& kv) {
  auto num = [](const std::string& k, const std::string& v) {
    auto d = detail::parse_number<double>(v);
    if (!d) throw Error("config " + k + ": not a number: " + v);
    return *d;
  };
  auto boolean = [](const std::string& v) { return v == "1" || v == "true" || v == "yes" || v == "on"; };
  DivnsConfig& c = spec.config;
  for (const auto& [k, v] : kv) {
    if (k == "data") spec.data = v;
    else if (k == "out") spec.out = v;
    else if (k == "sampler") c.sampler = parse_sampler(v);
    else if (k == "variant") c.variant = parse_variant(v);
    else if (k == "m") c.m = static_cast<std::size_t>(num(k, v));
    else if (k == "r") c.r = static_cast<std::size_t>(num(k, v));
    else if (k == "lambda") c.lambda = num(k, v);
    else if (k == "omega") c.omega = static_cast<std::size_t>(num(k, v));
    else if (k == "d") c.dim = static_cast<int>(num(k, v));
    else if (k == "batch") c.batch = static_cast<std::size_t>(num(k, v));
    else if (k == "lr") spec.learning_rates = parse_double_list(v);
    else if (k == "l2") spec.l2_weights = parse_double_list(v);
    else if (k == "epochs") c.epochs = static_cast<int>(num(k, v));
    else if (k == "patience") c.patience = static_cast<int>(num(k, v));
    else if (k == "seeds") spec.seeds = parse_seed_list(v);
    else if (k == "threads") c.threads = static_cast<unsigned>(num(k, v));
    else if (k == "init_stddev") c.init_stddev = num(k, v);
    else if (k == "pns_beta") c.pns_beta = num(k, v);
    else if (k == "clamp_penalty") c.clamp_penalty = boolean(v);
    else if (k == "exclude_validation_at_test") c.ranking.exclude_validation_at_test = boolean(v);
    else if (k == "dump_diagnostics") spec.dump_diagnostics = boolean(v);
    else throw Error("unknown config key: " + k);
  }
}

}  // namespace divns

#endif  // DIVNS_EXPERIMENT_HPP
