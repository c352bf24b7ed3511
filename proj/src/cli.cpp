#include "otta/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "otta/adapt.hpp"
#include "otta/data.hpp"
#include "otta/diagnostics.hpp"
#include "otta/format.hpp"
#include "otta/model.hpp"

namespace otta {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

}  // namespace

std::vector<Index> parse_index_list(const std::string& s) {
  std::vector<Index> out;
  for (const std::string& tok : split_commas(s)) {
    try {
      out.push_back(static_cast<Index>(std::stoll(tok)));
    } catch (const std::exception&) {
      throw std::invalid_argument("expected an integer list, got '" + s + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument("empty integer list");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const std::string& tok : split_commas(s)) {
    const auto dots = tok.find("..");
    try {
      if (dots != std::string::npos) {
        const std::uint64_t lo = std::stoull(tok.substr(0, dots));
        const std::uint64_t hi = std::stoull(tok.substr(dots + 2));
        if (hi < lo) throw std::invalid_argument("range");
        for (std::uint64_t v = lo; v <= hi; ++v) out.push_back(v);
      } else {
        out.push_back(std::stoull(tok));
      }
    } catch (const std::exception&) {
      throw std::invalid_argument("expected seeds like '1..10' or '1,4,9', got '" + s + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument("empty seed list");
  return out;
}

std::vector<double> parse_real_list(const std::string& s) {
  std::vector<double> out;
  for (const std::string& tok : split_commas(s)) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::invalid_argument("expected a real-number list, got '" + s + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument("empty real list");
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// Shared option bundles
// ---------------------------------------------------------------------------

struct GlobalFlags {
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 1;
};

struct DataFlags {
  std::string dataset = "blobs";  // "blobs" or a CSV path
  Index classes = 10;
  Index dim = 32;
  Index per_class = 500;
  double spread = 0.15;
};

struct CorruptFlags {
  std::string corruption = "gaussian-noise";
  int severity = 5;
  std::string severity_table;  // optional JSON path
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--dataset", f.dataset, "'blobs' or a dataset CSV path");
  cmd->add_option("--classes", f.classes, "blob classes");
  cmd->add_option("--dim", f.dim, "blob feature dimension");
  cmd->add_option("--per-class", f.per_class, "blob samples per class");
  cmd->add_option("--spread", f.spread, "blob cluster spread");
}

void add_corrupt_flags(CLI::App* cmd, CorruptFlags& f) {
  cmd->add_option("--corruption", f.corruption,
                  "gaussian-noise|feature-scale|rotation|mean-shift|feature-dropout");
  cmd->add_option("--severity", f.severity, "severity level 0..5")->check(CLI::Range(0, 5));
  cmd->add_option("--severity-table", f.severity_table, "severity magnitude table JSON");
}

SplitDataset make_split(const DataFlags& f, std::uint64_t seed) {
  if (f.dataset != "blobs") {
    Dataset d = load_csv_dataset(f.dataset);
    return split_dataset(d, 0.8, seed);
  }
  DatasetSpec spec;
  spec.n_classes = f.classes;
  spec.feature_dim = f.dim;
  spec.samples_per_class = f.per_class;
  spec.cluster_spread = f.spread;
  spec.seed = seed;
  return gen_blobs(spec);
}

SeverityTable load_table(const CorruptFlags& f) {
  return f.severity_table.empty() ? SeverityTable::defaults()
                                  : SeverityTable::load(f.severity_table);
}

std::string resolve_out(const GlobalFlags& g, const std::string& path) {
  if (g.out_dir.empty() || fs::path(path).is_absolute()) return path;
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / path).string();
}

std::string config_sibling(const std::string& out_path) {
  fs::path p(out_path);
  p.replace_extension(".config.json");
  return p.string();
}

void write_resolved_config(const std::string& out_path, const nlohmann::json& cfg) {
  std::ofstream f(config_sibling(out_path));
  if (!f) throw std::invalid_argument("cannot write resolved config next to " + out_path);
  f << cfg.dump(2) << "\n";
}

nlohmann::json base_config(const std::string& subcommand, const GlobalFlags& g) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["seed"] = g.seed;
  j["out-dir"] = g.out_dir;
  j["threads"] = g.threads;
  return j;
}

void put_data_flags(nlohmann::json& j, const DataFlags& f) {
  j["dataset"] = f.dataset;
  j["classes"] = f.classes;
  j["dim"] = f.dim;
  j["per-class"] = f.per_class;
  j["spread"] = f.spread;
}

void put_corrupt_flags(nlohmann::json& j, const CorruptFlags& f) {
  j["corruption"] = f.corruption;
  j["severity"] = f.severity;
  if (!f.severity_table.empty()) j["severity-table"] = f.severity_table;
}

// Splices `--key=value` tokens from a config file after the subcommand
// token; options parse with take-last, so explicit flags win.
std::vector<std::string> merge_config_file(const std::vector<std::string>& args) {
  std::string config_path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw std::invalid_argument("--config needs a file path");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return rest;

  std::ifstream f(config_path);
  if (!f) throw std::invalid_argument("cannot open config file: " + config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed config " + config_path + ": " + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object of flag values");

  std::string subcommand;
  if (j.contains("subcommand")) subcommand = j["subcommand"].get<std::string>();
  if (!rest.empty() && rest.front().rfind("--", 0) != 0) {
    if (!subcommand.empty() && rest.front() != subcommand) {
      throw std::invalid_argument("config is for subcommand '" + subcommand + "', not '" +
                                  rest.front() + "'");
    }
    subcommand = rest.front();
    rest.erase(rest.begin());
  }
  if (subcommand.empty()) throw std::invalid_argument("config does not name a subcommand");

  std::vector<std::string> merged;
  merged.push_back(subcommand);
  for (const auto& [key, value] : j.items()) {
    if (key == "subcommand") continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) merged.push_back("--" + key);
    } else if (value.is_string()) {
      merged.push_back("--" + key + "=" + value.get<std::string>());
    } else {
      merged.push_back("--" + key + "=" + value.dump());
    }
  }
  merged.insert(merged.end(), rest.begin(), rest.end());
  return merged;
}

// ---------------------------------------------------------------------------
// Subcommand drivers
// ---------------------------------------------------------------------------

struct TrainArgs {
  DataFlags data;
  std::string hidden = "64,64,64";
  int epochs = 20;
  double lr = 0.02;
  double momentum = 0.9;
  Index batch_size = 128;
  bool bias = false;
  std::string out;
};

int run_train_source(const GlobalFlags& g, const TrainArgs& a) {
  SplitDataset split = make_split(a.data, g.seed);

  ModelSpec spec;
  spec.input_dim = split.train.dim();
  spec.hidden = parse_index_list(a.hidden);
  spec.classes = split.train.n_classes;
  spec.bias_enabled = a.bias;
  spec.seed = g.seed;

  Model model = Model::init(spec);
  model = train_source(std::move(model), split.train, a.epochs,
                       SgdConfig{a.lr, a.momentum, 0.0}, a.batch_size, g.seed);

  const std::string out = resolve_out(g, a.out);
  save_checkpoint(model, out);

  nlohmann::json cfg = base_config("train-source", g);
  put_data_flags(cfg, a.data);
  cfg["hidden"] = a.hidden;
  cfg["epochs"] = a.epochs;
  cfg["lr"] = a.lr;
  cfg["momentum"] = a.momentum;
  cfg["batch-size"] = a.batch_size;
  cfg["bias"] = a.bias;
  cfg["out"] = a.out;
  write_resolved_config(out, cfg);

  const double train_err = evaluate_frozen(model, split.train, StatsMode::EvalRunning);
  const double test_err = evaluate_frozen(model, split.test, StatsMode::EvalRunning);
  std::cout << "train-source: train_err=" << fmt_g9(train_err) << " test_err=" << fmt_g9(test_err)
            << " checkpoint=" << out << "\n";
  return 0;
}

struct AdaptArgs {
  std::string model;
  std::string loss = "comm";
  CorruptFlags corrupt;
  DataFlags data;
  Index batch_size = 128;
  double lr = 0.005;
  double momentum = 0.9;
  std::string params = "affine";
  std::string stats = "batch";
  bool entropy_trace = false;
  std::string report;
};

int run_adapt(const GlobalFlags& g, const AdaptArgs& a) {
  Model model = load_checkpoint(a.model);

  AdaptConfig cfg;
  cfg.loss = loss_kind_from_string(a.loss);
  cfg.selector = select_mode_from_string(a.params);
  cfg.sgd = SgdConfig{a.lr, a.momentum, 0.0};
  cfg.batch_size = a.batch_size;
  if (a.stats == "batch") cfg.stats = StatsMode::EvalBatch;
  else if (a.stats == "running") cfg.stats = StatsMode::EvalRunning;
  else throw std::invalid_argument("--stats must be batch or running");
  cfg.record_entropy_trace = a.entropy_trace;
  cfg.seed = g.seed;
  validate(cfg);

  SplitDataset split = make_split(a.data, g.seed);
  CorruptionSpec corruption{corruption_kind_from_string(a.corrupt.corruption), a.corrupt.severity,
                            g.seed};
  Dataset target = apply_corruption(split.test, corruption, load_table(a.corrupt));

  const Index min_batch = cfg.stats == StatsMode::EvalBatch ? 2 : 1;
  Stream stream = make_stream(target, cfg.batch_size, cfg.seed, min_batch);
  RunReport report = run_stream(model, stream, cfg);

  const std::string out = resolve_out(g, a.report);
  write_report_csv(report, out);

  nlohmann::json cfgj = base_config("adapt", g);
  cfgj["model"] = a.model;
  cfgj["loss"] = a.loss;
  put_corrupt_flags(cfgj, a.corrupt);
  put_data_flags(cfgj, a.data);
  cfgj["batch-size"] = a.batch_size;
  cfgj["lr"] = a.lr;
  cfgj["momentum"] = a.momentum;
  cfgj["params"] = a.params;
  cfgj["stats"] = a.stats;
  cfgj["entropy-trace"] = a.entropy_trace;
  cfgj["report"] = a.report;
  write_resolved_config(out, cfgj);

  std::cout << "adapt loss=" << a.loss << ": final_err="
            << (report.cumulative_top1_error ? fmt_g9(*report.cumulative_top1_error) : "nan")
            << " batches=" << report.per_batch.size() << " clamp_warnings="
            << report.clamp_warnings << " report=" << out << "\n";
  return 0;
}

struct SweepArgs {
  std::string model;
  std::string batch_sizes = "8,16,32,64,128";
  std::string losses = "em,comm";
  std::string seeds = "1..10";
  CorruptFlags corrupt;
  DataFlags data;
  double lr = 0.005;
  double momentum = 0.9;
  std::string params = "affine";
  std::string stats = "batch";
  std::string out;
  std::string svg;
};

int run_sweep(const GlobalFlags& g, const SweepArgs& a) {
  Model model = load_checkpoint(a.model);

  Benchmark bench;
  bench.dataset.n_classes = a.data.classes;
  bench.dataset.feature_dim = a.data.dim;
  bench.dataset.samples_per_class = a.data.per_class;
  bench.dataset.cluster_spread = a.data.spread;
  bench.dataset.seed = g.seed;
  bench.kind = corruption_kind_from_string(a.corrupt.corruption);
  bench.severity = a.corrupt.severity;
  bench.table = load_table(a.corrupt);
  if (a.data.dataset != "blobs") {
    throw std::invalid_argument("sweep: only blob benchmarks are supported");
  }

  AdaptConfig base;
  base.selector = select_mode_from_string(a.params);
  base.sgd = SgdConfig{a.lr, a.momentum, 0.0};
  if (a.stats == "batch") base.stats = StatsMode::EvalBatch;
  else if (a.stats == "running") base.stats = StatsMode::EvalRunning;
  else throw std::invalid_argument("--stats must be batch or running");

  std::vector<LossKind> losses;
  for (const std::string& tok : split_commas(a.losses)) losses.push_back(loss_kind_from_string(tok));

  std::vector<SweepCell> cells = batch_sweep(model, bench, parse_index_list(a.batch_sizes), losses,
                                             parse_seed_list(a.seeds), base, g.threads);

  const std::string out = resolve_out(g, a.out);
  write_sweep_csv(cells, out);
  if (!a.svg.empty()) write_sweep_svg(cells, resolve_out(g, a.svg));

  nlohmann::json cfgj = base_config("sweep", g);
  cfgj["model"] = a.model;
  cfgj["batch-sizes"] = a.batch_sizes;
  cfgj["losses"] = a.losses;
  cfgj["seeds"] = a.seeds;
  put_corrupt_flags(cfgj, a.corrupt);
  put_data_flags(cfgj, a.data);
  cfgj["lr"] = a.lr;
  cfgj["momentum"] = a.momentum;
  cfgj["params"] = a.params;
  cfgj["stats"] = a.stats;
  cfgj["out"] = a.out;
  if (!a.svg.empty()) cfgj["svg"] = a.svg;
  write_resolved_config(out, cfgj);

  long failed = 0;
  for (const SweepCell& c : cells) failed += c.failed ? 1 : 0;
  std::cout << "sweep: cells=" << cells.size() << " failed=" << failed << " out=" << out << "\n";
  return failed == 0 ? 0 : 2;
}

struct SimplexArgs {
  std::string loss;
  std::string init;
  double lr = 0.05;
  int steps = 300;
  std::string parametrization = "feature";
  std::string out;
  std::string svg;
};

int run_simplex(const GlobalFlags& g, const SimplexArgs& a) {
  const std::vector<double> p = parse_real_list(a.init);
  if (p.size() != 3) throw std::invalid_argument("--init needs exactly three probabilities");
  SimplexParam param;
  if (a.parametrization == "feature") param = SimplexParam::FeatureZ;
  else if (a.parametrization == "logits") param = SimplexParam::LogitsDirect;
  else throw std::invalid_argument("--parametrization must be feature or logits");

  SimplexTrace trace = simplex_trace(loss_kind_from_string(a.loss),
                                     Eigen::Vector3d(p[0], p[1], p[2]), a.lr, a.steps, param);

  const std::string out = resolve_out(g, a.out);
  write_trace_csv(trace, out);
  if (!a.svg.empty()) write_trace_svg(trace, resolve_out(g, a.svg));

  nlohmann::json cfgj = base_config("simplex", g);
  cfgj["loss"] = a.loss;
  cfgj["init"] = a.init;
  cfgj["lr"] = a.lr;
  cfgj["steps"] = a.steps;
  cfgj["parametrization"] = a.parametrization;
  cfgj["out"] = a.out;
  if (!a.svg.empty()) cfgj["svg"] = a.svg;
  write_resolved_config(out, cfgj);

  std::cout << "simplex loss=" << a.loss << ": rows=" << trace.steps.size()
            << " entropy " << fmt_g9(trace.steps.front().entropy) << " -> "
            << fmt_g9(trace.steps.back().entropy) << " out=" << out << "\n";
  return 0;
}

struct DiagnoseArgs {
  std::string model;
  CorruptFlags corrupt;
  DataFlags data;
  int bins = 20;
  std::string stats = "running";
  std::string out;
};

int run_diagnose(const GlobalFlags& g, const DiagnoseArgs& a) {
  Model model = load_checkpoint(a.model);
  SplitDataset split = make_split(a.data, g.seed);
  CorruptionSpec corruption{corruption_kind_from_string(a.corrupt.corruption), a.corrupt.severity,
                            g.seed};
  Dataset target = apply_corruption(split.test, corruption, load_table(a.corrupt));

  StatsMode stats;
  if (a.stats == "batch") stats = StatsMode::EvalBatch;
  else if (a.stats == "running") stats = StatsMode::EvalRunning;
  else throw std::invalid_argument("--stats must be batch or running");

  auto [h_entropy, h_cosine] = correctness_histograms(model, target, a.bins, stats);

  const std::string out = resolve_out(g, a.out);
  write_histograms_csv(h_entropy, h_cosine, out);

  nlohmann::json cfgj = base_config("diagnose", g);
  cfgj["model"] = a.model;
  put_corrupt_flags(cfgj, a.corrupt);
  put_data_flags(cfgj, a.data);
  cfgj["bins"] = a.bins;
  cfgj["stats"] = a.stats;
  cfgj["out"] = a.out;
  write_resolved_config(out, cfgj);

  long correct = 0, incorrect = 0;
  for (long c : h_entropy.count_correct) correct += c;
  for (long c : h_entropy.count_incorrect) incorrect += c;
  std::cout << "diagnose: samples=" << correct + incorrect << " correct=" << correct
            << " incorrect=" << incorrect << " out=" << out << "\n";
  return 0;
}

struct GenDataArgs {
  DataFlags data;
  std::string out;
};

int run_gen_data(const GlobalFlags& g, const GenDataArgs& a) {
  DatasetSpec spec;
  spec.n_classes = a.data.classes;
  spec.feature_dim = a.data.dim;
  spec.samples_per_class = a.data.per_class;
  spec.cluster_spread = a.data.spread;
  spec.seed = g.seed;
  SplitDataset split = gen_blobs(spec);

  // Emit train rows then test rows; the split is reproducible from the seed.
  RowMatrix x(split.train.size() + split.test.size(), split.train.dim());
  std::vector<int> y;
  y.reserve(static_cast<size_t>(x.rows()));
  x.topRows(split.train.size()) = split.train.x.mat();
  x.bottomRows(split.test.size()) = split.test.x.mat();
  y.insert(y.end(), split.train.y.begin(), split.train.y.end());
  y.insert(y.end(), split.test.y.begin(), split.test.y.end());
  Dataset all{Tensor::from_matrix(x), std::move(y), spec.n_classes};

  const std::string out = resolve_out(g, a.out);
  save_csv_dataset(all, out);

  nlohmann::json cfgj = base_config("gen-data", g);
  put_data_flags(cfgj, a.data);
  cfgj["out"] = a.out;
  write_resolved_config(out, cfgj);

  std::cout << "gen-data: samples=" << all.size() << " classes=" << all.n_classes
            << " dim=" << all.dim() << " out=" << out << "\n";
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  try {
    const std::vector<std::string> merged = merge_config_file(args);

    CLI::App app{"Desk-scale online test-time adaptation laboratory"};
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    GlobalFlags g;
    app.add_option("--seed", g.seed, "master seed");
    app.add_option("--out-dir", g.out_dir, "directory for relative output paths");
    app.add_option("--threads", g.threads, "sweep parallelism")->check(CLI::PositiveNumber);

    TrainArgs train;
    CLI::App* cmd_train = app.add_subcommand("train-source", "train a source model");
    add_data_flags(cmd_train, train.data);
    cmd_train->add_option("--hidden", train.hidden, "hidden widths, comma separated");
    cmd_train->add_option("--epochs", train.epochs)->check(CLI::NonNegativeNumber);
    cmd_train->add_option("--lr", train.lr);
    cmd_train->add_option("--momentum", train.momentum);
    cmd_train->add_option("--batch-size", train.batch_size);
    cmd_train->add_flag("--bias", train.bias, "enable the classifier bias");
    cmd_train->add_option("--out", train.out, "checkpoint path")->required();

    AdaptArgs adapt;
    CLI::App* cmd_adapt = app.add_subcommand("adapt", "online adaptation over one stream");
    cmd_adapt->add_option("--model", adapt.model, "source checkpoint")->required();
    cmd_adapt->add_option("--loss", adapt.loss, "em|pl|com|comm|none");
    add_corrupt_flags(cmd_adapt, adapt.corrupt);
    add_data_flags(cmd_adapt, adapt.data);
    cmd_adapt->add_option("--batch-size", adapt.batch_size);
    cmd_adapt->add_option("--lr", adapt.lr);
    cmd_adapt->add_option("--momentum", adapt.momentum);
    cmd_adapt->add_option("--params", adapt.params, "affine|feat|all");
    cmd_adapt->add_option("--stats", adapt.stats, "batch|running");
    cmd_adapt->add_flag("--entropy-trace", adapt.entropy_trace, "record per-batch mean entropy");
    cmd_adapt->add_option("--report", adapt.report, "run report CSV path")->required();

    SweepArgs sweep;
    CLI::App* cmd_sweep = app.add_subcommand("sweep", "batch-size sweep over losses and seeds");
    cmd_sweep->add_option("--model", sweep.model, "source checkpoint")->required();
    cmd_sweep->add_option("--batch-sizes", sweep.batch_sizes);
    cmd_sweep->add_option("--losses", sweep.losses);
    cmd_sweep->add_option("--seeds", sweep.seeds, "e.g. 1..10 or 1,4,9");
    add_corrupt_flags(cmd_sweep, sweep.corrupt);
    add_data_flags(cmd_sweep, sweep.data);
    cmd_sweep->add_option("--lr", sweep.lr);
    cmd_sweep->add_option("--momentum", sweep.momentum);
    cmd_sweep->add_option("--params", sweep.params, "affine|feat|all");
    cmd_sweep->add_option("--stats", sweep.stats, "batch|running");
    cmd_sweep->add_option("--out", sweep.out, "sweep CSV path")->required();
    cmd_sweep->add_option("--svg", sweep.svg, "optional line-chart SVG path");

    SimplexArgs simplex;
    CLI::App* cmd_simplex = app.add_subcommand("simplex", "toy three-class loss trajectory");
    cmd_simplex->add_option("--loss", simplex.loss, "em|pl|com|comm")->required();
    cmd_simplex->add_option("--init", simplex.init, "p0,p1,p2 on the simplex interior")->required();
    cmd_simplex->add_option("--lr", simplex.lr);
    cmd_simplex->add_option("--steps", simplex.steps)->check(CLI::PositiveNumber);
    cmd_simplex->add_option("--parametrization", simplex.parametrization, "feature|logits");
    cmd_simplex->add_option("--out", simplex.out, "trace CSV path")->required();
    cmd_simplex->add_option("--svg", simplex.svg, "optional ternary-plot SVG path");

    DiagnoseArgs diagnose;
    CLI::App* cmd_diagnose = app.add_subcommand("diagnose", "correctness histograms");
    cmd_diagnose->add_option("--model", diagnose.model, "source checkpoint")->required();
    add_corrupt_flags(cmd_diagnose, diagnose.corrupt);
    add_data_flags(cmd_diagnose, diagnose.data);
    cmd_diagnose->add_option("--bins", diagnose.bins)->check(CLI::PositiveNumber);
    cmd_diagnose->add_option("--stats", diagnose.stats, "batch|running");
    cmd_diagnose->add_option("--out", diagnose.out, "histogram CSV path")->required();

    GenDataArgs gen;
    CLI::App* cmd_gen = app.add_subcommand("gen-data", "write a synthetic blob dataset CSV");
    add_data_flags(cmd_gen, gen.data);
    cmd_gen->add_option("--out", gen.out, "dataset CSV path")->required();

    try {
      std::vector<std::string> reversed(merged.rbegin(), merged.rend());
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 1;
    }

    if (cmd_train->parsed()) return run_train_source(g, train);
    if (cmd_adapt->parsed()) return run_adapt(g, adapt);
    if (cmd_sweep->parsed()) return run_sweep(g, sweep);
    if (cmd_simplex->parsed()) return run_simplex(g, simplex);
    if (cmd_diagnose->parsed()) return run_diagnose(g, diagnose);
    if (cmd_gen->parsed()) return run_gen_data(g, gen);
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace otta
