#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "redus/data.hpp"
#include "redus/errors.hpp"
#include "redus/federated.hpp"
#include "redus/nn.hpp"
#include "redus/report_io.hpp"
#include "redus/resampler.hpp"
#include "redus/trainer.hpp"

namespace redus::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataOptions {
  std::string path;
  std::string label_column = "label";
  bool no_header = false;
  bool synth = false;
  std::size_t n = 2000;
  std::size_t d = 10;
  std::size_t classes = 3;
  double separation = 6.0;
  double train_frac = 336.0 / 441.0;
};

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double theta = 0.0;
  std::uint64_t seed = 42;
  std::string mode = "redus";
  std::string layers = "256,512,256,128";
  double dropout = 0.2;
  std::string out = "redus-out";
  std::size_t jobs = 1;
};

struct FedOptions {
  std::size_t clients = 5;
  std::size_t rounds = 50;
  std::string reset_weights = "true";
};

struct SweepOptions {
  std::size_t steps = 10;
  std::size_t repeats = 5;
};

struct SynthOptions {
  std::size_t n = 2000;
  std::size_t d = 10;
  std::size_t classes = 3;
  double separation = 6.0;
  std::uint64_t seed = 42;
  std::string out;
};

struct ReportOptions {
  std::vector<std::string> inputs;
  std::string out;
};

struct Prepared {
  data::Dataset train;
  data::Dataset test;
  json inputs = json::array();
  std::string dataset_digest;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool is_dataset_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  in.read(magic, sizeof magic);
  return in && std::string(magic, 8) == "REDUSDS1";
}

Prepared prepare_data(const DataOptions& opt, std::uint64_t seed) {
  Prepared p;
  data::Dataset full;
  if (opt.synth) {
    RngStream rng(seed, "synth");
    full = data::synth_generate(opt.n, opt.d, opt.classes, opt.separation, rng);
    std::ostringstream key;
    key << "synth:n=" << opt.n << ",d=" << opt.d << ",classes=" << opt.classes
        << ",separation=" << io::fmt6(opt.separation) << ",seed=" << seed;
    p.dataset_digest = hex64(fnv1a64(key.str()));
  } else {
    if (opt.path.empty()) throw ConfigError("no dataset given; pass --data PATH or --synth");
    if (!fs::exists(opt.path)) throw ConfigError("dataset not found: " + opt.path);
    p.dataset_digest = data::file_digest(opt.path);
    p.inputs.push_back({{"path", opt.path}, {"digest", p.dataset_digest}});
    if (is_dataset_cache(opt.path)) {
      full = data::read_binary(opt.path);
    } else {
      auto raw = data::load_csv(opt.path, {opt.label_column, !opt.no_header});
      for (const auto& w : raw.warnings) std::cerr << "warning: " << w << '\n';
      if (raw.dropped_rows > 0) {
        std::cerr << "warning: dropped " << raw.dropped_rows << " row(s) from " << opt.path << '\n';
      }
      full = data::encode(raw).dataset;
    }
  }
  RngStream split_rng(seed, "split");
  auto parts = data::split(full, opt.train_frac, 1.0 - opt.train_frac, split_rng);
  for (const auto& w : parts.warnings) std::cerr << "warning: " << w << '\n';
  auto [train_norm, stats] = data::fit_normalize(parts.train);
  p.train = std::move(train_norm);
  p.test = data::apply_normalize(parts.test, stats);
  return p;
}

std::vector<std::size_t> parse_layers(const std::string& text) {
  std::vector<std::size_t> widths;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v <= 0) throw ConfigError("bad layer width '" + item + "'");
    widths.push_back(static_cast<std::size_t>(v));
  }
  return widths;
}

train::TrainConfig train_config(const TrainOptions& opt) {
  train::TrainConfig cfg;
  cfg.epochs = opt.epochs;
  cfg.batch_size = opt.batch_size;
  cfg.learning_rate = opt.lr;
  cfg.theta = opt.theta;
  cfg.seed = opt.seed;
  cfg.mode = train::parse_mode(opt.mode);
  return cfg;
}

std::vector<nn::LayerSpec> layer_specs(const TrainOptions& opt, const data::Dataset& d) {
  const auto hidden = parse_layers(opt.layers);
  auto specs = nn::make_layer_specs(d.feature_count, hidden, d.class_count, opt.dropout);
  nn::validate_specs(specs);
  return specs;
}

json data_json(const DataOptions& o) {
  return {{"data", o.path},       {"label_column", o.label_column}, {"header", !o.no_header},
          {"synth", o.synth},     {"n", o.n},                       {"d", o.d},
          {"classes", o.classes}, {"separation", io::round6(o.separation)},
          {"train_frac", io::round6(o.train_frac)}};
}

json train_json(const TrainOptions& o) {
  return {{"epochs", o.epochs},   {"batch_size", o.batch_size}, {"lr", io::round6(o.lr)},
          {"theta", o.theta},     {"seed", o.seed},             {"mode", o.mode},
          {"layers", o.layers},   {"dropout", io::round6(o.dropout)}};
}

void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                    json config, const Prepared& prepared) {
  json m{{"artifact", "redus"},
         {"version", kVersion},
         {"command", command},
         {"seed", seed},
         {"config", std::move(config)},
         {"inputs", prepared.inputs},
         {"dataset_digest", prepared.dataset_digest}};
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

fs::path ensure_dir(const std::string& path) {
  fs::path dir(path);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + path + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------------------

int cmd_train(const DataOptions& dopt, const TrainOptions& topt) {
  const auto cfg = train_config(topt);
  auto prepared = prepare_data(dopt, topt.seed);
  const auto specs = layer_specs(topt, prepared.train);

  RngStream init(topt.seed, "init");
  auto result = train::train(nn::init_model(specs, init), prepared.train, cfg);
  result.report.test = train::evaluate(result.model, prepared.test);

  const auto dir = ensure_dir(topt.out);
  {
    auto out = open_out(dir / "epochs.jsonl");
    io::write_epochs_jsonl(out, result.report);
  }
  {
    auto out = open_out(dir / "epochs.csv");
    io::write_epochs_csv(out, result.report);
  }
  {
    auto out = open_out(dir / "summary.json");
    io::write_summary_json(out, result.report);
  }
  {
    train::SweepRow row;
    row.theta = cfg.mode == train::TrainMode::vanilla ? 0.0 : cfg.theta;
    row.acc_pct = 100.0 * result.report.test->accuracy;
    row.loss = result.report.test->mean_loss;
    row.mean_backprops = static_cast<double>(result.report.total_backprops);
    row.avg_time_s = result.report.total_wall_time_s;
    row.avg_epoch_time_s = result.report.total_wall_time_s / static_cast<double>(cfg.epochs);
    auto out = open_out(dir / "table.csv");
    io::write_sweep_detail_csv(out, {row});
  }
  write_manifest(dir, "train", topt.seed, {{"data", data_json(dopt)}, {"train", train_json(topt)}},
                 prepared);

  std::cout << "test_accuracy " << io::fmt6(result.report.test->accuracy) << '\n'
            << "test_loss " << io::fmt6(result.report.test->mean_loss) << '\n'
            << "total_backprops " << result.report.total_backprops << '\n'
            << "train_time_s " << io::fmt6(result.report.total_wall_time_s) << '\n';
  return kExitOk;
}

int cmd_fed(const DataOptions& dopt, const TrainOptions& topt, const FedOptions& fopt) {
  if (fopt.clients == 0) throw ConfigError("--clients must be >= 1");
  if (fopt.rounds == 0) throw ConfigError("--rounds must be >= 1");
  bool reset = true;
  if (fopt.reset_weights == "true") {
    reset = true;
  } else if (fopt.reset_weights == "false") {
    reset = false;
  } else {
    throw ConfigError("--reset-weights expects true or false");
  }

  auto prepared = prepare_data(dopt, topt.seed);
  fed::FederatedConfig cfg;
  cfg.clients = fopt.clients;
  cfg.rounds = fopt.rounds;
  cfg.local = train_config(topt);
  cfg.layers = layer_specs(topt, prepared.train);
  cfg.reset_weights = reset;
  cfg.jobs = topt.jobs;

  const auto run = fed::run_rounds(prepared.train, prepared.test, cfg);

  const auto dir = ensure_dir(topt.out);
  {
    auto out = open_out(dir / "rounds.jsonl");
    io::write_rounds_jsonl(out, run);
  }
  const auto& last = run.rounds.back();
  std::size_t backprops = 0;
  double client_time = 0.0;
  for (const auto& r : run.rounds) {
    client_time += r.client_wall_time_sum_s;
    for (const auto& c : r.per_client) backprops += c.backprops;
  }
  {
    json summary{{"rounds", run.rounds.size()},
                 {"clients", cfg.clients},
                 {"final_global_acc", io::round6(last.global_accuracy)},
                 {"final_global_loss", io::round6(last.global_loss)},
                 {"total_backprops", backprops},
                 {"total_client_time_s", io::round6(client_time)},
                 {"mean_round_time_s", io::round6(client_time / static_cast<double>(run.rounds.size()))}};
    auto out = open_out(dir / "summary.json");
    out << summary.dump(2) << '\n';
  }
  json fed_cfg{{"clients", fopt.clients}, {"rounds", fopt.rounds}, {"reset_weights", reset}};
  write_manifest(dir, "fed", topt.seed,
                 {{"data", data_json(dopt)}, {"train", train_json(topt)}, {"fed", fed_cfg}}, prepared);

  std::cout << "test_accuracy " << io::fmt6(last.global_accuracy) << '\n'
            << "test_loss " << io::fmt6(last.global_loss) << '\n'
            << "total_backprops " << backprops << '\n'
            << "train_time_s " << io::fmt6(client_time) << '\n';
  return kExitOk;
}

int cmd_sweep(const DataOptions& dopt, const TrainOptions& topt, const SweepOptions& sopt) {
  if (sopt.repeats == 0) throw ConfigError("--repeats must be >= 1");
  const auto cfg = train_config(topt);
  auto prepared = prepare_data(dopt, topt.seed);
  const auto specs = layer_specs(topt, prepared.train);
  const auto grid = resample::threshold_grid(prepared.train.size(), sopt.steps);

  const auto table = train::sweep_thresholds(prepared.train, prepared.test, grid, specs, cfg,
                                             sopt.repeats, topt.jobs);

  const auto dir = ensure_dir(topt.out);
  {
    auto out = open_out(dir / "table.csv");
    io::write_table_csv(out, table.rows);
  }
  {
    auto out = open_out(dir / "table_detail.csv");
    io::write_sweep_detail_csv(out, table.rows);
  }
  {
    auto out = open_out(dir / "cells.jsonl");
    io::write_sweep_cells_jsonl(out, table.cells);
  }
  json sweep_cfg{{"steps", sopt.steps}, {"repeats", sopt.repeats}};
  write_manifest(dir, "sweep", topt.seed,
                 {{"data", data_json(dopt)}, {"train", train_json(topt)}, {"sweep", sweep_cfg}},
                 prepared);

  std::cout << io::render_table(table.rows, true);
  return kExitOk;
}

int cmd_synth(const SynthOptions& opt) {
  if (opt.classes == 0) throw ConfigError("--classes must be >= 1");
  if (opt.d == 0) throw ConfigError("--d must be >= 1");
  if (opt.n < opt.classes) throw ConfigError("--n must be at least --classes");
  if (opt.out.empty()) throw ConfigError("--out is required");
  RngStream rng(opt.seed, "synth");
  const auto ds = data::synth_generate(opt.n, opt.d, opt.classes, opt.separation, rng);
  data::write_csv(opt.out, ds);
  std::cout << "rows " << ds.rows << '\n' << "features " << ds.feature_count << '\n'
            << "classes " << ds.class_count << '\n';
  return kExitOk;
}

struct ReportInput {
  fs::path table;
  std::optional<json> manifest;
};

ReportInput resolve_report_input(const std::string& arg) {
  fs::path p(arg);
  ReportInput in;
  fs::path dir;
  if (fs::is_directory(p)) {
    dir = p;
    in.table = fs::exists(p / "table_detail.csv") ? p / "table_detail.csv" : p / "table.csv";
  } else {
    dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    in.table = p;
  }
  if (!fs::exists(in.table)) throw ConfigError("no table found at " + arg);
  if (fs::exists(dir / "manifest.json")) {
    std::ifstream m(dir / "manifest.json");
    in.manifest = json::parse(m, nullptr, false);
    if (in.manifest->is_discarded()) throw DataError("unreadable manifest in " + dir.string());
  }
  return in;
}

int cmd_report(const ReportOptions& opt) {
  if (opt.inputs.empty()) throw ConfigError("report needs at least one input");
  std::optional<std::string> digest;
  std::vector<double> order;
  std::map<double, std::vector<train::SweepRow>> groups;
  for (const auto& arg : opt.inputs) {
    const auto in = resolve_report_input(arg);
    if (in.manifest && in.manifest->contains("dataset_digest")) {
      const auto d = (*in.manifest)["dataset_digest"].get<std::string>();
      if (digest && *digest != d) {
        throw ConfigError("inputs were produced from different datasets (" + *digest + " vs " + d + ")");
      }
      digest = d;
    } else {
      std::cerr << "warning: " << arg << " has no manifest; dataset compatibility unchecked\n";
    }
    for (const auto& row : io::read_table_csv(in.table.string())) {
      if (!groups.count(row.theta)) order.push_back(row.theta);
      groups[row.theta].push_back(row);
    }
  }
  std::sort(order.begin(), order.end());

  std::vector<train::SweepRow> merged;
  for (double theta : order) {
    const auto& rows = groups[theta];
    const double k = static_cast<double>(rows.size());
    train::SweepRow m;
    m.theta = theta;
    for (const auto& r : rows) {
      m.acc_pct += r.acc_pct / k;
      m.loss += r.loss / k;
      m.avg_time_s += r.avg_time_s / k;
      m.mean_backprops += r.mean_backprops / k;
      m.avg_epoch_time_s += r.avg_epoch_time_s / k;
    }
    merged.push_back(m);
  }
  const bool with_reductions =
      merged.size() > 1 &&
      std::any_of(merged.begin(), merged.end(), [](const train::SweepRow& r) { return r.theta == 0.0; });
  train::recompute_reductions(merged);

  std::cout << io::render_table(merged, with_reductions);
  if (!opt.out.empty()) {
    const auto dir = ensure_dir(opt.out);
    {
      auto out = open_out(dir / "report_table.csv");
      io::write_table_csv(out, merged);
    }
    auto out = open_out(dir / "plot.csv");
    io::write_plot_csv(out, merged);
  }
  return kExitOk;
}

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--data", o.path, "CSV file or dataset cache");
  cmd->add_option("--label-column", o.label_column, "Name of the label column")->capture_default_str();
  cmd->add_flag("--no-header", o.no_header, "CSV has no header row; label is the last column");
  cmd->add_flag("--synth", o.synth, "Use a generated Gaussian-cluster dataset");
  cmd->add_option("--n", o.n, "Synthetic rows")->capture_default_str();
  cmd->add_option("--d", o.d, "Synthetic features")->capture_default_str();
  cmd->add_option("--classes", o.classes, "Synthetic classes")->capture_default_str();
  cmd->add_option("--separation", o.separation, "Distance between class means")->capture_default_str();
  cmd->add_option("--train-frac", o.train_frac, "Training fraction of the split")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
}

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--theta", o.theta, "Exclusion threshold")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--epochs", o.epochs, "Epochs (local epochs for fed)")->capture_default_str();
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", o.lr, "SGD learning rate")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Master seed")->capture_default_str();
  cmd->add_option("--mode", o.mode, "vanilla or redus")
      ->capture_default_str()
      ->check(CLI::IsMember({"vanilla", "redus"}));
  cmd->add_option("--layers", o.layers, "Hidden layer widths, comma separated")->capture_default_str();
  cmd->add_option("--dropout", o.dropout, "Hidden-layer dropout rate")->capture_default_str();
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--jobs", o.jobs, "Worker threads for independent runs")->capture_default_str();
}

std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    std::size_t consumed = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      consumed = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      consumed = 1;
    } else {
      continue;
    }
    auto tokens = config_tokens(path);
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
               args.begin() + static_cast<std::ptrdiff_t>(i + consumed));
    // Config values go right after the subcommand so explicit flags win.
    const std::size_t at = args.size() > 1 ? 2 : 1;
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(std::min(at, args.size())), tokens.begin(),
                tokens.end());
    break;
  }
  return args;
}

}  // namespace

std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::vector<std::string> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    tokens.push_back("--" + strip(line.substr(0, eq)) + "=" + strip(line.substr(eq + 1)));
  }
  return tokens;
}

int run(std::vector<std::string> args) {
  CLI::App app{"Adaptive-resampling training engine and federated simulator", "redus"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--config", "Flat key=value file; explicit flags override it");

  DataOptions data_opt;
  TrainOptions train_opt;
  FedOptions fed_opt;
  SweepOptions sweep_opt;
  SynthOptions synth_opt;
  ReportOptions report_opt;

  auto* train_cmd = app.add_subcommand("train", "Centralized training");
  add_data_options(train_cmd, data_opt);
  add_train_options(train_cmd, train_opt);

  auto* fed_cmd = app.add_subcommand("fed", "Federated simulation with FedAvg");
  add_data_options(fed_cmd, data_opt);
  add_train_options(fed_cmd, train_opt);
  fed_cmd->add_option("--clients", fed_opt.clients, "Number of clients K")->capture_default_str();
  fed_cmd->add_option("--rounds", fed_opt.rounds, "Communication rounds R")->capture_default_str();
  fed_cmd->add_option("--reset-weights", fed_opt.reset_weights,
                      "Restart sample weights each round (true/false)")
      ->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "Threshold sweep against the vanilla baseline");
  add_data_options(sweep_cmd, data_opt);
  add_train_options(sweep_cmd, train_opt);
  sweep_cmd->add_option("--steps", sweep_opt.steps, "Grid points from 0 to (2/3)/n")->capture_default_str();
  sweep_cmd->add_option("--repeats", sweep_opt.repeats, "Seeded runs per threshold")->capture_default_str();

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic Gaussian-cluster CSV");
  synth_cmd->add_option("--n", synth_opt.n, "Rows")->capture_default_str();
  synth_cmd->add_option("--d", synth_opt.d, "Features")->capture_default_str();
  synth_cmd->add_option("--classes", synth_opt.classes, "Classes")->capture_default_str();
  synth_cmd->add_option("--separation", synth_opt.separation, "Distance between class means")->capture_default_str();
  synth_cmd->add_option("--seed", synth_opt.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_opt.out, "Output CSV path")->required();

  auto* report_cmd = app.add_subcommand("report", "Merge tables and recompute reductions");
  report_cmd->add_option("inputs", report_opt.inputs, "Output directories or table CSVs")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  report_cmd->add_option("--out", report_opt.out, "Directory for report_table.csv and plot.csv");

  try {
    args = expand_config(std::move(args));
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(data_opt, train_opt);
    if (*fed_cmd) return cmd_fed(data_opt, train_opt, fed_opt);
    if (*sweep_cmd) return cmd_sweep(data_opt, train_opt, sweep_opt);
    if (*synth_cmd) return cmd_synth(synth_opt);
    if (*report_cmd) return cmd_report(report_opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitConfig;
}

}  // namespace redus::cli
