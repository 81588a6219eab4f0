#include "redus/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "redus/errors.hpp"

namespace redus::io {

using nlohmann::json;

std::string fmt6(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

double round6(double value) { return std::strtod(fmt6(value).c_str(), nullptr); }

namespace {

json num(double v) { return std::isfinite(v) ? json(round6(v)) : json(nullptr); }

json num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

std::string opt6(const std::optional<double>& v) { return v ? fmt6(*v) : "N/A"; }

json config_json(const train::TrainConfig& cfg) {
  return json{{"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"learning_rate", num(cfg.learning_rate)},
              {"theta", num(cfg.theta)},
              {"seed", cfg.seed},
              {"mode", train::to_string(cfg.mode)}};
}

}  // namespace

void write_epochs_jsonl(std::ostream& out, const train::TrainingReport& report) {
  for (const auto& e : report.epochs) {
    json j{{"epoch", e.epoch},
           {"included_samples", e.included_samples},
           {"backprop_count", e.backprop_count},
           {"train_loss", num(e.train_loss)},
           {"train_accuracy", num(e.train_accuracy)},
           {"epsilon", num(e.epsilon)},
           {"alpha", num(e.alpha)},
           {"fallback_used", e.fallback_used},
           {"wall_time_s", num(e.wall_time_s)}};
    out << j.dump() << '\n';
  }
}

void write_epochs_csv(std::ostream& out, const train::TrainingReport& report) {
  out << "epoch,included_samples,backprop_count,train_loss,train_accuracy,epsilon,alpha,"
         "fallback_used,wall_time_s\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << e.included_samples << ',' << e.backprop_count << ','
        << fmt6(e.train_loss) << ',' << fmt6(e.train_accuracy) << ','
        << (e.epsilon ? fmt6(*e.epsilon) : "") << ',' << (e.alpha ? fmt6(*e.alpha) : "") << ','
        << (e.fallback_used ? 1 : 0) << ',' << fmt6(e.wall_time_s) << '\n';
  }
}

void write_summary_json(std::ostream& out, const train::TrainingReport& report) {
  json j{{"config", config_json(report.config)},
         {"sample_count", report.sample_count},
         {"epochs_run", report.epochs.size()},
         {"total_backprops", report.total_backprops},
         {"total_wall_time_s", num(report.total_wall_time_s)}};
  if (report.test) {
    j["test_accuracy"] = num(report.test->accuracy);
    j["test_loss"] = num(report.test->mean_loss);
  }
  out << j.dump(2) << '\n';
}

void write_table_csv(std::ostream& out, const std::vector<train::SweepRow>& rows) {
  out << "threshold,acc_pct,loss,avg_time_s,time_red_pct,acc_red_pct\n";
  for (const auto& r : rows) {
    out << fmt6(r.theta) << ',' << fmt6(r.acc_pct) << ',' << fmt6(r.loss) << ','
        << fmt6(r.avg_time_s) << ',' << opt6(r.time_red_pct) << ',' << opt6(r.acc_red_pct) << '\n';
  }
}

void write_sweep_detail_csv(std::ostream& out, const std::vector<train::SweepRow>& rows) {
  out << "threshold,acc_pct,loss,avg_time_s,time_red_pct,acc_red_pct,mean_backprops,"
         "backprop_red_pct,avg_epoch_time_s\n";
  for (const auto& r : rows) {
    out << fmt6(r.theta) << ',' << fmt6(r.acc_pct) << ',' << fmt6(r.loss) << ','
        << fmt6(r.avg_time_s) << ',' << opt6(r.time_red_pct) << ',' << opt6(r.acc_red_pct) << ','
        << fmt6(r.mean_backprops) << ',' << opt6(r.backprop_red_pct) << ','
        << fmt6(r.avg_epoch_time_s) << '\n';
  }
}

void write_sweep_cells_jsonl(std::ostream& out, const std::vector<train::SweepCell>& cells) {
  for (const auto& c : cells) {
    json j{{"theta", num(c.theta)},
           {"repeat", c.repeat},
           {"seed", c.seed},
           {"test_accuracy", num(c.test.accuracy)},
           {"test_loss", num(c.test.mean_loss)},
           {"total_backprops", c.total_backprops},
           {"fallback_epochs", c.fallback_epochs},
           {"included_per_epoch", c.included_per_epoch},
           {"wall_time_s", num(c.wall_time_s)},
           {"mean_epoch_time_s", num(c.mean_epoch_time_s)}};
    out << j.dump() << '\n';
  }
}

void write_rounds_jsonl(std::ostream& out, const fed::FederatedRun& run) {
  for (const auto& r : run.rounds) {
    json clients = json::array();
    for (const auto& c : r.per_client) {
      clients.push_back({{"client_id", c.client_id},
                         {"included_samples_per_epoch", c.included_samples_per_epoch},
                         {"backprops", c.backprops},
                         {"wall_time", num(c.wall_time_s)}});
    }
    json j{{"round", r.round},
           {"global_acc", num(r.global_accuracy)},
           {"global_loss", num(r.global_loss)},
           {"round_time_s", num(r.client_wall_time_sum_s)},
           {"per_client", clients}};
    out << j.dump() << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_opt(const std::string& text, const std::string& path) {
  if (text == "N/A" || text.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') throw DataError(path + ": bad number '" + text + "'");
  return v;
}

}  // namespace

std::vector<train::SweepRow> read_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty table");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int c_theta = column("threshold"), c_acc = column("acc_pct"), c_loss = column("loss"),
            c_time = column("avg_time_s"), c_bp = column("mean_backprops"),
            c_epoch = column("avg_epoch_time_s"), c_time_red = column("time_red_pct"),
            c_acc_red = column("acc_red_pct"), c_bp_red = column("backprop_red_pct");
  if (c_theta < 0 || c_acc < 0 || c_loss < 0 || c_time < 0) {
    throw DataError(path + ": not a threshold table");
  }
  std::vector<train::SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw DataError(path + ": ragged row");
    auto get = [&](int c) { return c < 0 ? std::optional<double>{} : parse_opt(cells[c], path); };
    train::SweepRow r;
    r.theta = get(c_theta).value_or(0.0);
    r.acc_pct = get(c_acc).value_or(0.0);
    r.loss = get(c_loss).value_or(0.0);
    r.avg_time_s = get(c_time).value_or(0.0);
    r.mean_backprops = get(c_bp).value_or(0.0);
    r.avg_epoch_time_s = get(c_epoch).value_or(0.0);
    r.time_red_pct = get(c_time_red);
    r.acc_red_pct = get(c_acc_red);
    r.backprop_red_pct = get(c_bp_red);
    rows.push_back(r);
  }
  return rows;
}

std::string render_table(const std::vector<train::SweepRow>& rows, bool with_reductions) {
  std::ostringstream out;
  auto cell = [&](const std::string& s, int w) { out << std::setw(w) << s; };
  cell("threshold", 12);
  cell("acc_pct", 10);
  cell("loss", 10);
  cell("avg_time_s", 12);
  if (with_reductions) {
    cell("time_red_pct", 14);
    cell("acc_red_pct", 13);
  }
  out << '\n';
  for (const auto& r : rows) {
    cell(fmt6(r.theta), 12);
    cell(fmt6(r.acc_pct), 10);
    cell(fmt6(r.loss), 10);
    cell(fmt6(r.avg_time_s), 12);
    if (with_reductions) {
      cell(opt6(r.time_red_pct), 14);
      cell(opt6(r.acc_red_pct), 13);
    }
    out << '\n';
  }
  return out.str();
}

void write_plot_csv(std::ostream& out, const std::vector<train::SweepRow>& rows) {
  out << "threshold,acc_pct,avg_time_s\n";
  for (const auto& r : rows) {
    out << fmt6(r.theta) << ',' << fmt6(r.acc_pct) << ',' << fmt6(r.avg_time_s) << '\n';
  }
}

}  // namespace redus::io
