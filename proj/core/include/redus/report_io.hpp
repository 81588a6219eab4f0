#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "redus/federated.hpp"
#include "redus/trainer.hpp"

namespace redus::io {

/// Decimal text with 6 significant digits.
std::string fmt6(double value);

/// value rounded to 6 significant digits (JSON emitters print the shortest
/// round-trip form of this).
double round6(double value);

// Every wall-clock field carries "time" in its key or column name, so
// comparisons between runs can drop those fields by name.

/// One JSON object per epoch.
void write_epochs_jsonl(std::ostream& out, const train::TrainingReport& report);
void write_epochs_csv(std::ostream& out, const train::TrainingReport& report);

/// Single JSON object: config echo, totals, final test metrics.
void write_summary_json(std::ostream& out, const train::TrainingReport& report);

/// Columns: threshold,acc_pct,loss,avg_time_s,time_red_pct,acc_red_pct.
/// Reductions print as N/A when absent.
void write_table_csv(std::ostream& out, const std::vector<train::SweepRow>& rows);

/// Table columns plus mean_backprops, backprop_red_pct, avg_epoch_time_s.
void write_sweep_detail_csv(std::ostream& out, const std::vector<train::SweepRow>& rows);

/// One JSON object per (theta, repeat) cell.
void write_sweep_cells_jsonl(std::ostream& out, const std::vector<train::SweepCell>& cells);

/// One JSON object per round:
/// {round, global_acc, global_loss, round_time_s, per_client: [{client_id,
///  included_samples_per_epoch, backprops, wall_time}]}
void write_rounds_jsonl(std::ostream& out, const fed::FederatedRun& run);

/// Parses a table written by write_table_csv or write_sweep_detail_csv.
std::vector<train::SweepRow> read_table_csv(const std::string& path);

/// Aligned plain-text rendering, one line per row.
std::string render_table(const std::vector<train::SweepRow>& rows, bool with_reductions);

/// Plot-ready series: threshold,acc_pct,avg_time_s.
void write_plot_csv(std::ostream& out, const std::vector<train::SweepRow>& rows);

}  // namespace redus::io
