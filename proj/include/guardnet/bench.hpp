#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "guardnet/dataset.hpp"
#include "guardnet/metrics.hpp"
#include "guardnet/serve.hpp"

namespace guardnet {

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t samples = 0;
};

// Nearest-rank percentile (q in (0, 100]) of unsorted values.
double nearest_rank(std::vector<double> values, double q);
LatencyStats summarize_latency(const std::vector<double>& timings_ms);

/// Times end-to-end classify() per sample on one thread; warmup passes over
/// the dataset are discarded, then each sample is timed `reps` times.
LatencyStats latency_bench(const FrozenModel& model, const Dataset& ds, int warmup, int reps,
                           const SegmentPolicy& policy = {});

struct EvalReport {
  std::string model;
  std::string dataset;
  Confusion confusion;
  Metrics metrics;
  LatencyStats latency;
};

EvalReport evaluate(const FrozenModel& model, const Dataset& ds, std::string model_name,
                    const SegmentPolicy& policy = {}, const LatencyStats& latency = {});

struct ConsolidatedReport {
  std::string model;
  double accuracy_5set_avg = 0.0;
  double f1_positive_only = 0.0;
  std::optional<double> fpr_4neg_macro;  // empty when no negative set has a defined FPR
  double avg_inference_ms = 0.0;
};

// Throws UsageError naming the first set with no report.
ConsolidatedReport consolidated(const std::vector<EvalReport>& reports, const std::vector<std::string>& neg_sets,
                                const std::string& pos_set);

enum class ReportFormat { markdown, csv };
ReportFormat parse_report_format(std::string_view name);

inline constexpr std::string_view kCsvHeader = "model,dataset,accuracy,macro_f1,fpr,fnr,latency_mean_ms";
inline constexpr std::string_view kConsolidatedCsvHeader =
    "model,accuracy_5set_avg,f1_positive_only,fpr_4neg_macro,avg_inference_ms";
inline constexpr std::string_view kUndefinedCell = "—";

// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

std::string render_report(const std::vector<EvalReport>& reports, ReportFormat format);
std::string render_consolidated(const ConsolidatedReport& r, ReportFormat format);

struct ReportRow {
  std::string model;
  std::string dataset;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> fpr;
  std::optional<double> fnr;
  double latency_mean_ms = 0.0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

ReportRow to_row(const EvalReport& r);
std::vector<ReportRow> parse_markdown_report(std::string_view text);
std::vector<ReportRow> parse_csv_report(std::string_view text);

}  // namespace guardnet
