#include "guardnet/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

#include "guardnet/error.hpp"
#include "guardnet/kernels.hpp"

namespace guardnet {

double nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) throw UsageError("percentile of an empty sample");
  if (!(q > 0.0 && q <= 100.0)) throw UsageError("percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

LatencyStats summarize_latency(const std::vector<double>& timings_ms) {
  if (timings_ms.empty()) throw UsageError("no latency samples");
  LatencyStats s;
  s.samples = timings_ms.size();
  s.mean_ms = std::accumulate(timings_ms.begin(), timings_ms.end(), 0.0) / static_cast<double>(timings_ms.size());
  s.p50_ms = nearest_rank(timings_ms, 50.0);
  s.p95_ms = nearest_rank(timings_ms, 95.0);
  return s;
}

LatencyStats latency_bench(const FrozenModel& model, const Dataset& ds, int warmup, int reps,
                           const SegmentPolicy& policy) {
  if (ds.empty()) throw UsageError("latency benchmark needs a non-empty dataset");
  if (reps < 1) throw UsageError("latency benchmark needs reps >= 1");
  if (warmup < 0) throw UsageError("warmup must be >= 0");
  kernels::SingleThreadScope single;
  for (int w = 0; w < warmup; ++w) {
    for (const auto& s : ds.samples) (void)classify(s.text, model, policy);
  }
  std::vector<double> timings;
  timings.reserve(ds.size() * static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    for (const auto& s : ds.samples) {
      const auto t0 = std::chrono::steady_clock::now();
      (void)classify(s.text, model, policy);
      timings.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
  }
  return summarize_latency(timings);
}

EvalReport evaluate(const FrozenModel& model, const Dataset& ds, std::string model_name, const SegmentPolicy& policy,
                    const LatencyStats& latency) {
  if (ds.empty()) throw UsageError("cannot evaluate on an empty dataset '" + ds.name + "'");
  std::vector<std::uint8_t> preds, truth;
  for (const auto& s : ds.samples) {
    preds.push_back(classify(s.text, model, policy).malicious ? 1 : 0);
    truth.push_back(s.malicious() ? 1 : 0);
  }
  EvalReport r;
  r.model = std::move(model_name);
  r.dataset = ds.name;
  r.confusion = confusion(preds, truth);
  r.metrics = metrics(r.confusion);
  r.latency = latency;
  return r;
}

ConsolidatedReport consolidated(const std::vector<EvalReport>& reports, const std::vector<std::string>& neg_sets,
                                const std::string& pos_set) {
  std::map<std::string, const EvalReport*> by_name;
  for (const auto& r : reports) {
    if (!by_name.emplace(r.dataset, &r).second) throw UsageError("duplicate report for dataset '" + r.dataset + "'");
  }
  auto find = [&](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw UsageError("no report for dataset '" + name + "'");
    return it->second;
  };

  // Sum in sorted-name order so the aggregate does not depend on report order.
  std::vector<std::string> all = neg_sets;
  all.push_back(pos_set);
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<std::string> negs = neg_sets;
  std::sort(negs.begin(), negs.end());
  negs.erase(std::unique(negs.begin(), negs.end()), negs.end());

  ConsolidatedReport c;
  const EvalReport* pos = find(pos_set);
  c.model = pos->model;
  double acc = 0.0, lat = 0.0;
  for (const auto& name : all) {
    const EvalReport* r = find(name);
    acc += r->metrics.accuracy;
    lat += r->latency.mean_ms;
  }
  c.accuracy_5set_avg = acc / static_cast<double>(all.size());
  c.avg_inference_ms = lat / static_cast<double>(all.size());
  c.f1_positive_only = pos->metrics.f1_positive;

  double fpr = 0.0;
  std::size_t defined = 0;
  for (const auto& name : negs) {
    const EvalReport* r = find(name);
    if (name == pos_set || !r->metrics.fpr) continue;
    fpr += *r->metrics.fpr;
    ++defined;
  }
  if (defined > 0) c.fpr_4neg_macro = fpr / static_cast<double>(defined);
  return c;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "markdown" || name == "md") return ReportFormat::markdown;
  if (name == "csv") return ReportFormat::csv;
  throw UsageError("unknown report format '" + std::string(name) + "' (valid: markdown, csv)");
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string(kUndefinedCell); }

std::vector<std::string> split_on(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    out.emplace_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(' ');
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(' ');
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("bad number '" + s + "' in report", 0);
  return v;
}

std::optional<double> parse_cell(const std::string& s) {
  if (s == kUndefinedCell) return std::nullopt;
  return parse_number(s);
}

ReportRow row_from(const std::vector<std::string>& f) {
  if (f.size() != 7) throw FormatError("report row has " + std::to_string(f.size()) + " columns, expected 7", 0);
  return {f[0], f[1], parse_number(f[2]), parse_number(f[3]), parse_cell(f[4]), parse_cell(f[5]), parse_number(f[6])};
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
    pos = end + 1;
  }
  return out;
}

}  // namespace

ReportRow to_row(const EvalReport& r) {
  return {r.model, r.dataset, r.metrics.accuracy, r.metrics.macro_f1, r.metrics.fpr, r.metrics.fnr, r.latency.mean_ms};
}

std::string render_report(const std::vector<EvalReport>& reports, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::csv) {
    out += std::string(kCsvHeader) + "\n";
    for (const auto& rep : reports) {
      const ReportRow r = to_row(rep);
      out += r.model + "," + r.dataset + "," + format_number(r.accuracy) + "," + format_number(r.macro_f1) + "," +
             cell(r.fpr) + "," + cell(r.fnr) + "," + format_number(r.latency_mean_ms) + "\n";
    }
    return out;
  }
  out += "| Model | Dataset | Accuracy | Macro F1 | FPR | FNR | Avg Latency (ms) |\n";
  out += "|---|---|---|---|---|---|---|\n";
  for (const auto& rep : reports) {
    const ReportRow r = to_row(rep);
    out += "| " + r.model + " | " + r.dataset + " | " + format_number(r.accuracy) + " | " + format_number(r.macro_f1) +
           " | " + cell(r.fpr) + " | " + cell(r.fnr) + " | " + format_number(r.latency_mean_ms) + " |\n";
  }
  return out;
}

std::string render_consolidated(const ConsolidatedReport& r, ReportFormat format) {
  if (format == ReportFormat::csv) {
    return std::string(kConsolidatedCsvHeader) + "\n" + r.model + "," + format_number(r.accuracy_5set_avg) + "," +
           format_number(r.f1_positive_only) + "," + cell(r.fpr_4neg_macro) + "," +
           format_number(r.avg_inference_ms) + "\n";
  }
  return "| Model | Accuracy (avg) | F1 (positive set) | FPR (negative sets, macro) | Avg Inference (ms) |\n"
         "|---|---|---|---|---|\n| " +
         r.model + " | " + format_number(r.accuracy_5set_avg) + " | " + format_number(r.f1_positive_only) + " | " +
         cell(r.fpr_4neg_macro) + " | " + format_number(r.avg_inference_ms) + " |\n";
}

std::vector<ReportRow> parse_markdown_report(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.size() < 2) throw FormatError("markdown report lacks a header", 0);
  std::vector<ReportRow> rows;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (line.size() < 2 || line.front() != '|' || line.back() != '|') {
      throw FormatError("markdown row " + std::to_string(i + 1) + " is not a table row", 0);
    }
    auto fields = split_on(line.substr(1, line.size() - 2), '|');
    for (auto& f : fields) f = trim(f);
    rows.push_back(row_from(fields));
  }
  return rows;
}

std::vector<ReportRow> parse_csv_report(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kCsvHeader) throw FormatError("csv report has an unexpected header", 0);
  std::vector<ReportRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) rows.push_back(row_from(split_on(lines[i], ',')));
  return rows;
}

}  // namespace guardnet
