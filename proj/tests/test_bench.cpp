#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "guardnet/bench.hpp"
#include "guardnet/error.hpp"

using namespace guardnet;

namespace {

struct Tally {
  double accuracy, macro_f1;
  std::optional<double> fpr, fnr;
};

// Per-sample brute force, independent of the Confusion struct.
Tally oracle(const std::vector<std::uint8_t>& p, const std::vector<std::uint8_t>& y) {
  const double n = static_cast<double>(p.size());
  double correct = 0, f1_sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) correct += p[i] == y[i];
  for (std::uint8_t c : {1, 0}) {
    double hit = 0, pred = 0, truth = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      hit += p[i] == c && y[i] == c;
      pred += p[i] == c;
      truth += y[i] == c;
    }
    f1_sum += pred + truth == 0 ? 0.0 : 2 * hit / (pred + truth);
  }
  double neg = 0, false_alarm = 0, pos = 0, miss = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] == 0) {
      ++neg;
      false_alarm += p[i];
    } else {
      ++pos;
      miss += 1 - p[i];
    }
  }
  Tally t{correct / n, f1_sum / 2, std::nullopt, std::nullopt};
  if (neg > 0) t.fpr = false_alarm / neg;
  if (pos > 0) t.fnr = miss / pos;
  return t;
}

void check_against_oracle(const std::vector<std::uint8_t>& p, const std::vector<std::uint8_t>& y) {
  const Metrics m = metrics(confusion(p, y));
  const Tally t = oracle(p, y);
  CHECK(m.accuracy == Catch::Approx(t.accuracy).epsilon(1e-15));
  CHECK(m.macro_f1 == Catch::Approx(t.macro_f1).epsilon(1e-15));
  REQUIRE(m.fpr.has_value() == t.fpr.has_value());
  REQUIRE(m.fnr.has_value() == t.fnr.has_value());
  if (m.fpr) CHECK(*m.fpr == Catch::Approx(*t.fpr).epsilon(1e-15));
  if (m.fnr) CHECK(*m.fnr == Catch::Approx(*t.fnr).epsilon(1e-15));
}

EvalReport report_from(std::string dataset, Confusion c, double latency_ms, std::string model = "mahendra") {
  EvalReport r;
  r.model = std::move(model);
  r.dataset = std::move(dataset);
  r.confusion = c;
  r.metrics = metrics(c);
  r.latency.mean_ms = latency_ms;
  r.latency.samples = c.total();
  return r;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("confusion examples", "[bench][metrics]") {
  using V = std::vector<std::uint8_t>;
  CHECK(confusion(V{1, 1, 1, 0, 0}, V{1, 1, 1, 0, 0}) == Confusion{3, 0, 2, 0});
  CHECK(confusion(V{1, 1, 1, 1, 1, 1, 1, 1, 1, 0}, V(10, 1)) == Confusion{9, 0, 0, 1});
  const Confusion flipped = confusion(V{0, 1, 0, 1}, V{1, 0, 1, 0});
  CHECK(flipped.tp == 0);
  CHECK(flipped.tn == 0);
  CHECK(flipped.total() == 4);
  CHECK_THROWS_AS(confusion(V{1, 0}, V{1}), UsageError);
  CHECK_THROWS_AS(confusion(V{}, V{}), UsageError);
}

TEST_CASE("metrics worked example and degenerate sets", "[bench][metrics]") {
  const Metrics m = metrics(Confusion{9, 2, 88, 1});
  CHECK(m.accuracy == Catch::Approx(0.97).epsilon(1e-15));
  REQUIRE(m.fpr);
  CHECK(*m.fpr == Catch::Approx(0.0222).margin(5e-5));
  REQUIRE(m.fnr);
  CHECK(*m.fnr == Catch::Approx(0.1).epsilon(1e-15));
  // Hand computation: F1(malicious) = 18/21, F1(benign) = 176/179, mean 0.920191...
  CHECK(m.f1_positive == Catch::Approx(18.0 / 21.0).epsilon(1e-15));
  CHECK(m.f1_negative == Catch::Approx(176.0 / 179.0).epsilon(1e-15));
  CHECK(m.macro_f1 == Catch::Approx(0.920191).margin(5e-7));

  const Metrics perfect = metrics(Confusion{5, 0, 7, 0});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);

  const Metrics garak = metrics(Confusion{9, 0, 0, 1});
  CHECK_FALSE(garak.fpr.has_value());
  CHECK(garak.f1_negative == 0.0);
  CHECK(garak.f1_positive == Catch::Approx(18.0 / 19.0));

  CHECK_FALSE(metrics(Confusion{0, 3, 97, 0}).fnr.has_value());
  CHECK_THROWS_AS(metrics(Confusion{}), UsageError);
}

TEST_CASE("metrics agree with a brute-force tally oracle", "[bench][metrics][property]") {
  // All 16 presence patterns of the four confusion cells.
  for (int mask = 1; mask < 16; ++mask) {
    std::vector<std::uint8_t> p, y;
    const std::size_t counts[4] = {3, 2, 5, 1};  // tp fp tn fn when present
    for (int cell = 0; cell < 4; ++cell) {
      if (!(mask & (1 << cell))) continue;
      for (std::size_t k = 0; k < counts[cell]; ++k) {
        p.push_back(cell == 0 || cell == 1);
        y.push_back(cell == 0 || cell == 3);
      }
    }
    INFO("archetype " << mask);
    check_against_oracle(p, y);
  }
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 200;
    std::vector<std::uint8_t> p(n), y(n);
    const auto bias = rng() % 10;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng() % 10 < bias;
      p[i] = rng() % 4 == 0 ? !y[i] : y[i];
    }
    check_against_oracle(p, y);
  }
}

TEST_CASE("accuracy and error rate sum to one", "[bench][metrics][property]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const Confusion c{rng() % 1000, rng() % 1000, rng() % 1000, rng() % 1000 + 1};
    const double n = static_cast<double>(c.total());
    const double err = static_cast<double>(c.fp + c.fn) / n;
    // Both sides are correctly rounded quotients of integers that sum to n.
    CHECK(std::abs(metrics(c).accuracy - (1.0 - err)) <= 4 * std::numeric_limits<double>::epsilon());
  }
}

TEST_CASE("nearest-rank latency statistics", "[bench][latency]") {
  CHECK(nearest_rank({4.2}, 50) == 4.2);
  CHECK(nearest_rank({4.2}, 95) == 4.2);
  CHECK(nearest_rank({5, 1, 4, 2, 3}, 50) == 3);
  CHECK(nearest_rank({5, 1, 4, 2, 3}, 95) == 5);
  std::vector<double> hundred(100);
  for (std::size_t i = 0; i < 100; ++i) hundred[i] = static_cast<double>(100 - i);
  CHECK(nearest_rank(hundred, 95) == 95);
  CHECK(nearest_rank(hundred, 50) == 50);
  CHECK_THROWS_AS(nearest_rank({}, 50), UsageError);
  CHECK_THROWS_AS(nearest_rank({1}, 0), UsageError);

  const LatencyStats s = summarize_latency({1, 2, 3, 10});
  CHECK(s.mean_ms == 4.0);
  CHECK(s.p50_ms == 2);
  CHECK(s.p95_ms == 10);
  CHECK(s.samples == 4);
}

TEST_CASE("latency_bench and evaluate on a small model", "[bench][latency]") {
  ModelConfig cfg;
  cfg.arch = Arch::mahendra;
  cfg.encoder.d_model = 8;
  cfg.encoder.n_layers = 1;
  cfg.encoder.n_heads = 2;
  cfg.encoder.d_ff = 16;
  cfg.encoder.max_len = 64;
  const FrozenModel model = freeze(build_model(Arch::mahendra, cfg));
  Dataset ds{"mini",
             {make_sample("hello", {}), make_sample("DAN MODE! now", {true, false}), make_sample("{{exec}}", {false, true})}};

  const LatencyStats once = latency_bench(model, ds, 0, 1);
  CHECK(once.samples == 3);
  CHECK(once.mean_ms >= 0.0);
  CHECK(once.p50_ms <= once.p95_ms);
  CHECK(latency_bench(model, ds, 2, 3).samples == 9);
  CHECK_THROWS_AS(latency_bench(model, Dataset{}, 0, 1), UsageError);
  CHECK_THROWS_AS(latency_bench(model, ds, 0, 0), UsageError);

  const EvalReport r = evaluate(model, ds, "toy", {}, once);
  CHECK(r.confusion.total() == 3);
  CHECK(r.confusion.tp + r.confusion.fn == 2);
  CHECK(r.metrics == metrics(r.confusion));
  CHECK(r.latency.samples == 3);
  CHECK_THROWS_AS(evaluate(model, Dataset{"empty", {}}, "toy"), UsageError);
}

TEST_CASE("consolidated aggregates", "[bench][report]") {
  const std::vector<std::string> negs{"notinject", "wildguard", "toxicchat", "javelin"};
  std::vector<EvalReport> reports{
      report_from("notinject", {0, 0, 100, 0}, 1.0),    // fpr 0.0
      report_from("wildguard", {5, 10, 90, 0}, 2.0),    // fpr 0.1
      report_from("toxicchat", {2, 10, 90, 3}, 3.0),    // fpr 0.1
      report_from("javelin", {7, 20, 80, 1}, 4.0),      // fpr 0.2
      report_from("garak", {45, 0, 0, 5}, 5.0),
  };
  const ConsolidatedReport c = consolidated(reports, negs, "garak");
  REQUIRE(c.fpr_4neg_macro);
  CHECK(*c.fpr_4neg_macro == Catch::Approx(0.1).epsilon(1e-15));
  CHECK(c.f1_positive_only == reports[4].metrics.f1_positive);
  CHECK(c.avg_inference_ms == 3.0);
  double acc = 0;
  for (const auto& r : reports) acc += r.metrics.accuracy;
  CHECK(c.accuracy_5set_avg == Catch::Approx(acc / 5).epsilon(1e-15));

  std::vector<EvalReport> shuffled{reports[3], reports[4], reports[0], reports[2], reports[1]};
  const ConsolidatedReport c2 = consolidated(shuffled, {negs[2], negs[0], negs[3], negs[1]}, "garak");
  CHECK(c2.accuracy_5set_avg == c.accuracy_5set_avg);
  CHECK(c2.fpr_4neg_macro == c.fpr_4neg_macro);
  CHECK(c2.avg_inference_ms == c.avg_inference_ms);

  // Listing the positive set among the negatives still leaves it out of the FPR average.
  std::vector<std::string> with_pos = negs;
  with_pos.push_back("garak");
  CHECK(consolidated(reports, with_pos, "garak").fpr_4neg_macro == c.fpr_4neg_macro);

  std::vector<EvalReport> same;
  for (const auto& n : {"a", "b", "c", "d", "e"}) same.push_back(report_from(n, {3, 1, 5, 1}, 1.0));
  CHECK(consolidated(same, {"a", "b", "c", "d"}, "e").accuracy_5set_avg == Catch::Approx(0.8).epsilon(1e-15));

  try {
    (void)consolidated(std::vector<EvalReport>(reports.begin(), reports.begin() + 4), negs, "garak");
    FAIL("missing set accepted");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("garak") != std::string::npos);
  }
  std::vector<EvalReport> dup = reports;
  dup.push_back(reports[0]);
  CHECK_THROWS_AS(consolidated(dup, negs, "garak"), UsageError);
}

TEST_CASE("report rendering matches the golden file and parses back", "[bench][report]") {
  const std::vector<EvalReport> reports{
      report_from("bipia", {9, 2, 88, 1}, 12.5),
      report_from("garak", {9, 0, 0, 1}, 7.25),
      report_from("notinject", {0, 3, 97, 0}, 3.5),
  };
  const std::string md = render_report(reports, ReportFormat::markdown);
  CHECK(md == read_text(std::filesystem::path(GUARDNET_TEST_DATA) / "report_golden.md"));
  CHECK(md.find("| — |") != std::string::npos);

  const auto rows = parse_markdown_report(md);
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(rows[i] == to_row(reports[i]));
  CHECK_FALSE(rows[1].fpr.has_value());
  CHECK_FALSE(rows[2].fnr.has_value());

  const std::string csv = render_report(reports, ReportFormat::csv);
  CHECK(csv.substr(0, csv.find('\n')) == "model,dataset,accuracy,macro_f1,fpr,fnr,latency_mean_ms");
  const auto csv_rows = parse_csv_report(csv);
  REQUIRE(csv_rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(csv_rows[i] == to_row(reports[i]));

  CHECK_THROWS_AS(parse_csv_report("wrong,header\n"), FormatError);
  CHECK_THROWS_AS(parse_markdown_report("| a |\n|---|\n| x | y |\n"), FormatError);
  CHECK(parse_report_format("csv") == ReportFormat::csv);
  CHECK_THROWS_AS(parse_report_format("xml"), UsageError);

  ConsolidatedReport c{"raudra", 0.9, 0.95, std::nullopt, 2.5};
  const std::string ccsv = render_consolidated(c, ReportFormat::csv);
  CHECK(ccsv == std::string(kConsolidatedCsvHeader) + "\nraudra,0.9,0.95,—,2.5\n");
  CHECK(render_consolidated(c, ReportFormat::markdown).find("| raudra | 0.9 | 0.95 | — | 2.5 |") != std::string::npos);
}
