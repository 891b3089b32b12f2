#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "guardnet/labels.hpp"

namespace guardnet {

struct Sample {
  std::string text;
  TaskLabels labels;
  std::string source;
  std::string id;  // hex SHA-256 of normalize_text(text)

  bool malicious() const noexcept { return labels.malicious(); }
};

Sample make_sample(std::string text, TaskLabels labels, std::string source = {});

struct Dataset {
  std::string name;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
};

// Lowercase (ASCII), collapse whitespace runs to one space, trim.
std::string normalize_text(std::string_view text);

// Throws LoadError with the 1-based line number on a malformed record.
// Blank lines are skipped. A missing file is a DataError.
Dataset load_jsonl(const std::filesystem::path& path);
Dataset parse_jsonl(std::string_view content, std::string name = {});
void save_jsonl(const Dataset& ds, const std::filesystem::path& path);

struct DatasetStats {
  std::size_t total = 0;
  std::size_t harmful_count = 0;
  double harmful_pct = 0.0;
  std::size_t safe_count = 0;
  double safe_pct = 0.0;
};

DatasetStats stats(const Dataset& ds);
// Two-decimal percentage computed from counts, e.g. 204 of 10165 -> 2.01.
double percent_2dp(std::size_t part, std::size_t total);
std::string format_pct(double pct);

Dataset dedup(const Dataset& ds);

enum class PerturbKind { fuzz, token_swap, suffix };
PerturbKind parse_perturb_kind(std::string_view name);
std::string_view perturb_kind_name(PerturbKind k);

struct PerturbSpec {
  PerturbKind kind = PerturbKind::fuzz;
  int budget = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> suffix_pool;
};

// A handful of override phrases used by tests and the generate command.
const std::vector<std::string>& default_suffix_pool();

Sample perturb(const Sample& s, const PerturbSpec& spec);

// Returns (train, val). Stratifies on the malicious flag when asked.
std::pair<Dataset, Dataset> split(const Dataset& ds, double val_ratio, std::uint64_t seed, bool stratify = true);

struct MarkerCorpusConfig {
  std::size_t n_samples = 2000;
  double jailbreak_rate = 0.25;
  double injection_rate = 0.25;
  std::size_t min_words = 4;
  std::size_t max_words = 12;
  std::uint64_t seed = 7;
};

/// Synthetic corpus with separable positives: benign texts are lowercase
/// words, jailbreak samples carry an uppercase "!" marker token, injection
/// samples carry a braced marker token. A sample may carry both.
Dataset marker_corpus(const MarkerCorpusConfig& cfg);

}  // namespace guardnet
