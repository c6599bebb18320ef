#pragma once

#include "esapo/core.hpp"
#include "esapo/policy.hpp"
#include "esapo/report.hpp"

#include <optional>
#include <span>
#include <vector>

namespace esapo {

struct EvalConfig {
  bool normalize = true;  // length-normalized option scores
  std::size_t threads = 1;
};

/// option_score for every option of the record.
std::vector<double> score_options(const PolicyParams& params, const MCQRecord& record,
                                  bool normalize);

/// Index of the largest score, lowest index on ties; `excluded` is skipped.
std::size_t argmax_lowest(std::span<const double> scores,
                          std::optional<std::size_t> excluded = std::nullopt);

/// Pass 1: argmax over all options, refusal included.
std::size_t first_pass_predict(const PolicyParams& params, const MCQRecord& record, bool normalize);

/// Pass 2: argmax with the refusal option removed, in original indexing.
/// Only defined after a refusal; throws ContractError when first ≠ refusal.
std::size_t second_pass_predict(const PolicyParams& params, const MCQRecord& record,
                                std::size_t first, bool normalize);

/// A refusal is justified ("unknown") when the forced second answer is wrong.
bool classify_unknown(std::size_t first, std::optional<std::size_t> second, std::size_t correct,
                      std::size_t refusal);

Counters count_record(const MCQRecord& record, const PredictionPair& prediction);

/// Overall report plus one breakdown per question type and per concern (all
/// seven are always present; empty categories have null metrics). Throws
/// ValidationError for an empty or inconsistent input.
MetricsReport compute_metrics(std::span<const MCQRecord> records,
                              std::span<const PredictionPair> predictions);

struct EvalResult {
  MetricsReport report;
  std::vector<PredictionPair> predictions;
  std::size_t second_pass_calls = 0;
};

/// Two-pass protocol: pass 1 on every record, pass 2 on refused ones only.
EvalResult evaluate(const PolicyParams& params, std::span<const MCQRecord> records,
                    const EvalConfig& cfg);

}  // namespace esapo
