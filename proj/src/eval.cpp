#include "esapo/eval.hpp"

#include "esapo/error.hpp"
#include "esapo/parallel.hpp"

namespace esapo {

std::vector<double> score_options(const PolicyParams& params, const MCQRecord& record,
                                  bool normalize) {
  const Vector e = context_embed(params.shape, record.context);
  std::vector<double> scores;
  scores.reserve(record.options.size());
  for (const auto& option : record.options) {
    scores.push_back(option_score(params, e, option, normalize));
  }
  return scores;
}

std::size_t argmax_lowest(std::span<const double> scores, std::optional<std::size_t> excluded) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (excluded && i == *excluded) continue;
    if (!best || scores[i] > scores[*best]) best = i;
  }
  if (!best) throw ContractError("argmax over an empty option set");
  return *best;
}

std::size_t first_pass_predict(const PolicyParams& params, const MCQRecord& record,
                               bool normalize) {
  return argmax_lowest(score_options(params, record, normalize));
}

std::size_t second_pass_predict(const PolicyParams& params, const MCQRecord& record,
                                std::size_t first, bool normalize) {
  if (first != record.refusal) {
    throw ContractError("second pass requested for a record that was not refused");
  }
  return argmax_lowest(score_options(params, record, normalize), record.refusal);
}

bool classify_unknown(std::size_t first, std::optional<std::size_t> second, std::size_t correct,
                      std::size_t refusal) {
  if (first != refusal) return false;
  if (!second) throw ContractError("refused record without a second-pass prediction");
  return *second != correct;
}

Counters count_record(const MCQRecord& record, const PredictionPair& prediction) {
  const std::size_t k = record.options.size();
  const std::size_t p = prediction.first;
  if (p >= k) throw ValidationError("prediction " + prediction.record_id + ": index out of range");
  if ((p == record.refusal) != prediction.second.has_value()) {
    throw ValidationError("prediction " + prediction.record_id +
                          ": second-pass index must be present exactly when refusing");
  }
  if (prediction.second && (*prediction.second >= k || *prediction.second == record.refusal)) {
    throw ValidationError("prediction " + prediction.record_id + ": invalid second-pass index");
  }
  Counters c;
  c.n = 1;
  c.n_correct = p == record.correct ? 1 : 0;
  c.n_refused = p == record.refusal ? 1 : 0;
  c.n_refused_unknown =
      classify_unknown(p, prediction.second, record.correct, record.refusal) ? 1 : 0;
  c.n_answered = 1 - c.n_refused;
  return c;
}

MetricsReport compute_metrics(std::span<const MCQRecord> records,
                              std::span<const PredictionPair> predictions) {
  if (records.empty()) throw ValidationError("compute_metrics: no records");
  if (records.size() != predictions.size()) {
    throw ValidationError("compute_metrics: record and prediction counts differ");
  }
  Counters total;
  Counters by_qtype[std::size(kQuestionTypes)];
  Counters by_concern[std::size(kConcerns)];
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (predictions[i].record_id != records[i].context.id) {
      throw ValidationError("prediction " + std::to_string(i) + ": record id mismatch");
    }
    const Counters c = count_record(records[i], predictions[i]);
    total += c;
    by_qtype[static_cast<std::size_t>(records[i].qtype)] += c;
    by_concern[static_cast<std::size_t>(records[i].concern)] += c;
  }
  MetricsReport report = MetricsReport::from_counters("Total", total);
  for (QuestionType q : kQuestionTypes) {
    report.breakdowns.push_back(MetricsReport::from_counters(
        std::string(to_string(q)), by_qtype[static_cast<std::size_t>(q)]));
  }
  for (Concern c : kConcerns) {
    report.breakdowns.push_back(MetricsReport::from_counters(
        std::string(to_string(c)), by_concern[static_cast<std::size_t>(c)]));
  }
  return report;
}

EvalResult evaluate(const PolicyParams& params, std::span<const MCQRecord> records,
                    const EvalConfig& cfg) {
  if (records.empty()) throw ValidationError("evaluate: no records");
  EvalResult result;
  result.predictions.resize(records.size());
  std::vector<std::vector<double>> scores(records.size());
  parallel_for(records.size(), cfg.threads, [&](std::size_t i) {
    scores[i] = score_options(params, records[i], cfg.normalize);
    result.predictions[i].record_id = records[i].context.id;
    result.predictions[i].first = argmax_lowest(scores[i]);
  });
  // Pass 2 reuses the pass-1 scores: dropping an option does not change the
  // scores of the others.
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& pred = result.predictions[i];
    if (pred.first == records[i].refusal) {
      pred.second = argmax_lowest(scores[i], records[i].refusal);
      ++result.second_pass_calls;
    }
  }
  result.report = compute_metrics(records, result.predictions);
  result.report.header.emplace_back("scoring", cfg.normalize ? "length_normalized" : "sum");
  result.report.header.emplace_back("repetitions", "1");
  return result;
}

}  // namespace esapo
