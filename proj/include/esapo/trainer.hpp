#pragma once

#include "esapo/core.hpp"
#include "esapo/losses.hpp"
#include "esapo/policy.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace esapo {

inline constexpr double kDefaultLearningRate = 1e-2;
inline constexpr std::size_t kDefaultSftEpochs = 50;
// Rewards carry a factor β, so preference steps need a much larger rate.
inline constexpr double kDefaultPoLearningRate = 3.0;
inline constexpr std::size_t kDefaultPoEpochs = 100;
inline constexpr double kDivergenceFactor = 10.0;

struct TrainConfig {
  double lr = kDefaultLearningRate;
  double beta = kDefaultBeta;
  std::size_t epochs = 1;
  Method method = Method::EsaPo;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double eps = kDefaultCdpoEps;
  double tau = kDefaultIpoTau;
  std::size_t threads = 1;

  /// Epochs may be zero (identity run); everything else must be positive.
  void validate() const;
  LossConfig loss_config() const { return {method, beta, eps, tau}; }
};

struct HistoryRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double margin_pd = 0.0;
  double margin_dn = 0.0;
};

struct TrainHistory {
  std::vector<HistoryRecord> records;

  /// step,loss,margin_pd,margin_dn with 17 significant digits.
  std::string to_csv() const;
};

/// params − lr · grad
PolicyParams sgd_step(const PolicyParams& params, const PolicyGradient& grad, double lr);
void apply_sgd(PolicyParams& params, const PolicyGradient& grad, double lr);

/// Seeded permutation of [0, n) used for epoch `epoch`.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Mean −log π(y|x) over the corpus.
double corpus_nll(const PolicyParams& params, std::span<const CorpusItem> corpus,
                  std::size_t threads = 1);

/// Mean NLL and its gradient over corpus[indices[*]].
std::pair<double, PolicyGradient> sft_batch(const PolicyParams& params,
                                            std::span<const CorpusItem> corpus,
                                            std::span<const std::size_t> indices,
                                            std::size_t threads = 1);

struct SftResult {
  PolicyParams params;
  std::vector<double> step_losses;
};

/// Supervised finetuning on positives with shuffled mini-batch gradient
/// descent. Throws NumericError on a non-finite loss or when a batch loss
/// exceeds kDivergenceFactor × the first batch loss.
SftResult sft(PolicyParams params, std::span<const CorpusItem> corpus, const TrainConfig& cfg);

struct PoResult {
  PolicyParams params;
  TrainHistory history;
};

/// Preference optimization against a frozen reference. One history record
/// per step, holding the batch values before that step's update.
PoResult train_po(PolicyParams params, const ReferencePolicy& ref,
                  std::span<const PreferenceTriple> triples, const TrainConfig& cfg);

}  // namespace esapo
