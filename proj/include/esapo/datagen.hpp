#pragma once

#include "esapo/core.hpp"
#include "esapo/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace esapo {

inline constexpr double kDefaultMaskRatio = 0.3;
inline constexpr int kMaxFillAttempts = 100;

/// Half-open token range [start, end) of a response.
struct MaskSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  friend bool operator==(const MaskSpan&, const MaskSpan&) = default;
};

/// Image-blind filler for masked spans. The default mode samples tokens from
/// a unigram distribution fitted on the corpus responses; `custom` takes
/// caller-provided weights.
class Completer {
 public:
  enum class Mode { ImageBlindUnigram, Custom };

  /// Weights must be non-negative with a positive sum; they are normalized.
  Completer(Mode mode, std::vector<double> weights);

  static Completer fit_unigram(const std::vector<CorpusItem>& corpus, std::size_t vocab_size);

  Mode mode() const { return mode_; }
  const std::vector<double>& distribution() const { return probs_; }

  TokenId sample(Rng& rng) const;

 private:
  Mode mode_;
  std::vector<double> probs_;
  std::vector<double> cdf_;
};

/// Contiguous span of max(1, round(ratio·|y|)) tokens at a seeded start.
/// Throws ValidationError when |y| < 2 or the span would cover everything.
MaskSpan select_mask(const Response& positive, double ratio, Rng& rng);

/// Positive with the span replaced by the refusal sequence.
Response make_suboptimal(const Response& positive, const MaskSpan& span, const Vocab& vocab);

/// Positive with the span re-filled by the completer. Fills equal to the
/// original segment (or producing `avoid`, when given) are redrawn; throws
/// NumericError after kMaxFillAttempts.
Response make_negative(const Response& positive, const MaskSpan& span, const Completer& completer,
                       Rng& rng, const Response* avoid = nullptr);

struct DatagenConfig {
  double ratio = kDefaultMaskRatio;
  std::uint64_t seed = 0;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t threads = 1;
};

struct SkippedItem {
  std::size_t index = 0;
  std::string reason;
};

struct DatagenResult {
  std::vector<PreferenceTriple> triples;
  std::vector<SkippedItem> skipped;
  std::vector<MaskSpan> spans;  // span used for triples[i]
};

/// One triple per usable corpus item, in corpus order. Item i draws from its
/// own stream seeded by mix_seed(seed, i), so output is independent of
/// `threads`.
DatagenResult build_triples(const std::vector<CorpusItem>& corpus, const DatagenConfig& cfg,
                            const Completer& completer, const Vocab& vocab);

}  // namespace esapo
