#include "esapo/datagen.hpp"

#include "esapo/error.hpp"
#include "esapo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace esapo {

Completer::Completer(Mode mode, std::vector<double> weights) : mode_(mode) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("completer: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("completer: weights sum to zero");
  probs_.reserve(weights.size());
  cdf_.reserve(weights.size());
  double acc = 0.0;
  for (double w : weights) {
    probs_.push_back(w / total);
    acc += w;
    cdf_.push_back(acc / total);
  }
  // Pin the tail so a draw of u close to 1 always lands on a token.
  for (std::size_t i = cdf_.size(); i-- > 0;) {
    if (probs_[i] > 0.0) {
      for (std::size_t j = i; j < cdf_.size(); ++j) cdf_[j] = 1.0;
      break;
    }
  }
}

Completer Completer::fit_unigram(const std::vector<CorpusItem>& corpus, std::size_t vocab_size) {
  std::vector<double> counts(vocab_size, 0.0);
  for (const auto& item : corpus) {
    for (TokenId t : item.response.tokens) {
      if (t >= vocab_size) throw ValidationError("completer: token id out of range");
      counts[t] += 1.0;
    }
  }
  return Completer(Mode::ImageBlindUnigram, std::move(counts));
}

TokenId Completer::sample(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<TokenId>(std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                                       static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
}

MaskSpan select_mask(const Response& positive, double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("mask ratio must lie in (0, 1)");
  const std::size_t len = positive.size();
  if (len < 2) throw ValidationError("response shorter than 2 tokens");
  const auto span_len =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(ratio * static_cast<double>(len))));
  if (span_len >= len) throw ValidationError("mask span would cover the whole response");
  const auto start = static_cast<std::size_t>(rng.uniform_index(len - span_len + 1));
  return {start, start + span_len};
}

namespace {

void check_span(const Response& r, const MaskSpan& span) {
  if (!(span.start < span.end && span.end <= r.size())) {
    throw ContractError("mask span out of range");
  }
}

Response splice(const Response& r, const MaskSpan& span, const TokenSeq& fill) {
  Response out;
  out.tokens.reserve(r.size() - span.size() + fill.size());
  out.tokens.insert(out.tokens.end(), r.tokens.begin(),
                    r.tokens.begin() + static_cast<std::ptrdiff_t>(span.start));
  out.tokens.insert(out.tokens.end(), fill.begin(), fill.end());
  out.tokens.insert(out.tokens.end(), r.tokens.begin() + static_cast<std::ptrdiff_t>(span.end),
                    r.tokens.end());
  return out;
}

}  // namespace

Response make_suboptimal(const Response& positive, const MaskSpan& span, const Vocab& vocab) {
  check_span(positive, span);
  return splice(positive, span, vocab.refusal_seq);
}

Response make_negative(const Response& positive, const MaskSpan& span, const Completer& completer,
                       Rng& rng, const Response* avoid) {
  check_span(positive, span);
  const TokenSeq original(positive.tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                          positive.tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
  TokenSeq fill(span.size());
  for (int attempt = 0; attempt < kMaxFillAttempts; ++attempt) {
    for (auto& t : fill) t = completer.sample(rng);
    if (fill == original) continue;
    Response out = splice(positive, span, fill);
    if (avoid && out == *avoid) continue;
    return out;
  }
  throw NumericError("completer could not produce a differing fill in " +
                     std::to_string(kMaxFillAttempts) + " attempts");
}

DatagenResult build_triples(const std::vector<CorpusItem>& corpus, const DatagenConfig& cfg,
                            const Completer& completer, const Vocab& vocab) {
  if (corpus.empty()) throw ValidationError("build_triples: empty corpus");
  if (!(cfg.ratio > 0.0 && cfg.ratio < 1.0)) throw ValidationError("mask ratio must lie in (0, 1)");

  struct Outcome {
    std::optional<PreferenceTriple> triple;
    MaskSpan span;
    std::string reason;
  };
  std::vector<Outcome> outcomes(corpus.size());

  parallel_for(corpus.size(), cfg.threads, [&](std::size_t i) {
    const CorpusItem& item = corpus[i];
    Outcome& out = outcomes[i];
    Rng rng(mix_seed(cfg.seed, i));
    try {
      const MaskSpan span = select_mask(item.response, cfg.ratio, rng);
      const TokenSeq segment(item.response.tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                             item.response.tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
      if (segment == vocab.refusal_seq) {
        out.reason = "masked segment equals the refusal sequence";
        return;
      }
      PreferenceTriple t;
      t.context = item.context;
      t.positive = item.response;
      t.suboptimal = make_suboptimal(item.response, span, vocab);
      t.negative = make_negative(item.response, span, completer, rng, &t.suboptimal);
      if (t.suboptimal.size() > cfg.max_len || t.negative.size() > cfg.max_len) {
        out.reason = "generated response exceeds max_len";
        return;
      }
      out.triple = std::move(t);
      out.span = span;
    } catch (const std::exception& e) {
      out.reason = e.what();
    }
  });

  DatagenResult result;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].triple) {
      result.triples.push_back(std::move(*outcomes[i].triple));
      result.spans.push_back(outcomes[i].span);
    } else {
      result.skipped.push_back({i, outcomes[i].reason});
    }
  }
  return result;
}

}  // namespace esapo
