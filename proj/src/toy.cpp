#include "esapo/toy.hpp"

#include "esapo/error.hpp"
#include "esapo/rng.hpp"

#include <algorithm>

namespace esapo::toy {

namespace {

constexpr std::size_t kFirstSlotToken = 4;
constexpr std::size_t kFirstPromptToken = 20;
constexpr std::size_t kPromptWords = 16;

// Slot order matches Concern: the asked slot names the concern label.
constexpr Concern kSlotConcern[kSlots] = {Concern::Distortion, Concern::Other,
                                          Concern::InContextOther, Concern::InContextDistortion};

std::vector<std::string> words() {
  return {
      "<bos>", "I", "don't", "know",
      // sharpness, brightness, color, noise
      "sharp", "crisp", "soft", "blurry",
      "bright", "balanced", "dim", "dark",
      "vivid", "natural", "muted", "faded",
      "clean", "smooth", "grainy", "noisy",
      // prompt words
      "describe", "the", "image", "quality", "how", "what", "is", "it",
      "rate", "photo", "this", "picture", "tell", "me", "about", "please",
      // unused filler vocabulary
      "and", "with", "very", "slightly", "overall", "looks", "good", "poor",
      "fair", "excellent", "colors", "lighting", "detail", "focus", "texture", "exposure",
      "contrast", "noise", "blur", "sky", "person", "flower", "building", "red",
      "green", "blue", "yes", "no",
  };
}

Description random_description(Rng& rng) {
  Description d{};
  for (auto& v : d) v = static_cast<std::size_t>(rng.uniform_index(kValuesPerSlot));
  return d;
}

TokenSeq random_prompt(Rng& rng) {
  const auto len = 3 + static_cast<std::size_t>(rng.uniform_index(3));
  TokenSeq prompt;
  for (std::size_t i = 0; i < len; ++i) {
    prompt.push_back(static_cast<TokenId>(kFirstPromptToken + rng.uniform_index(kPromptWords)));
  }
  return prompt;
}

}  // namespace

const Vocab& vocab() {
  static const Vocab v = make_vocab(words());
  return v;
}

TokenId slot_token(std::size_t slot, std::size_t value) {
  return static_cast<TokenId>(kFirstSlotToken + slot * kValuesPerSlot + value);
}

Response describe(const Description& d) {
  Response r;
  for (std::size_t s = 0; s < kSlots; ++s) r.tokens.push_back(slot_token(s, d[s]));
  return r;
}

Context make_context(std::string id, const std::optional<Description>& d, double noise,
                     std::uint64_t seed) {
  Rng rng(seed);
  Context ctx;
  ctx.id = std::move(id);
  ctx.image.assign(kDims.image, 0.0);
  ctx.saliency.assign(kDims.saliency, 0.0);
  ctx.quality.assign(kDims.quality, 0.0);
  if (d) {
    std::vector<double>* block[kSlots] = {&ctx.image, &ctx.image, &ctx.saliency, &ctx.quality};
    const std::size_t offset[kSlots] = {0, kValuesPerSlot, 0, 0};
    for (std::size_t s = 0; s < kSlots; ++s) {
      for (std::size_t v = 0; v < kValuesPerSlot; ++v) {
        (*block[s])[offset[s] + v] = ((*d)[s] == v ? 1.0 : 0.0) + rng.uniform(-noise, noise);
      }
    }
  }
  ctx.prompt = random_prompt(rng);
  return ctx;
}

std::vector<CorpusItem> make_corpus(std::size_t n, std::uint64_t seed) {
  std::vector<CorpusItem> corpus;
  corpus.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, i));
    const Description d = random_description(rng);
    corpus.push_back({make_context("c" + std::to_string(i), d, 0.3, rng.next_u64()), describe(d)});
  }
  return corpus;
}

std::vector<MCQRecord> make_mcq(std::size_t n, std::uint64_t seed, double unanswerable_fraction) {
  if (!(unanswerable_fraction >= 0.0 && unanswerable_fraction <= 1.0)) {
    throw ValidationError("unanswerable fraction must lie in [0, 1]");
  }
  const auto n_unknown = static_cast<std::size_t>(unanswerable_fraction * static_cast<double>(n));
  std::vector<MCQRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, i));
    const bool unanswerable = i < n_unknown;
    const Description truth = random_description(rng);
    MCQRecord r;
    r.context = make_context("q" + std::to_string(i),
                             unanswerable ? std::nullopt : std::optional<Description>(truth), 0.3,
                             rng.next_u64());
    r.qtype = kQuestionTypes[rng.uniform_index(std::size(kQuestionTypes))];
    const std::size_t slot = static_cast<std::size_t>(rng.uniform_index(kSlots));
    r.concern = kSlotConcern[slot];
    const std::size_t n_answers = 2 + static_cast<std::size_t>(r.qtype);

    // Answer options differ only in the asked slot; the first is correct
    // before shuffling.
    std::vector<std::size_t> values(kValuesPerSlot);
    for (std::size_t v = 0; v < kValuesPerSlot; ++v) values[v] = v;
    std::swap(values[0], values[truth[slot]]);
    rng.shuffle(std::span<std::size_t>(values).subspan(1));
    std::vector<Response> answers;
    for (std::size_t a = 0; a < n_answers; ++a) {
      Description d = truth;
      d[slot] = values[a];
      answers.push_back(describe(d));
    }
    std::vector<std::size_t> perm(n_answers);
    for (std::size_t a = 0; a < n_answers; ++a) perm[a] = a;
    rng.shuffle(std::span<std::size_t>(perm));
    r.refusal = static_cast<std::size_t>(rng.uniform_index(n_answers + 1));
    for (std::size_t a = 0, k = 0; k <= n_answers; ++k) {
      if (k == r.refusal) {
        r.options.push_back(Response{vocab().refusal_seq});
        continue;
      }
      if (perm[a] == 0) r.correct = k;
      r.options.push_back(answers[perm[a]]);
      ++a;
    }
    records.push_back(std::move(r));
  }
  // Interleave answerable and unanswerable records deterministically.
  Rng order(mix_seed(seed, n));
  order.shuffle(std::span<MCQRecord>(records));
  return records;
}

bool is_unanswerable(const MCQRecord& record) {
  auto zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  return zero(record.context.image) && zero(record.context.saliency) &&
         zero(record.context.quality);
}

}  // namespace esapo::toy
