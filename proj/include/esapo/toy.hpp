#pragma once

#include "esapo/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace esapo::toy {

// Synthetic low-level-perception world used by the bundled fixtures.
//
// A context describes an image through four attribute slots (sharpness,
// brightness, color, noise), each taking one of four values. The slot value
// is planted as a noisy one-hot block in the channels: sharpness and
// brightness in the image channel, color in the saliency channel, noise in
// the quality channel. The positive response names the four values in slot
// order, e.g. "crisp dim vivid grainy".

inline constexpr std::size_t kSlots = 4;
inline constexpr std::size_t kValuesPerSlot = 4;
inline constexpr std::size_t kVocabSize = 64;
inline constexpr ChannelDims kDims{8, 4, 4};

/// The fixed 64-word toy vocabulary; id 0 is "<bos>".
const Vocab& vocab();

/// Token id of value `value` of attribute slot `slot`.
TokenId slot_token(std::size_t slot, std::size_t value);

using Description = std::array<std::size_t, kSlots>;

Response describe(const Description& d);

/// Context carrying `d` as evidence (one-hot blocks plus uniform noise in
/// ±noise), or no evidence at all (all-zero channels) when `d` is empty.
Context make_context(std::string id, const std::optional<Description>& d, double noise,
                     std::uint64_t seed);

std::vector<CorpusItem> make_corpus(std::size_t n, std::uint64_t seed);

/// MCQ records asking about one slot each. The asked slot fixes the concern
/// label; the question type fixes the number of answer options (2/3/4); the
/// refusal option sits at a random position. A fraction of records is
/// unanswerable: the context carries no evidence and the correct option is a
/// random description.
std::vector<MCQRecord> make_mcq(std::size_t n, std::uint64_t seed, double unanswerable_fraction);

/// True when the record's context carries no evidence.
bool is_unanswerable(const MCQRecord& record);

}  // namespace esapo::toy
