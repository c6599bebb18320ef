#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace esapo {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

/// Begin-of-sequence id; every vocabulary reserves it.
inline constexpr TokenId kBosToken = 0;

inline constexpr std::size_t kDefaultMaxLen = 64;

/// Token model: a fixed number of ids plus the canonical refusal sequence.
/// `words` is the optional surface mapping used by the toy tokenizer.
struct Vocab {
  std::size_t size = 0;
  TokenSeq refusal_seq;
  std::vector<std::string> words;

  /// Throws ValidationError when size < 2, refusal_seq is empty or holds an
  /// out-of-range id, or `words` is present with the wrong length.
  void validate() const;

  /// Whitespace tokenizer over `words`. Throws on unknown words.
  TokenSeq tokenize(std::string_view text) const;
  std::string detokenize(const TokenSeq& tokens) const;
};

/// Builds a vocabulary from a word list; the refusal sequence is the
/// tokenization of "I don't know".
Vocab make_vocab(std::vector<std::string> words);

inline constexpr std::string_view kRefusalText = "I don't know";

struct ChannelDims {
  std::size_t image = 0;
  std::size_t saliency = 0;
  std::size_t quality = 0;

  std::size_t total() const { return image + saliency + quality; }
  friend bool operator==(const ChannelDims&, const ChannelDims&) = default;
};

struct Context {
  std::string id;
  std::vector<double> image;
  std::vector<double> saliency;
  std::vector<double> quality;
  TokenSeq prompt;

  ChannelDims dims() const { return {image.size(), saliency.size(), quality.size()}; }
  friend bool operator==(const Context&, const Context&) = default;
};

struct Response {
  TokenSeq tokens;

  std::size_t size() const { return tokens.size(); }
  friend bool operator==(const Response&, const Response&) = default;
};

/// (x, y_p, y_d, y_n) with positive ≻ suboptimal ≻ negative.
struct PreferenceTriple {
  Context context;
  Response positive;
  Response suboptimal;
  Response negative;

  friend bool operator==(const PreferenceTriple&, const PreferenceTriple&) = default;
};

/// One (context, positive response) pair of an SFT / datagen corpus.
struct CorpusItem {
  Context context;
  Response response;

  friend bool operator==(const CorpusItem&, const CorpusItem&) = default;
};

enum class QuestionType { YesOrNo, What, How };
enum class Concern { Distortion, Other, InContextDistortion, InContextOther };

inline constexpr QuestionType kQuestionTypes[] = {QuestionType::YesOrNo, QuestionType::What,
                                                  QuestionType::How};
inline constexpr Concern kConcerns[] = {Concern::Distortion, Concern::Other,
                                        Concern::InContextDistortion, Concern::InContextOther};

std::string_view to_string(QuestionType q);
std::string_view to_string(Concern c);
std::optional<QuestionType> parse_question_type(std::string_view s);
std::optional<Concern> parse_concern(std::string_view s);

struct MCQRecord {
  Context context;
  std::vector<Response> options;
  std::size_t correct = 0;
  std::size_t refusal = 0;
  QuestionType qtype = QuestionType::YesOrNo;
  Concern concern = Concern::Distortion;

  friend bool operator==(const MCQRecord&, const MCQRecord&) = default;
};

/// First-pass index and, when the refusal option was chosen, the forced
/// second-pass index (original option indexing).
struct PredictionPair {
  std::string record_id;
  std::size_t first = 0;
  std::optional<std::size_t> second;

  friend bool operator==(const PredictionPair&, const PredictionPair&) = default;
};

/// Everything record validation is checked against. Channel dimensions are
/// taken from the first record when left unset.
struct DatasetSchema {
  Vocab vocab;
  std::optional<ChannelDims> dims;
  std::size_t max_len = kDefaultMaxLen;
};

// Validators throw ValidationError whose message starts with the offending
// field name.
void validate_context(const Context& ctx, const DatasetSchema& schema);
void validate_response(const Response& r, const DatasetSchema& schema, std::string_view field);
void validate_triple(const PreferenceTriple& t, const DatasetSchema& schema);
void validate_mcq(const MCQRecord& r, const DatasetSchema& schema);
void validate_corpus_item(const CorpusItem& item, const DatasetSchema& schema);

// Line-delimited JSON datasets. Loaders validate every record and fail on the
// first bad line with "line N: <field>: <reason>"; a partial dataset is never
// returned. When `schema.dims` is unset it is fixed by the first record.
std::vector<PreferenceTriple> load_preference_dataset(const std::filesystem::path& path,
                                                      DatasetSchema schema);
std::vector<MCQRecord> load_mcq_dataset(const std::filesystem::path& path, DatasetSchema schema);
std::vector<CorpusItem> load_corpus(const std::filesystem::path& path, DatasetSchema schema);

// Canonical writers; loading a canonical file and writing it back is
// byte-identical.
std::string serialize_triple(const PreferenceTriple& t);
std::string serialize_mcq(const MCQRecord& r);
std::string serialize_corpus_item(const CorpusItem& item);

void write_preference_dataset(const std::filesystem::path& path,
                              const std::vector<PreferenceTriple>& triples);
void write_mcq_dataset(const std::filesystem::path& path, const std::vector<MCQRecord>& records);
void write_corpus(const std::filesystem::path& path, const std::vector<CorpusItem>& items);

/// Writes `contents` to `path`, throwing ValidationError if it cannot be opened.
void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace esapo
