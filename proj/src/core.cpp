#include "esapo/core.hpp"

#include "esapo/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace esapo {

using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(std::string_view field, std::string_view reason) {
  throw ValidationError(std::string(field) + ": " + std::string(reason));
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocab

void Vocab::validate() const {
  if (size < 2) fail("vocab.size", "must be at least 2");
  if (refusal_seq.empty()) fail("vocab.refusal_seq", "must be non-empty");
  for (TokenId t : refusal_seq) {
    if (t >= size) fail("vocab.refusal_seq", "token id out of range");
  }
  if (!words.empty() && words.size() != size) fail("vocab.words", "length differs from size");
}

TokenSeq Vocab::tokenize(std::string_view text) const {
  TokenSeq out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) {
    const auto it = std::find(words.begin(), words.end(), w);
    if (it == words.end()) fail("text", "unknown word '" + w + "'");
    out.push_back(static_cast<TokenId>(it - words.begin()));
  }
  return out;
}

std::string Vocab::detokenize(const TokenSeq& tokens) const {
  std::string out;
  for (TokenId t : tokens) {
    if (!out.empty()) out += ' ';
    out += t < words.size() ? words[t] : "<" + std::to_string(t) + ">";
  }
  return out;
}

Vocab make_vocab(std::vector<std::string> words) {
  Vocab v;
  v.size = words.size();
  v.words = std::move(words);
  v.refusal_seq = v.tokenize(kRefusalText);
  v.validate();
  return v;
}

// ---------------------------------------------------------------------------
// Labels

std::string_view to_string(QuestionType q) {
  switch (q) {
    case QuestionType::YesOrNo: return "YesOrNo";
    case QuestionType::What: return "What";
    case QuestionType::How: return "How";
  }
  return "?";
}

std::string_view to_string(Concern c) {
  switch (c) {
    case Concern::Distortion: return "Distortion";
    case Concern::Other: return "Other";
    case Concern::InContextDistortion: return "InContextDistortion";
    case Concern::InContextOther: return "InContextOther";
  }
  return "?";
}

std::optional<QuestionType> parse_question_type(std::string_view s) {
  for (QuestionType q : kQuestionTypes) {
    if (to_string(q) == s) return q;
  }
  return std::nullopt;
}

std::optional<Concern> parse_concern(std::string_view s) {
  for (Concern c : kConcerns) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void check_channel(const std::vector<double>& v, std::size_t dim, std::string_view field) {
  if (v.size() != dim) {
    fail(field, "expected dimension " + std::to_string(dim) + ", got " + std::to_string(v.size()));
  }
  for (double x : v) {
    if (!std::isfinite(x)) fail(field, "non-finite value");
  }
}

void check_ids(const TokenSeq& seq, const Vocab& vocab, std::string_view field) {
  for (TokenId t : seq) {
    if (t >= vocab.size) fail(field, "token id " + std::to_string(t) + " out of range");
  }
}

}  // namespace

void validate_context(const Context& ctx, const DatasetSchema& schema) {
  const ChannelDims dims = schema.dims.value_or(ctx.dims());
  check_channel(ctx.image, dims.image, "context.image");
  check_channel(ctx.saliency, dims.saliency, "context.saliency");
  check_channel(ctx.quality, dims.quality, "context.quality");
  check_ids(ctx.prompt, schema.vocab, "context.prompt");
}

void validate_response(const Response& r, const DatasetSchema& schema, std::string_view field) {
  if (r.tokens.empty()) fail(field, "empty response");
  if (r.tokens.size() > schema.max_len) {
    fail(field, "length " + std::to_string(r.tokens.size()) + " exceeds max_len " +
                    std::to_string(schema.max_len));
  }
  check_ids(r.tokens, schema.vocab, field);
}

void validate_triple(const PreferenceTriple& t, const DatasetSchema& schema) {
  validate_context(t.context, schema);
  validate_response(t.positive, schema, "positive");
  validate_response(t.suboptimal, schema, "suboptimal");
  validate_response(t.negative, schema, "negative");
  if (t.positive == t.suboptimal || t.positive == t.negative || t.suboptimal == t.negative) {
    fail("responses", "responses not distinct");
  }
}

void validate_mcq(const MCQRecord& r, const DatasetSchema& schema) {
  validate_context(r.context, schema);
  if (r.options.size() < 2) fail("options", "need at least 2 options");
  for (std::size_t i = 0; i < r.options.size(); ++i) {
    validate_response(r.options[i], schema, "options[" + std::to_string(i) + "]");
  }
  if (r.correct >= r.options.size()) fail("correct", "index out of range");
  if (r.refusal >= r.options.size()) fail("refusal", "index out of range");
  if (r.correct == r.refusal) fail("correct", "correct index equals refusal index");
  if (r.options[r.refusal].tokens != schema.vocab.refusal_seq) {
    fail("refusal", "refusal option tokens differ from the refusal sequence");
  }
}

void validate_corpus_item(const CorpusItem& item, const DatasetSchema& schema) {
  validate_context(item.context, schema);
  validate_response(item.response, schema, "response");
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace {

ojson context_to_json(const Context& c) {
  ojson j;
  j["id"] = c.id;
  j["image"] = c.image;
  j["saliency"] = c.saliency;
  j["quality"] = c.quality;
  j["prompt"] = c.prompt;
  return j;
}

void expect_keys(const ojson& j, std::initializer_list<std::string_view> keys,
                 std::string_view where) {
  if (!j.is_object()) fail(where, "expected an object");
  for (auto key : keys) {
    if (!j.contains(std::string(key))) {
      fail(where.empty() ? key : std::string(where) + "." + std::string(key), "missing field");
    }
  }
  for (const auto& [k, _] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      fail(where.empty() ? k : std::string(where) + "." + k, "unknown field");
    }
  }
}

std::vector<double> reals_from_json(const ojson& j, std::string_view field) {
  if (!j.is_array()) fail(field, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) fail(field, "expected a number");
    out.push_back(x.get<double>());
  }
  return out;
}

TokenSeq tokens_from_json(const ojson& j, std::string_view field) {
  if (!j.is_array()) fail(field, "expected an array of token ids");
  TokenSeq out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number_unsigned() || x.get<std::uint64_t>() > 0xffffffffULL) {
      fail(field, "expected a non-negative token id");
    }
    out.push_back(x.get<TokenId>());
  }
  return out;
}

std::size_t index_from_json(const ojson& j, std::string_view field) {
  if (!j.is_number_unsigned()) fail(field, "expected a non-negative integer");
  return j.get<std::size_t>();
}

std::string string_from_json(const ojson& j, std::string_view field) {
  if (!j.is_string()) fail(field, "expected a string");
  return j.get<std::string>();
}

Context context_from_json(const ojson& j) {
  expect_keys(j, {"id", "image", "saliency", "quality", "prompt"}, "context");
  Context c;
  c.id = string_from_json(j["id"], "context.id");
  c.image = reals_from_json(j["image"], "context.image");
  c.saliency = reals_from_json(j["saliency"], "context.saliency");
  c.quality = reals_from_json(j["quality"], "context.quality");
  c.prompt = tokens_from_json(j["prompt"], "context.prompt");
  return c;
}

PreferenceTriple triple_from_json(const ojson& j) {
  expect_keys(j, {"context", "positive", "suboptimal", "negative"}, "");
  PreferenceTriple t;
  t.context = context_from_json(j["context"]);
  t.positive.tokens = tokens_from_json(j["positive"], "positive");
  t.suboptimal.tokens = tokens_from_json(j["suboptimal"], "suboptimal");
  t.negative.tokens = tokens_from_json(j["negative"], "negative");
  return t;
}

MCQRecord mcq_from_json(const ojson& j) {
  expect_keys(j, {"context", "options", "correct", "refusal", "qtype", "concern"}, "");
  MCQRecord r;
  r.context = context_from_json(j["context"]);
  if (!j["options"].is_array()) fail("options", "expected an array of responses");
  for (std::size_t i = 0; i < j["options"].size(); ++i) {
    r.options.push_back(
        Response{tokens_from_json(j["options"][i], "options[" + std::to_string(i) + "]")});
  }
  r.correct = index_from_json(j["correct"], "correct");
  r.refusal = index_from_json(j["refusal"], "refusal");
  const auto qtype = parse_question_type(string_from_json(j["qtype"], "qtype"));
  if (!qtype) fail("qtype", "unknown question type");
  r.qtype = *qtype;
  const auto concern = parse_concern(string_from_json(j["concern"], "concern"));
  if (!concern) fail("concern", "unknown concern");
  r.concern = *concern;
  return r;
}

CorpusItem corpus_item_from_json(const ojson& j) {
  expect_keys(j, {"context", "response"}, "");
  CorpusItem item;
  item.context = context_from_json(j["context"]);
  item.response.tokens = tokens_from_json(j["response"], "response");
  return item;
}

template <typename Record>
std::vector<Record> load_lines(const std::filesystem::path& path, DatasetSchema& schema,
                               const std::function<Record(const ojson&)>& parse,
                               const std::function<void(const Record&, const DatasetSchema&)>& check,
                               const std::function<const Context&(const Record&)>& context_of) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ojson j;
      try {
        j = ojson::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("record: parse failure: ") + e.what());
      }
      Record rec = parse(j);
      if (!schema.dims) schema.dims = context_of(rec).dims();
      check(rec, schema);
      out.push_back(std::move(rec));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::string serialize_triple(const PreferenceTriple& t) {
  ojson j;
  j["context"] = context_to_json(t.context);
  j["positive"] = t.positive.tokens;
  j["suboptimal"] = t.suboptimal.tokens;
  j["negative"] = t.negative.tokens;
  return j.dump();
}

std::string serialize_mcq(const MCQRecord& r) {
  ojson j;
  j["context"] = context_to_json(r.context);
  ojson opts = ojson::array();
  for (const auto& o : r.options) opts.push_back(o.tokens);
  j["options"] = std::move(opts);
  j["correct"] = r.correct;
  j["refusal"] = r.refusal;
  j["qtype"] = std::string(to_string(r.qtype));
  j["concern"] = std::string(to_string(r.concern));
  return j.dump();
}

std::string serialize_corpus_item(const CorpusItem& item) {
  ojson j;
  j["context"] = context_to_json(item.context);
  j["response"] = item.response.tokens;
  return j.dump();
}

std::vector<PreferenceTriple> load_preference_dataset(const std::filesystem::path& path,
                                                      DatasetSchema schema) {
  return load_lines<PreferenceTriple>(path, schema, triple_from_json, validate_triple,
                                      [](const PreferenceTriple& t) -> const Context& {
                                        return t.context;
                                      });
}

std::vector<MCQRecord> load_mcq_dataset(const std::filesystem::path& path, DatasetSchema schema) {
  return load_lines<MCQRecord>(path, schema, mcq_from_json, validate_mcq,
                               [](const MCQRecord& r) -> const Context& { return r.context; });
}

std::vector<CorpusItem> load_corpus(const std::filesystem::path& path, DatasetSchema schema) {
  return load_lines<CorpusItem>(path, schema, corpus_item_from_json, validate_corpus_item,
                                [](const CorpusItem& c) -> const Context& { return c.context; });
}

namespace {

template <typename Record, typename Fn>
void write_lines(const std::filesystem::path& path, const std::vector<Record>& records, Fn fn) {
  std::string out;
  for (const auto& r : records) {
    out += fn(r);
    out += '\n';
  }
  write_text_file(path, out);
}

}  // namespace

void write_preference_dataset(const std::filesystem::path& path,
                              const std::vector<PreferenceTriple>& triples) {
  write_lines(path, triples, serialize_triple);
}

void write_mcq_dataset(const std::filesystem::path& path, const std::vector<MCQRecord>& records) {
  write_lines(path, records, serialize_mcq);
}

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusItem>& items) {
  write_lines(path, items, serialize_corpus_item);
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError(path.string() + ": cannot open for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw ValidationError(path.string() + ": write failed");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace esapo
