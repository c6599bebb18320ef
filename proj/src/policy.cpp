#include "esapo/policy.hpp"

#include "esapo/error.hpp"
#include "esapo/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace esapo {

PolicyParams PolicyParams::zeros(const PolicyShape& shape) {
  PolicyParams p;
  p.shape = shape;
  const auto v = static_cast<Eigen::Index>(shape.vocab_size);
  p.W = Matrix::Zero(v, static_cast<Eigen::Index>(shape.context_dim()));
  p.A = RowMatrix::Zero(v, v);
  p.b = Vector::Zero(v);
  return p;
}

PolicyParams PolicyParams::random_init(const PolicyShape& shape, std::uint64_t seed) {
  PolicyParams p = zeros(shape);
  Rng rng(seed);
  for (std::size_t i = 0; i < p.size(); ++i) p.coeff(i) = rng.uniform(-0.01, 0.01);
  return p;
}

std::size_t PolicyParams::size() const {
  return static_cast<std::size_t>(W.size() + A.size() + b.size());
}

double& PolicyParams::coeff(std::size_t i) {
  const auto nw = static_cast<std::size_t>(W.size());
  const auto na = static_cast<std::size_t>(A.size());
  if (i < nw) return W.data()[i];
  if (i < nw + na) return A.data()[i - nw];
  return b.data()[i - nw - na];
}

double PolicyParams::coeff(std::size_t i) const {
  return const_cast<PolicyParams&>(*this).coeff(i);
}

void PolicyParams::add_scaled(const PolicyParams& other, double alpha) {
  W += alpha * other.W;
  A += alpha * other.A;
  b += alpha * other.b;
}

void PolicyParams::set_zero() {
  W.setZero();
  A.setZero();
  b.setZero();
}

bool PolicyParams::all_finite() const {
  return W.allFinite() && A.allFinite() && b.allFinite();
}

bool PolicyParams::identical(const PolicyParams& other) const {
  if (!(shape == other.shape) || W.rows() != other.W.rows() || W.cols() != other.W.cols() ||
      A.size() != other.A.size() || b.size() != other.b.size()) {
    return false;
  }
  auto same = [](const double* x, const double* y, Eigen::Index n) {
    return std::memcmp(x, y, static_cast<std::size_t>(n) * sizeof(double)) == 0;
  };
  return same(W.data(), other.W.data(), W.size()) && same(A.data(), other.A.data(), A.size()) &&
         same(b.data(), other.b.data(), b.size());
}

ReferencePolicy snapshot_reference(const PolicyParams& params) {
  if (!params.all_finite()) throw NumericError("snapshot_reference: non-finite parameters");
  return ReferencePolicy(params);
}

Vector prompt_embedding_row(const PolicyShape& shape, TokenId token) {
  Vector row(static_cast<Eigen::Index>(shape.prompt_dim));
  for (std::size_t j = 0; j < shape.prompt_dim; ++j) {
    const std::uint64_t bits =
        mix_seed(shape.embed_seed, static_cast<std::uint64_t>(token) * shape.prompt_dim + j);
    row[static_cast<Eigen::Index>(j)] = 2.0 * bits_to_unit(bits) - 1.0;
  }
  return row;
}

Vector context_embed(const PolicyShape& shape, const Context& ctx) {
  if (!(ctx.dims() == shape.channels)) {
    throw ValidationError("context " + ctx.id + ": channel dimensions do not match the policy");
  }
  Vector e = Vector::Zero(static_cast<Eigen::Index>(shape.context_dim()));
  Eigen::Index k = 0;
  for (const auto* channel : {&ctx.image, &ctx.saliency, &ctx.quality}) {
    for (double x : *channel) e[k++] = x;
  }
  if (!ctx.prompt.empty()) {
    Vector bag = Vector::Zero(static_cast<Eigen::Index>(shape.prompt_dim));
    for (TokenId t : ctx.prompt) bag += prompt_embedding_row(shape, t);
    e.tail(static_cast<Eigen::Index>(shape.prompt_dim)) =
        bag / static_cast<double>(ctx.prompt.size());
  }
  return e;
}

namespace {

Vector step_logits(const PolicyParams& params, const Vector& embedding, TokenId prev) {
  return params.W * embedding + params.A.row(prev).transpose() + params.b;
}

Vector log_softmax(const Vector& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

void check_tokens(const PolicyParams& params, const TokenSeq& tokens) {
  for (TokenId t : tokens) {
    if (t >= params.shape.vocab_size) throw ValidationError("response: token id out of range");
  }
}

}  // namespace

Vector step_log_probs(const PolicyParams& params, const Vector& embedding, TokenId prev) {
  return log_softmax(step_logits(params, embedding, prev));
}

LogProb log_prob(const PolicyParams& params, const Vector& embedding, const TokenSeq& tokens) {
  check_tokens(params, tokens);
  LogProb out;
  out.per_token.reserve(tokens.size());
  TokenId prev = kBosToken;
  for (TokenId y : tokens) {
    const double lp = step_log_probs(params, embedding, prev)[y];
    out.per_token.push_back(lp);
    out.total += lp;
    prev = y;
  }
  return out;
}

LogProb log_prob(const PolicyParams& params, const Context& ctx, const Response& response) {
  return log_prob(params, context_embed(params.shape, ctx), response.tokens);
}

double accumulate_log_prob_grad(const PolicyParams& params, const Vector& embedding,
                                const TokenSeq& tokens, double scale, PolicyGradient& grad) {
  check_tokens(params, tokens);
  double total = 0.0;
  TokenId prev = kBosToken;
  for (TokenId y : tokens) {
    const Vector logp = step_log_probs(params, embedding, prev);
    total += logp[y];
    // d log softmax(z)[y] / dz = onehot(y) - softmax(z)
    Vector dz = -logp.array().exp();
    dz[y] += 1.0;
    dz *= scale;
    grad.W.noalias() += dz * embedding.transpose();
    grad.A.row(prev) += dz.transpose();
    grad.b += dz;
    prev = y;
  }
  return total;
}

PolicyGradient log_prob_grad(const PolicyParams& params, const Context& ctx,
                             const Response& response) {
  PolicyGradient g = PolicyParams::zeros(params.shape);
  accumulate_log_prob_grad(params, context_embed(params.shape, ctx), response.tokens, 1.0, g);
  return g;
}

double option_score(const PolicyParams& params, const Vector& embedding, const Response& response,
                    bool normalize) {
  const double lp = log_prob(params, embedding, response.tokens).total;
  return normalize ? lp / static_cast<double>(response.size()) : lp;
}

double option_score(const PolicyParams& params, const Context& ctx, const Response& response,
                    bool normalize) {
  return option_score(params, context_embed(params.shape, ctx), response, normalize);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'E', 'S', 'A', 'P', 'O', 'C', 'K', '1'};

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_reals(std::string& out, const double* data, Eigen::Index n) {
  out.append(reinterpret_cast<const char*>(data), static_cast<std::size_t>(n) * sizeof(double));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }

  void take(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ValidationError("checkpoint: truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const PolicyShape& s = ckpt.params.shape;
  std::string out(kMagic, sizeof(kMagic));
  for (std::uint64_t v : {std::uint64_t{s.vocab_size}, std::uint64_t{s.channels.image},
                          std::uint64_t{s.channels.saliency}, std::uint64_t{s.channels.quality},
                          std::uint64_t{s.prompt_dim}, s.embed_seed,
                          std::uint64_t{ckpt.metadata.size()}}) {
    put(out, v);
  }
  out += ckpt.metadata;
  put_reals(out, ckpt.params.W.data(), ckpt.params.W.size());
  put_reals(out, ckpt.params.A.data(), ckpt.params.A.size());
  put_reals(out, ckpt.params.b.data(), ckpt.params.b.size());
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  char magic[sizeof(kMagic)];
  in.take(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ValidationError("checkpoint: bad magic");
  PolicyShape s;
  s.vocab_size = in.get<std::uint64_t>();
  s.channels.image = in.get<std::uint64_t>();
  s.channels.saliency = in.get<std::uint64_t>();
  s.channels.quality = in.get<std::uint64_t>();
  s.prompt_dim = in.get<std::uint64_t>();
  s.embed_seed = in.get<std::uint64_t>();
  const auto meta_len = in.get<std::uint64_t>();
  if (s.vocab_size < 2 || s.vocab_size > (1u << 16) || s.context_dim() > (1u << 16) ||
      meta_len > bytes.size()) {
    throw ValidationError("checkpoint: implausible shape header");
  }
  Checkpoint ckpt;
  ckpt.metadata.resize(meta_len);
  in.take(ckpt.metadata.data(), meta_len);
  ckpt.params = PolicyParams::zeros(s);
  auto& p = ckpt.params;
  in.take(p.W.data(), static_cast<std::size_t>(p.W.size()) * sizeof(double));
  in.take(p.A.data(), static_cast<std::size_t>(p.A.size()) * sizeof(double));
  in.take(p.b.data(), static_cast<std::size_t>(p.b.size()) * sizeof(double));
  if (!in.done()) throw ValidationError("checkpoint: trailing bytes");
  if (!p.all_finite()) throw ValidationError("checkpoint: non-finite parameters");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_text_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace esapo
