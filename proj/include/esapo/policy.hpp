#pragma once

#include "esapo/core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace esapo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::size_t kDefaultPromptDim = 4;

/// Fixed architecture of the linear-softmax bigram policy.
struct PolicyShape {
  std::size_t vocab_size = 0;
  ChannelDims channels;
  std::size_t prompt_dim = kDefaultPromptDim;
  std::uint64_t embed_seed = 0;  // seeds the frozen prompt embedding rows

  std::size_t context_dim() const { return channels.total() + prompt_dim; }
  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

/// Trainable parameters. Step logits are z_t = W·e + A[prev_t] + b, with
/// A indexed (previous token, next token).
struct PolicyParams {
  PolicyShape shape;
  Matrix W;     // vocab_size × context_dim
  RowMatrix A;  // vocab_size × vocab_size
  Vector b;     // vocab_size

  static PolicyParams zeros(const PolicyShape& shape);
  /// i.i.d. uniform in [-0.01, 0.01], drawn W, then A, then b.
  static PolicyParams random_init(const PolicyShape& shape, std::uint64_t seed);

  std::size_t size() const;
  /// Flat view over W (column-major), A (row-major), b, in that order.
  double& coeff(std::size_t i);
  double coeff(std::size_t i) const;

  /// this += alpha · other
  void add_scaled(const PolicyParams& other, double alpha);
  void set_zero();
  bool all_finite() const;

  /// Bitwise equality of shape and every coefficient.
  bool identical(const PolicyParams& other) const;
};

using PolicyGradient = PolicyParams;

/// Frozen snapshot of a policy; there is no mutable access to its parameters.
class ReferencePolicy {
 public:
  explicit ReferencePolicy(PolicyParams params) : params_(std::move(params)) {}

  const PolicyParams& params() const { return params_; }

 private:
  const PolicyParams params_;
};

ReferencePolicy snapshot_reference(const PolicyParams& params);

/// Frozen prompt embedding row for `token`.
Vector prompt_embedding_row(const PolicyShape& shape, TokenId token);

/// [image ‖ saliency ‖ quality ‖ mean prompt embedding]; the prompt block is
/// zero for an empty prompt. Throws ValidationError on a dimension mismatch.
Vector context_embed(const PolicyShape& shape, const Context& ctx);

/// Log-softmax of the step logits after `prev`.
Vector step_log_probs(const PolicyParams& params, const Vector& embedding, TokenId prev);

struct LogProb {
  double total = 0.0;  // sum of per_token, accumulated left to right
  std::vector<double> per_token;
};

LogProb log_prob(const PolicyParams& params, const Vector& embedding, const TokenSeq& tokens);
LogProb log_prob(const PolicyParams& params, const Context& ctx, const Response& response);

/// grad += scale · ∇θ log π(tokens | embedding). Returns log π.
double accumulate_log_prob_grad(const PolicyParams& params, const Vector& embedding,
                                const TokenSeq& tokens, double scale, PolicyGradient& grad);

PolicyGradient log_prob_grad(const PolicyParams& params, const Context& ctx,
                             const Response& response);

/// log π(y|x), divided by |y| when `normalize` is set.
double option_score(const PolicyParams& params, const Vector& embedding, const Response& response,
                    bool normalize);
double option_score(const PolicyParams& params, const Context& ctx, const Response& response,
                    bool normalize);

/// A parameter file: shape header, free-form metadata (JSON text) and the raw
/// coefficients. Round-trips bit-exactly.
struct Checkpoint {
  PolicyParams params;
  std::string metadata;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace esapo
