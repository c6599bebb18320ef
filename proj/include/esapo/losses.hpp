#pragma once

#include "esapo/core.hpp"
#include "esapo/policy.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace esapo {

inline constexpr double kDefaultBeta = 0.1;
inline constexpr double kDefaultCdpoEps = 0.1;
inline constexpr double kDefaultIpoTau = 0.1;

enum class Method { EsaPo, Dpo, Cdpo, Ipo };

std::string_view to_string(Method m);
std::optional<Method> parse_method(std::string_view s);

/// Loss value and its gradient with respect to the reward inputs.
struct LossOutput {
  double loss = 0.0;
  std::vector<double> grad_r;
};

/// β · (log π_θ(y|x) − log π_ref(y|x))
double reward(double beta, double logp_theta, double logp_ref);

double logsumexp(std::span<const double> x);
/// log(1 + e^x) without overflow.
double softplus(double x);

/// Log-probability of the ordering r[0] ≻ r[1] ≻ … under Plackett–Luce
/// with utilities r: Σ_{i<K-1} (r_i − logsumexp(r_i..r_{K-1})). The last
/// factor is identically 1 and skipped.
double pl_rank_log_prob(std::span<const double> r);

/// Listwise ranking NLL −pl_rank_log_prob(r). Requires K ≥ 2.
LossOutput esa_po_loss(std::span<const double> r);

/// softplus(−(r_c − r_r)); rewards already carry β.
LossOutput dpo_loss(double r_c, double r_r);

/// Label-smoothed DPO: (1−eps)·softplus(−Δ) + eps·softplus(Δ), eps ∈ [0, 0.5).
LossOutput cdpo_loss(double r_c, double r_r, double eps);

/// (h − 1/(2τ))² with h the difference of per-token mean log-ratios.
LossOutput ipo_loss(double avg_logratio_c, double avg_logratio_r, double tau);

struct LossConfig {
  Method method = Method::EsaPo;
  double beta = kDefaultBeta;
  double eps = kDefaultCdpoEps;
  double tau = kDefaultIpoTau;

  void validate() const;
};

/// Per-triple loss through the reward layer. For the pairwise methods the
/// triple contributes (positive, negative) as (chosen, rejected).
LossOutput method_loss(const LossConfig& cfg, std::span<const double> rewards3,
                       std::span<const double> avg_logratios3);

struct RefLogProbs {
  double positive = 0.0;
  double suboptimal = 0.0;
  double negative = 0.0;
};

std::vector<RefLogProbs> reference_log_probs(const ReferencePolicy& ref,
                                             std::span<const PreferenceTriple> triples,
                                             std::size_t threads = 1);

struct BatchLoss {
  double loss = 0.0;
  PolicyGradient grad;
  double margin_pd = 0.0;  // mean r_p − r_d
  double margin_dn = 0.0;  // mean r_d − r_n
};

/// Mean loss over the batch and its parameter gradient. Per-triple terms are
/// combined with a fixed pairwise tree, so the result does not depend on
/// `threads`.
BatchLoss batch_loss(const PolicyParams& params, const ReferencePolicy& ref,
                     std::span<const PreferenceTriple> triples, const LossConfig& cfg,
                     std::size_t threads = 1);

/// Same, over triples[indices[*]] with precomputed reference log-probs.
BatchLoss batch_loss(const PolicyParams& params, std::span<const PreferenceTriple> triples,
                     std::span<const RefLogProbs> ref_log_probs,
                     std::span<const std::size_t> indices, const LossConfig& cfg,
                     std::size_t threads = 1);

struct MarginSummary {
  double margin_pd = 0.0;
  double margin_dn = 0.0;
};

/// Mean β-scaled reward margins of `params` against `ref` over `triples`.
MarginSummary reward_margins(const PolicyParams& params, const ReferencePolicy& ref,
                             std::span<const PreferenceTriple> triples, double beta,
                             std::size_t threads = 1);

}  // namespace esapo
