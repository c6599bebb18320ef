#include "esapo/losses.hpp"

#include "esapo/error.hpp"
#include "esapo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace esapo {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::EsaPo: return "esa_po";
    case Method::Dpo: return "dpo";
    case Method::Cdpo: return "cdpo";
    case Method::Ipo: return "ipo";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view s) {
  for (Method m : {Method::EsaPo, Method::Dpo, Method::Cdpo, Method::Ipo}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

double reward(double beta, double logp_theta, double logp_ref) {
  return beta * (logp_theta - logp_ref);
}

double logsumexp(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double pl_rank_log_prob(std::span<const double> r) {
  if (r.size() < 2) throw ContractError("pl_rank_log_prob: need at least two rewards");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) total += r[i] - logsumexp(r.subspan(i));
  return total;
}

LossOutput esa_po_loss(std::span<const double> r) {
  if (r.size() < 2) throw ContractError("esa_po_loss: need at least two rewards");
  const std::size_t k = r.size();
  LossOutput out;
  out.grad_r.assign(k, 0.0);
  // Stage i selects r[i] from the remaining r[i..]; its NLL gradient is
  // softmax(r[i..]) minus the indicator of the selected item.
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const double lse = logsumexp(r.subspan(i));
    out.loss += lse - r[i];
    for (std::size_t j = i; j < k; ++j) out.grad_r[j] += std::exp(r[j] - lse);
    out.grad_r[i] -= 1.0;
  }
  return out;
}

LossOutput dpo_loss(double r_c, double r_r) {
  const double delta = r_c - r_r;
  const double sig_neg = std::exp(-softplus(delta));  // σ(−Δ)
  return {softplus(-delta), {-sig_neg, sig_neg}};
}

LossOutput cdpo_loss(double r_c, double r_r, double eps) {
  if (!(eps >= 0.0 && eps < 0.5)) throw ValidationError("cdpo: eps must lie in [0, 0.5)");
  const double delta = r_c - r_r;
  const double sig_neg = std::exp(-softplus(delta));
  const double sig_pos = std::exp(-softplus(-delta));
  const double d = -(1.0 - eps) * sig_neg + eps * sig_pos;
  return {(1.0 - eps) * softplus(-delta) + eps * softplus(delta), {d, -d}};
}

LossOutput ipo_loss(double avg_logratio_c, double avg_logratio_r, double tau) {
  if (!(tau > 0.0)) throw ValidationError("ipo: tau must be positive");
  const double gap = (avg_logratio_c - avg_logratio_r) - 1.0 / (2.0 * tau);
  return {gap * gap, {2.0 * gap, -2.0 * gap}};
}

void LossConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be positive");
  if (method == Method::Cdpo && !(eps >= 0.0 && eps < 0.5)) {
    throw ValidationError("eps must lie in [0, 0.5)");
  }
  if (method == Method::Ipo && !(tau > 0.0)) throw ValidationError("tau must be positive");
}

LossOutput method_loss(const LossConfig& cfg, std::span<const double> rewards3,
                       std::span<const double> avg_logratios3) {
  switch (cfg.method) {
    case Method::EsaPo: return esa_po_loss(rewards3);
    case Method::Dpo: return dpo_loss(rewards3[0], rewards3[2]);
    case Method::Cdpo: return cdpo_loss(rewards3[0], rewards3[2], cfg.eps);
    case Method::Ipo: return ipo_loss(avg_logratios3[0], avg_logratios3[2], cfg.tau);
  }
  throw ContractError("unknown method");
}

std::vector<RefLogProbs> reference_log_probs(const ReferencePolicy& ref,
                                             std::span<const PreferenceTriple> triples,
                                             std::size_t threads) {
  std::vector<RefLogProbs> out(triples.size());
  const PolicyParams& p = ref.params();
  parallel_for(triples.size(), threads, [&](std::size_t i) {
    const auto& t = triples[i];
    const Vector e = context_embed(p.shape, t.context);
    out[i] = {log_prob(p, e, t.positive.tokens).total, log_prob(p, e, t.suboptimal.tokens).total,
              log_prob(p, e, t.negative.tokens).total};
  });
  return out;
}

namespace {

struct TripleTerm {
  double loss = 0.0;
  double margin_pd = 0.0;
  double margin_dn = 0.0;
  PolicyGradient grad;
};

TripleTerm triple_term(const PolicyParams& params, const PreferenceTriple& t,
                       const RefLogProbs& ref, const LossConfig& cfg) {
  const Vector e = context_embed(params.shape, t.context);
  const Response* responses[3] = {&t.positive, &t.suboptimal, &t.negative};
  const double ref_lp[3] = {ref.positive, ref.suboptimal, ref.negative};
  double rewards[3];
  double avg_logratio[3];
  for (int k = 0; k < 3; ++k) {
    const double lp = log_prob(params, e, responses[k]->tokens).total;
    rewards[k] = reward(cfg.beta, lp, ref_lp[k]);
    avg_logratio[k] = (lp - ref_lp[k]) / static_cast<double>(responses[k]->size());
  }
  const LossOutput lo = method_loss(cfg, rewards, avg_logratio);

  // Chain rule: ∂r_k/∂θ = β ∇log π_θ(y_k); IPO's inputs are per-token means.
  double scale[3] = {0.0, 0.0, 0.0};
  switch (cfg.method) {
    case Method::EsaPo:
      for (int k = 0; k < 3; ++k) scale[k] = lo.grad_r[k] * cfg.beta;
      break;
    case Method::Dpo:
    case Method::Cdpo:
      scale[0] = lo.grad_r[0] * cfg.beta;
      scale[2] = lo.grad_r[1] * cfg.beta;
      break;
    case Method::Ipo:
      scale[0] = lo.grad_r[0] / static_cast<double>(t.positive.size());
      scale[2] = lo.grad_r[1] / static_cast<double>(t.negative.size());
      break;
  }

  TripleTerm term;
  term.loss = lo.loss;
  term.margin_pd = rewards[0] - rewards[1];
  term.margin_dn = rewards[1] - rewards[2];
  term.grad = PolicyParams::zeros(params.shape);
  for (int k = 0; k < 3; ++k) {
    if (scale[k] != 0.0) {
      accumulate_log_prob_grad(params, e, responses[k]->tokens, scale[k], term.grad);
    }
  }
  return term;
}

}  // namespace

BatchLoss batch_loss(const PolicyParams& params, std::span<const PreferenceTriple> triples,
                     std::span<const RefLogProbs> ref_log_probs,
                     std::span<const std::size_t> indices, const LossConfig& cfg,
                     std::size_t threads) {
  if (indices.empty()) throw ContractError("batch_loss: empty batch");
  cfg.validate();
  std::vector<TripleTerm> terms(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t i) {
    const std::size_t idx = indices[i];
    terms[i] = triple_term(params, triples[idx], ref_log_probs[idx], cfg);
  });
  pairwise_reduce(std::span<TripleTerm>(terms), [](TripleTerm& acc, const TripleTerm& x) {
    acc.loss += x.loss;
    acc.margin_pd += x.margin_pd;
    acc.margin_dn += x.margin_dn;
    acc.grad.add_scaled(x.grad, 1.0);
  });
  const double inv = 1.0 / static_cast<double>(indices.size());
  BatchLoss out;
  out.loss = terms[0].loss * inv;
  out.margin_pd = terms[0].margin_pd * inv;
  out.margin_dn = terms[0].margin_dn * inv;
  out.grad = std::move(terms[0].grad);
  out.grad.W *= inv;
  out.grad.A *= inv;
  out.grad.b *= inv;
  return out;
}

BatchLoss batch_loss(const PolicyParams& params, const ReferencePolicy& ref,
                     std::span<const PreferenceTriple> triples, const LossConfig& cfg,
                     std::size_t threads) {
  if (triples.empty()) throw ContractError("batch_loss: empty batch");
  const auto ref_lp = reference_log_probs(ref, triples, threads);
  std::vector<std::size_t> indices(triples.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  return batch_loss(params, triples, ref_lp, indices, cfg, threads);
}

MarginSummary reward_margins(const PolicyParams& params, const ReferencePolicy& ref,
                             std::span<const PreferenceTriple> triples, double beta,
                             std::size_t threads) {
  if (triples.empty()) throw ContractError("reward_margins: no triples");
  const auto ref_lp = reference_log_probs(ref, triples, threads);
  std::vector<MarginSummary> per(triples.size());
  parallel_for(triples.size(), threads, [&](std::size_t i) {
    const auto& t = triples[i];
    const Vector e = context_embed(params.shape, t.context);
    const double rp = reward(beta, log_prob(params, e, t.positive.tokens).total, ref_lp[i].positive);
    const double rd =
        reward(beta, log_prob(params, e, t.suboptimal.tokens).total, ref_lp[i].suboptimal);
    const double rn = reward(beta, log_prob(params, e, t.negative.tokens).total, ref_lp[i].negative);
    per[i] = {rp - rd, rd - rn};
  });
  pairwise_reduce(std::span<MarginSummary>(per), [](MarginSummary& a, const MarginSummary& b) {
    a.margin_pd += b.margin_pd;
    a.margin_dn += b.margin_dn;
  });
  const double inv = 1.0 / static_cast<double>(triples.size());
  return {per[0].margin_pd * inv, per[0].margin_dn * inv};
}

}  // namespace esapo
