#include "esapo/trainer.hpp"

#include "esapo/error.hpp"
#include "esapo/parallel.hpp"
#include "esapo/rng.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace esapo {

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (threads == 0) throw ValidationError("threads must be positive");
  loss_config().validate();
}

std::string TrainHistory::to_csv() const {
  std::string out = "step,loss,margin_pd,margin_dn\n";
  for (const auto& r : records) {
    out += fmt::format("{},{:.17g},{:.17g},{:.17g}\n", r.step, r.loss, r.margin_pd, r.margin_dn);
  }
  return out;
}

PolicyParams sgd_step(const PolicyParams& params, const PolicyGradient& grad, double lr) {
  PolicyParams out = params;
  apply_sgd(out, grad, lr);
  return out;
}

void apply_sgd(PolicyParams& params, const PolicyGradient& grad, double lr) {
  if (!(params.shape == grad.shape)) throw ContractError("sgd_step: shape mismatch");
  params.add_scaled(grad, -lr);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

double corpus_nll(const PolicyParams& params, std::span<const CorpusItem> corpus,
                  std::size_t threads) {
  if (corpus.empty()) throw ContractError("corpus_nll: empty corpus");
  std::vector<double> nll(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    nll[i] = -log_prob(params, corpus[i].context, corpus[i].response).total;
  });
  pairwise_reduce(std::span<double>(nll), [](double& a, double b) { a += b; });
  return nll[0] / static_cast<double>(corpus.size());
}

std::pair<double, PolicyGradient> sft_batch(const PolicyParams& params,
                                            std::span<const CorpusItem> corpus,
                                            std::span<const std::size_t> indices,
                                            std::size_t threads) {
  if (indices.empty()) throw ContractError("sft_batch: empty batch");
  struct Term {
    double nll = 0.0;
    PolicyGradient grad;
  };
  std::vector<Term> terms(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t i) {
    const CorpusItem& item = corpus[indices[i]];
    Term& t = terms[i];
    t.grad = PolicyParams::zeros(params.shape);
    t.nll = -accumulate_log_prob_grad(params, context_embed(params.shape, item.context),
                                      item.response.tokens, -1.0, t.grad);
  });
  pairwise_reduce(std::span<Term>(terms), [](Term& a, const Term& b) {
    a.nll += b.nll;
    a.grad.add_scaled(b.grad, 1.0);
  });
  const double inv = 1.0 / static_cast<double>(indices.size());
  PolicyGradient grad = std::move(terms[0].grad);
  grad.W *= inv;
  grad.A *= inv;
  grad.b *= inv;
  return {terms[0].nll * inv, std::move(grad)};
}

namespace {

void guard(double loss, double initial, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw NumericError(fmt::format("non-finite loss at step {}", step));
  }
  if (initial > 0.0 && loss > kDivergenceFactor * initial) {
    throw NumericError(fmt::format("divergence at step {}: loss {:.6g} exceeds {}x initial {:.6g}",
                                   step, loss, kDivergenceFactor, initial));
  }
}

template <typename Fn>
void for_each_batch(std::size_t n, const TrainConfig& cfg, Fn fn) {
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(n, cfg.seed, epoch);
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      fn(step++, std::span<const std::size_t>(order).subspan(begin, end - begin));
    }
  }
}

}  // namespace

SftResult sft(PolicyParams params, std::span<const CorpusItem> corpus, const TrainConfig& cfg) {
  if (corpus.empty()) throw ValidationError("sft: empty corpus");
  cfg.validate();
  SftResult result;
  double initial = 0.0;
  for_each_batch(corpus.size(), cfg, [&](std::size_t step, std::span<const std::size_t> batch) {
    auto [loss, grad] = sft_batch(params, corpus, batch, cfg.threads);
    if (step == 0) initial = std::abs(loss);
    guard(loss, initial, step);
    result.step_losses.push_back(loss);
    apply_sgd(params, grad, cfg.lr);
  });
  result.params = std::move(params);
  return result;
}

PoResult train_po(PolicyParams params, const ReferencePolicy& ref,
                  std::span<const PreferenceTriple> triples, const TrainConfig& cfg) {
  if (triples.empty()) throw ValidationError("train: no preference triples");
  cfg.validate();
  if (!(params.shape == ref.params().shape)) {
    throw ValidationError("train: policy and reference shapes differ");
  }
  const auto ref_lp = reference_log_probs(ref, triples, cfg.threads);
  const LossConfig loss_cfg = cfg.loss_config();
  PoResult result;
  double initial = 0.0;
  for_each_batch(triples.size(), cfg, [&](std::size_t step, std::span<const std::size_t> batch) {
    BatchLoss bl = batch_loss(params, triples, ref_lp, batch, loss_cfg, cfg.threads);
    if (step == 0) initial = std::abs(bl.loss);
    guard(bl.loss, initial, step);
    result.history.records.push_back({step, bl.loss, bl.margin_pd, bl.margin_dn});
    apply_sgd(params, bl.grad, cfg.lr);
  });
  result.params = std::move(params);
  return result;
}

}  // namespace esapo
