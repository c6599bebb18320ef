#include "doctest.h"

#include "esapo/datagen.hpp"
#include "esapo/error.hpp"
#include "esapo/toy.hpp"
#include "esapo/trainer.hpp"

#include <algorithm>
#include <cmath>

using namespace esapo;

namespace {

const PolicyShape kShape{64, toy::kDims, 4, 0};

std::vector<PreferenceTriple> toy_triples(std::size_t n, std::uint64_t seed) {
  const auto corpus = toy::make_corpus(n, seed);
  DatagenConfig cfg;
  cfg.seed = seed;
  return build_triples(corpus, cfg, Completer::fit_unigram(corpus, 64), toy::vocab()).triples;
}

}  // namespace

TEST_CASE("sgd step identities") {
  const PolicyParams p = PolicyParams::random_init(kShape, 1);
  const PolicyGradient g = PolicyParams::random_init(kShape, 2);
  CHECK(sgd_step(p, g, 0.0).identical(p));
  CHECK(sgd_step(p, PolicyParams::zeros(kShape), 0.5).identical(p));

  // f(θ) = ½‖θ − c‖², ∇f = θ − c, so one step lands at θ − lr·(θ − c).
  const PolicyParams c = PolicyParams::random_init(kShape, 3);
  PolicyGradient grad = p;
  grad.add_scaled(c, -1.0);
  const PolicyParams next = sgd_step(p, grad, 0.25);
  for (std::size_t i = 0; i < p.size(); i += 13) {
    CHECK(next.coeff(i) == doctest::Approx(0.75 * p.coeff(i) + 0.25 * c.coeff(i)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(sgd_step(p, PolicyParams::zeros({3, {}, 1, 0}), 1.0), ContractError);
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(50, 7, 0);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(a == epoch_order(50, 7, 0));
  CHECK(a != epoch_order(50, 7, 1));
  CHECK(a != epoch_order(50, 8, 0));
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.beta = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("zero epochs leave the parameters unchanged") {
  const PolicyParams p = PolicyParams::random_init(kShape, 4);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto corpus = toy::make_corpus(10, 1);
  const SftResult s = sft(p, corpus, cfg);
  CHECK(s.params.identical(p));
  CHECK(s.step_losses.empty());
  const PoResult r = train_po(p, snapshot_reference(p), toy_triples(10, 1), cfg);
  CHECK(r.params.identical(p));
  CHECK(r.history.records.empty());
}

TEST_CASE("single-item sft climbs monotonically") {
  const auto corpus = toy::make_corpus(1, 9);
  PolicyParams p = PolicyParams::random_init(kShape, 2);
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.epochs = 1;
  double prev = log_prob(p, corpus[0].context, corpus[0].response).total;
  const double start = prev;
  for (int step = 0; step < 200; ++step) {
    p = sft(std::move(p), corpus, cfg).params;
    const double lp = log_prob(p, corpus[0].context, corpus[0].response).total;
    CHECK(lp > prev);
    REQUIRE(lp < 0.0);
    prev = lp;
  }
  CHECK(prev > start + 5.0);
}

TEST_CASE("sft lowers the corpus nll") {
  const auto corpus = toy::make_corpus(64, 3);
  const PolicyParams p = PolicyParams::random_init(kShape, 1);
  TrainConfig cfg;
  cfg.epochs = 10;
  const SftResult s = sft(p, corpus, cfg);
  CHECK(s.step_losses.size() == 80);
  CHECK(corpus_nll(s.params, corpus) < corpus_nll(p, corpus));
  CHECK(corpus_nll(p, corpus) == doctest::Approx(4.0 * std::log(64.0)).epsilon(1e-2));
}

TEST_CASE("training is deterministic for any thread count") {
  const auto corpus = toy::make_corpus(40, 5);
  const auto triples = toy_triples(40, 5);
  const PolicyParams p = PolicyParams::random_init(kShape, 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 11;
  cfg.lr = 1.0;
  const SftResult s1 = sft(p, corpus, cfg);
  const SftResult s1b = sft(p, corpus, cfg);
  CHECK(s1.params.identical(s1b.params));
  const ReferencePolicy ref = snapshot_reference(s1.params);
  const PoResult a = train_po(s1.params, ref, triples, cfg);
  cfg.threads = 4;
  const SftResult s4 = sft(p, corpus, cfg);
  CHECK(s4.params.identical(s1.params));
  const PoResult b = train_po(s1.params, ref, triples, cfg);
  CHECK(a.params.identical(b.params));
  CHECK(a.history.to_csv() == b.history.to_csv());
  cfg.seed = 12;
  CHECK_FALSE(train_po(s1.params, ref, triples, cfg).params.identical(a.params));
}

TEST_CASE("step zero at the reference") {
  const auto triples = toy_triples(24, 2);
  const PolicyParams p = PolicyParams::random_init(kShape, 6);
  const ReferencePolicy ref = snapshot_reference(p);
  TrainConfig cfg;
  cfg.epochs = 1;
  for (auto [method, expected] : {std::pair{Method::EsaPo, std::log(6.0)},
                                  std::pair{Method::Dpo, std::log(2.0)}}) {
    cfg.method = method;
    const PoResult r = train_po(p, ref, triples, cfg);
    REQUIRE(r.history.records.size() == 3);
    const HistoryRecord& h = r.history.records[0];
    CHECK(h.step == 0);
    CHECK(std::abs(h.loss - expected) < 1e-12);
    CHECK(h.margin_pd == 0.0);
    CHECK(h.margin_dn == 0.0);
    CHECK(r.history.records[2].step == 2);
  }
}

TEST_CASE("preference training moves the margins") {
  const auto corpus = toy::make_corpus(100, 7);
  const auto triples = toy_triples(100, 7);
  TrainConfig sft_cfg;
  sft_cfg.epochs = 20;
  const PolicyParams s = sft(PolicyParams::random_init(kShape, 1), corpus, sft_cfg).params;
  const ReferencePolicy ref = snapshot_reference(s);
  TrainConfig cfg;
  cfg.lr = kDefaultPoLearningRate;
  cfg.epochs = 20;
  const PoResult r = train_po(s, ref, triples, cfg);
  const MarginSummary m = reward_margins(r.params, ref, triples, cfg.beta);
  CHECK(m.margin_pd > 0.0);
  CHECK(m.margin_dn > 0.0);
  CHECK(r.history.records.back().loss < std::log(6.0));
}

TEST_CASE("divergence is reported with the step") {
  const auto corpus = toy::make_corpus(32, 1);
  TrainConfig cfg;
  cfg.lr = 1e4;
  cfg.epochs = 5;
  try {
    sft(PolicyParams::random_init(kShape, 1), corpus, cfg);
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("history csv") {
  TrainHistory h;
  h.records.push_back({0, std::log(6.0), 0.0, -0.5});
  CHECK(h.to_csv() == "step,loss,margin_pd,margin_dn\n0,1.791759469228055,0,-0.5\n");
}
