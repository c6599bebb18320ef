#include "esapo/gradcheck.hpp"

#include "esapo/losses.hpp"
#include "esapo/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace esapo {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

std::vector<double> numeric_param_gradient(const std::function<double(const PolicyParams&)>& f,
                                           PolicyParams params, double h) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double x0 = params.coeff(i);
    params.coeff(i) = x0 + h;
    const double up = f(params);
    params.coeff(i) = x0 - h;
    const double down = f(params);
    params.coeff(i) = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
  }
  return worst;
}

std::vector<double> flatten(const PolicyParams& p) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p.coeff(i);
  return out;
}

RandomInstance random_instance(std::uint64_t seed) {
  Rng rng(seed);
  PolicyShape shape;
  shape.vocab_size = 2 + rng.uniform_index(7);
  shape.channels.image = 1 + rng.uniform_index(3);
  shape.channels.saliency = rng.uniform_index(3);
  shape.channels.quality = rng.uniform_index(2);
  shape.prompt_dim = rng.uniform_index(3);
  shape.embed_seed = rng.next_u64();

  RandomInstance inst;
  inst.params = PolicyParams::zeros(shape);
  inst.ref_params = PolicyParams::zeros(shape);
  for (std::size_t i = 0; i < inst.params.size(); ++i) {
    inst.params.coeff(i) = rng.uniform(-1.0, 1.0);
    inst.ref_params.coeff(i) = inst.params.coeff(i) + rng.uniform(-0.5, 0.5);
  }
  inst.beta = rng.uniform(0.1, 1.0);
  inst.eps = rng.uniform(0.0, 0.45);
  inst.tau = rng.uniform(0.05, 1.0);

  auto random_tokens = [&] {
    TokenSeq t(1 + rng.uniform_index(5));
    for (auto& x : t) x = static_cast<TokenId>(rng.uniform_index(shape.vocab_size));
    return t;
  };
  const std::size_t n_triples = 1 + rng.uniform_index(3);
  for (std::size_t k = 0; k < n_triples; ++k) {
    PreferenceTriple t;
    auto fill = [&](std::vector<double>& v, std::size_t n) {
      v.resize(n);
      for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    };
    t.context.id = "g" + std::to_string(k);
    fill(t.context.image, shape.channels.image);
    fill(t.context.saliency, shape.channels.saliency);
    fill(t.context.quality, shape.channels.quality);
    t.context.prompt.resize(rng.uniform_index(4));
    for (auto& x : t.context.prompt) x = static_cast<TokenId>(rng.uniform_index(shape.vocab_size));
    t.positive.tokens = random_tokens();
    do {
      t.suboptimal.tokens = random_tokens();
    } while (t.suboptimal == t.positive);
    do {
      t.negative.tokens = random_tokens();
    } while (t.negative == t.positive || t.negative == t.suboptimal);
    inst.triples.push_back(std::move(t));
  }
  return inst;
}

std::vector<GradcheckRow> run_gradcheck(const GradcheckConfig& cfg) {
  std::vector<GradcheckRow> rows;
  auto record = [&](std::string name, double err) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.check == name; });
    if (it == rows.end()) {
      rows.push_back({std::move(name), 0, 0.0, true});
      it = rows.end() - 1;
    }
    ++it->instances;
    it->max_rel_error = std::max(it->max_rel_error, err);
    it->passed = it->max_rel_error < cfg.tolerance;
  };

  for (std::size_t n = 0; n < cfg.instances; ++n) {
    const std::uint64_t seed = mix_seed(cfg.seed, n);
    const RandomInstance inst = random_instance(seed);
    Rng rng(mix_seed(seed, 1));

    std::vector<double> r3(3), r2(2);
    for (auto& x : r3) x = rng.uniform(-5.0, 5.0);
    for (auto& x : r2) x = rng.uniform(-5.0, 5.0);

    record("esa_po/rewards",
           max_relative_error(esa_po_loss(r3).grad_r,
                              numeric_gradient([](std::span<const double> r) { return esa_po_loss(r).loss; }, r3,
                                               cfg.h)));
    record("dpo/rewards",
           max_relative_error(dpo_loss(r2[0], r2[1]).grad_r,
                              numeric_gradient([](std::span<const double> r) { return dpo_loss(r[0], r[1]).loss; },
                                               r2, cfg.h)));
    record("cdpo/rewards",
           max_relative_error(
               cdpo_loss(r2[0], r2[1], inst.eps).grad_r,
               numeric_gradient(
                   [&](std::span<const double> r) { return cdpo_loss(r[0], r[1], inst.eps).loss; }, r2, cfg.h)));
    record("ipo/rewards",
           max_relative_error(
               ipo_loss(r2[0], r2[1], inst.tau).grad_r,
               numeric_gradient(
                   [&](std::span<const double> r) { return ipo_loss(r[0], r[1], inst.tau).loss; }, r2, cfg.h)));

    const PreferenceTriple& t0 = inst.triples.front();
    record("log_prob/params",
           max_relative_error(
               flatten(log_prob_grad(inst.params, t0.context, t0.positive)),
               numeric_param_gradient(
                   [&](const PolicyParams& p) { return log_prob(p, t0.context, t0.positive).total; },
                   inst.params, cfg.h)));

    const ReferencePolicy ref = snapshot_reference(inst.ref_params);
    for (Method m : {Method::EsaPo, Method::Dpo, Method::Cdpo, Method::Ipo}) {
      const LossConfig lc{m, inst.beta, inst.eps, inst.tau};
      const auto analytic = flatten(batch_loss(inst.params, ref, inst.triples, lc).grad);
      const auto numeric = numeric_param_gradient(
          [&](const PolicyParams& p) { return batch_loss(p, ref, inst.triples, lc).loss; },
          inst.params, cfg.h);
      record(fmt::format("batch_{}/params", to_string(m)), max_relative_error(analytic, numeric));
    }
  }
  return rows;
}

std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows) {
  std::string out = "check,instances,max_rel_error,status\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.3e},{}\n", r.check, r.instances, r.max_rel_error,
                       r.passed ? "pass" : "FAIL");
  }
  return out;
}

}  // namespace esapo
