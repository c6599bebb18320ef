// Acceptance suite: one line per criterion, exit status 1 if any fails.

#include "oracles.hpp"
#include "test_util.hpp"

#include "esapo/cli.hpp"
#include "esapo/core.hpp"
#include "esapo/datagen.hpp"
#include "esapo/eval.hpp"
#include "esapo/gradcheck.hpp"
#include "esapo/losses.hpp"
#include "esapo/policy.hpp"
#include "esapo/rng.hpp"
#include "esapo/toy.hpp"
#include "esapo/trainer.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

using namespace esapo;
using esapo::testing::data_file;
using esapo::testing::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed = seconds_since(t0);
  bool pass = o.pass;
  if (budget_s > 0 && elapsed >= budget_s) {
    pass = false;
    o.detail += fmt::format("; over the {:.0f} s budget", budget_s);
  }
  if (!pass) ++failures;
  std::cout << fmt::format("[{}] {} {}: {} ({:.2f} s)", pass ? "PASS" : "FAIL", id, name, o.detail,
                           elapsed)
            << std::endl;
}

int cli_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) {
    std::cerr << "command failed (" << code << "):";
    for (const auto& a : args) std::cerr << ' ' << a;
    std::cerr << "\n" << err.str();
  }
  return code;
}

DatasetSchema toy_schema() { return {toy::vocab(), std::nullopt, kDefaultMaxLen}; }

// ---------------------------------------------------------------------------

Outcome pl_normalization() {
  Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::array<double, 3> r{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    std::array<int, 3> perm{0, 1, 2};
    double total = 0.0;
    do {
      const std::array<double, 3> ordered{r[perm[0]], r[perm[1]], r[perm[2]]};
      total += std::exp(pl_rank_log_prob(ordered));
    } while (std::next_permutation(perm.begin(), perm.end()));
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return {worst < 1e-9, fmt::format("max |sum over 6 orderings - 1| = {:.3g} over 1000 vectors", worst)};
}

Outcome dpo_reduction() {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double a = rng.uniform(-10, 10), b = rng.uniform(-10, 10);
    const std::array<double, 2> r{a, b};
    worst = std::max(worst, std::abs(esa_po_loss(r).loss - dpo_loss(a, b).loss));
  }
  return {worst < 1e-12, fmt::format("max |esa_po(K=2) - dpo| = {:.3g} over 1000 pairs", worst)};
}

Outcome trivial_anchors() {
  const std::array<double, 3> zero3{0, 0, 0};
  const double esa0 = esa_po_loss(zero3).loss;
  const double dpo0 = dpo_loss(0, 0).loss;

  // Step 0 of training from θ = π_ref on the bundled corpus.
  const auto corpus = load_corpus(data_file("toy_corpus.jsonl"), toy_schema());
  const auto triples =
      build_triples(corpus, {}, Completer::fit_unigram(corpus, 64), toy::vocab()).triples;
  const PolicyParams p = PolicyParams::random_init({64, toy::kDims, 4, 0}, 3);
  const ReferencePolicy ref = snapshot_reference(p);
  TrainConfig cfg;
  cfg.epochs = 1;
  const double esa_step0 = train_po(p, ref, triples, cfg).history.records.at(0).loss;
  cfg.method = Method::Dpo;
  const double dpo_step0 = train_po(p, ref, triples, cfg).history.records.at(0).loss;
  const double zero_reward =
      reward(0.1, log_prob(p, corpus[0].context, corpus[0].response).total,
             log_prob(ref.params(), corpus[0].context, corpus[0].response).total);

  const double e1 = std::abs(esa0 - std::log(6.0)), e2 = std::abs(dpo0 - std::log(2.0));
  const double e3 = std::abs(esa_step0 - std::log(6.0)), e4 = std::abs(dpo_step0 - std::log(2.0));
  const bool pass = e1 < 1e-12 && e2 < 1e-12 && e3 < 1e-12 && e4 < 1e-12 && zero_reward == 0.0;
  return {pass, fmt::format("|ESA-PO(0) - ln 6| = {:.2g}, |DPO(0) - ln 2| = {:.2g}, step-0 errors "
                            "{:.2g} / {:.2g}, reward at snapshot {}",
                            e1, e2, e3, e4, zero_reward)};
}

Outcome gradient_correctness() {
  const GradcheckConfig cfg{7, 100, 1e-5, 1e-5};
  const auto rows = run_gradcheck(cfg);
  double worst = 0.0;
  bool pass = !rows.empty();
  std::string names;
  for (const auto& r : rows) {
    worst = std::max(worst, r.max_rel_error);
    pass = pass && r.passed && r.instances == 100 && r.max_rel_error < 1e-5;
    names += (names.empty() ? "" : " ") + r.check;
  }
  return {pass, fmt::format("{} checks x 100 instances, max relative error {:.3g} [{}]",
                            rows.size(), worst, names)};
}

Outcome metric_oracle() {
  const std::string qtypes[] = {"YesOrNo", "What", "How"};
  const std::string concerns[] = {"Distortion", "Other", "InContextDistortion", "InContextOther"};
  bool ok = true;
  std::size_t total_records = 0;
  for (std::uint64_t log_id = 0; log_id < 200; ++log_id) {
    Rng rng(mix_seed(77, log_id));
    const std::size_t n = 10 + rng.uniform_index(491);
    std::vector<MCQRecord> records;
    std::vector<PredictionPair> preds;
    std::vector<esapo::testing::LoggedOutcome> log;
    for (std::size_t i = 0; i < n; ++i) {
      MCQRecord r;
      r.context = toy::make_context("r" + std::to_string(i), std::nullopt, 0.0, 0);
      const std::size_t k = 3 + rng.uniform_index(3);
      r.refusal = rng.uniform_index(k);
      r.correct = rng.uniform_index(k - 1);
      if (r.correct >= r.refusal) ++r.correct;
      for (std::size_t o = 0; o < k; ++o) {
        r.options.push_back(o == r.refusal ? Response{toy::vocab().refusal_seq}
                                           : toy::describe({o % 4, 0, 0, 0}));
      }
      r.qtype = static_cast<QuestionType>(rng.uniform_index(3));
      r.concern = static_cast<Concern>(rng.uniform_index(4));
      PredictionPair p{r.context.id, rng.uniform_index(k), std::nullopt};
      esapo::testing::LoggedOutcome o{qtypes[static_cast<int>(r.qtype)],
                                      concerns[static_cast<int>(r.concern)], p.first == r.correct,
                                      p.first == r.refusal, false};
      if (o.refused) {
        std::size_t s = rng.uniform_index(k - 1);
        if (s >= r.refusal) ++s;
        p.second = s;
        o.second_correct = s == r.correct;
      }
      records.push_back(std::move(r));
      preds.push_back(p);
      log.push_back(o);
    }
    total_records += n;
    const MetricsReport m = compute_metrics(records, preds);
    ok = ok && esapo::testing::same_counts(m.counters, esapo::testing::oracle_counts(log, {}, {}));
    for (std::size_t b = 0; b < 3; ++b) {
      ok = ok && m.breakdowns[b].label == qtypes[b] &&
           esapo::testing::same_counts(m.breakdowns[b].counters,
                                       esapo::testing::oracle_counts(log, qtypes[b], {}));
    }
    for (std::size_t b = 0; b < 4; ++b) {
      ok = ok && m.breakdowns[3 + b].label == concerns[b] &&
           esapo::testing::same_counts(m.breakdowns[3 + b].counters,
                                       esapo::testing::oracle_counts(log, {}, concerns[b]));
    }
    for (const MetricsReport* r : {&m, &m.breakdowns[0], &m.breakdowns[1], &m.breakdowns[2]}) {
      const Counters& c = r->counters;
      ok = ok && score_sa_ratio(c).num == score_cc_ratio(c).num + score_rc_ratio(c).num &&
           score_sa_ratio(c).den == score_cc_ratio(c).den;
    }
  }

  auto at3 = [](std::optional<double> v) { return fmt::format("{:.3f}", *v); };
  const MetricsReport base = MetricsReport::from_counters("Total", {1098, 807, 1, 1, 1097});
  const MetricsReport gpt = MetricsReport::from_counters("Total", {3579, 2394, 85, 85, 3494});
  const std::string row1 = at3(base.score_cc) + " + " + at3(base.score_rc) + " = " + at3(base.score_sa);
  const std::string row2 = at3(gpt.score_cc) + " + " + at3(gpt.score_rc) + " = " + at3(gpt.score_sa);
  ok = ok && row1 == "73.497 + 0.091 = 73.588" && row2 == "66.890 + 2.375 = 69.265";
  return {ok, fmt::format("200 logs / {} records match the brute-force counters; table rows {} and {}",
                          total_records, row1, row2)};
}

Outcome datagen_invariants() {
  const auto corpus = load_corpus(data_file("toy_corpus.jsonl"), toy_schema());
  const Completer completer = Completer::fit_unigram(corpus, 64);
  DatagenConfig cfg;
  cfg.seed = 11;
  const DatagenResult r = build_triples(corpus, cfg, completer, toy::vocab());
  std::size_t bad = 0;
  std::string first_problem;
  for (std::size_t i = 0; i < r.triples.size(); ++i) {
    const std::string v =
        esapo::testing::triple_violation(r.triples[i], r.spans[i], toy::vocab().refusal_seq);
    if (!v.empty()) {
      if (first_problem.empty()) first_problem = v;
      ++bad;
    }
  }
  TempDir dir("acceptance");
  write_preference_dataset(dir.file("a.jsonl"), r.triples);
  write_preference_dataset(dir.file("b.jsonl"), build_triples(corpus, cfg, completer, toy::vocab()).triples);
  const bool same = read_text_file(dir.file("a.jsonl")) == read_text_file(dir.file("b.jsonl"));
  const bool pass = corpus.size() == 500 && r.triples.size() + r.skipped.size() == corpus.size() &&
                    bad == 0 && same;
  return {pass, fmt::format("{} items -> {} triples ({} skipped), {} violations{}, same seed "
                            "byte-identical: {}",
                            corpus.size(), r.triples.size(), r.skipped.size(), bad,
                            first_problem.empty() ? "" : " (" + first_problem + ")", same)};
}

// ---------------------------------------------------------------------------
// End-to-end pipeline through the CLI, shared by criteria 7-9.

struct Pipeline {
  TempDir dir{"pipeline"};
  std::vector<std::vector<std::string>> commands;
  std::vector<std::string> artifacts;
  double seconds = 0.0;

  std::string f(const std::string& name) const { return dir.file(name); }

  void step(std::vector<std::string> args, std::vector<std::string> outputs) {
    if (cli_run(args) != 0) throw std::runtime_error("pipeline step failed: " + args[0]);
    commands.push_back(std::move(args));
    for (auto& o : outputs) artifacts.push_back(std::move(o));
  }

  void run() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string corpus = data_file("toy_corpus.jsonl");
    step({"gen-data", "--corpus", corpus, "--out", f("train.jsonl"), "--seed", "11"},
         {f("train.jsonl")});
    step({"gen-data", "--corpus", data_file("toy_heldout.jsonl"), "--out", f("heldout.jsonl"),
          "--seed", "12"},
         {f("heldout.jsonl")});
    step({"sft", "--corpus", corpus, "--out", f("sft.ckpt"), "--history", f("sft.csv")},
         {f("sft.ckpt"), f("sft.csv")});
    step({"sft", "--corpus", corpus, "--out", f("init.ckpt"), "--epochs", "0"}, {f("init.ckpt")});
    for (const auto& [tag, method, ref] :
         {std::tuple{"esa_po", "esa_po", "sft.ckpt"}, std::tuple{"dpo", "dpo", "sft.ckpt"},
          std::tuple{"nosft_esa_po", "esa_po", "init.ckpt"}}) {
      const std::string t = tag;
      step({"train", "--triples", f("train.jsonl"), "--ref", f(ref), "--method", method, "--out",
            f(t + ".ckpt"), "--history", f(t + ".csv")},
           {f(t + ".ckpt"), f(t + ".csv")});
      step({"eval", "--checkpoint", f(t + ".ckpt"), "--mcq", data_file("toy_mcq.jsonl"), "--out",
            f(t + ".json"), "--csv", f(t + ".report.csv")},
           {f(t + ".json"), f(t + ".report.csv")});
    }
    step({"report", f("esa_po.json"), f("dpo.json"), "--out", f("compare.csv")}, {f("compare.csv")});
    seconds = seconds_since(t0);
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  static bool ran = false;
  if (!ran) {
    ran = true;
    p.run();
  }
  return p;
}

double report_score_sa(const std::string& path) {
  const auto j = nlohmann::json::parse(read_text_file(path));
  return j["overall"]["score_sa"].get<double>();
}

Outcome training_efficacy() {
  Pipeline& p = pipeline();
  const auto heldout = load_preference_dataset(p.f("heldout.jsonl"), toy_schema());
  const Checkpoint sft_ck = load_checkpoint(p.f("sft.ckpt"));
  const ReferencePolicy ref = snapshot_reference(sft_ck.params);
  const auto esa = load_checkpoint(p.f("esa_po.ckpt")).params;
  const auto dpo = load_checkpoint(p.f("dpo.ckpt")).params;
  const MarginSummary me = reward_margins(esa, ref, heldout, kDefaultBeta);
  const MarginSummary md = reward_margins(dpo, ref, heldout, kDefaultBeta);

  const auto mcq = load_mcq_dataset(data_file("toy_mcq.jsonl"), toy_schema());
  std::size_t unanswerable = 0;
  for (const auto& r : mcq) unanswerable += toy::is_unanswerable(r);
  const double frac = static_cast<double>(unanswerable) / static_cast<double>(mcq.size());
  const double sa_esa = report_score_sa(p.f("esa_po.json"));
  const double sa_dpo = report_score_sa(p.f("dpo.json"));

  const bool pass = toy::vocab().size == 64 && me.margin_pd > 0 &&
                    me.margin_dn > 0 && md.margin_dn < me.margin_dn && frac >= 0.3 &&
                    sa_esa >= sa_dpo && p.seconds < 120.0;
  return {pass, fmt::format("held-out ESA-PO p-d {:.4f}, d-n {:.4f}; DPO d-n {:.4f}; "
                            "score_sa ESA-PO {:.3f} vs DPO {:.3f} ({:.0f}% unanswerable); "
                            "pipeline {:.1f} s",
                            me.margin_pd, me.margin_dn, md.margin_dn, sa_esa, sa_dpo, 100 * frac,
                            p.seconds)};
}

Outcome sft_ablation() {
  Pipeline& p = pipeline();
  const auto corpus = load_corpus(data_file("toy_corpus.jsonl"), toy_schema());
  const double with_sft = corpus_nll(load_checkpoint(p.f("esa_po.ckpt")).params, corpus);
  const double without = corpus_nll(load_checkpoint(p.f("nosft_esa_po.ckpt")).params, corpus);
  return {with_sft < without,
          fmt::format("final positive-corpus NLL: sft-first {:.4f}, no-sft {:.4f}", with_sft, without)};
}

Outcome determinism() {
  Pipeline& p = pipeline();
  std::vector<std::string> originals;
  for (const auto& a : p.artifacts) originals.push_back(read_text_file(a));
  std::vector<std::string> manifests;
  for (const auto& cmd : p.commands) {
    const auto out = std::find(cmd.begin(), cmd.end(), "--out");
    manifests.push_back(*(out + 1) + ".manifest.json");
  }
  std::size_t reruns = 0;
  for (const char* threads : {"4", "1", "3"}) {
    for (const auto& a : p.artifacts) std::filesystem::remove(a);
    for (const auto& m : manifests) {
      const auto j = nlohmann::json::parse(read_text_file(m));
      if (cli_run({j["subcommand"].get<std::string>(), "--config", m, "--threads", threads}) != 0) {
        return {false, "rerun from " + m + " failed"};
      }
      ++reruns;
    }
    for (std::size_t i = 0; i < p.artifacts.size(); ++i) {
      if (!std::filesystem::exists(p.artifacts[i]) || read_text_file(p.artifacts[i]) != originals[i]) {
        return {false, fmt::format("{} differs after rerun with --threads {}", p.artifacts[i], threads)};
      }
    }
  }
  return {true, fmt::format("{} artifacts byte-identical across {} manifest reruns (threads 4, 1, 3)",
                            p.artifacts.size(), reruns)};
}

}  // namespace

int main() {
  criterion(1, "Plackett-Luce normalization", 1.0, pl_normalization);
  criterion(2, "DPO reduction at K=2", 1.0, dpo_reduction);
  criterion(3, "trivial anchors", 0, trivial_anchors);
  criterion(4, "gradient correctness", 30.0, gradient_correctness);
  criterion(5, "metric oracle equivalence", 5.0, metric_oracle);
  criterion(6, "datagen invariants", 5.0, datagen_invariants);
  criterion(7, "end-to-end training efficacy", 120.0, training_efficacy);
  criterion(8, "SFT ablation", 0, sft_ablation);
  criterion(9, "determinism from manifests", 0, determinism);
  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
