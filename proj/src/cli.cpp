#include "esapo/cli.hpp"

#include "esapo/core.hpp"
#include "esapo/datagen.hpp"
#include "esapo/error.hpp"
#include "esapo/eval.hpp"
#include "esapo/gradcheck.hpp"
#include "esapo/losses.hpp"
#include "esapo/policy.hpp"
#include "esapo/report.hpp"
#include "esapo/toy.hpp"
#include "esapo/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <functional>
#include <ostream>

namespace esapo::cli {

namespace {

using ojson = nlohmann::ordered_json;

// Binds CLI11 options to variables and mirrors them into the resolved
// configuration written to manifests and read back from config files.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* option(const std::string& name, T& var, const std::string& desc) {
    CLI::Option* opt = app_->add_option("--" + name, var, desc)->capture_default_str();
    entries_.push_back({name, opt, [&var](const ojson& j) { var = j.get<T>(); },
                        [&var] { return ojson(var); }});
    return opt;
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    CLI::Option* opt = app_->add_flag("--" + name, var, desc);
    entries_.push_back({name, opt, [&var](const ojson& j) { var = j.get<bool>(); },
                        [&var] { return ojson(var); }});
    return opt;
  }

  CLI::Option* positional(const std::string& name, std::vector<std::string>& var,
                          const std::string& desc) {
    CLI::Option* opt = app_->add_option(name, var, desc);
    entries_.push_back({name, opt, [&var](const ojson& j) { var = j.get<std::vector<std::string>>(); },
                        [&var] { return ojson(var); }});
    return opt;
  }

  void apply_config(const ojson& cfg) {
    if (!cfg.is_object()) throw ValidationError("config: expected a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      auto it = std::find_if(entries_.begin(), entries_.end(),
                             [&](const Entry& e) { return e.name == key; });
      if (it == entries_.end()) throw ValidationError("config: unknown key '" + key + "'");
      if (it->opt->count() > 0) continue;  // command-line flags win
      try {
        it->set(value);
      } catch (const nlohmann::json::exception&) {
        throw ValidationError("config: bad value for '" + key + "'");
      }
    }
  }

  ojson resolved() const {
    ojson j = ojson::object();
    for (const auto& e : entries_) j[e.name] = e.get();
    return j;
  }

 private:
  struct Entry {
    std::string name;
    CLI::Option* opt;
    std::function<void(const ojson&)> set;
    std::function<ojson()> get;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
};

struct Common {
  std::string config;
  std::size_t threads = 1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file or run manifest; flags take precedence");
  app->add_option("--threads", c.threads, "worker threads (outputs do not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

void load_config(const Common& c, Flags& flags, const std::string& subcommand) {
  if (c.config.empty()) return;
  ojson j;
  try {
    j = ojson::parse(read_text_file(c.config));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(c.config + ": " + e.what());
  }
  if (j.contains("subcommand")) {
    if (j["subcommand"] != subcommand) {
      throw ValidationError(c.config + ": manifest is for '" + j["subcommand"].dump() + "'");
    }
    j = j["config"];
  }
  flags.apply_config(j);
}

ojson manifest(const std::string& subcommand, const Flags& flags) {
  ojson m;
  m["subcommand"] = subcommand;
  m["version"] = kVersion;
  m["config"] = flags.resolved();
  return m;
}

void write_manifest(const std::string& output, const ojson& m) {
  write_text_file(output + ".manifest.json", m.dump(2) + "\n");
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ValidationError("missing required flag --" + flag);
}

DatasetSchema toy_schema(std::size_t max_len = kDefaultMaxLen) {
  return DatasetSchema{toy::vocab(), std::nullopt, max_len};
}

std::string metadata_json(const ojson& m, const std::string& parent) {
  ojson meta = m;
  meta["parent"] = parent.empty() ? ojson(nullptr) : ojson::parse(parent, nullptr, false);
  return meta.dump();
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string corpus, out, completer = "unigram";
  double ratio = kDefaultMaskRatio;
  std::uint64_t seed = 0;
  std::size_t max_len = kDefaultMaxLen;
};

int gen_data(const GenDataArgs& a, const Common& c, const Flags& flags, std::ostream& out,
             std::ostream& err) {
  require(a.corpus, "corpus");
  require(a.out, "out");
  if (a.completer != "unigram") throw ValidationError("--completer: only 'unigram' is supported");
  const auto corpus = load_corpus(a.corpus, toy_schema(a.max_len));
  if (corpus.empty()) throw ValidationError(a.corpus + ": empty corpus");
  const Completer completer = Completer::fit_unigram(corpus, toy::vocab().size);
  const DatagenConfig cfg{a.ratio, a.seed, a.max_len, c.threads};
  const DatagenResult result = build_triples(corpus, cfg, completer, toy::vocab());
  for (const auto& s : result.skipped) err << "skipped item " << s.index << ": " << s.reason << "\n";
  if (result.triples.empty()) throw ValidationError("gen-data: no usable corpus items");
  write_preference_dataset(a.out, result.triples);
  write_manifest(a.out, manifest("gen-data", flags));
  out << fmt::format("wrote {} triples to {} ({} skipped)\n", result.triples.size(), a.out,
                     result.skipped.size());
  return kOk;
}

struct SftArgs {
  std::string corpus, out, init, history;
  double lr = kDefaultLearningRate;
  std::size_t epochs = kDefaultSftEpochs;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::size_t prompt_dim = kDefaultPromptDim;
  std::uint64_t embed_seed = 0;
};

int run_sft(const SftArgs& a, const Common& c, const Flags& flags, std::ostream& out) {
  require(a.corpus, "corpus");
  require(a.out, "out");
  const auto corpus = load_corpus(a.corpus, toy_schema());
  if (corpus.empty()) throw ValidationError(a.corpus + ": empty corpus");
  const PolicyShape shape{toy::vocab().size, corpus.front().context.dims(), a.prompt_dim,
                          a.embed_seed};
  PolicyParams init = PolicyParams::random_init(shape, a.seed);
  std::string parent;
  if (!a.init.empty()) {
    Checkpoint ck = load_checkpoint(a.init);
    if (!(ck.params.shape == shape)) throw ValidationError("--init: checkpoint shape does not match corpus");
    init = std::move(ck.params);
    parent = std::move(ck.metadata);
  }
  TrainConfig tc;
  tc.lr = a.lr;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.seed = a.seed;
  tc.threads = c.threads;
  const SftResult result = sft(std::move(init), corpus, tc);
  const ojson m = manifest("sft", flags);
  save_checkpoint(a.out, {result.params, metadata_json(m, parent)});
  if (!a.history.empty()) {
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < result.step_losses.size(); ++i) {
      csv += fmt::format("{},{:.17g}\n", i, result.step_losses[i]);
    }
    write_text_file(a.history, csv);
  }
  write_manifest(a.out, m);
  out << fmt::format("sft: {} steps, corpus NLL {:.6f}, wrote {}\n", result.step_losses.size(),
                     corpus_nll(result.params, corpus, c.threads), a.out);
  return kOk;
}

struct TrainArgs {
  std::string triples, ref, init, out, history, method = "esa_po";
  double beta = kDefaultBeta, eps = kDefaultCdpoEps, tau = kDefaultIpoTau;
  double lr = kDefaultPoLearningRate;
  std::size_t epochs = kDefaultPoEpochs;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a, const Common& c, const Flags& flags, std::ostream& out) {
  const auto method = parse_method(a.method);
  if (!method) throw ValidationError("--method: expected one of esa_po, dpo, cdpo, ipo");
  require(a.ref, "ref");
  require(a.triples, "triples");
  require(a.out, "out");
  const Checkpoint ref_ck = load_checkpoint(a.ref);
  const ReferencePolicy ref = snapshot_reference(ref_ck.params);
  PolicyParams init = ref.params();
  if (!a.init.empty()) {
    init = load_checkpoint(a.init).params;
    if (!(init.shape == ref.params().shape)) throw ValidationError("--init: shape differs from --ref");
  }
  DatasetSchema schema = toy_schema();
  schema.dims = ref.params().shape.channels;
  const auto triples = load_preference_dataset(a.triples, schema);
  TrainConfig tc;
  tc.method = *method;
  tc.beta = a.beta;
  tc.eps = a.eps;
  tc.tau = a.tau;
  tc.lr = a.lr;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.seed = a.seed;
  tc.threads = c.threads;
  const PoResult result = train_po(std::move(init), ref, triples, tc);
  const ojson m = manifest("train", flags);
  save_checkpoint(a.out, {result.params, metadata_json(m, ref_ck.metadata)});
  if (!a.history.empty()) write_text_file(a.history, result.history.to_csv());
  write_manifest(a.out, m);
  const MarginSummary margins = reward_margins(result.params, ref, triples, a.beta, c.threads);
  out << fmt::format("train[{}]: {} steps, train margins p-d {:.6f} d-n {:.6f}, wrote {}\n", a.method,
                     result.history.records.size(), margins.margin_pd, margins.margin_dn, a.out);
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, mcq, out, csv;
  bool no_normalize = false;
};

void print_summary(const MetricsReport& r, std::ostream& out) {
  auto cell = [](const std::optional<double>& v) { return v ? fmt::format("{:8.3f}", *v) : std::string("    null"); };
  out << fmt::format("{:<20} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "category", "cc", "rc", "sa",
                     "acc", "sa_rate");
  auto row = [&](const MetricsReport& m) {
    out << fmt::format("{:<20} {} {} {} {} {}\n", m.label, cell(m.score_cc), cell(m.score_rc),
                       cell(m.score_sa), cell(m.answer_accuracy), cell(m.sa_rate));
  };
  for (const auto& b : r.breakdowns) row(b);
  row(r);
}

int run_eval(const EvalArgs& a, const Common& c, const Flags& flags, std::ostream& out) {
  require(a.checkpoint, "checkpoint");
  require(a.mcq, "mcq");
  require(a.out, "out");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  DatasetSchema schema = toy_schema();
  schema.dims = ck.params.shape.channels;
  const auto records = load_mcq_dataset(a.mcq, schema);
  EvalResult result = evaluate(ck.params, records, {!a.no_normalize, c.threads});
  result.report.header.insert(result.report.header.begin(), {"checkpoint", a.checkpoint});
  result.report.header.emplace_back("training", ck.metadata);
  write_report(result.report, a.out, ReportFormat::Json);
  if (!a.csv.empty()) write_report(result.report, a.csv, ReportFormat::Csv);
  write_manifest(a.out, manifest("eval", flags));
  print_summary(result.report, out);
  return kOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 7;
  std::size_t instances = 100;
  double h = 1e-5;
  double tol = 1e-5;
  std::string out;
};

int run_gradcheck_cmd(const GradcheckArgs& a, const Flags& flags, std::ostream& out) {
  GradcheckConfig cfg{a.seed, a.instances, a.h, a.tol};
  const auto rows = run_gradcheck(cfg);
  const std::string table = format_gradcheck_table(rows);
  out << table;
  if (!a.out.empty()) {
    write_text_file(a.out, table);
    write_manifest(a.out, manifest("gradcheck", flags));
  }
  const bool ok = std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.passed; });
  return ok ? kOk : kNumericFailure;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int run_report(const ReportArgs& a, const Flags& flags, std::ostream& out) {
  if (a.inputs.size() < 2) throw ValidationError("report: need at least two report files");
  std::vector<std::string> labels;
  std::vector<ReportTable> tables;
  for (std::size_t i = 0; i < a.inputs.size(); ++i) {
    std::string label = std::filesystem::path(a.inputs[i]).stem().string();
    if (std::find(labels.begin(), labels.end(), label) != labels.end()) {
      label += "#" + std::to_string(i);
    }
    labels.push_back(label);
    tables.push_back(read_report_table(a.inputs[i]));
  }
  const std::string csv = compare_reports(labels, tables);
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text_file(a.out, csv);
    write_manifest(a.out, manifest("report", flags));
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Listwise preference optimization with refusal-aware evaluation", "esapo"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "build preference triples from a corpus");
  Flags gen_flags(gen_cmd);
  gen_flags.option("corpus", gen.corpus, "corpus of (context, positive response) lines");
  gen_flags.option("out", gen.out, "output triples file");
  gen_flags.option("ratio", gen.ratio, "masked fraction of each response");
  gen_flags.option("seed", gen.seed, "random seed");
  gen_flags.option("completer", gen.completer, "completer for negatives (unigram)");
  gen_flags.option("max-len", gen.max_len, "maximum response length");
  add_common(gen_cmd, common);

  SftArgs sft_a;
  auto* sft_cmd = app.add_subcommand("sft", "supervised finetuning on positive responses");
  Flags sft_flags(sft_cmd);
  sft_flags.option("corpus", sft_a.corpus, "corpus of (context, positive response) lines");
  sft_flags.option("out", sft_a.out, "output checkpoint");
  sft_flags.option("init", sft_a.init, "initial checkpoint (default: seeded random init)");
  sft_flags.option("history", sft_a.history, "per-step loss CSV");
  sft_flags.option("lr", sft_a.lr, "learning rate");
  sft_flags.option("epochs", sft_a.epochs, "epochs (0 writes the initial parameters)");
  sft_flags.option("batch-size", sft_a.batch_size, "mini-batch size");
  sft_flags.option("seed", sft_a.seed, "seed for init and shuffling");
  sft_flags.option("prompt-dim", sft_a.prompt_dim, "prompt embedding dimension");
  sft_flags.option("embed-seed", sft_a.embed_seed, "seed of the frozen prompt embeddings");
  add_common(sft_cmd, common);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "preference optimization against a reference");
  Flags train_flags(train_cmd);
  train_flags.option("triples", tr.triples, "preference triples file");
  train_flags.option("ref", tr.ref, "frozen reference checkpoint (required)");
  train_flags.option("init", tr.init, "initial checkpoint (default: the reference)");
  train_flags.option("out", tr.out, "output checkpoint");
  train_flags.option("history", tr.history, "per-step CSV: step,loss,margin_pd,margin_dn");
  train_flags.option("method", tr.method, "esa_po | dpo | cdpo | ipo");
  train_flags.option("beta", tr.beta, "reward scale");
  train_flags.option("eps", tr.eps, "cdpo label-noise rate");
  train_flags.option("tau", tr.tau, "ipo regularization");
  train_flags.option("lr", tr.lr, "learning rate");
  train_flags.option("epochs", tr.epochs, "epochs");
  train_flags.option("batch-size", tr.batch_size, "mini-batch size");
  train_flags.option("seed", tr.seed, "shuffling seed");
  add_common(train_cmd, common);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "two-pass refusal-aware MCQ evaluation");
  Flags eval_flags(eval_cmd);
  eval_flags.option("checkpoint", ev.checkpoint, "policy checkpoint");
  eval_flags.option("mcq", ev.mcq, "MCQ records file");
  eval_flags.option("out", ev.out, "JSON report");
  eval_flags.option("csv", ev.csv, "CSV report");
  eval_flags.flag("no-normalize", ev.no_normalize, "score options by total log-probability");
  add_common(eval_cmd, common);

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
  Flags gc_flags(gc_cmd);
  gc_flags.option("seed", gc.seed, "seed of the random instances");
  gc_flags.option("instances", gc.instances, "number of random instances");
  gc_flags.option("step", gc.h, "central difference step");
  gc_flags.option("tol", gc.tol, "maximum relative error");
  gc_flags.option("out", gc.out, "write the table to this file");
  add_common(gc_cmd, common);

  ReportArgs rp;
  auto* report_cmd = app.add_subcommand("report", "compare two or more JSON reports");
  Flags report_flags(report_cmd);
  report_flags.positional("inputs", rp.inputs, "report files; the first is the baseline");
  report_flags.option("out", rp.out, "comparison CSV (default: stdout)");
  add_common(report_cmd, common);

  std::vector<const char*> argv{"esapo"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kValidationFailure;
  }

  try {
    if (gen_cmd->parsed()) {
      load_config(common, gen_flags, "gen-data");
      return gen_data(gen, common, gen_flags, out, err);
    }
    if (sft_cmd->parsed()) {
      load_config(common, sft_flags, "sft");
      return run_sft(sft_a, common, sft_flags, out);
    }
    if (train_cmd->parsed()) {
      load_config(common, train_flags, "train");
      return run_train(tr, common, train_flags, out);
    }
    if (eval_cmd->parsed()) {
      load_config(common, eval_flags, "eval");
      return run_eval(ev, common, eval_flags, out);
    }
    if (gc_cmd->parsed()) {
      load_config(common, gc_flags, "gradcheck");
      return run_gradcheck_cmd(gc, gc_flags, out);
    }
    if (report_cmd->parsed()) {
      load_config(common, report_flags, "report");
      return run_report(rp, report_flags, out);
    }
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
  return kValidationFailure;
}

}  // namespace esapo::cli
