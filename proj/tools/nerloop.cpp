// nerloop command-line front end.

#include <CLI11.hpp>

#include <atomic>
#include <pthread.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

#include "nerloop/dataset.h"
#include "nerloop/error.h"
#include "nerloop/eval.h"
#include "nerloop/extract.h"
#include "nerloop/loop.h"
#include "nerloop/service.h"
#include "nerloop/synth.h"

namespace fs = std::filesystem;
using namespace nerloop;

namespace {

void log_line(const std::string& msg) { std::cerr << "nerloop: " << msg << '\n'; }

std::shared_ptr<const Lexicon> read_lexicon(const std::string& path, bool require_code) {
  auto load = load_lexicon(path, require_code ? CodeFilter(has_code) : CodeFilter());
  for (const auto& w : load.warnings) log_line(path + ": " + w);
  if (load.lexicon.empty()) throw std::runtime_error("lexicon " + path + " has no usable terms");
  return std::make_shared<const Lexicon>(std::move(load.lexicon));
}

std::ofstream open_out(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::string pct(double x) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << 100 * x;
  return s.str();
}

struct TrainOpts {
  int epochs = 64;
  double l2 = 0.1;
  double rate = 0.1;
  std::size_t batch = 8;
  std::uint64_t seed = 42;
  std::string features = "A";

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Maximum training epochs")->capture_default_str();
    app->add_option("--l2", l2, "L2 regularization strength")->capture_default_str();
    app->add_option("--learning-rate", rate, "AdaGrad base rate")->capture_default_str();
    app->add_option("--batch-size", batch, "Mini-batch size")->capture_default_str();
    app->add_option("--seed", seed, "Training seed")->capture_default_str();
    app->add_option("--features", features, "Feature set: A (full) or B (reduced)")
        ->check(CLI::IsMember({"A", "B"}))
        ->capture_default_str();
  }
  TrainConfig config() const {
    TrainConfig c;
    c.max_epochs = epochs;
    c.l2 = l2;
    c.learning_rate = rate;
    c.batch_size = batch;
    c.seed = seed;
    c.check();
    return c;
  }
};

// Every option can also come from NERLOOP_<SUBCOMMAND>_<OPTION> or, for
// options shared by name, NERLOOP_<OPTION>.
void add_env_names(CLI::App* app, const std::string& prefix) {
  for (auto* opt : app->get_options()) {
    if (opt->get_lnames().empty() || opt->get_single_name() == "help" ||
        opt->get_single_name() == "config")
      continue;
    std::string name = prefix + opt->get_single_name();
    for (auto& c : name) c = c == '-' ? '_' : static_cast<char>(std::toupper(c));
    opt->envname(name);
  }
  for (auto* sub : app->get_subcommands({})) {
    add_env_names(sub, prefix + sub->get_name() + "_");
  }
}

// Turns SIGINT/SIGTERM into a callback on an ordinary thread. Construct it
// before starting other threads so they inherit the blocked mask.
class SignalWatch {
 public:
  explicit SignalWatch(std::function<void()> on_signal) {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
    thread_ = std::thread([this, f = std::move(on_signal)] {
      int sig = 0;
      sigwait(&set_, &sig);
      if (!done_) {
        log_line("interrupted, shutting down");
        f();
      }
    });
  }
  ~SignalWatch() {
    done_ = true;
    pthread_kill(thread_.native_handle(), SIGTERM);
    thread_.join();
  }

 private:
  sigset_t set_;
  std::atomic<bool> done_{false};
  std::thread thread_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-in-the-loop drug-name annotation and extraction"};
  app.set_config("--config", "", "TOML/INI file with option values");
  app.require_subcommand(1);
  app.fallthrough();

  // ---- synth -----------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus, lexicon and truth");
  std::string synth_dir;
  SynthConfig synth_cfg;
  synth->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth->add_option("--paragraphs", synth_cfg.paragraphs)->capture_default_str();
  synth->add_option("--lexicon-terms", synth_cfg.lexicon_terms)->capture_default_str();
  synth->add_option("--unlisted-terms", synth_cfg.unlisted_terms)->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();

  // ---- lexicon load ----------------------------------------------------------
  auto* lexicon = app.add_subcommand("lexicon", "Gazetteer utilities");
  lexicon->require_subcommand(1);
  auto* lex_load = lexicon->add_subcommand("load", "Load, filter and report on a term file");
  std::string lex_path, lex_out;
  bool lex_require_code = false;
  lex_load->add_option("path", lex_path, "Tab-separated term file")->required();
  lex_load->add_flag("--require-code", lex_require_code, "Keep only terms with a code");
  lex_load->add_option("--out", lex_out, "Write the normalized lexicon here");

  // ---- run -------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Run the annotation workflow");
  std::string corpus_path, lexicon_path, annotator_kind = "simulated", truth_path,
                           state_path = "nerloop-state.json", out_dir, queue_log = "queue.jsonl",
                           host = "127.0.0.1", ui_dir;
  LoopParams params;
  double error_rate = 0.2;
  std::uint64_t annotator_seed = 1, stream_seed = kDefaultStreamSeed, run_seed = 1;
  bool resume = false, require_code = false;
  int port = 8080;
  double lease_minutes = 15;
  TrainOpts run_train;
  run->add_option("--corpus", corpus_path, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  run->add_option("--lexicon", lexicon_path, "Term file")->required()->check(CLI::ExistingFile);
  run->add_flag("--require-code", require_code, "Keep only lexicon terms with a code");
  run->add_option("--annotator", annotator_kind)
      ->check(CLI::IsMember({"simulated", "service"}))
      ->capture_default_str();
  run->add_option("--truth", truth_path, "Gold JSONL for the simulated annotator");
  run->add_option("--error-rate", error_rate, "Simulated annotator error rate")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  run->add_option("--annotator-seed", annotator_seed)->capture_default_str();
  run->add_option("--n0", params.n0, "Bootstrap size")->capture_default_str();
  run->add_option("--n", params.n, "Paragraphs per review round")->capture_default_str();
  run->add_option("--nt", params.nt, "Test set size")->capture_default_str();
  run->add_option("--epsilon", params.epsilon, "Minimum F1 improvement to continue")
      ->capture_default_str();
  run->add_option("--conf-min", params.conf_min)->capture_default_str();
  run->add_option("--conf-max", params.conf_max)->capture_default_str();
  run->add_option("--stream-seed", stream_seed)->capture_default_str();
  run->add_option("--run-seed", run_seed)->capture_default_str();
  run->add_option("--state", state_path, "Run state file")->capture_default_str();
  run->add_flag("--resume", resume, "Continue from --state");
  run->add_option("--out-dir", out_dir, "Write test/gold sets and final model here");
  run->add_option("--queue-log", queue_log, "Review queue event log")->capture_default_str();
  run->add_option("--host", host)->capture_default_str();
  run->add_option("--port", port)->capture_default_str();
  run->add_option("--lease-minutes", lease_minutes)->capture_default_str();
  run->add_option("--ui-dir", ui_dir, "Static reviewer UI to serve");
  run_train.add(run);

  // ---- train -----------------------------------------------------------------
  auto* trainc = app.add_subcommand("train", "Train a tagger on a JSONL dataset");
  std::string train_data, train_out, train_lexicon, train_valid;
  TrainOpts train_opts;
  trainc->add_option("--data", train_data)->required()->check(CLI::ExistingFile);
  trainc->add_option("--out", train_out, "Model checkpoint")->required();
  trainc->add_option("--lexicon", train_lexicon, "Term file for the lexicon feature");
  trainc->add_option("--validation", train_valid, "Validation JSONL");
  train_opts.add(trainc);

  // ---- eval ------------------------------------------------------------------
  auto* evalc = app.add_subcommand("eval", "Score a model, or run k-fold cross validation");
  std::string eval_model, eval_data, eval_test_source, eval_lexicon;
  std::size_t kfold = 0;
  TrainOpts eval_train;
  evalc->add_option("--data", eval_data, "Gold JSONL (k-fold: training data)")
      ->required()
      ->check(CLI::ExistingFile);
  evalc->add_option("--model", eval_model, "Checkpoint to score");
  evalc->add_option("--kfold", kfold, "Number of folds");
  evalc->add_option("--test-source", eval_test_source,
                    "k-fold: aligned JSONL whose folds are tested (default --data)");
  evalc->add_option("--lexicon", eval_lexicon, "k-fold: term file for the lexicon feature");
  eval_train.add(evalc);

  // ---- analyze ---------------------------------------------------------------
  auto* analyze = app.add_subcommand("analyze", "Token frequencies around entities");
  std::string an_model, an_data, an_scope = "incorrect";
  std::size_t window = 3, top = 20;
  bool keep_stopwords = false;
  analyze->add_option("--model", an_model)->required()->check(CLI::ExistingFile);
  analyze->add_option("--data", an_data, "Gold JSONL")->required()->check(CLI::ExistingFile);
  analyze->add_option("--window", window)->check(CLI::IsMember({1, 3, 5}))->capture_default_str();
  analyze->add_flag("--keep-stopwords", keep_stopwords, "Count stopwords and punctuation");
  analyze->add_option("--scope", an_scope)
      ->check(CLI::IsMember({"incorrect", "correct"}))
      ->capture_default_str();
  analyze->add_option("--top", top)->capture_default_str();

  // ---- extract ---------------------------------------------------------------
  auto* extract = app.add_subcommand("extract", "Tally entities found by two models");
  std::string ex_corpus, ex_a, ex_b, ex_out;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  extract->add_option("--corpus", ex_corpus)->required()->check(CLI::ExistingFile);
  extract->add_option("--model-a", ex_a)->required()->check(CLI::ExistingFile);
  extract->add_option("--model-b", ex_b)->required()->check(CLI::ExistingFile);
  extract->add_option("--workers", workers)->check(CLI::PositiveNumber)->capture_default_str();
  extract->add_option("--out", ex_out, "Report file (default stdout)");

  // ---- compare ---------------------------------------------------------------
  auto* compare = app.add_subcommand("compare", "Match top entities against a reference list");
  std::string cmp_report, cmp_ref, cmp_pool = "all", cmp_unmatched;
  std::size_t top_k = 100;
  compare->add_option("--report", cmp_report)->required()->check(CLI::ExistingFile);
  compare->add_option("--ref", cmp_ref, "Reference term file")->required()->check(CLI::ExistingFile);
  compare->add_option("--top-k", top_k)->capture_default_str();
  compare->add_option("--pool", cmp_pool)
      ->check(CLI::IsMember({"all", "balanced"}))
      ->capture_default_str();
  compare->add_option("--unmatched", cmp_unmatched, "Write unmatched entities here");

  // ---- export ----------------------------------------------------------------
  auto* exportc = app.add_subcommand("export", "Convert a JSONL dataset");
  std::string exp_data, exp_out, exp_format = "csv";
  bool exp_meta = false;
  exportc->add_option("--data", exp_data)->required()->check(CLI::ExistingFile);
  exportc->add_option("--out", exp_out)->required();
  exportc->add_option("--format", exp_format, "csv (IOB, one sentence per row) or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}))
      ->capture_default_str();
  exportc->add_flag("--meta", exp_meta, "jsonl: keep doc_id/para_index/provenance");

  // ---- serve -----------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "Serve an existing review queue to reviewers");
  std::string serve_log = "queue.jsonl", serve_host = "127.0.0.1", serve_ui;
  int serve_port = 8080;
  double serve_lease = 15;
  serve->add_option("--queue-log", serve_log)->capture_default_str();
  serve->add_option("--host", serve_host)->capture_default_str();
  serve->add_option("--port", serve_port)->capture_default_str();
  serve->add_option("--lease-minutes", serve_lease)->capture_default_str();
  serve->add_option("--ui-dir", serve_ui, "Static reviewer UI to serve");

  add_env_names(&app, "NERLOOP_");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  auto lease = [](double minutes) {
    return std::chrono::milliseconds(static_cast<std::int64_t>(minutes * 60'000));
  };

  try {
    if (*synth) {
      const auto sc = generate_synthetic(synth_cfg);
      fs::create_directories(synth_dir);
      write_corpus((fs::path(synth_dir) / "corpus.jsonl").string(), sc.documents);
      write_lexicon(sc.lexicon, (fs::path(synth_dir) / "lexicon.tsv").string());
      write_dataset(sc.gold(), (fs::path(synth_dir) / "truth.jsonl").string(), {true});
      std::cout << "wrote " << sc.documents.size() << " documents, " << synth_cfg.paragraphs
                << " paragraphs, " << sc.lexicon.size() << " lexicon terms to " << synth_dir
                << '\n';
    } else if (*lex_load) {
      const auto load =
          load_lexicon(lex_path, lex_require_code ? CodeFilter(has_code) : CodeFilter());
      for (const auto& w : load.warnings) log_line(lex_path + ": " + w);
      std::cout << "rows\t" << load.rows << "\nkept\t" << load.kept << "\nfiltered\t"
                << load.filtered << "\nduplicates\t" << load.duplicates << "\nmalformed\t"
                << load.malformed << "\nterms\t" << load.lexicon.size() << "\naliases\t"
                << load.lexicon.aliases().size() << '\n';
      if (!lex_out.empty()) write_lexicon(load.lexicon, lex_out);
    } else if (*run) {
      LoopConfig cfg;
      cfg.params = params;
      cfg.params.check();
      cfg.train = run_train.config();
      cfg.features = FeatureConfig::named(run_train.features);
      cfg.lexicon = read_lexicon(lexicon_path, require_code);
      cfg.run_seed = run_seed;
      cfg.log = log_line;
      cfg.checkpoint = [&](const LoopState& s) { save_state(s, state_path); };
      CorpusStream stream = load_corpus(corpus_path, stream_seed);
      std::optional<LoopState> saved;
      if (resume) saved = load_state(state_path);

      LoopState final_state;
      if (annotator_kind == "simulated") {
        if (truth_path.empty())
          throw CLI::ValidationError("--truth", "required with --annotator simulated");
        const auto truth = read_dataset(truth_path);
        SimulatedAnnotator annotator(truth_from_dataset(truth), error_rate, annotator_seed);
        final_state = run_workflow(stream, annotator, cfg, saved);
      } else {
        ReviewQueue queue(queue_log, system_clock_ms, lease(lease_minutes));
        ReviewServer server(queue, ui_dir);
        const int bound = server.bind(host, port);
        if (bound < 0) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
        log_line("review service on http://" + host + ":" + std::to_string(bound));
        ServiceAnnotator annotator(queue, [last = std::size_t(-1)](const QueueProgress& p) mutable {
          if (p.done != last) {
            last = p.done;
            log_line("round " + std::to_string(p.round.value_or(0)) + ": " +
                     std::to_string(p.done) + "/" + std::to_string(p.total) + " reviewed");
          }
        });
        SignalWatch watch([&] { annotator.cancel(); });
        std::thread serving([&] { server.serve(); });
        try {
          final_state = run_workflow(stream, annotator, cfg, saved);
        } catch (...) {
          server.stop();
          serving.join();
          throw;
        }
        server.stop();
        serving.join();
      }

      std::cout << "phase\t" << to_string(final_state.phase) << "\nrounds\t" << final_state.round
                << "\nbootstrap\t" << final_state.bootstrap.size() << "\ntest\t"
                << final_state.test.size() << "\ngold\t" << final_state.gold.size()
                << "\nexhausted\t" << (final_state.exhausted ? "yes" : "no") << '\n';
      for (const auto& [r, f1] : final_state.f1_history)
        std::cout << "f1\t" << r << '\t' << pct(f1) << '\n';
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_dataset(final_state.test, (fs::path(out_dir) / "test.jsonl").string(), {true});
        write_dataset(final_state.gold, (fs::path(out_dir) / "gold.jsonl").string(), {true});
        if (!final_state.gold.empty()) {
          TrainConfig tc = cfg.train;
          tc.seed = round_seed(run_seed, final_state.round);
          train(final_state.gold, tc, cfg.features, cfg.lexicon)
              .save((fs::path(out_dir) / "model.json").string());
        }
      }
    } else if (*trainc) {
      const auto data = read_dataset(train_data);
      std::vector<LabeledParagraph> valid;
      if (!train_valid.empty()) valid = read_dataset(train_valid);
      std::shared_ptr<const Lexicon> lex;
      if (!train_lexicon.empty()) lex = read_lexicon(train_lexicon, false);
      const auto model = train(data, train_opts.config(),
                               FeatureConfig::named(train_opts.features), lex, valid);
      for (const auto& w : model.training_meta().warnings) log_line(w);
      model.save(train_out);
      const auto& meta = model.training_meta();
      std::cout << "paragraphs\t" << data.size() << "\nfeatures\t"
                << model.feature_table().size() << "\nepochs\t" << meta.epochs_run
                << "\nbest_epoch\t" << meta.best_epoch << "\nvalidation_loss\t"
                << meta.best_validation_loss << '\n';
    } else if (*evalc) {
      const auto data = read_dataset(eval_data);
      if (kfold > 0) {
        const auto source = eval_test_source.empty() ? data : read_dataset(eval_test_source);
        KFoldOptions opt;
        opt.train = eval_train.config();
        opt.features = FeatureConfig::named(eval_train.features);
        if (!eval_lexicon.empty()) opt.lexicon = read_lexicon(eval_lexicon, false);
        write_kfold_table(kfold_run(data, source, kfold, opt), std::cout);
      } else {
        if (eval_model.empty()) throw CLI::ValidationError("--model", "required without --kfold");
        const auto model = TaggerModel::load(eval_model);
        const auto c = evaluate_model(model, data);
        const auto m = prf1(c);
        std::cout << "tp\t" << c.tp << "\nfp\t" << c.fp << "\nfn\t" << c.fn
                  << "\nboundary_overlaps\t" << c.boundary_overlaps
                  << "\nmulti_gold_overlaps\t" << c.multi_gold_overlaps << "\nprecision\t"
                  << pct(m.precision) << "\nrecall\t" << pct(m.recall) << "\nf1\t" << pct(m.f1)
                  << '\n';
      }
    } else if (*analyze) {
      const auto model = TaggerModel::load(an_model);
      std::vector<ScoredParagraph> scored;
      for (auto& lp : read_dataset(an_data)) {
        auto pred = model.predict_spans(lp.tokens);
        scored.push_back({std::move(lp), std::move(pred)});
      }
      const auto scope =
          an_scope == "correct" ? ContextScope::kAroundCorrect : ContextScope::kAroundIncorrect;
      const auto stats = context_frequencies(scored, window, keep_stopwords, scope);
      std::cerr << "entities in scope: " << stats.entities << '\n';
      write_frequency_table(stats, top, std::cout);
    } else if (*extract) {
      const auto paragraphs = read_corpus(ex_corpus);
      const auto a = TaggerModel::load(ex_a);
      const auto b = TaggerModel::load(ex_b);
      const auto report = extract_corpus(paragraphs, a, b, workers);
      if (ex_out.empty()) {
        write_report(report, std::cout);
      } else {
        auto out = open_out(ex_out);
        write_report(report, out);
        log_line(std::to_string(report.ranking.size()) + " entities from " +
                 std::to_string(paragraphs.size()) + " paragraphs, " +
                 std::to_string(report.pool_balanced().size()) + " balanced");
      }
    } else if (*compare) {
      std::ifstream in(cmp_report);
      const auto report = read_report(in);
      const auto ref = load_lexicon(cmp_ref);
      const auto r = compare_reference(report, ref.lexicon, top_k, pool_from_string(cmp_pool));
      std::cout << "pool\t" << cmp_pool << "\ntop_k\t" << r.top_k << "\nexact\t" << r.exact
                << "\npartial\t" << r.partial << "\nexact_rate\t" << pct(r.exact_rate)
                << "\nexact_plus_partial_rate\t" << pct(r.exact_plus_partial_rate) << '\n';
      if (!cmp_unmatched.empty()) {
        auto out = open_out(cmp_unmatched);
        for (const auto& s : r.unmatched) out << s << '\n';
      }
    } else if (*exportc) {
      const auto data = read_dataset(exp_data);
      if (exp_format == "csv") {
        export_iob_csv(data, exp_out);
      } else {
        write_dataset(data, exp_out, {exp_meta});
      }
    } else if (*serve) {
      ReviewQueue queue(serve_log, system_clock_ms, lease(serve_lease));
      ReviewServer server(queue, serve_ui);
      const int bound = server.bind(serve_host, serve_port);
      if (bound < 0)
        throw std::runtime_error("cannot listen on " + serve_host + ":" + std::to_string(serve_port));
      log_line("serving " + serve_log + " on http://" + serve_host + ":" + std::to_string(bound));
      SignalWatch watch([&] { server.stop(); });
      server.serve();
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const FormatError& e) {
    log_line(std::string("format error: ") + e.what());
    return 1;
  } catch (const std::exception& e) {
    log_line(std::string("error: ") + e.what());
    return 1;
  }
  return 0;
}
