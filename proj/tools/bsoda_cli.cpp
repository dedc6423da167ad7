#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "bsoda/cli/engine_io.hpp"
#include "bsoda/cli/evaluation.hpp"
#include "bsoda/core/json_io.hpp"
#include "bsoda/service/service.hpp"
#include "bsoda/simulator/simulator.hpp"

namespace {

using namespace bsoda;

struct Common {
  std::string kb = "data/knowledge_base.json";
  std::string models = "models";
  std::uint64_t seed = 0;
  std::size_t nt = 15;
  std::size_t nm = 100;
  bool no_filtering = false;
  bool no_pruning = false;
  bool no_positive_only = false;
  bool no_diag_sampling = false;

  SessionConfig session() const {
    SessionConfig c;
    c.max_inquiries = nt;
    c.n_mc = nm;
    c.seed = seed;
    c.reward.enable_filtering = !no_filtering;
    c.reward.enable_pruning = !no_pruning;
    c.reward.enable_positive_only = !no_positive_only;
    c.reward.use_diag_for_joint = !no_diag_sampling;
    return c;
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--kb", c.kb, "knowledge base JSON");
  app->add_option("--models", c.models, "models directory");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--nt", c.nt, "maximum number of inquiries");
  app->add_option("--nm", c.nm, "Monte Carlo samples per round");
  app->add_flag("--no-filtering", c.no_filtering, "ask from all unobserved symptoms");
  app->add_flag("--no-pruning", c.no_pruning, "keep every disease in the reward sum");
  app->add_flag("--no-positive-only", c.no_positive_only, "also score x_s = 0 combinations");
  app->add_flag("--no-diag-sampling", c.no_diag_sampling, "use the VAE instead of the diagnosis model");
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    write_text_file(path, j.dump(2) + "\n");
  }
}

std::vector<std::size_t> parse_budgets(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
  if (!std::is_sorted(out.begin(), out.end())) throw CLI::ValidationError("--budgets", "must be ascending");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online disease diagnosis: simulate, train, evaluate and serve"};
  app.require_subcommand(1);
  Common common;

  // gen-kb
  auto* gen = app.add_subcommand("gen-kb", "generate a random knowledge base");
  SyntheticKbConfig kb_cfg;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output path")->required();
  gen->add_option("--diseases", kb_cfg.diseases);
  gen->add_option("--symptoms", kb_cfg.symptoms);
  gen->add_option("--min-per-disease", kb_cfg.min_symptoms_per_disease);
  gen->add_option("--max-per-disease", kb_cfg.max_symptoms_per_disease);
  gen->add_option("--seed", kb_cfg.seed);

  // simulate
  auto* sim = app.add_subcommand("simulate", "sample train/val/test records");
  SimConfig sim_cfg;
  std::string sim_out = "data/sim";
  sim->add_option("--kb", common.kb)->required();
  sim->add_option("--seed", sim_cfg.seed);
  sim->add_option("--train", sim_cfg.train);
  sim->add_option("--val", sim_cfg.val);
  sim->add_option("--test", sim_cfg.test);
  sim->add_option("--out", sim_out, "output directory");

  // train-diag / train-vae
  TrainOptions train;
  std::string data_dir = "data/sim";
  auto* tdiag = app.add_subcommand("train-diag", "train the diagnosis model and the co-occurrence index");
  add_common(tdiag, common);
  tdiag->add_option("--data", data_dir, "directory with train/val jsonl");
  tdiag->add_option("--epochs", train.diag_train.max_epochs);
  tdiag->add_option("--batch", train.diag_train.batch_size);
  tdiag->add_option("--patience", train.diag_train.patience);
  tdiag->add_option("--lr", train.diag_train.adam.learning_rate);
  tdiag->add_option("--k", train.diag.embedding_dim, "embedding size");
  tdiag->add_option("--c", train.diag.attention_dim, "attention size");
  tdiag->add_option("--blocks", train.diag.blocks);
  tdiag->add_option("--lambda", train.diag.kl_weight, "attention regulariser weight");
  tdiag->add_option("--tau", train.cooccurrence_threshold, "co-occurrence threshold");

  auto* tvae = app.add_subcommand("train-vae", "train the VAE on frozen diagnosis embeddings");
  add_common(tvae, common);
  tvae->add_option("--data", data_dir, "directory with train/val jsonl");
  tvae->add_option("--epochs", train.vae_train.epochs);
  tvae->add_option("--batch", train.vae_train.batch_size);
  tvae->add_option("--lr", train.vae_train.adam.learning_rate);
  tvae->add_option("--latent", train.vae.latent_dim);
  tvae->add_option("--beta", train.vae.beta);

  // eval / curve / bench / explain
  std::string test_path = "data/sim/test.jsonl";
  std::string out_path;
  std::size_t runs = 1, max_records = 0;
  std::string policy = "reward";
  std::string transcripts_path;
  auto* ev = app.add_subcommand("eval", "run simulated consultations and report Top-k accuracy");
  add_common(ev, common);
  ev->add_option("--test", test_path);
  ev->add_option("--runs", runs);
  ev->add_option("--records", max_records, "limit on test records (0 = all)");
  ev->add_option("--policy", policy)->check(CLI::IsMember({"reward", "random"}));
  ev->add_option("--out", out_path, "report JSON");
  ev->add_option("--transcripts", transcripts_path, "JSON-lines transcripts");

  std::string budgets_text = "0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15";
  std::string csv_path;
  auto* cv = app.add_subcommand("curve", "Top-k accuracy against the inquiry budget");
  add_common(cv, common);
  cv->add_option("--test", test_path);
  cv->add_option("--records", max_records);
  cv->add_option("--budgets", budgets_text, "ascending, comma separated");
  cv->add_option("--out", out_path, "curve JSON");
  cv->add_option("--csv", csv_path, "curve CSV");

  std::vector<std::string> arm_names{"full", "no_approximation", "no_approximation_no_filtering"};
  auto* bn = app.add_subcommand("bench", "time per inquiry for the speedup arms");
  add_common(bn, common);
  bn->add_option("--test", test_path);
  bn->add_option("--records", max_records);
  bn->add_option("--arms", arm_names)->delimiter(',');
  bn->add_option("--out", out_path);

  std::string transcript_in;
  std::size_t record_index = 0;
  auto* ex = app.add_subcommand("explain", "per-round reward breakdowns");
  add_common(ex, common);
  ex->add_option("--transcript", transcript_in, "replay a transcript JSON");
  ex->add_option("--test", test_path);
  ex->add_option("--record", record_index, "test record to simulate");
  ex->add_option("--out", out_path);

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* sv = app.add_subcommand("serve", "HTTP session API");
  add_common(sv, common);
  sv->add_option("--host", host)->envname("BSODA_HOST");
  sv->add_option("--port", port)->envname("BSODA_PORT");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      save_knowledge_base(generate_knowledge_base(kb_cfg), gen_out);
      return 0;
    }
    if (*sim) {
      const KnowledgeBase kb = load_knowledge_base(common.kb);
      const DatasetSplits s = generate_dataset(kb, sim_cfg);
      save_dataset(s.train, kb, std::filesystem::path(sim_out) / "train.jsonl");
      save_dataset(s.val, kb, std::filesystem::path(sim_out) / "val.jsonl");
      save_dataset(s.test, kb, std::filesystem::path(sim_out) / "test.jsonl");
      return 0;
    }
    const ModelPaths paths{common.models};
    if (*tdiag || *tvae) {
      const KnowledgeBase kb = load_knowledge_base(common.kb);
      const Dataset tr = load_dataset(std::filesystem::path(data_dir) / "train.jsonl", kb);
      const Dataset va = load_dataset(std::filesystem::path(data_dir) / "val.jsonl", kb);
      if (*tdiag) {
        train.diag.seed = common.seed;
        train.diag_train.on_epoch = [](const DiagEpochLog& l) {
          std::printf("epoch %3zu  loss %.4f  ce %.4f  attn_kl %.4f  val_top1 %.4f  val_ce %.4f\n", l.epoch, l.loss,
                      l.cross_entropy, l.attention_kl, l.val_top1, l.val_cross_entropy);
          std::fflush(stdout);
        };
        DiagModel diag = train_diag_stage(kb, tr, va, train);
        save_diag_model(diag, paths.diag_stem(), kb.fingerprint());
        write_text_file(paths.cooccurrence(),
                        serialize_cooccurrence(build_cooccurrence(tr, kb.num_symptoms(), train.cooccurrence_threshold), kb));
      } else {
        train.vae.seed = common.seed;
        train.vae_train.on_epoch = [](const VaeEpochLog& l) {
          std::printf("epoch %3zu  loss %.4f  recon %.4f  kl %.4f  val %.4f\n", l.epoch, l.loss, l.reconstruction, l.kl,
                      l.val_loss);
          std::fflush(stdout);
        };
        const DiagModel diag = load_diag_model(paths.diag_stem(), kb.fingerprint());
        const Vae vae = train_vae_stage(kb, diag, tr, va, train);
        save_vae(vae, paths.vae_stem(), kb.fingerprint());
      }
      return 0;
    }
    if (*sv) {
      auto engine = std::make_shared<const Engine>(load_engine(common.kb, paths));
      ServiceConfig cfg;
      cfg.session = common.session();
      ApiService service(engine, cfg, engine_fingerprints(common.kb, paths));
      std::cerr << "listening on " << host << ":" << port << "\n";
      serve(service, host, port);
      return 0;
    }

    const Engine engine = load_engine(common.kb, paths);
    EvalOptions opts;
    opts.session = common.session();
    opts.seed = common.seed;
    opts.max_records = max_records;

    if (*ev) {
      opts.n_runs = runs;
      opts.keep_transcripts = !transcripts_path.empty();
      if (policy == "random") opts.session.policy = InquiryPolicy::Random;
      const EvalResult r = evaluate(engine, load_dataset(test_path, engine.kb), opts);
      std::cout << format_report(r.report);
      if (!out_path.empty()) write_json(out_path, report_to_json(r.report));
      if (!transcripts_path.empty()) {
        std::string lines;
        for (const auto& t : r.transcripts) lines += session_to_json(t, engine.kb, false).dump() + "\n";
        write_text_file(transcripts_path, lines);
      }
    } else if (*cv) {
      const auto budgets = parse_budgets(budgets_text);
      opts.session.max_inquiries = budgets.empty() ? 0 : budgets.back();
      const EvalResult r = evaluate(engine, load_dataset(test_path, engine.kb), opts);
      const auto curve = accuracy_curve(r.outcomes, budgets);
      std::cout << curve_to_csv(curve);
      if (!csv_path.empty()) write_text_file(csv_path, curve_to_csv(curve));
      if (!out_path.empty()) write_json(out_path, curve_to_json(curve));
    } else if (*bn) {
      std::vector<BenchArm> arms;
      for (const auto& n : arm_names) {
        const auto a = parse_bench_arm(n);
        if (!a) throw ValidationError("unknown arm " + n);
        arms.push_back(*a);
      }
      const auto rows = bench(engine, load_dataset(test_path, engine.kb), arms, opts);
      for (const auto& r : rows) {
        std::printf("%-32s %10.4f s/inquiry  %6.1f candidates  %6.2f combinations\n", to_string(r.arm).c_str(),
                    r.seconds_per_inquiry, r.mean_candidates, r.mean_combinations);
      }
      if (!out_path.empty()) write_json(out_path, bench_to_json(rows));
    } else if (*ex) {
      SessionRecord rec;
      if (!transcript_in.empty()) {
        rec = replay(engine, opts.session, transcript_from_json(parse_json(read_text_file(transcript_in), transcript_in), engine.kb));
      } else {
        const Dataset test = load_dataset(test_path, engine.kb);
        if (record_index >= test.size()) throw ValidationError("--record is past the end of the test set");
        opts.max_records = record_index + 1;
        opts.keep_transcripts = true;
        Dataset one(test.begin(), test.begin() + static_cast<std::ptrdiff_t>(record_index) + 1);
        const EvalResult r = evaluate(engine, one, opts);
        if (r.transcripts.empty() || r.outcomes.back().record != record_index) {
          throw ValidationError("record has no positive symptom to self-report");
        }
        rec = r.transcripts.back();
      }
      write_json(out_path, session_to_json(rec, engine.kb, true));
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
