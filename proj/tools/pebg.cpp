// pebg: command-line entry point for ingestion, pre-training, knowledge
// tracing, evaluation and repeated experiments.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pebg/config.hpp"
#include "pebg/dataset.hpp"
#include "pebg/experiment.hpp"
#include "pebg/graph.hpp"
#include "pebg/kt.hpp"
#include "pebg/metrics.hpp"
#include "pebg/pretrain.hpp"
#include "pebg/synthetic.hpp"

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr const char* kConfigEnv = "PEBG_CONFIG";
constexpr int kUsageExit = 2;

void log(const std::string& msg) { std::cerr << "pebg: " << msg << '\n'; }

/// Options every training stage shares.
struct StageFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::size_t threads = 1;

  void add(CLI::App* app) {
    app->add_option("--config", config, std::string("Config file (default: $") + kConfigEnv + ")");
    app->add_option("--seed", seed, "Seed for every random choice; overrides the config");
    app->add_flag("--deterministic", deterministic, "Bit-reproducible run (implies --threads 1)");
    app->add_option("--threads", threads, "Worker threads for KT training")->check(CLI::PositiveNumber);
  }

  pebg::PipelineConfig resolve() const {
    pebg::PipelineConfig c;
    std::string path = config;
    if (path.empty())
      if (const char* env = std::getenv(kConfigEnv)) path = env;
    if (!path.empty()) c = pebg::load_config(path);
    if (seed) c.apply_seed(*seed);
    c.kt.threads = deterministic ? 1 : threads;
    return c;
  }
};

template <class F>
void write_file(const std::string& path, F&& body) {
  std::ofstream out(path);
  if (!out) throw pebg::IoError("cannot write " + path);
  body(out);
}

int run(int argc, char** argv) {
  CLI::App app{"PEBG question embeddings and knowledge tracing"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("pebg ") + kVersion + " (dataset format " +
                                        std::to_string(pebg::kDatasetFormatVersion) + ", kt model format " +
                                        std::to_string(pebg::kKtModelFormatVersion) + ")");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert an interaction CSV into a dataset file");
  std::string ingest_input, ingest_output;
  std::size_t min_seq_len = 3;
  std::vector<std::string> filters;
  ingest->add_option("--input", ingest_input, "Interaction CSV")->required();
  ingest->add_option("--output", ingest_output, "Dataset file to write")->required();
  ingest->add_option("--min-seq-len", min_seq_len, "Drop students with fewer records");
  ingest->add_option("--filter-column", filters, "Keep rows where <col>=<value> (repeatable)");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Pre-train question embeddings");
  StageFlags pre_flags;
  std::string pre_dataset, pre_output, pre_ablation, pre_curve, pre_graph;
  bool pre_ablation_set = false;
  pre->add_option("--dataset", pre_dataset, "Dataset file or CSV")->required();
  pre->add_option("--output", pre_output, "Embedding file to write")->required();
  pre->add_option("--ablation", pre_ablation, "Comma-separated subset of RER,RIS,RPL,RPF")
      ->each([&](const std::string&) { pre_ablation_set = true; });
  pre->add_option("--loss-curve", pre_curve, "Write per-epoch losses as CSV");
  pre->add_option("--graph-dump", pre_graph, "Write the question-skill edge list");
  pre_flags.add(pre);

  // train-kt
  auto* kt = app.add_subcommand("train-kt", "Train a knowledge-tracing model");
  StageFlags kt_flags;
  std::string kt_dataset, kt_mode, kt_embeddings, kt_out, kt_log;
  kt->add_option("--dataset", kt_dataset, "Dataset file or CSV")->required();
  kt->add_option("--mode", kt_mode, "pretrained_finetune|pretrained_frozen|raw_question|raw_skill");
  kt->add_option("--embeddings", kt_embeddings, "Pre-trained embedding file");
  kt->add_option("--model-out", kt_out, "Model file to write")->required();
  kt->add_option("--log", kt_log, "Write per-epoch loss and validation AUC as CSV");
  kt_flags.add(kt);

  // eval
  auto* ev = app.add_subcommand("eval", "Pooled test AUC of a trained model");
  std::string ev_model, ev_dataset, ev_out;
  std::size_t ev_max_len = 200;
  ev->add_option("--model", ev_model, "Model file")->required();
  ev->add_option("--dataset", ev_dataset, "Dataset the model was trained on")->required();
  ev->add_option("--out", ev_out, "Write predictions as CSV");
  ev->add_option("--max-seq-len", ev_max_len, "Chunk length used during training");

  // experiment
  auto* ex = app.add_subcommand("experiment", "Repeat the full pipeline and report AUCs");
  StageFlags ex_flags;
  std::string ex_spec, ex_out;
  std::size_t repeats = 5;
  ex->add_option("--spec", ex_spec, "Experiment config (must set 'dataset')")->required();
  ex->add_option("--repeats", repeats, "Number of runs, seeds seed..seed+repeats-1")->check(CLI::PositiveNumber);
  ex->add_option("--out", ex_out, "Report directory")->required();
  ex->add_option("--seed", ex_flags.seed, "Base seed; overrides the spec");
  ex->add_flag("--deterministic", ex_flags.deterministic, "Bit-reproducible run (implies --threads 1)");
  ex->add_option("--threads", ex_flags.threads, "Worker threads for KT training")->check(CLI::PositiveNumber);

  // export-embeddings
  auto* exp = app.add_subcommand("export-embeddings", "Write a model's (fine-tuned) question embeddings");
  std::string exp_model, exp_output;
  exp->add_option("--model", exp_model, "Model file")->required();
  exp->add_option("--output", exp_output, "Embedding file to write")->required();

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a planted-structure dataset");
  pebg::SyntheticSpec spec;
  std::uint64_t syn_seed = 0;
  std::string syn_output, syn_csv;
  syn->add_option("--skills", spec.num_skills);
  syn->add_option("--questions-per-skill", spec.questions_per_skill);
  syn->add_option("--overlap", spec.skill_overlap, "Chance of a second skill from the same cluster");
  syn->add_option("--clusters", spec.num_clusters, "Skill clusters (0: one per skill)");
  syn->add_option("--students", spec.num_students);
  syn->add_option("--records", spec.records_per_student, "Records per student");
  syn->add_option("--easiness-min", spec.easiness_min);
  syn->add_option("--easiness-max", spec.easiness_max);
  syn->add_option("--seed", syn_seed);
  syn->add_option("--output", syn_output, "Dataset file to write")->required();
  syn->add_option("--csv", syn_csv, "Also write the raw CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const CLI::App* failed = &app;
    for (const auto* sub : app.get_subcommands())
      if (sub->parsed()) failed = sub;
    std::cerr << "pebg: " << e.what() << "\n\n" << failed->help();
    return kUsageExit;
  }

  if (ingest->parsed()) {
    pebg::IngestOptions options;
    options.min_seq_len = min_seq_len;
    for (const auto& f : filters) {
      const auto eq = f.find('=');
      if (eq == std::string::npos || eq == 0) throw pebg::ConfigError("--filter-column expects <col>=<value>");
      options.filters.push_back({f.substr(0, eq), f.substr(eq + 1)});
    }
    pebg::IngestReport report;
    auto ds = pebg::ingest_file(ingest_input, options, &report);
    pebg::save_dataset(ingest_output, ds);
    log("ingested " + std::to_string(ds.students.size()) + " students, " + std::to_string(ds.num_records()) +
        " records, " + std::to_string(ds.num_questions) + " questions, " + std::to_string(ds.num_skills) +
        " skills");
  } else if (pre->parsed()) {
    auto c = pre_flags.resolve();
    if (pre_ablation_set) c.pretrain.ablation = pebg::Ablation::parse(pre_ablation);
    const auto ds = pebg::load_any_dataset(pre_dataset, c.min_seq_len);
    const auto inputs = pebg::pretrain_inputs(ds, c);
    if (!pre_graph.empty()) write_file(pre_graph, [&](std::ostream& o) { pebg::write_edge_list(o, inputs.graph); });
    auto result = pebg::pretrain(inputs, c.pretrain, ds.question_ids, [](const pebg::EpochLoss& e) {
      log("epoch " + std::to_string(e.epoch) + " loss " + pebg::detail::format_double(e.mean.total));
    });
    pebg::save_embeddings(pre_output, result.table);
    if (!pre_curve.empty()) write_file(pre_curve, [&](std::ostream& o) { pebg::write_loss_curve(o, result.curve); });
  } else if (kt->parsed()) {
    auto c = kt_flags.resolve();
    if (!kt_mode.empty()) c.kt_mode = pebg::parse_kt_mode(kt_mode);
    const auto ds = pebg::load_any_dataset(kt_dataset, c.min_seq_len);
    pebg::Matrix table;
    if (pebg::uses_pretrained(c.kt_mode)) {
      if (kt_embeddings.empty()) throw pebg::ConfigError("--embeddings is required in " + std::string(pebg::to_string(c.kt_mode)) + " mode");
      table = pebg::align_embeddings(pebg::load_embeddings(kt_embeddings), ds.question_ids);
    }
    const auto parts = pebg::split_students(ds.students.size(), c.train_fraction, c.seed);
    auto model = pebg::init_kt_model(ds, c.kt_mode, c.kt, table.empty() ? nullptr : &table);
    model.split_seed = c.seed;
    model.train_fraction = c.train_fraction;
    auto result = pebg::train_kt(std::move(model), ds, parts.train_students, c.kt, [](const pebg::KtEpochLog& e) {
      log("epoch " + std::to_string(e.epoch) + " loss " + pebg::detail::format_double(e.train_loss) +
          (e.validation_auc ? " val_auc " + pebg::detail::format_double(*e.validation_auc) : ""));
    });
    pebg::save_kt_model(kt_out, result.model);
    if (!kt_log.empty()) write_file(kt_log, [&](std::ostream& o) { pebg::write_kt_log(o, result.log); });
  } else if (ev->parsed()) {
    const auto model = pebg::load_kt_model(ev_model);
    const auto ds = pebg::load_any_dataset(ev_dataset, 3);
    pebg::check_vocabulary(model, ds);
    const auto parts = pebg::split_students(ds.students.size(), model.train_fraction, model.split_seed);
    const auto preds = pebg::predict(model, ds, parts.test_students, ev_max_len);
    const double value = pebg::auc(preds);
    if (!ev_out.empty())
      write_file(ev_out, [&](std::ostream& o) {
        o << "student_id,question_id,probability,label\n";
        for (const auto& p : preds)
          o << ds.students[p.student].student_id << ',' << ds.question_ids.name(p.question) << ','
            << pebg::detail::format_double(p.probability) << ',' << (p.label ? 1 : 0) << '\n';
      });
    std::cout << "auc " << pebg::detail::format_double(value) << '\n';
  } else if (ex->parsed()) {
    ex_flags.config = ex_spec;
    auto c = ex_flags.resolve();
    if (c.dataset.empty()) throw pebg::ConfigError("experiment spec must set 'dataset'");
    auto dataset_path = std::filesystem::path(c.dataset);
    if (dataset_path.is_relative()) dataset_path = std::filesystem::path(ex_spec).parent_path() / dataset_path;
    const auto ds = pebg::in_stage("ingest", [&] { return pebg::load_any_dataset(dataset_path.string(), c.min_seq_len); });
    auto report = pebg::run_experiment(ds, c, repeats, [](const pebg::PipelineRun& r) {
      log("seed " + std::to_string(r.seed) + " auc " + pebg::detail::format_double(r.auc));
    });
    pebg::save_experiment(ex_out, report, c);
    log("mean auc " + pebg::detail::format_double(report.mean_auc()));
  } else if (exp->parsed()) {
    const auto model = pebg::load_kt_model(exp_model);
    pebg::QuestionEmbeddingTable t;
    t.embeddings = pebg::Matrix(model.num_questions(), model.params.dim());
    for (std::size_t q = 0; q < model.num_questions(); ++q) {
      t.question_ids.intern(model.question_ids[q]);
      model.embed(q, t.embeddings.row(q));
    }
    pebg::save_embeddings(exp_output, t);
  } else if (syn->parsed()) {
    const auto data = pebg::generate_synthetic(spec, syn_seed);
    pebg::save_dataset(syn_output, data.dataset);
    if (!syn_csv.empty()) write_file(syn_csv, [&](std::ostream& o) { o << data.csv; });
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pebg::Error& e) {
    log(std::string("error: ") + e.what());
    return static_cast<int>(e.category());
  } catch (const std::filesystem::filesystem_error& e) {
    log(std::string("error: ") + e.what());
    return static_cast<int>(pebg::ErrorCategory::kIo);
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return 1;
  }
}
