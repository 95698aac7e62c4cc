#pragma once

// The full pipeline (split, pre-train, train KT, evaluate) and the repeated
// experiment harness built on it.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "pebg/config.hpp"
#include "pebg/dataset.hpp"
#include "pebg/kt.hpp"
#include "pebg/metrics.hpp"
#include "pebg/pretrain.hpp"

namespace pebg {

/// Re-throws `e` with its category kept and the stage name prepended.
template <class F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.category(), stage + ": " + e.what());
  }
}

inline InteractionDataset load_any_dataset(const std::string& path, std::size_t min_seq_len) {
  if (std::filesystem::path(path).extension() == ".csv") {
    IngestOptions options;
    options.min_seq_len = min_seq_len;
    return ingest_file(path, options);
  }
  return load_dataset(path);
}

struct PipelineRun {
  std::uint64_t seed = 0;
  double auc = 0.0;
  double wall_clock_s = 0.0;
  std::vector<EpochLoss> pretrain_curve;
  std::vector<KtEpochLog> kt_log;
  KtModel model;
};

inline void write_kt_log(std::ostream& out, const std::vector<KtEpochLog>& log) {
  out << "epoch,train_loss,validation_auc\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << detail::format_double(e.train_loss) << ',';
    if (e.validation_auc) out << detail::format_double(*e.validation_auc);
    out << '\n';
  }
}

/// Pre-training inputs for the training students of the configured split:
/// the graph covers every question, side information comes from training
/// students only.
inline PretrainInputs pretrain_inputs(const InteractionDataset& ds, const PipelineConfig& c) {
  const auto parts = split_students(ds.students.size(), c.train_fraction, c.seed);
  return PretrainInputs::from_dataset(ds, subset(ds, parts.train_students), c.attributes);
}

/// One pass of the pipeline with every seed set to `c.seed`.
inline PipelineRun run_pipeline(const InteractionDataset& ds, const PipelineConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  PipelineRun run;
  run.seed = c.seed;
  const auto parts = in_stage("split", [&] { return split_students(ds.students.size(), c.train_fraction, c.seed); });

  Matrix table;
  if (uses_pretrained(c.kt_mode)) {
    auto result = in_stage("pretrain", [&] { return pretrain(pretrain_inputs(ds, c), c.pretrain, ds.question_ids); });
    table = std::move(result.table.embeddings);
    run.pretrain_curve = std::move(result.curve);
  }
  auto trained = in_stage("train-kt", [&] {
    auto model = init_kt_model(ds, c.kt_mode, c.kt, table.empty() ? nullptr : &table);
    model.split_seed = c.seed;
    model.train_fraction = c.train_fraction;
    return train_kt(std::move(model), ds, parts.train_students, c.kt);
  });
  run.kt_log = std::move(trained.log);
  run.model = std::move(trained.model);
  run.auc = in_stage("eval", [&] { return auc(predict(run.model, ds, parts.test_students, c.kt.max_seq_len)); });
  run.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

struct ExperimentReport {
  std::vector<PipelineRun> runs;
  std::string fingerprint;
  std::string pooling = "pooled";

  double mean_auc() const {
    double s = 0.0;
    for (const auto& r : runs) s += r.auc;
    return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
  }
};

/// Repeats the pipeline with seeds seed, seed+1, ...
inline ExperimentReport run_experiment(const InteractionDataset& ds, PipelineConfig c, std::size_t repeats,
                                       const std::function<void(const PipelineRun&)>& on_run = {}) {
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  ExperimentReport report;
  report.fingerprint = fingerprint(c);
  const std::uint64_t base = c.seed;
  for (std::size_t i = 0; i < repeats; ++i) {
    c.apply_seed(base + i);
    report.runs.push_back(run_pipeline(ds, c));
    if (on_run) on_run(report.runs.back());
  }
  return report;
}

inline void write_report(std::ostream& out, const ExperimentReport& r) {
  out << "run,seed,auc,wall_clock_s\n";
  for (std::size_t i = 0; i < r.runs.size(); ++i)
    out << i << ',' << r.runs[i].seed << ',' << detail::format_double(r.runs[i].auc) << ','
        << detail::format_double(r.runs[i].wall_clock_s) << '\n';
}

inline void write_summary(std::ostream& out, const ExperimentReport& r, const PipelineConfig& c) {
  out << "mean_auc = " << detail::format_double(r.mean_auc()) << '\n'
      << "runs = " << r.runs.size() << '\n'
      << "pooling = " << r.pooling << '\n'
      << "fingerprint = " << r.fingerprint << '\n'
      << describe(c);
}

/// report.csv, summary.txt and per-run loss curves under `dir`.
inline void save_experiment(const std::string& dir, const ExperimentReport& r, const PipelineConfig& c) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(std::filesystem::path(dir) / name);
    if (!out) throw IoError("cannot write " + (std::filesystem::path(dir) / name).string());
    return out;
  };
  {
    auto out = open("report.csv");
    write_report(out, r);
  }
  {
    auto out = open("summary.txt");
    write_summary(out, r, c);
  }
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    if (!r.runs[i].pretrain_curve.empty()) {
      auto out = open("run" + std::to_string(i) + "_pretrain_loss.csv");
      write_loss_curve(out, r.runs[i].pretrain_curve);
    }
    auto out = open("run" + std::to_string(i) + "_kt_loss.csv");
    write_kt_log(out, r.runs[i].kt_log);
  }
}

}  // namespace pebg
