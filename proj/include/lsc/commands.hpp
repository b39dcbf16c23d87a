#pragma once

// The operations behind each `lsc` subcommand. Each one takes parsed
// options and returns the text it would emit, so tests can drive them
// without a process boundary.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsc/dataset.hpp"
#include "lsc/objective.hpp"
#include "lsc/probe.hpp"
#include "lsc/report.hpp"
#include "lsc/stats.hpp"
#include "lsc/synth.hpp"

namespace lsc {

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

inline nlohmann::json probe_report_json(const Dataset& ds, const ProbeRun& run) {
  nlohmann::json results = nlohmann::json::array();
  for (std::size_t i = 0; i < run.results.size(); ++i) {
    const auto& r = run.results[i];
    results.push_back({{"sample_id", r.sample_id},
                       {"predicted", to_string(r.predicted)},
                       {"truth", to_string(run.truths[i])},
                       {"s_p", r.s_p},
                       {"s_n", r.s_n}});
  }
  return {{"kind", "lsc-probe"},
          {"version", 1},
          {"dataset", ds.manifest.dataset_name},
          {"model", ds.manifest.model},
          {"prompt_strategy", ds.manifest.prompt_strategy},
          {"stage", to_string(run.stage)},
          {"context", to_string(run.context)},
          {"pooling", to_string(run.pooling)},
          {"is_lsc", is_lsc(run.stage, run.context, run.pooling)},
          {"accuracy", to_json(run.accuracy)},
          {"results", results}};
}

inline void require_stage(const Dataset& ds, Stage stage) {
  for (Stage s : ds.manifest.stages)
    if (s == stage) return;
  throw Error(ErrorKind::InvalidInput, "dataset has no " + std::string(to_string(stage)) + "-stage embeddings");
}

inline std::string run_probe_command(const std::filesystem::path& manifest, Stage stage, Context context,
                                     Pooling pooling, std::size_t workers = 1) {
  const auto ds = load_dataset(manifest, workers);
  require_stage(ds, stage);
  const auto run = run_probe(ds.store, ds.samples, stage, context, pooling, workers);
  return probe_report_json(ds, run).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

struct DecomposeOptions {
  std::vector<std::string> gen_methods;
  Continuity continuity = Continuity::none;
  double tau = kDefaultTemperature;
  /// Weights for the objective summary when the dataset carries nt_loss.
  double w_n = 1.0;
  double w_c = kScalePhi;
  std::size_t workers = 1;
};

/// Short tags for dependence superscripts: the upper-cased first letter,
/// or the full name when two methods share one.
inline std::vector<std::string> method_tags(const std::vector<std::string>& methods) {
  std::vector<std::string> tags;
  for (const auto& m : methods) {
    bool clash = false;
    for (const auto& other : methods)
      if (&other != &m && !other.empty() && !m.empty() && std::toupper(static_cast<unsigned char>(other[0])) ==
                                                              std::toupper(static_cast<unsigned char>(m[0])))
        clash = true;
    if (m.empty() || clash)
      tags.push_back(m);
    else
      tags.emplace_back(1, static_cast<char>(std::toupper(static_cast<unsigned char>(m[0]))));
  }
  return tags;
}

/// Generative accuracy over all samples; unparseable answers count as wrong.
inline AccuracyEstimate generative_accuracy(const PredictionSet& gen, const std::vector<BongardSample>& samples,
                                            std::int64_t* invalid) {
  std::int64_t correct = 0, pos_n = 0, pos_ok = 0, neg_n = 0, neg_ok = 0, bad = 0;
  for (const auto& s : samples) {
    const auto it = gen.predictions.find(s.sample_id);
    if (it == gen.predictions.end())
      throw Error(ErrorKind::MismatchedSamples, "sample '" + s.sample_id + "' missing from '" + gen.method + "'");
    const bool ok = it->second && *it->second == s.truth;
    bad += !it->second;
    correct += ok;
    if (s.truth == Label::positive) {
      ++pos_n;
      pos_ok += ok;
    } else {
      ++neg_n;
      neg_ok += ok;
    }
  }
  if (invalid) *invalid = bad;
  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  auto est = AccuracyEstimate::from_counts(gen.method, correct, n);
  if (pos_n > 0 && neg_n > 0) {
    est.per_class.push_back(AccuracyEstimate::from_counts(gen.method + ":positive", pos_ok, pos_n));
    est.per_class.push_back(AccuracyEstimate::from_counts(gen.method + ":negative", neg_ok, neg_n));
  }
  return est;
}

/// Mean sim_loss of the final-stage nearest-centroid similarities and the
/// combined objective against the recorded next-token losses.
inline ObjectiveSummary objective_summary(const Dataset& ds, const ProbeRun& final_run, const DecomposeOptions& o) {
  ObjectiveSummary s{o.tau, o.w_n, o.w_c, 0.0, 0.0, 0.0};
  const auto& nt = *ds.nt_loss;
  for (std::size_t i = 0; i < final_run.results.size(); ++i) {
    const auto& r = final_run.results[i];
    const LossTerms t{r.s_p, r.s_n, o.tau, final_run.truths[i], nt.at(r.sample_id), o.w_n, o.w_c};
    s.mean_nt_loss += t.l_nt;
    s.mean_sim_loss += sim_loss(t);
    s.mean_combined_loss += combined_loss(t);
  }
  const double n = static_cast<double>(final_run.results.size());
  s.mean_nt_loss /= n;
  s.mean_sim_loss /= n;
  s.mean_combined_loss /= n;
  return s;
}

inline ReportRow decompose_dataset(const Dataset& ds, const DecomposeOptions& o) {
  if (o.gen_methods.empty()) throw Error(ErrorKind::InvalidInput, "at least one --gen-preds method is required");
  require_stage(ds, Stage::vision);
  require_stage(ds, Stage::final);
  for (std::size_t i = 0; i < o.gen_methods.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (o.gen_methods[i] == o.gen_methods[j])
        throw Error(ErrorKind::DuplicateId, "generative method '" + o.gen_methods[i] + "' given twice");

  const auto lsc_run = run_probe(ds.store, ds.samples, Stage::vision, Context::batched, Pooling::mean, o.workers);
  const auto final_run = run_probe(ds.store, ds.samples, Stage::final, Context::batched, Pooling::mean, o.workers);
  const auto lsc_preds = lsc_run.predictions();
  const auto final_preds = final_run.predictions();

  ReportRow row;
  row.model = ds.manifest.model;
  row.dataset = ds.manifest.dataset_name;
  row.prompt_strategy = ds.manifest.prompt_strategy;
  row.lsc = lsc_run.accuracy;
  row.final_acc = final_run.accuracy;

  const auto tags = method_tags(o.gen_methods);
  for (std::size_t i = 0; i < o.gen_methods.size(); ++i) {
    const auto& method = o.gen_methods[i];
    const auto it = ds.predictions.find(method);
    if (it == ds.predictions.end())
      throw Error(ErrorKind::MissingEmbedding, "dataset has no predictions for method '" + method + "'");
    GenerativeEntry e;
    e.method = method;
    e.tag = tags[i];
    e.accuracy = generative_accuracy(it->second, ds.samples, &e.invalid);
    e.decomposition = decompose(e.accuracy, row.lsc, row.final_acc);
    e.vision_dependence = chi2_dependence(lsc_preds, it->second, o.continuity);
    e.final_dependence = chi2_dependence(final_preds, it->second, o.continuity);
    row.generative.push_back(std::move(e));
  }
  if (ds.nt_loss) row.objective = objective_summary(ds, final_run, o);
  return row;
}

inline std::string run_decompose_command(const std::filesystem::path& manifest, const DecomposeOptions& o) {
  const auto ds = load_dataset(manifest, o.workers);
  return dump_report(aggregate_report({decompose_dataset(ds, o)}));
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

enum class ReportFormat { md, csv, scatter, json };

/// Merges one or more decomposition reports and renders them.
inline std::string run_report_command(const std::vector<std::filesystem::path>& inputs, ReportFormat format) {
  if (inputs.empty()) throw Error(ErrorKind::InvalidInput, "no report given");
  std::vector<ReportRow> rows;
  for (const auto& path : inputs) {
    const auto j = io_detail::read_json_file(path);
    try {
      for (auto& row : report_rows_from_json(j)) rows.push_back(std::move(row));
    } catch (const ParseError& e) {
      throw ParseError(path.string(), e.offset(), e.reason(), e.detail());
    }
  }
  const auto report = aggregate_report(std::move(rows));
  switch (format) {
    case ReportFormat::md: return render_markdown(report);
    case ReportFormat::csv: return render_csv(report);
    case ReportFormat::scatter: return render_scatter(report);
    case ReportFormat::json: return dump_report(report);
  }
  return {};
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline std::filesystem::path run_synth_command(const SynthConfig& config, const std::filesystem::path& out_dir,
                                               std::size_t workers = 1) {
  return write_dataset(out_dir, to_dataset(generate(config, workers)));
}

inline std::filesystem::path run_synth_command(const std::filesystem::path& config_path,
                                               const std::filesystem::path& out_dir, std::size_t workers = 1) {
  const auto config = synth_config_from_json(io_detail::read_json_file(config_path), config_path.string());
  return run_synth_command(config, out_dir, workers);
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

inline constexpr double kGradTolerance = 1e-5;

inline std::string format_gradcheck(const GradCheckSummary& s, double tolerance = kGradTolerance) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "trials %zu, max relative error %.3e (trial %zu), tolerance %.0e: %s\n", s.trials,
                s.max_relative_error, s.worst_trial, tolerance, s.passed ? "ok" : "FAILED");
  return buf;
}

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

inline std::string schedule_csv(const ScheduleConfig& config) {
  if (config.total_steps < 1) throw Error(ErrorKind::InvalidInput, "total_steps must be >= 1");
  std::string out = "step,progress,w_n,w_c\n";
  char buf[128];
  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    const auto w = schedule_weights(config, step);
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(step),
                  schedule_progress(config, step), w.w_n, w.w_c);
    out += buf;
  }
  return out;
}

}  // namespace lsc
