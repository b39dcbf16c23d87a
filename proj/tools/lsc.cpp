// lsc: command-line front end for the separability diagnostics.
//
// exit codes: 0 ok, 1 validation error, 2 I/O or parse error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lsc/lsc.hpp"

namespace {

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
    std::fflush(stdout);
    return;
  }
  lsc::write_text_file(out_path, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear separability ceiling diagnostics"};
  app.require_subcommand(1);
  std::size_t workers = 1;
  app.add_option("--workers", workers, "worker threads for loading and probing")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1024}));

  const std::map<std::string, lsc::Stage> stages{{"vision", lsc::Stage::vision}, {"final", lsc::Stage::final}};
  const std::map<std::string, lsc::Context> contexts{{"batched", lsc::Context::batched},
                                                     {"single", lsc::Context::single}};
  const std::map<std::string, lsc::Pooling> poolings{{"mean", lsc::Pooling::mean}, {"max", lsc::Pooling::max}};
  const std::map<std::string, lsc::ReportFormat> formats{{"md", lsc::ReportFormat::md},
                                                         {"csv", lsc::ReportFormat::csv},
                                                         {"scatter", lsc::ReportFormat::scatter},
                                                         {"json", lsc::ReportFormat::json}};
  const std::map<std::string, lsc::ScheduleKind> kinds{{"constant", lsc::ScheduleKind::constant},
                                                       {"linear", lsc::ScheduleKind::linear},
                                                       {"cosine", lsc::ScheduleKind::cosine}};

  // probe
  auto* probe = app.add_subcommand("probe", "run one similarity probe over a dataset");
  std::string probe_manifest, probe_out = "-";
  std::string probe_stage = "vision", probe_context = "batched", probe_pooling = "mean";
  probe->add_option("--manifest", probe_manifest, "dataset manifest")->required();
  probe->add_option("--stage", probe_stage)->check(CLI::IsMember(stages));
  probe->add_option("--context", probe_context)->check(CLI::IsMember(contexts));
  probe->add_option("--pooling", probe_pooling)->check(CLI::IsMember(poolings));
  probe->add_option("--out", probe_out, "output file, - for stdout");

  // decompose
  auto* decompose = app.add_subcommand("decompose", "LSC, final-stage probe, taxonomy and dependence tests");
  std::string dec_manifest, dec_out = "-";
  lsc::DecomposeOptions dec;
  bool yates = false;
  decompose->add_option("--manifest", dec_manifest, "dataset manifest")->required();
  decompose->add_option("--gen-preds", dec.gen_methods, "generative method name (repeatable)")->required();
  decompose->add_option("--out", dec_out, "output file, - for stdout");
  decompose->add_flag("--yates", yates, "apply the continuity correction to chi-squared");
  decompose->add_option("--tau", dec.tau, "temperature for the objective summary");
  decompose->add_option("--w-n", dec.w_n, "next-token weight for the objective summary");
  decompose->add_option("--w-c", dec.w_c, "similarity weight for the objective summary");

  // report
  auto* report = app.add_subcommand("report", "render decomposition reports");
  std::vector<std::string> report_in;
  std::string report_format = "md";
  std::string report_out = "-";
  report->add_option("--in", report_in, "decompose output (repeatable)")->required();
  report->add_option("--format", report_format)->check(CLI::IsMember(formats));
  report->add_option("--out", report_out, "output file, - for stdout");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_config, synth_out;
  synth->add_option("--config", synth_config, "JSON config; omitted keys take defaults");
  synth->add_option("--out", synth_out, "output directory")->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the similarity loss gradient");
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  double h = 1e-5, tol = lsc::kGradTolerance;
  gradcheck->add_option("--trials", trials)->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", seed);
  gradcheck->add_option("--step", h, "central difference step")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tol", tol, "max relative error")->check(CLI::PositiveNumber);

  // schedule
  auto* schedule = app.add_subcommand("schedule", "loss weight curves as CSV");
  lsc::ScheduleConfig sched;
  std::string sched_kind = "cosine";
  std::string sched_out = "-";
  schedule->add_option("--kind", sched_kind)->check(CLI::IsMember(kinds));
  schedule->add_option("--C", sched.target_or_c, "scale C (cosine) or target weight (constant, linear)");
  schedule->add_option("--steps", sched.total_steps)->required();
  schedule->add_option("--out", sched_out, "output file, - for stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "lsc: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*probe) {
      emit(probe_out, lsc::run_probe_command(probe_manifest, stages.at(probe_stage), contexts.at(probe_context),
                                             poolings.at(probe_pooling), workers));
    } else if (*decompose) {
      dec.workers = workers;
      dec.continuity = yates ? lsc::Continuity::yates : lsc::Continuity::none;
      emit(dec_out, lsc::run_decompose_command(dec_manifest, dec));
    } else if (*report) {
      std::vector<std::filesystem::path> paths(report_in.begin(), report_in.end());
      emit(report_out, lsc::run_report_command(paths, formats.at(report_format)));
    } else if (*synth) {
      const auto path = synth_config.empty() ? lsc::run_synth_command(lsc::SynthConfig{}, synth_out, workers)
                                             : lsc::run_synth_command(synth_config, synth_out, workers);
      std::cerr << "wrote " << path.string() << "\n";
    } else if (*gradcheck) {
      const auto s = lsc::run_gradcheck(trials, seed, h, tol);
      std::cout << lsc::format_gradcheck(s, tol);
      return s.passed ? 0 : 1;
    } else if (*schedule) {
      sched.kind = kinds.at(sched_kind);
      emit(sched_out, lsc::schedule_csv(sched));
    }
  } catch (const lsc::Error& e) {
    std::cerr << "lsc: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "lsc: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "lsc: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
