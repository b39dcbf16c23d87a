#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "lsc/error.hpp"
#include "lsc/stats.hpp"

namespace lsc {

/// One generative method evaluated against the probes of its row.
struct GenerativeEntry {
  std::string method;
  /// Short name used in dependence superscripts, e.g. "D" for direct.
  std::string tag;
  AccuracyEstimate accuracy;
  Decomposition decomposition;
  DependenceResult vision_dependence;
  DependenceResult final_dependence;
  /// Unparseable generative answers; counted as wrong, left out of chi2.
  std::int64_t invalid = 0;

  friend bool operator==(const GenerativeEntry&, const GenerativeEntry&) = default;
};

struct ObjectiveSummary {
  double tau = 0.0;
  double w_n = 0.0;
  double w_c = 0.0;
  double mean_nt_loss = 0.0;
  double mean_sim_loss = 0.0;
  double mean_combined_loss = 0.0;

  friend bool operator==(const ObjectiveSummary&, const ObjectiveSummary&) = default;
};

/// One (model, dataset, prompt strategy) evaluation.
struct ReportRow {
  std::string model;
  std::string dataset;
  std::string prompt_strategy;
  AccuracyEstimate lsc;
  AccuracyEstimate final_acc;
  std::vector<GenerativeEntry> generative;
  std::optional<ObjectiveSummary> objective;

  auto key() const { return std::tie(model, dataset, prompt_strategy); }
  std::string key_string() const { return model + " / " + dataset + " / " + prompt_strategy; }

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct DependenceTally {
  std::int64_t tests = 0;
  std::int64_t significant = 0;
  std::int64_t inverse = 0;

  void add(const DependenceResult& d) {
    ++tests;
    significant += d.significant;
    inverse += d.significant && d.direction == Direction::inverse;
  }

  friend bool operator==(const DependenceTally&, const DependenceTally&) = default;
};

struct Tallies {
  DependenceTally vision;
  DependenceTally final;
  /// (row, generative method) pairs.
  std::int64_t instances = 0;
  std::int64_t surpassed = 0;
  /// Generative accuracy superior to or indistinguishable from the LSC.
  std::int64_t not_lower = 0;
  std::int64_t representation_refinement = 0;
  std::int64_t post_representation_reasoning = 0;

  std::int64_t significant() const { return vision.significant + final.significant; }
  std::int64_t inverse() const { return vision.inverse + final.inverse; }

  friend bool operator==(const Tallies&, const Tallies&) = default;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  Tallies tallies;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Sorts rows by (model, dataset, prompt strategy) and counts significant
/// and inverse dependences and taxonomy outcomes.
inline EvalReport aggregate_report(std::vector<ReportRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].key() == rows[i - 1].key())
      throw Error(ErrorKind::DuplicateRow, "row '" + rows[i].key_string() + "' appears twice");
  EvalReport report;
  for (const auto& row : rows) {
    for (const auto& g : row.generative) {
      report.tallies.vision.add(g.vision_dependence);
      report.tallies.final.add(g.final_dependence);
      ++report.tallies.instances;
      const auto& d = g.decomposition;
      if (d.gen_vs_lsc != ComparisonOutcome::inferior) ++report.tallies.not_lower;
      if (d.taxonomy.bottleneck_class() == BottleneckClass::surpassed) {
        ++report.tallies.surpassed;
        if (d.taxonomy.mechanism() == Mechanism::representation_refinement)
          ++report.tallies.representation_refinement;
        else
          ++report.tallies.post_representation_reasoning;
      }
    }
  }
  report.rows = std::move(rows);
  return report;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline constexpr std::string_view kReportKind = "lsc-report";
inline constexpr int kReportVersion = 1;

/// Accuracies are written with 6 significant digits.
inline double round_sig6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return std::strtod(buf, nullptr);
}

namespace report_detail {

using nlohmann::json;

[[noreturn]] inline void bad(const std::string& what) {
  throw ParseError("<report>", 0, ParseReason::SchemaViolation, what);
}

inline const json& at(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) bad(std::string("missing \"") + key + "\"");
  return j.at(key);
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return at(j, key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad(std::string("\"") + key + "\" has the wrong type");
  }
}

inline ComparisonOutcome comparison_from(const std::string& s) {
  if (s == "superior") return ComparisonOutcome::superior;
  if (s == "inferior") return ComparisonOutcome::inferior;
  if (s == "indistinguishable") return ComparisonOutcome::indistinguishable;
  bad("unknown comparison \"" + s + "\"");
}

inline Direction direction_from(const std::string& s) {
  if (s == "positive") return Direction::positive;
  if (s == "inverse") return Direction::inverse;
  if (s == "none") return Direction::none;
  bad("unknown direction \"" + s + "\"");
}

}  // namespace report_detail

inline nlohmann::json to_json(const AccuracyEstimate& a) {
  // bounds from the rounded values, so a reloaded report serializes the same
  const double p = round_sig6(a.p_hat), me = round_sig6(a.me);
  nlohmann::json j{{"label", a.label},     {"p_hat", p},
                   {"n", a.n},             {"me", me},
                   {"lower", round_sig6(p - me)}, {"upper", round_sig6(p + me)}};
  if (a.per_class.size() == 2) j["per_class"] = {{"positive", to_json(a.per_class[0])}, {"negative", to_json(a.per_class[1])}};
  return j;
}

inline AccuracyEstimate accuracy_from_json(const nlohmann::json& j) {
  using namespace report_detail;
  AccuracyEstimate a{get<std::string>(j, "label"), get<double>(j, "p_hat"), get<std::int64_t>(j, "n"),
                     get<double>(j, "me"), {}};
  if (j.contains("per_class")) {
    const auto& pc = j.at("per_class");
    a.per_class.push_back(accuracy_from_json(at(pc, "positive")));
    a.per_class.push_back(accuracy_from_json(at(pc, "negative")));
  }
  return a;
}

inline nlohmann::json to_json(const DependenceResult& d) {
  const auto& c = d.table.counts;
  return {{"chi2", d.chi2},
          {"p_value", d.p_value},
          {"significant", d.significant},
          {"direction", to_string(d.direction)},
          {"table", {{c[0][0], c[0][1]}, {c[1][0], c[1][1]}}},
          {"excluded", d.excluded}};
}

inline DependenceResult dependence_from_json(const nlohmann::json& j) {
  using namespace report_detail;
  DependenceResult d;
  d.chi2 = get<double>(j, "chi2");
  d.p_value = get<double>(j, "p_value");
  d.significant = get<bool>(j, "significant");
  d.direction = direction_from(get<std::string>(j, "direction"));
  const auto& t = at(j, "table");
  if (!t.is_array() || t.size() != 2 || !t[0].is_array() || t[0].size() != 2 || !t[1].is_array() ||
      t[1].size() != 2)
    bad("table must be 2x2");
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) d.table.counts[i][k] = t[i][k].get<std::int64_t>();
  d.excluded = get<std::int64_t>(j, "excluded");
  return d;
}

inline nlohmann::json to_json(const ReportRow& row) {
  nlohmann::json gens = nlohmann::json::array();
  for (const auto& g : row.generative) {
    const auto& tax = g.decomposition.taxonomy;
    nlohmann::json tj{{"class", to_string(tax.bottleneck_class())}};
    tj["mechanism"] = tax.mechanism() ? nlohmann::json(to_string(*tax.mechanism())) : nlohmann::json(nullptr);
    gens.push_back({{"method", g.method},
                    {"tag", g.tag},
                    {"accuracy", to_json(g.accuracy)},
                    {"gen_vs_lsc", to_string(g.decomposition.gen_vs_lsc)},
                    {"gen_vs_final", to_string(g.decomposition.gen_vs_final)},
                    {"taxonomy", tj},
                    {"dependence_vision", to_json(g.vision_dependence)},
                    {"dependence_final", to_json(g.final_dependence)},
                    {"invalid", g.invalid}});
  }
  nlohmann::json j{{"model", row.model},
                   {"dataset", row.dataset},
                   {"prompt_strategy", row.prompt_strategy},
                   {"lsc", to_json(row.lsc)},
                   {"final", to_json(row.final_acc)},
                   {"generative", gens}};
  if (row.objective) {
    const auto& o = *row.objective;
    j["objective"] = {{"tau", o.tau},
                      {"w_n", o.w_n},
                      {"w_c", o.w_c},
                      {"mean_nt_loss", o.mean_nt_loss},
                      {"mean_sim_loss", o.mean_sim_loss},
                      {"mean_combined_loss", o.mean_combined_loss}};
  }
  return j;
}

inline ReportRow row_from_json(const nlohmann::json& j) {
  using namespace report_detail;
  ReportRow row;
  row.model = get<std::string>(j, "model");
  row.dataset = get<std::string>(j, "dataset");
  row.prompt_strategy = get<std::string>(j, "prompt_strategy");
  row.lsc = accuracy_from_json(at(j, "lsc"));
  row.final_acc = accuracy_from_json(at(j, "final"));
  for (const auto& g : at(j, "generative")) {
    GenerativeEntry e;
    e.method = get<std::string>(g, "method");
    e.tag = get<std::string>(g, "tag");
    e.accuracy = accuracy_from_json(at(g, "accuracy"));
    e.decomposition.gen_vs_lsc = comparison_from(get<std::string>(g, "gen_vs_lsc"));
    e.decomposition.gen_vs_final = comparison_from(get<std::string>(g, "gen_vs_final"));
    const auto& tj = at(g, "taxonomy");
    const auto cls = get<std::string>(tj, "class");
    if (cls == "surpassed") {
      const auto& mech = at(tj, "mechanism");
      if (mech == "representation_refinement")
        e.decomposition.taxonomy = TaxonomyLabel::surpassed(Mechanism::representation_refinement);
      else if (mech == "post_representation_reasoning")
        e.decomposition.taxonomy = TaxonomyLabel::surpassed(Mechanism::post_representation_reasoning);
      else
        bad("surpassed taxonomy needs a mechanism");
    } else if (cls == "linear_reasoning_bottleneck") {
      if (tj.contains("mechanism") && !tj.at("mechanism").is_null()) bad("bottleneck taxonomy has a mechanism");
      e.decomposition.taxonomy = TaxonomyLabel::bottleneck();
    } else {
      bad("unknown taxonomy class \"" + cls + "\"");
    }
    e.vision_dependence = dependence_from_json(at(g, "dependence_vision"));
    e.final_dependence = dependence_from_json(at(g, "dependence_final"));
    e.invalid = get<std::int64_t>(g, "invalid");
    row.generative.push_back(std::move(e));
  }
  if (j.contains("objective")) {
    const auto& o = j.at("objective");
    row.objective = ObjectiveSummary{get<double>(o, "tau"),          get<double>(o, "w_n"),
                                     get<double>(o, "w_c"),          get<double>(o, "mean_nt_loss"),
                                     get<double>(o, "mean_sim_loss"), get<double>(o, "mean_combined_loss")};
  }
  return row;
}

inline nlohmann::json to_json(const Tallies& t) {
  auto dep = [](const DependenceTally& d) {
    return nlohmann::json{{"tests", d.tests}, {"significant", d.significant}, {"inverse", d.inverse}};
  };
  return {{"vision", dep(t.vision)},
          {"final", dep(t.final)},
          {"significant", t.significant()},
          {"inverse", t.inverse()},
          {"instances", t.instances},
          {"surpassed", t.surpassed},
          {"not_lower", t.not_lower},
          {"representation_refinement", t.representation_refinement},
          {"post_representation_reasoning", t.post_representation_reasoning}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back(to_json(row));
  return {{"kind", kReportKind}, {"version", kReportVersion}, {"rows", rows}, {"tallies", to_json(r.tallies)}};
}

/// Reads the rows back; tallies are recomputed rather than trusted.
inline std::vector<ReportRow> report_rows_from_json(const nlohmann::json& j) {
  using namespace report_detail;
  if (!j.is_object() || !j.contains("kind") || j.at("kind") != kReportKind)
    bad("not a decomposition report (kind must be \"" + std::string(kReportKind) + "\")");
  std::vector<ReportRow> rows;
  for (const auto& row : at(j, "rows")) rows.push_back(row_from_json(row));
  return rows;
}

inline std::string dump_report(const EvalReport& r) { return to_json(r).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Text renderings
// ---------------------------------------------------------------------------

namespace report_detail {

inline std::string fixed(double x, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

inline std::string sig6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline std::string percent(const AccuracyEstimate& a) {
  return fixed(100.0 * a.p_hat, 1) + " ± " + fixed(100.0 * a.me, 1);
}

/// Generative methods in order of first appearance.
inline std::vector<std::string> method_columns(const EvalReport& r) {
  std::vector<std::string> cols;
  for (const auto& row : r.rows)
    for (const auto& g : row.generative)
      if (std::find(cols.begin(), cols.end(), g.method) == cols.end()) cols.push_back(g.method);
  return cols;
}

/// "^{D,-C}" style marker listing methods with a significant dependence;
/// a leading minus marks an inverse one.
inline std::string superscript(const ReportRow& row, const std::vector<std::string>& cols, bool vision) {
  std::vector<std::string> parts;
  for (const auto& m : cols) {
    for (const auto& g : row.generative) {
      if (g.method != m) continue;
      const auto& d = vision ? g.vision_dependence : g.final_dependence;
      if (d.significant) parts.push_back((d.direction == Direction::inverse ? "-" : "") + g.tag);
    }
  }
  if (parts.empty()) return {};
  std::string s = "^{";
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? "," : "") + parts[i];
  return s + "}";
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline const GenerativeEntry* find_method(const ReportRow& row, const std::string& method) {
  for (const auto& g : row.generative)
    if (g.method == method) return &g;
  return nullptr;
}

}  // namespace report_detail

/// Markdown: the accuracy table with dependence superscripts, the
/// per-method decomposition, per-class splits and the tallies.
inline std::string render_markdown(const EvalReport& r) {
  using namespace report_detail;
  const auto cols = method_columns(r);
  std::ostringstream out;

  out << "## Generative accuracy vs. linear separability\n\n";
  out << "| Model | Dataset | Prompt strategy |";
  for (const auto& m : cols) out << " " << m << " acc (%) |";
  out << " Sim. acc (vision, %) | Sim. acc (final, %) |\n";
  out << "|---|---|---|";
  for (std::size_t i = 0; i < cols.size(); ++i) out << "---:|";
  out << "---:|---:|\n";
  for (const auto& row : r.rows) {
    out << "| " << row.model << " | " << row.dataset << " | " << row.prompt_strategy << " |";
    for (const auto& m : cols) {
      const auto* g = find_method(row, m);
      out << " " << (g ? percent(g->accuracy) : std::string("-")) << " |";
    }
    out << " " << percent(row.lsc) << superscript(row, cols, true) << " |";
    out << " " << percent(row.final_acc) << superscript(row, cols, false) << " |\n";
  }
  out << "\nSuperscripts mark a significant (p < 0.05) chi-squared dependence between the probe and that "
         "method's predictions; a minus sign marks an inverse dependence.\n";
  if (!cols.empty()) {
    out << "Tags:";
    std::set<std::string> seen;
    for (const auto& row : r.rows)
      for (const auto& g : row.generative)
        if (seen.insert(g.method).second) out << " " << g.tag << " = " << g.method << ";";
    out << "\n";
  }

  out << "\n## Decomposition\n\n";
  out << "| Model | Dataset | Prompt strategy | Method | acc_gen vs LSC | acc_gen vs final | Taxonomy | "
         "chi2 vision (p) | chi2 final (p) |\n";
  out << "|---|---|---|---|---|---|---|---:|---:|\n";
  for (const auto& row : r.rows) {
    for (const auto& g : row.generative) {
      out << "| " << row.model << " | " << row.dataset << " | " << row.prompt_strategy << " | " << g.method
          << " | " << to_string(g.decomposition.gen_vs_lsc) << " | " << to_string(g.decomposition.gen_vs_final)
          << " | " << g.decomposition.taxonomy.to_string() << " | " << fixed(g.vision_dependence.chi2, 2) << " ("
          << sig6(g.vision_dependence.p_value) << ") | " << fixed(g.final_dependence.chi2, 2) << " ("
          << sig6(g.final_dependence.p_value) << ") |\n";
    }
  }

  out << "\n## Per-class accuracy (%)\n\n";
  out << "| Model | Dataset | Prompt strategy | Method | gen. pos. | gen. neg. | gen. avg. | LSC pos. | LSC neg. | "
         "LSC avg. |\n";
  out << "|---|---|---|---|---:|---:|---:|---:|---:|---:|\n";
  auto split = [](const AccuracyEstimate& a, std::size_t i) {
    return a.per_class.size() == 2 ? fixed(100.0 * a.per_class[i].p_hat, 1) : std::string("-");
  };
  for (const auto& row : r.rows) {
    for (const auto& g : row.generative) {
      out << "| " << row.model << " | " << row.dataset << " | " << row.prompt_strategy << " | " << g.method
          << " | " << split(g.accuracy, 0) << " | " << split(g.accuracy, 1) << " | "
          << fixed(100.0 * g.accuracy.p_hat, 1) << " | " << split(row.lsc, 0) << " | " << split(row.lsc, 1)
          << " | " << fixed(100.0 * row.lsc.p_hat, 1) << " |\n";
    }
  }

  const auto& t = r.tallies;
  out << "\n## Tallies\n\n";
  out << "- instances: " << t.instances << "\n";
  out << "- not lower than LSC: " << t.not_lower << "\n";
  out << "- surpassed: " << t.surpassed << " (representation refinement " << t.representation_refinement
      << ", post-representation reasoning " << t.post_representation_reasoning << ")\n";
  out << "- vision dependence: " << t.vision.significant << " of " << t.vision.tests << " significant, "
      << t.vision.inverse << " inverse\n";
  out << "- final dependence: " << t.final.significant << " of " << t.final.tests << " significant, "
      << t.final.inverse << " inverse\n";
  return out.str();
}

/// One line per (row, generative method).
inline std::string render_csv(const EvalReport& r) {
  using namespace report_detail;
  std::ostringstream out;
  out << "model,dataset,prompt_strategy,method,acc_gen,me_gen,lsc,me_lsc,final,me_final,gen_vs_lsc,gen_vs_final,"
         "bottleneck,mechanism,chi2_vision,p_vision,direction_vision,chi2_final,p_final,direction_final,invalid\n";
  for (const auto& row : r.rows) {
    for (const auto& g : row.generative) {
      const auto& tax = g.decomposition.taxonomy;
      out << csv_field(row.model) << ',' << csv_field(row.dataset) << ',' << csv_field(row.prompt_strategy) << ','
          << csv_field(g.method) << ',' << sig6(g.accuracy.p_hat) << ',' << sig6(g.accuracy.me) << ','
          << sig6(row.lsc.p_hat) << ',' << sig6(row.lsc.me) << ',' << sig6(row.final_acc.p_hat) << ','
          << sig6(row.final_acc.me) << ',' << to_string(g.decomposition.gen_vs_lsc) << ','
          << to_string(g.decomposition.gen_vs_final) << ',' << to_string(tax.bottleneck_class()) << ','
          << (tax.mechanism() ? to_string(*tax.mechanism()) : "") << ',' << sig6(g.vision_dependence.chi2) << ','
          << sig6(g.vision_dependence.p_value) << ',' << to_string(g.vision_dependence.direction) << ','
          << sig6(g.final_dependence.chi2) << ',' << sig6(g.final_dependence.p_value) << ','
          << to_string(g.final_dependence.direction) << ',' << g.invalid << '\n';
    }
  }
  return out.str();
}

/// (LSC, acc_gen) points for a generative-vs-separability scatter plot;
/// points above y = x beat the ceiling.
inline std::string render_scatter(const EvalReport& r) {
  using namespace report_detail;
  std::ostringstream out;
  out << "model,dataset,prompt_strategy,method,lsc,acc_gen,surpassed\n";
  for (const auto& row : r.rows)
    for (const auto& g : row.generative)
      out << csv_field(row.model) << ',' << csv_field(row.dataset) << ',' << csv_field(row.prompt_strategy) << ','
          << csv_field(g.method) << ',' << sig6(row.lsc.p_hat) << ',' << sig6(g.accuracy.p_hat) << ','
          << (g.decomposition.taxonomy.bottleneck_class() == BottleneckClass::surpassed ? 1 : 0) << '\n';
  return out.str();
}

}  // namespace lsc
