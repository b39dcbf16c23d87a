#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lsc/embedding.hpp"
#include "lsc/error.hpp"
#include "lsc/parallel.hpp"
#include "lsc/probe.hpp"
#include "lsc/stats.hpp"
#include "lsc/synth.hpp"
#include "lsc/tensor_file.hpp"

namespace lsc {

using json = nlohmann::json;

inline constexpr std::string_view kManifestFormat = "lsce-manifest";
inline constexpr int kManifestVersion = 1;

/// Parsed manifest. File references are stored as written (relative to
/// the manifest's directory unless absolute).
struct Manifest {
  std::string dataset_name;
  std::string model;
  std::string prompt_strategy;
  std::size_t dim = 0;
  std::vector<Stage> stages;
  std::map<Stage, std::vector<std::string>> embedding_files;
  std::vector<BongardSample> samples;
  std::map<std::string, std::string> prediction_files;
  std::optional<std::string> nt_loss_file;
  json metadata = json::object();
};

/// A fully validated in-memory dataset.
struct Dataset {
  Manifest manifest;
  EmbeddingStore store;
  std::vector<BongardSample> samples;  // sample_id order
  std::map<std::string, PredictionSet> predictions;
  std::optional<std::map<std::string, double>> nt_loss;
};

// ---------------------------------------------------------------------------
// Small JSON helpers
// ---------------------------------------------------------------------------

namespace io_detail {

[[noreturn]] inline void schema_error(const std::string& file, const std::string& what) {
  throw ParseError(file, 0, ParseReason::SchemaViolation, what);
}

inline json parse_json_bytes(const std::vector<unsigned char>& bytes, const std::string& file) {
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(file, e.byte, ParseReason::MalformedJson, e.what());
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  return parse_json_bytes(read_file_bytes(path), path.string());
}

inline const json& require(const json& obj, const char* key, const std::string& file, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) schema_error(file, where + ": missing \"" + key + "\"");
  return obj.at(key);
}

inline std::string require_string(const json& obj, const char* key, const std::string& file,
                                  const std::string& where) {
  const auto& v = require(obj, key, file, where);
  if (!v.is_string()) schema_error(file, where + ": \"" + key + "\" must be a string");
  return v.get<std::string>();
}

inline std::string optional_string(const json& obj, const char* key, const std::string& file,
                                   const std::string& where) {
  if (!obj.contains(key)) return {};
  return require_string(obj, key, file, where);
}

inline std::vector<std::string> require_string_list(const json& obj, const char* key, const std::string& file,
                                                    const std::string& where) {
  const auto& v = require(obj, key, file, where);
  if (!v.is_array()) schema_error(file, where + ": \"" + key + "\" must be an array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) schema_error(file, where + ": \"" + key + "\" must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline std::optional<Stage> parse_stage(std::string_view s) {
  if (s == "vision") return Stage::vision;
  if (s == "final") return Stage::final;
  return std::nullopt;
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "positive") return Label::positive;
  if (s == "negative") return Label::negative;
  return std::nullopt;
}

inline std::filesystem::path resolve(const std::filesystem::path& base_dir, const std::string& ref) {
  const std::filesystem::path p(ref);
  return p.is_absolute() ? p : base_dir / p;
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

inline Manifest parse_manifest(const json& j, const std::string& file) {
  using namespace io_detail;
  if (!j.is_object()) schema_error(file, "manifest must be a JSON object");
  Manifest m;
  if (j.contains("format") && j.at("format") != kManifestFormat)
    schema_error(file, "format must be \"" + std::string(kManifestFormat) + "\"");
  if (j.contains("version") && j.at("version") != kManifestVersion)
    schema_error(file, "unsupported manifest version " + j.at("version").dump());
  m.dataset_name = require_string(j, "dataset_name", file, "manifest");
  m.model = optional_string(j, "model", file, "manifest");
  m.prompt_strategy = optional_string(j, "prompt_strategy", file, "manifest");

  const auto& dim = require(j, "dim", file, "manifest");
  if (!dim.is_number_unsigned() || dim.get<std::size_t>() == 0) schema_error(file, "dim must be a positive integer");
  m.dim = dim.get<std::size_t>();

  for (const auto& s : require_string_list(j, "stages", file, "manifest")) {
    auto st = parse_stage(s);
    if (!st) schema_error(file, "unknown stage \"" + s + "\"");
    m.stages.push_back(*st);
  }
  if (m.stages.empty()) schema_error(file, "stages must not be empty");

  const auto& emb = require(j, "embeddings", file, "manifest");
  for (Stage st : m.stages) {
    const std::string key(to_string(st));
    m.embedding_files[st] = require_string_list(emb, key.c_str(), file, "embeddings");
    if (m.embedding_files[st].empty()) schema_error(file, "embeddings." + key + " lists no files");
  }

  const auto& samples = require(j, "samples", file, "manifest");
  if (!samples.is_array() || samples.empty()) schema_error(file, "samples must be a non-empty array");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& js = samples[i];
    const std::string where = "samples[" + std::to_string(i) + "]";
    BongardSample s;
    s.sample_id = require_string(js, "id", file, where);
    s.positives = require_string_list(js, "positives", file, where);
    s.negatives = require_string_list(js, "negatives", file, where);
    s.query = require_string(js, "query", file, where);
    const auto truth = parse_label(require_string(js, "truth", file, where));
    if (!truth) schema_error(file, where + ": truth must be \"positive\" or \"negative\"");
    s.truth = *truth;
    if (js.contains("split_tag")) s.split_tag = require_string(js, "split_tag", file, where);
    if (js.contains("k")) {
      const auto& k = js.at("k");
      if (!k.is_number_unsigned() || k.get<std::size_t>() != s.positives.size())
        schema_error(file, where + ": k disagrees with the number of positives");
    }
    m.samples.push_back(std::move(s));
  }

  if (j.contains("predictions")) {
    const auto& preds = j.at("predictions");
    if (!preds.is_object()) schema_error(file, "predictions must be an object of method -> file");
    for (const auto& [method, ref] : preds.items()) {
      if (!ref.is_string()) schema_error(file, "predictions." + method + " must be a file name");
      m.prediction_files.emplace(method, ref.get<std::string>());
    }
  }
  if (j.contains("nt_loss")) m.nt_loss_file = require_string(j, "nt_loss", file, "manifest");
  if (j.contains("metadata")) m.metadata = j.at("metadata");
  return m;
}

inline json manifest_to_json(const Manifest& m) {
  json j;
  j["format"] = kManifestFormat;
  j["version"] = kManifestVersion;
  j["dataset_name"] = m.dataset_name;
  if (!m.model.empty()) j["model"] = m.model;
  if (!m.prompt_strategy.empty()) j["prompt_strategy"] = m.prompt_strategy;
  j["dim"] = m.dim;
  j["stages"] = json::array();
  for (Stage st : m.stages) j["stages"].push_back(to_string(st));
  j["embeddings"] = json::object();
  for (const auto& [st, files] : m.embedding_files) j["embeddings"][std::string(to_string(st))] = files;
  j["samples"] = json::array();
  for (const auto& s : m.samples) {
    json js{{"id", s.sample_id},
            {"k", s.positives.size()},
            {"positives", s.positives},
            {"negatives", s.negatives},
            {"query", s.query},
            {"truth", to_string(s.truth)}};
    if (s.split_tag) js["split_tag"] = *s.split_tag;
    j["samples"].push_back(std::move(js));
  }
  if (!m.prediction_files.empty()) j["predictions"] = m.prediction_files;
  if (m.nt_loss_file) j["nt_loss"] = *m.nt_loss_file;
  if (!m.metadata.empty()) j["metadata"] = m.metadata;
  return j;
}

// ---------------------------------------------------------------------------
// Prediction and next-token-loss files
// ---------------------------------------------------------------------------

/// {"method": "...", "predictions": {"<sample_id>": "positive"|"negative"|"invalid"}}
inline PredictionSet parse_predictions(const json& j, const std::string& method, const std::string& file) {
  using namespace io_detail;
  if (!j.is_object()) schema_error(file, "prediction file must be an object");
  if (j.contains("method") && j.at("method") != method)
    schema_error(file, "method " + j.at("method").dump() + " does not match manifest key \"" + method + "\"");
  const auto& preds = require(j, "predictions", file, "prediction file");
  if (!preds.is_object()) schema_error(file, "predictions must map sample ids to labels");
  PredictionSet set{method, {}};
  for (const auto& [id, v] : preds.items()) {
    if (!v.is_string()) schema_error(file, "prediction for '" + id + "' must be a string");
    const auto s = v.get<std::string>();
    if (s == "invalid") {
      set.predictions.emplace(id, std::nullopt);
    } else if (auto l = parse_label(s)) {
      set.predictions.emplace(id, *l);
    } else {
      schema_error(file, "prediction for '" + id + "' must be positive, negative or invalid");
    }
  }
  return set;
}

inline json predictions_to_json(const PredictionSet& set) {
  json preds = json::object();
  for (const auto& [id, p] : set.predictions) preds[id] = p ? std::string(to_string(*p)) : std::string("invalid");
  return json{{"method", set.method}, {"predictions", std::move(preds)}};
}

inline std::map<std::string, double> parse_nt_loss(const json& j, const std::string& file) {
  using namespace io_detail;
  if (!j.is_object()) schema_error(file, "nt_loss file must map sample ids to losses");
  std::map<std::string, double> out;
  for (const auto& [id, v] : j.items()) {
    if (!v.is_number() || !std::isfinite(v.get<double>()) || v.get<double>() < 0.0)
      schema_error(file, "nt_loss for '" + id + "' must be a finite non-negative number");
    out.emplace(id, v.get<double>());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace io_detail {

inline void require_same_samples(const std::vector<BongardSample>& samples, const std::set<std::string>& ids,
                                 const std::string& what) {
  for (const auto& s : samples)
    if (!ids.contains(s.sample_id))
      throw Error(ErrorKind::MismatchedSamples, what + " has no entry for sample '" + s.sample_id + "'");
  if (ids.size() != samples.size()) {
    std::set<std::string> known;
    for (const auto& s : samples) known.insert(s.sample_id);
    for (const auto& id : ids)
      if (!known.contains(id))
        throw Error(ErrorKind::MismatchedSamples, what + " names unknown sample '" + id + "'");
  }
}

}  // namespace io_detail

/// Reads the manifest and everything it references, then checks every
/// cross-reference. Any failure aborts the load.
inline Dataset load_dataset(const std::filesystem::path& manifest_path, std::size_t workers = 1) {
  using namespace io_detail;
  const std::string mfile = manifest_path.string();
  Dataset ds;
  ds.manifest = parse_manifest(read_json_file(manifest_path), mfile);
  const Manifest& m = ds.manifest;
  const auto base = manifest_path.parent_path();

  struct Job {
    Stage stage;
    std::filesystem::path path;
  };
  std::vector<Job> jobs;
  for (const auto& [stage, files] : m.embedding_files)
    for (const auto& f : files) jobs.push_back({stage, resolve(base, f)});
  std::vector<std::vector<EmbeddingRecord>> loaded(jobs.size());
  detail::parallel_for(jobs.size(), workers,
                       [&](std::size_t i) { loaded[i] = read_tensor_file(jobs[i].path, jobs[i].stage); });

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    for (auto& rec : loaded[i]) {
      if (rec.dim() != m.dim)
        throw Error(ErrorKind::DimensionMismatch, "manifest declares dim " + std::to_string(m.dim) + " but " +
                                                      jobs[i].path.string() + " record '" + rec.image_id() +
                                                      "' has dim " + std::to_string(rec.dim()));
      ds.store.add(std::move(rec));
    }
  }

  ds.samples = m.samples;
  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
  std::set<std::string> sample_ids;
  for (const auto& s : ds.samples) {
    if (!sample_ids.insert(s.sample_id).second)
      throw Error(ErrorKind::DuplicateId, mfile + ": sample id '" + s.sample_id + "' appears twice");
    validate(s);
    for (Stage st : m.stages) {
      for (const auto& id : s.positives) (void)ds.store.at(id, st);
      for (const auto& id : s.negatives) (void)ds.store.at(id, st);
      (void)ds.store.at(s.query, st);
    }
  }

  for (const auto& [method, ref] : m.prediction_files) {
    const auto path = resolve(base, ref);
    auto set = parse_predictions(read_json_file(path), method, path.string());
    std::set<std::string> ids;
    for (const auto& [id, _] : set.predictions) ids.insert(id);
    require_same_samples(ds.samples, ids, "prediction file " + path.string());
    ds.predictions.emplace(method, std::move(set));
  }

  if (m.nt_loss_file) {
    const auto path = resolve(base, *m.nt_loss_file);
    auto losses = parse_nt_loss(read_json_file(path), path.string());
    std::set<std::string> ids;
    for (const auto& [id, _] : losses) ids.insert(id);
    require_same_samples(ds.samples, ids, "nt_loss file " + path.string());
    ds.nt_loss = std::move(losses);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

/// Writes `ds` under `dir` as manifest.json, one LSCE file per stage, one
/// prediction file per method and optionally nt_loss.json. The manifest's
/// file references are rewritten to match. Returns the manifest path.
inline std::filesystem::path write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create '" + dir.string() + "': " + ec.message());

  Manifest m = ds.manifest;
  m.embedding_files.clear();
  m.prediction_files.clear();
  m.nt_loss_file.reset();
  m.samples = ds.samples;
  for (Stage st : m.stages) {
    const std::string name = std::string(to_string(st)) + ".lsce";
    write_tensor_file(dir / name, ds.store.records(st));
    m.embedding_files[st] = {name};
  }
  for (const auto& [method, set] : ds.predictions) {
    const std::string name = "predictions_" + method + ".json";
    write_text_file(dir / name, predictions_to_json(set).dump(2) + "\n");
    m.prediction_files[method] = name;
  }
  if (ds.nt_loss) {
    write_text_file(dir / "nt_loss.json", json(*ds.nt_loss).dump(2) + "\n");
    m.nt_loss_file = "nt_loss.json";
  }
  const auto path = dir / "manifest.json";
  write_text_file(path, manifest_to_json(m).dump(2) + "\n");
  return path;
}

inline json synth_config_to_json(const SynthConfig& c) {
  return json{{"seed", c.seed},
              {"dim", c.dim},
              {"num_samples", c.num_samples},
              {"k", c.k},
              {"separation", c.separation},
              {"gen_agreement", c.gen_agreement},
              {"flip_to_inverse", c.flip_to_inverse},
              {"gen_truth_rate", c.gen_truth_rate},
              {"tokens_per_image", c.tokens_per_image},
              {"token_noise", c.token_noise},
              {"final_transform", to_string(c.final_transform)},
              {"collapse_strength", c.collapse_strength},
              {"dataset_name", c.dataset_name},
              {"gen_method", c.gen_method}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SynthConfig synth_config_from_json(const json& j, const std::string& file = "<config>") {
  using namespace io_detail;
  if (!j.is_object()) schema_error(file, "synth config must be an object");
  const auto defaults = synth_config_to_json(SynthConfig{});
  for (const auto& [key, _] : j.items())
    if (!defaults.contains(key)) schema_error(file, "unknown synth config key \"" + key + "\"");
  SynthConfig c;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    } catch (const json::exception&) {
      schema_error(file, std::string("synth config key \"") + key + "\" has the wrong type");
    }
  };
  get("seed", c.seed);
  get("dim", c.dim);
  get("num_samples", c.num_samples);
  get("k", c.k);
  get("separation", c.separation);
  get("gen_agreement", c.gen_agreement);
  get("flip_to_inverse", c.flip_to_inverse);
  get("gen_truth_rate", c.gen_truth_rate);
  get("tokens_per_image", c.tokens_per_image);
  get("token_noise", c.token_noise);
  get("collapse_strength", c.collapse_strength);
  get("dataset_name", c.dataset_name);
  get("gen_method", c.gen_method);
  if (j.contains("final_transform")) {
    const auto& t = j.at("final_transform");
    if (t == "identity") c.final_transform = FinalTransform::identity;
    else if (t == "rotation") c.final_transform = FinalTransform::rotation;
    else if (t == "collapse") c.final_transform = FinalTransform::collapse;
    else schema_error(file, "final_transform must be identity, rotation or collapse");
  }
  return c;
}

/// Packages a synthetic dataset for write_dataset.
inline Dataset to_dataset(const SynthDataset& synth) {
  Dataset ds;
  ds.manifest.dataset_name = synth.config.dataset_name;
  ds.manifest.model = "synthetic";
  ds.manifest.prompt_strategy = "synthetic";
  ds.manifest.dim = synth.config.dim;
  ds.manifest.stages = {Stage::vision, Stage::final};
  ds.manifest.metadata = json{{"synth_config", synth_config_to_json(synth.config)},
                              {"bayes_accuracy", synth.bayes_accuracy}};
  ds.store = synth.store;
  ds.samples = synth.samples;
  ds.predictions.emplace(synth.gen_predictions.method, synth.gen_predictions);
  return ds;
}

}  // namespace lsc
