#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "texgraph/als.hpp"
#include "texgraph/block_tensor.hpp"
#include "texgraph/io.hpp"
#include "texgraph/scoring.hpp"
#include "texgraph/spectral_init.hpp"
#include "texgraph/synth.hpp"
#include "texgraph/vocabulary.hpp"

// Directory-based pipeline: ingest -> train -> evaluate / export. Each command
// writes its artifacts plus a run.json manifest. Everything except the
// manifest's "timings" object is a pure function of inputs, flags and seed.

namespace texgraph::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kRunManifest = "run.json";

/// Hex SHA-256 of a file's bytes.
inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest init failed");
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), std::size_t(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

/// Reproducibility record of one command.
struct RunManifest {
  std::string command;
  json config = json::object();
  std::map<std::string, std::string> inputs;  ///< path -> sha256
  std::uint64_t seed = 0;
  std::map<std::string, double> timings;  ///< phase -> seconds
  json loss_trace = json::array();
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;

  json to_json() const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["inputs"] = inputs;
    j["seed"] = seed;
    j["timings"] = timings;
    j["loss_trace"] = loss_trace;
    j["outputs"] = outputs;
    j["warnings"] = warnings;
    j["version"] = kVersion;
    return j;
  }

  void add_input(const fs::path& p) { inputs[p.string()] = sha256_file(p); }
  void write(const fs::path& dir) {
    outputs.push_back(kRunManifest);
    io::write_json(dir / kRunManifest, to_json());
  }
};

class PhaseTimer {
 public:
  PhaseTimer(RunManifest& m, std::string phase)
      : m_(m), phase_(std::move(phase)), start_(std::chrono::steady_clock::now()) {}
  ~PhaseTimer() {
    m_.timings[phase_] +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  PhaseTimer(const PhaseTimer&) = delete;
  PhaseTimer& operator=(const PhaseTimer&) = delete;

 private:
  RunManifest& m_;
  std::string phase_;
  std::chrono::steady_clock::time_point start_;
};

// ------------------------------------------------------------------ ingest

struct IngestOptions {
  std::string entity_sep = "::";
  bool skip_malformed = false;
  bool coerce = false;
  std::vector<std::string> type_order;
};

/// Parses a triplet file and writes the vocabulary, the deduplicated edge list
/// and the block manifest to `out_dir`.
inline RunManifest cmd_ingest(const fs::path& triplets, const fs::path& out_dir,
                              const IngestOptions& opts = {}) {
  RunManifest m;
  m.command = "ingest";
  m.config = {{"entity_sep", opts.entity_sep},
              {"skip_malformed", opts.skip_malformed},
              {"coerce", opts.coerce},
              {"type_order", opts.type_order}};
  if (!fs::is_regular_file(triplets)) throw InputError("triplet file '" + triplets.string() + "' not found");
  m.add_input(triplets);

  ParsedTriplets parsed;
  {
    PhaseTimer t(m, "parse");
    ParseOptions po;
    po.entity_sep = opts.entity_sep;
    po.skip_malformed = opts.skip_malformed;
    parsed = parse_triplets(triplets.string(), po);
  }
  m.warnings = parsed.warnings;

  VocabularyOptions vo;
  vo.entity_sep = opts.entity_sep;
  vo.type_roster = opts.type_order;
  vo.coerce = opts.coerce;
  std::vector<Edge> edges;
  BlockSet blocks;
  TypedVocabulary vocab;
  {
    PhaseTimer t(m, "build");
    vocab = build_vocabulary(parsed, vo);
    edges = resolve_edges(parsed, vocab);
    blocks = build_blocks(edges, vocab);
  }
  {
    PhaseTimer t(m, "write");
    fs::create_directories(out_dir);
    io::write_vocabulary(out_dir, vocab);
    io::write_edges(out_dir / io::kEdgesFile, edges);
    io::write_json(out_dir / io::kBlockManifest, io::block_manifest(blocks, vocab, edges.size()));
  }
  m.outputs = {io::kTypesFile, io::kEntitiesFile, io::kRelationsFile, io::kEdgesFile, io::kBlockManifest};
  m.write(out_dir);
  return m;
}

struct IngestedData {
  TypedVocabulary vocab;
  std::vector<Edge> edges;
  BlockSet blocks;
};

inline IngestedData load_ingested(const fs::path& data_dir) {
  if (!fs::is_directory(data_dir)) throw InputError("data directory '" + data_dir.string() + "' not found");
  IngestedData d;
  d.vocab = io::read_vocabulary(data_dir);
  d.edges = io::read_edges(data_dir / io::kEdgesFile, d.vocab);
  d.blocks = build_blocks(d.edges, d.vocab);
  return d;
}

// ------------------------------------------------------------------ train

using SweepLogger = std::function<void(const SweepRecord&)>;

/// Initializes (random or spectral), runs ALS and writes the vocabulary copy,
/// one CSV per factor matrix and factors.json into `out_dir`.
inline RunManifest cmd_train(const fs::path& data_dir, const fs::path& out_dir, const TrainConfig& cfg,
                             const SweepLogger& log = {}) {
  cfg.validate();
  RunManifest m;
  m.command = "train";
  m.seed = cfg.seed;
  m.config = {{"rank", cfg.rank},
              {"sweeps", cfg.max_sweeps},
              {"ridge", cfg.ridge},
              {"tolerance", cfg.tolerance},
              {"seed", cfg.seed},
              {"init", cfg.init == InitMode::spectral ? "spectral" : "random"}};
  IngestedData data;
  {
    PhaseTimer t(m, "load");
    data = load_ingested(data_dir);
  }
  for (const char* f : {io::kTypesFile, io::kEntitiesFile, io::kRelationsFile, io::kEdgesFile})
    m.add_input(data_dir / f);

  FactorSet init;
  json init_info = json::object();
  {
    PhaseTimer t(m, "init");
    if (cfg.init == InitMode::spectral) {
      SemiSymmetricCpd details;
      init = spectral_init(data.edges, data.vocab, cfg.rank, cfg.seed, &details);
      init_info = {{"method", "spectral"},
                   {"relative_residual", details.relative_residual},
                   {"padded_columns", details.padded_columns},
                   {"complex_pairs", details.complex_pairs},
                   {"random_fallback", details.random_fallback}};
      for (const auto& w : details.warnings) m.warnings.push_back(w);
    } else {
      init = random_factors(data.vocab.type_sizes(), data.blocks, cfg.rank, cfg.seed);
      init_info = {{"method", "random"}};
    }
  }

  FitResult result;
  {
    PhaseTimer t(m, "als");
    result = fit(data.blocks, cfg, std::move(init), log);
  }

  json trace = json::array();
  trace.push_back({{"sweep", 0}, {"loss", result.initial_loss.total()},
                   {"data", result.initial_loss.data}, {"ridge", result.initial_loss.ridge}});
  for (const auto& r : result.trace)
    trace.push_back({{"sweep", r.sweep}, {"loss", r.loss.total()}, {"data", r.loss.data},
                     {"ridge", r.loss.ridge}});
  m.loss_trace = trace;

  json zero = json::object();
  const auto zeros = zero_degree_entities(data.vocab.type_sizes(), data.blocks);
  for (Index t = 0; t < zeros.size(); ++t) {
    json ids = json::array();
    for (Index i : zeros[t]) ids.push_back(data.vocab.entities(t)[i]);
    zero[data.vocab.type_name(t)] = ids;
  }

  {
    PhaseTimer t(m, "write");
    fs::create_directories(out_dir);
    io::write_vocabulary(out_dir, data.vocab);
    m.outputs = {io::kTypesFile, io::kEntitiesFile, io::kRelationsFile};
    for (auto& f : io::write_factors(out_dir, result.factors, data.vocab)) m.outputs.push_back(std::move(f));
    json fm;
    fm["rank"] = cfg.rank;
    fm["ridge"] = cfg.ridge;
    fm["sweeps_requested"] = cfg.max_sweeps;
    fm["sweeps_run"] = result.trace.size();
    fm["converged_early"] = result.converged_early;
    fm["max_ridge_used"] = result.max_ridge_used;
    fm["damped_updates"] = result.damped_updates;
    fm["seed"] = cfg.seed;
    fm["init"] = init_info;
    fm["loss_trace"] = trace;
    fm["zero_degree"] = zero;
    fm["entity_factors"] = json::array();
    for (Index t = 0; t < data.vocab.type_count(); ++t)
      fm["entity_factors"].push_back({{"type", data.vocab.type_name(t)}, {"file", io::entity_factor_file(t)}});
    fm["relation_factors"] = json::array();
    for (const auto& [key, c] : result.factors.relation)
      fm["relation_factors"].push_back({{"block", {key.m, key.n}}, {"file", io::relation_factor_file(key)}});
    io::write_json(out_dir / io::kFactorManifest, fm);
    m.outputs.push_back(io::kFactorManifest);
  }
  m.write(out_dir);
  return m;
}

struct TrainedModel {
  TypedVocabulary vocab;
  FactorSet factors;
};

inline TrainedModel load_model(const fs::path& model_dir) {
  if (!fs::is_directory(model_dir)) throw InputError("model directory '" + model_dir.string() + "' not found");
  TrainedModel model;
  model.vocab = io::read_vocabulary(model_dir);
  model.factors = io::read_factors(model_dir, model.vocab);
  return model;
}

// ------------------------------------------------------------------ evaluate

inline constexpr const char* kReportFile = "ranking.tsv";
inline constexpr const char* kSummaryFile = "summary.json";

/// Ranks the candidates of an eval spec and writes ranking.tsv plus
/// summary.json into `out_dir`.
inline RunManifest cmd_evaluate(const fs::path& model_dir, const fs::path& evalspec, const fs::path& out_dir,
                                HitSummary* summary_out = nullptr) {
  RunManifest m;
  m.command = "evaluate";
  if (!fs::is_regular_file(evalspec)) throw InputError("eval spec '" + evalspec.string() + "' not found");
  TrainedModel model;
  EvalSpec spec;
  {
    PhaseTimer t(m, "load");
    model = load_model(model_dir);
    spec = io::read_eval_spec(evalspec);
  }
  m.add_input(evalspec);
  m.config = {{"k_values", spec.k_values}};
  RankingReport report;
  HitSummary hits;
  {
    PhaseTimer t(m, "rank");
    report = rank_candidates(model.factors, model.vocab, spec);
    hits = evaluate_hits(report, spec.reference, spec.k_values, &model.vocab);
  }
  {
    PhaseTimer t(m, "write");
    fs::create_directories(out_dir);
    io::write_report_tsv(out_dir / kReportFile, report);
    io::write_json(out_dir / kSummaryFile, io::hit_summary_json(report, hits));
  }
  m.warnings = report.warnings;
  for (const auto& w : hits.warnings) m.warnings.push_back(w);
  m.outputs = {kReportFile, kSummaryFile};
  m.write(out_dir);
  if (summary_out) *summary_out = std::move(hits);
  return m;
}

// ------------------------------------------------------------------ export

/// All entity embeddings in one CSV: type, entity_raw_id, f0..f{F-1}.
inline void cmd_export(const fs::path& model_dir, const fs::path& out_csv) {
  const TrainedModel model = load_model(model_dir);
  auto out = io::open_out(out_csv);
  out << "type,entity_raw_id";
  for (std::size_t f = 0; f < model.factors.rank; ++f) out << ",f" << f;
  out << '\n';
  for (Index t = 0; t < model.vocab.type_count(); ++t) {
    const auto& a = model.factors.entity[t];
    const auto& names = model.vocab.entities(t);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      out << io::csv_field(model.vocab.type_name(t)) << ',' << io::csv_field(names[i]);
      for (std::size_t f = 0; f < a.cols(); ++f) out << ',' << io::format_double(a(i, f));
      out << '\n';
    }
  }
}

// ------------------------------------------------------------------ synth

enum class SynthKind { drkg_mock, planted };

inline void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  auto out = io::open_out(path);
  for (const auto& l : lines) out << l << '\n';
}

/// Writes triplets.tsv and types.txt; the planted kind also writes an eval
/// spec (evalspec.json, candidates.txt, reference.txt).
inline std::vector<std::string> cmd_synth(SynthKind kind, const fs::path& out_dir, std::uint64_t seed,
                                          std::size_t extra_edges = 200000) {
  fs::create_directories(out_dir);
  std::vector<std::string> written{"triplets.tsv", "types.txt"};
  if (kind == SynthKind::drkg_mock) {
    const auto t = synth::drkg_mock(extra_edges, seed);
    write_lines(out_dir / "triplets.tsv", t.lines);
    write_lines(out_dir / "types.txt", t.type_roster);
    return written;
  }
  const auto kg = synth::planted_kg(seed);
  write_lines(out_dir / "triplets.tsv", kg.triplets.lines);
  write_lines(out_dir / "types.txt", kg.triplets.type_roster);
  write_lines(out_dir / "candidates.txt", kg.candidates);
  write_lines(out_dir / "reference.txt", kg.reference);
  json spec = {{"diseases", kg.target_diseases},
               {"relations", kg.relations},
               {"candidates_file", "candidates.txt"},
               {"excluded", kg.excluded},
               {"reference_file", "reference.txt"},
               {"k_values", {5, 10}}};
  io::write_json(out_dir / "evalspec.json", spec);
  written.insert(written.end(), {"candidates.txt", "reference.txt", "evalspec.json"});
  return written;
}

}  // namespace texgraph::pipeline
