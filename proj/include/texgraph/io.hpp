#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "texgraph/als.hpp"
#include "texgraph/block_tensor.hpp"
#include "texgraph/scoring.hpp"
#include "texgraph/vocabulary.hpp"

// On-disk formats. Every writer emits a deterministic byte stream for a given
// input so repeated runs can be compared with a digest.

namespace texgraph::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kTypesFile = "types.tsv";
inline constexpr const char* kEntitiesFile = "entities.tsv";
inline constexpr const char* kRelationsFile = "relations.tsv";
inline constexpr const char* kEdgesFile = "edges.tsv";
inline constexpr const char* kBlockManifest = "blocks.json";
inline constexpr const char* kFactorManifest = "factors.json";

/// Shortest text form that parses back to the same bits (17 significant
/// digits).
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc{}) throw ContractError("format_double failed");
  return std::string(buf, end);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw InputError(where + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

template <typename Int>
Int parse_int(std::string_view s, const std::string& where) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw InputError(where + ": cannot parse integer '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto p = line.find(sep, start);
    out.push_back(line.substr(start, p == std::string_view::npos ? p : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + p.string() + "'");
  return out;
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open '" + p.string() + "'");
  return in;
}

inline void write_json(const fs::path& p, const json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& p) {
  auto in = open_in(p);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("'" + p.string() + "': " + e.what());
  }
}

/// Non-empty lines of a text file, trailing CR and surrounding blanks removed.
inline std::vector<std::string> read_lines(const fs::path& p) {
  auto in = open_in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

// ---------------------------------------------------------------- vocabulary

inline void write_vocabulary(const fs::path& dir, const TypedVocabulary& vocab) {
  {
    auto out = open_out(dir / kTypesFile);
    for (Index t = 0; t < vocab.type_count(); ++t) out << t << '\t' << vocab.type_name(t) << '\n';
  }
  {
    auto out = open_out(dir / kEntitiesFile);
    for (Index t = 0; t < vocab.type_count(); ++t) {
      const auto& names = vocab.entities(t);
      for (Index i = 0; i < names.size(); ++i) out << t << '\t' << i << '\t' << names[i] << '\n';
    }
  }
  {
    // relation_index, block_m, block_n, slab_k, raw_name, head_type, tail_type
    auto out = open_out(dir / kRelationsFile);
    for (Index r = 0; r < vocab.relation_count(); ++r) {
      const auto& info = vocab.relation_info(r);
      out << r << '\t' << info.block.m << '\t' << info.block.n << '\t' << info.slab << '\t'
          << info.name << '\t' << info.head_type << '\t' << info.tail_type << '\n';
    }
  }
}

inline TypedVocabulary read_vocabulary(const fs::path& dir) {
  std::vector<std::string> types;
  for (const auto& line : read_lines(dir / kTypesFile)) {
    const auto f = split(line, '\t');
    if (f.size() != 2) throw InputError(std::string(kTypesFile) + ": malformed line '" + line + "'");
    if (parse_int<Index>(f[0], kTypesFile) != types.size())
      throw InputError(std::string(kTypesFile) + ": type indices must be dense and ordered");
    types.emplace_back(f[1]);
  }
  std::vector<std::vector<std::string>> entities(types.size());
  {
    auto in = open_in(dir / kEntitiesFile);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split(line, '\t');
      if (f.size() != 3) throw InputError(std::string(kEntitiesFile) + ": malformed line '" + line + "'");
      const auto t = parse_int<Index>(f[0], kEntitiesFile);
      const auto i = parse_int<Index>(f[1], kEntitiesFile);
      if (t >= types.size() || i != entities[t].size())
        throw InputError(std::string(kEntitiesFile) + ": indices must be dense and ordered");
      entities[t].emplace_back(f[2]);
    }
  }
  std::vector<RelationInfo> relations;
  for (const auto& line : read_lines(dir / kRelationsFile)) {
    const auto f = split(line, '\t');
    if (f.size() != 7) throw InputError(std::string(kRelationsFile) + ": malformed line '" + line + "'");
    if (parse_int<Index>(f[0], kRelationsFile) != relations.size())
      throw InputError(std::string(kRelationsFile) + ": relation indices must be dense and ordered");
    RelationInfo info;
    info.block = {parse_int<Index>(f[1], kRelationsFile), parse_int<Index>(f[2], kRelationsFile)};
    info.slab = parse_int<Index>(f[3], kRelationsFile);
    info.name = std::string(f[4]);
    info.head_type = parse_int<Index>(f[5], kRelationsFile);
    info.tail_type = parse_int<Index>(f[6], kRelationsFile);
    relations.push_back(std::move(info));
  }
  return TypedVocabulary(std::move(types), std::move(entities), std::move(relations));
}

/// relation_index, head_local, tail_local: the deduplicated directed edges.
inline void write_edges(const fs::path& path, const std::vector<Edge>& edges) {
  auto out = open_out(path);
  for (const auto& e : edges) out << e.relation << '\t' << e.head << '\t' << e.tail << '\n';
}

inline std::vector<Edge> read_edges(const fs::path& path, const TypedVocabulary& vocab) {
  auto in = open_in(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    if (f.size() != 3) throw InputError(where + ": expected 3 fields");
    Edge e{parse_int<Index>(f[1], where), parse_int<Index>(f[0], where), parse_int<Index>(f[2], where)};
    if (e.relation >= vocab.relation_count()) throw InputError(where + ": relation out of range");
    const auto& rel = vocab.relation_info(e.relation);
    if (e.head >= vocab.type_size(rel.head_type) || e.tail >= vocab.type_size(rel.tail_type))
      throw InputError(where + ": entity out of range");
    edges.push_back(e);
  }
  return edges;
}

/// Writes edges back to raw `head<TAB>relation<TAB>tail` triplets.
inline void write_triplets(const fs::path& path, const std::vector<Edge>& edges,
                           const TypedVocabulary& vocab) {
  auto out = open_out(path);
  for (const auto& e : edges) {
    const auto& rel = vocab.relation_info(e.relation);
    // Coerced relations carry an '@h:t' suffix that is not part of the raw name.
    std::string_view name = rel.name;
    std::ostringstream suffix;
    suffix << '@' << rel.head_type << ':' << rel.tail_type;
    if (name.size() > suffix.str().size() && name.ends_with(suffix.str()) &&
        !vocab.find_relation(name.substr(0, name.size() - suffix.str().size())))
      name = name.substr(0, name.size() - suffix.str().size());
    out << vocab.entity_name({rel.head_type, e.head}) << '\t' << name << '\t'
        << vocab.entity_name({rel.tail_type, e.tail}) << '\n';
  }
}

/// Per-block dimensions, nnz and sparsity plus schema totals.
inline json block_manifest(const BlockSet& blocks, const TypedVocabulary& vocab, std::size_t edge_count) {
  json j;
  json list = json::array();
  std::size_t tensors = 0;
  std::size_t matrices = 0;
  for (const auto& [key, x] : blocks) {
    json b;
    b["m"] = key.m;
    b["n"] = key.n;
    b["type_m"] = vocab.type_name(key.m);
    b["type_n"] = vocab.type_name(key.n);
    b["dims"] = {x.rows(), x.cols(), x.slab_count()};
    b["nnz"] = x.nnz();
    b["sparsity"] = x.sparsity();
    json rels = json::array();
    for (Index r : vocab.block_relations().at(key)) rels.push_back(vocab.relation_info(r).name);
    b["relations"] = rels;
    if (key.diagonal()) b["directed_edges"] = x.directed_edges().size();
    (x.slab_count() > 1 ? tensors : matrices)++;
    list.push_back(b);
  }
  j["blocks"] = list;
  j["tensor_blocks"] = tensors;
  j["matrix_blocks"] = matrices;
  j["entity_types"] = vocab.type_count();
  j["entities"] = vocab.entity_count();
  j["relations"] = vocab.relation_count();
  j["edges"] = edge_count;
  json types = json::array();
  for (Index t = 0; t < vocab.type_count(); ++t)
    types.push_back({{"index", t}, {"name", vocab.type_name(t)}, {"size", vocab.type_size(t)}});
  j["types"] = types;
  return j;
}

// ------------------------------------------------------------------- factors

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

/// Parses one CSV record (RFC 4180 quoting, no embedded newlines).
inline std::vector<std::string> csv_record(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

/// Header `<id_column>,f0,…,f{F-1}` then one row per name.
inline void write_factor_csv(const fs::path& path, std::string_view id_column,
                             const std::vector<std::string>& names, const DenseMatrix& m) {
  detail::require(names.size() == m.rows(), "write_factor_csv: name count differs from rows");
  auto out = open_out(path);
  out << id_column;
  for (std::size_t f = 0; f < m.cols(); ++f) out << ",f" << f;
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << csv_field(names[i]);
    for (double v : m.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
}

struct FactorTable {
  std::vector<std::string> names;
  DenseMatrix values;
};

inline FactorTable read_factor_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw InputError("'" + path.string() + "' is empty");
  const auto header = csv_record(line);
  if (header.size() < 2) throw InputError("'" + path.string() + "': header has no factor columns");
  const std::size_t f = header.size() - 1;
  FactorTable t;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto rec = csv_record(line);
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    if (rec.size() != f + 1) throw InputError(where + ": expected " + std::to_string(f + 1) + " fields");
    t.names.push_back(rec[0]);
    for (std::size_t q = 1; q <= f; ++q) values.push_back(parse_double(rec[q], where));
  }
  t.values = DenseMatrix(t.names.size(), f, std::move(values));
  return t;
}

inline std::string entity_factor_file(Index t) { return "entity_" + std::to_string(t) + ".csv"; }
inline std::string relation_factor_file(BlockKey key) {
  return "relation_" + std::to_string(key.m) + "_" + std::to_string(key.n) + ".csv";
}

/// Writes one CSV per factor matrix and returns the file names in order.
inline std::vector<std::string> write_factors(const fs::path& dir, const FactorSet& factors,
                                              const TypedVocabulary& vocab) {
  std::vector<std::string> files;
  for (Index t = 0; t < factors.entity.size(); ++t) {
    files.push_back(entity_factor_file(t));
    write_factor_csv(dir / files.back(), "entity_raw_id", vocab.entities(t), factors.entity[t]);
  }
  for (const auto& [key, c] : factors.relation) {
    std::vector<std::string> names;
    for (Index r : vocab.block_relations().at(key)) names.push_back(vocab.relation_info(r).name);
    files.push_back(relation_factor_file(key));
    write_factor_csv(dir / files.back(), "relation_raw_name", names, c);
  }
  return files;
}

/// Loads factors written by write_factors; row names must match the vocabulary.
inline FactorSet read_factors(const fs::path& dir, const TypedVocabulary& vocab) {
  FactorSet fs;
  for (Index t = 0; t < vocab.type_count(); ++t) {
    auto table = read_factor_csv(dir / entity_factor_file(t));
    if (table.names != vocab.entities(t))
      throw InputError(entity_factor_file(t) + ": entity ids do not match the vocabulary");
    if (t == 0) fs.rank = table.values.cols();
    if (table.values.cols() != fs.rank) throw InputError(entity_factor_file(t) + ": rank differs");
    fs.entity.push_back(std::move(table.values));
  }
  for (const auto& [key, rels] : vocab.block_relations()) {
    auto table = read_factor_csv(dir / relation_factor_file(key));
    std::vector<std::string> names;
    for (Index r : rels) names.push_back(vocab.relation_info(r).name);
    if (table.names != names)
      throw InputError(relation_factor_file(key) + ": relation names do not match the vocabulary");
    if (table.values.cols() != fs.rank) throw InputError(relation_factor_file(key) + ": rank differs");
    fs.relation.emplace(key, std::move(table.values));
  }
  return fs;
}

// ------------------------------------------------------------------ evaluation

/// JSON eval spec. Relative file paths resolve against the spec's directory.
inline EvalSpec read_eval_spec(const fs::path& path) {
  const json j = read_json(path);
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  EvalSpec spec;
  try {
    spec.diseases = j.at("diseases").get<std::vector<std::string>>();
    spec.relations = j.at("relations").get<std::vector<std::string>>();
    spec.candidates = read_lines(resolve(j.at("candidates_file").get<std::string>()));
    if (j.contains("excluded")) spec.excluded = j.at("excluded").get<std::vector<std::string>>();
    if (j.contains("reference_file"))
      spec.reference = read_lines(resolve(j.at("reference_file").get<std::string>()));
    if (j.contains("k_values")) spec.k_values = j.at("k_values").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw InputError("eval spec '" + path.string() + "': " + e.what());
  }
  return spec;
}

/// rank, drug_id, score, best_disease, best_relation, is_hit
inline void write_report_tsv(const fs::path& path, const RankingReport& report) {
  auto out = open_out(path);
  out << "rank\tdrug_id\tscore\tbest_disease\tbest_relation\tis_hit\n";
  for (const auto& e : report.entries)
    out << e.rank << '\t' << e.drug << '\t' << format_double(e.score) << '\t' << e.best_disease
        << '\t' << e.best_relation << '\t' << (e.hit ? 1 : 0) << '\n';
}

inline json hit_summary_json(const RankingReport& report, const HitSummary& hits) {
  json j;
  json h = json::object();
  for (const auto& [k, n] : hits.hits) h["hits@" + std::to_string(k)] = n;
  j["hits"] = h;
  j["k"] = report.k;
  j["candidates"] = report.candidate_count;
  j["reported"] = report.entries.size();
  j["reference_total"] = hits.reference_total;
  j["reference_in_vocabulary"] = hits.reference_known;
  json warnings = report.warnings;
  for (const auto& w : hits.warnings) warnings.push_back(w);
  j["warnings"] = warnings;
  return j;
}

}  // namespace texgraph::io
