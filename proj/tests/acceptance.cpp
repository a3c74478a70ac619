// Acceptance suite: one PASS / FAIL / SKIP line per criterion. Exit status is
// nonzero when any criterion fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <new>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "texgraph/texgraph.hpp"

using namespace texgraph;
namespace fs = std::filesystem;

// ------------------------------------------------------------ allocation audit

namespace audit {
std::atomic<bool> active{false};
std::atomic<std::size_t> bytes{0};
std::atomic<std::size_t> count{0};
}  // namespace audit

void* operator new(std::size_t n) {
  if (audit::active.load(std::memory_order_relaxed)) {
    audit::bytes += n;
    ++audit::count;
  }
  if (void* p = std::malloc(n ? n : 1)) return p;
  throw std::bad_alloc();
}
void operator delete(void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }

namespace {

struct Outcome {
  enum Kind { pass, fail, skip } kind;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// Shared instance of criteria 2-4: types 30/40/25, blocks (0,0) K=3,
// (0,1) K=4, (1,2) K=2, (0,2) K=2, rank 5.
synth::CoupledInstance coupled_instance() {
  return synth::exact_coupled({30, 40, 25}, {{{0, 0}, 3}, {{0, 1}, 4}, {{1, 2}, 2}, {{0, 2}, 2}}, 5, 2024);
}

double relative_fit(const synth::CoupledInstance& inst, const FactorSet& fs) {
  return std::sqrt(oracle::coupled_residual_sq(inst.blocks, fs) / oracle::coupled_norm_sq(inst.blocks));
}

bool non_increasing(const FitResult& r, double slack, double* worst = nullptr) {
  double prev = r.initial_loss.total();
  double w = 0.0;
  for (const auto& s : r.trace) {
    const double rise = (s.loss.total() - prev) / std::abs(prev);
    w = std::max(w, rise);
    prev = s.loss.total();
  }
  if (worst) *worst = w;
  return w <= slack;
}

// ------------------------------------------------------------------ criteria

Outcome criterion1() {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t i = 1 + rng() % 8, j = 1 + rng() % 8, k = 1 + rng() % 5, f = 1 + rng() % 6;
    const auto x = oracle::random_binary_block({0, 1}, i, j, k, 0.3, rng);
    const auto am = oracle::random_matrix(i, f, rng);
    const auto an = oracle::random_matrix(j, f, rng);
    const auto c = oracle::random_matrix(k, f, rng);
    const auto dense = oracle::densify(x);
    auto rel = [](const oracle::Mat& want, const DenseMatrix& got) {
      const double scale = oracle::max_abs(want);
      const double diff = oracle::max_abs_diff(want, got);
      return scale > 0 ? diff / scale : diff;
    };
    worst = std::max(worst, rel(oracle::mttkrp1(dense, oracle::from(an), oracle::from(c)), mttkrp_mode1(x, an, c)));
    worst = std::max(worst, rel(oracle::mttkrp2(dense, oracle::from(am), oracle::from(c)), mttkrp_mode2(x, am, c)));
    worst = std::max(worst, rel(oracle::mttkrp3(dense, oracle::from(am), oracle::from(an)), mttkrp_mode3(x, am, an)));
  }
  return verdict(worst < 1e-12, "max relative error " + fmt(worst) + " over 100 tensors (< 1e-12)");
}

struct Criterion2State {
  FitResult result;
  double fit = 0.0;
};

Outcome criterion2(const synth::CoupledInstance& inst, Criterion2State& state) {
  TrainConfig cfg;
  cfg.rank = 5;
  cfg.max_sweeps = 200;
  cfg.ridge = 1e-8;
  cfg.seed = 7;
  const auto start = std::chrono::steady_clock::now();
  state.result = fit(inst.blocks, cfg, random_factors(inst.type_sizes, inst.blocks, 5, cfg.seed));
  state.fit = relative_fit(inst, state.result.factors);
  return verdict(state.fit < 1e-6, "relative fit " + fmt(state.fit) + " after 200 sweeps (< 1e-6), " +
                                       fmt(seconds_since(start)) + " s");
}

Outcome criterion3(const Criterion2State& c2) {
  double worst = 0.0;
  bool ok = non_increasing(c2.result, 1e-6, &worst);
  std::size_t damped = c2.result.damped_updates;
  std::string detail = "coupled instance worst rise " + fmt(worst);
  int failures = 0;
  double worst_diag = 0.0, worst_plain = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    synth::BinaryInstanceOptions opts;
    opts.max_types = 3;
    opts.min_size = 8;
    opts.max_size = 30;
    opts.max_slabs = 4;
    opts.density = 0.1;
    opts.allow_diagonal = seed % 2 == 0;
    const auto inst = synth::random_binary(1000 + seed, opts);
    bool has_diag = false;
    for (const auto& [key, x] : inst.blocks) has_diag = has_diag || key.diagonal();
    TrainConfig cfg;
    cfg.rank = 4;
    cfg.max_sweeps = 50;
    cfg.ridge = 1e-8;
    const auto r = fit(inst.blocks, cfg, random_factors(inst.type_sizes, inst.blocks, 4, seed));
    double w = 0.0;
    if (!non_increasing(r, has_diag ? 1e-6 : 1e-9, &w)) ++failures;
    damped += r.damped_updates;
    (has_diag ? worst_diag : worst_plain) = std::max(has_diag ? worst_diag : worst_plain, w);
  }
  ok = ok && failures == 0;
  detail += "; 20 binary graphs: " + std::to_string(failures) + " violations, worst rise " + fmt(worst_diag) +
            " (diagonal, slack 1e-6) / " + fmt(worst_plain) + " (no diagonal, slack 1e-9); " +
            std::to_string(damped) + " damped diagonal-type updates";
  return verdict(ok, detail);
}

Outcome criterion4(const synth::CoupledInstance& inst) {
  // Two seeds, each run until the fit drops below 1e-8 or the sweep cap.
  auto run = [&](std::uint64_t seed, double& fit_out) {
    TrainConfig cfg;
    cfg.rank = 5;
    cfg.ridge = 1e-8;
    cfg.max_sweeps = 100;
    FactorSet fs = random_factors(inst.type_sizes, inst.blocks, 5, seed);
    for (int round = 0; round < 20; ++round) {
      fs = fit(inst.blocks, cfg, std::move(fs)).factors;
      fit_out = relative_fit(inst, fs);
      if (fit_out < 1e-8) break;
    }
    return fs;
  };
  double fit_a = 1, fit_b = 1;
  const auto a = run(11, fit_a);
  const auto b = run(29, fit_b);
  if (!(fit_a < 1e-8 && fit_b < 1e-8))
    return verdict(false, "fits " + fmt(fit_a) + ", " + fmt(fit_b) + " did not reach 1e-8 within 2000 sweeps");

  // One global column matching from the stacked entity factors, then every
  // factor is checked column by column under that matching.
  auto stack = [](const FactorSet& f) {
    std::size_t rows = 0;
    for (const auto& e : f.entity) rows += e.rows();
    DenseMatrix s(rows, f.rank);
    std::size_t r0 = 0;
    for (const auto& e : f.entity) {
      for (std::size_t i = 0; i < e.rows(); ++i)
        for (std::size_t q = 0; q < f.rank; ++q) s(r0 + i, q) = e(i, q);
      r0 += e.rows();
    }
    return s;
  };
  const auto sa = stack(a), sb = stack(b);
  const std::size_t f = a.rank;
  auto cosine = [](const DenseMatrix& x, std::size_t p, const DenseMatrix& y, std::size_t q) {
    double xy = 0, xx = 0, yy = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      xy += x(r, p) * y(r, q);
      xx += x(r, p) * x(r, p);
      yy += y(r, q) * y(r, q);
    }
    return std::abs(xy) / std::sqrt(xx * yy);
  };
  std::vector<std::size_t> match(f);
  std::vector<bool> used_a(f), used_b(f);
  for (std::size_t step = 0; step < f; ++step) {
    double best = -1;
    std::size_t bp = 0, bq = 0;
    for (std::size_t p = 0; p < f; ++p)
      for (std::size_t q = 0; q < f; ++q)
        if (!used_a[p] && !used_b[q] && cosine(sa, p, sb, q) > best) best = cosine(sa, p, sb, q), bp = p, bq = q;
    used_a[bp] = used_b[bq] = true;
    match[bp] = bq;
  }
  double worst = 1.0;
  for (std::size_t t = 0; t < a.entity.size(); ++t)
    for (std::size_t p = 0; p < f; ++p) worst = std::min(worst, cosine(a.entity[t], p, b.entity[t], match[p]));
  for (const auto& [key, c] : a.relation)
    for (std::size_t p = 0; p < f; ++p) worst = std::min(worst, cosine(c, p, b.relation.at(key), match[p]));
  return verdict(worst >= 0.999, "fits " + fmt(fit_a) + ", " + fmt(fit_b) + "; smallest matched |cosine| " +
                                     fmt(worst) + " over 3 entity and 4 relation factors (>= 0.999)");
}

Outcome criterion5() {
  const std::size_t le = 40, kr = 6, f = 4;
  const auto inst = synth::exact_coupled({le}, {{{0, 0}, kr}}, f, 55);
  const auto& y = inst.blocks.at({0, 0});
  const auto first = semi_symmetric_cpd(y, f, 3);
  const auto second = semi_symmetric_cpd(y, f, 3);
  const double rel = std::sqrt(
      oracle::residual_sq(oracle::densify(y), oracle::model(oracle::from(first.a), oracle::from(first.a), oracle::from(first.c))) /
      oracle::norm_sq(oracle::densify(y)));
  const bool identical = first.a == second.a && first.c == second.c;
  return verdict(rel < 1e-8 && identical && !first.random_fallback,
                 "relative reconstruction " + fmt(rel) + " (< 1e-8); reruns " +
                     (identical ? "bit-identical" : "DIFFER") +
                     (first.random_fallback ? "; fell back to random init" : ""));
}

SparseBlockTensor random_sparse(std::size_t rows, std::size_t cols, std::size_t slabs, std::size_t nnz,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TensorEntry> e;
  e.reserve(nnz);
  std::set<std::tuple<Index, Index, Index>> seen;
  while (e.size() < nnz) {
    const Index i = Index(rng() % rows), j = Index(rng() % cols), k = Index(rng() % slabs);
    if (seen.insert({i, j, k}).second) e.push_back({i, j, k});
  }
  return SparseBlockTensor::from_entries({0, 1}, rows, cols, slabs, std::move(e));
}

Outcome criterion6() {
  set_thread_count(1);
  const std::size_t rows = 20000, cols = 20000, slabs = 4, f = 16;
  std::mt19937_64 rng(6);
  const auto am = oracle::random_matrix(rows, f, rng);
  const auto an = oracle::random_matrix(cols, f, rng);
  const auto c = oracle::random_matrix(slabs, f, rng);
  DenseMatrix out1(f, rows), out2(f, cols);

  struct Measure {
    double seconds;
    std::size_t aux_bytes;
  };
  auto measure = [&](const SparseBlockTensor& x) {
    Measure m{1e30, 0};
    for (int rep = 0; rep < 7; ++rep) {
      audit::bytes = 0;
      const auto start = std::chrono::steady_clock::now();
      audit::active = true;
      mttkrp_mode1_into(x, an, c, out1);
      mttkrp_mode2_into(x, am, c, out2);
      const auto m3 = mttkrp_mode3(x, am, an);
      audit::active = false;
      m.seconds = std::min(m.seconds, seconds_since(start));
      // The mode-3 result (F × K) is output, not scratch.
      m.aux_bytes = std::max(m.aux_bytes, audit::bytes.load() - m3.size() * sizeof(double));
    }
    return m;
  };
  const auto small = measure(random_sparse(rows, cols, slabs, 100000, 61));
  const auto large = measure(random_sparse(rows, cols, slabs, 200000, 62));
  set_thread_count(0);
  const double ratio = large.seconds / small.seconds;
  const std::size_t dense_scale = std::max(rows, cols) * slabs * f * sizeof(double);
  const std::size_t bound = (64 * slabs * f + 4 * f) * sizeof(double) + 4096;
  const bool mem_ok = small.aux_bytes <= bound && large.aux_bytes <= bound && large.aux_bytes == small.aux_bytes;
  return verdict(ratio >= 1.3 && ratio <= 3.0 && mem_ok,
                 "time ratio " + fmt(ratio) + " (in [1.3, 3.0]); scratch " + std::to_string(small.aux_bytes) + " / " +
                     std::to_string(large.aux_bytes) + " bytes (bound " + std::to_string(bound) + ", L*K*F*8 = " +
                     std::to_string(dense_scale) + ")");
}

Outcome criterion7() {
  const char* dir = std::getenv("TEXGRAPH_DRKG_DIR");
  if (!dir) return {Outcome::skip, "set TEXGRAPH_DRKG_DIR to a directory with drkg.tsv and evalspec.json"};
  const fs::path base(dir);
  const fs::path work = fs::temp_directory_path() / "texgraph_drkg_acceptance";
  pipeline::IngestOptions opts;
  if (fs::exists(base / "types.txt")) opts.type_order = io::read_lines(base / "types.txt");
  pipeline::cmd_ingest(base / "drkg.tsv", work / "data", opts);
  TrainConfig cfg;
  cfg.rank = 50;
  cfg.max_sweeps = 10;
  cfg.init = InitMode::spectral;
  pipeline::cmd_train(work / "data", work / "model", cfg);
  HitSummary hits;
  pipeline::cmd_evaluate(work / "model", base / "evalspec.json", work / "eval", &hits);
  const char* dexa_env = std::getenv("TEXGRAPH_DRKG_DEXAMETHASONE");
  const std::string dexa = dexa_env ? dexa_env : "Compound::DB01234";
  std::size_t dexa_rank = 0;
  std::ifstream report(work / "eval" / pipeline::kReportFile);
  std::string line;
  std::getline(report, line);
  while (std::getline(report, line)) {
    const auto fields = io::split(line, '\t');
    if (fields.size() > 1 && fields[1] == dexa) dexa_rank = io::parse_int<std::size_t>(fields[0], "rank");
  }
  const std::size_t h100 = hits.hits.count(100) ? hits.hits.at(100) : 0;
  const std::size_t h50 = hits.hits.count(50) ? hits.hits.at(50) : 0;
  return verdict(h100 >= 8 && h50 >= 5 && dexa_rank >= 1 && dexa_rank <= 10,
                 "hits@100 " + std::to_string(h100) + " (>= 8), hits@50 " + std::to_string(h50) +
                     " (>= 5), dexamethasone rank " + (dexa_rank ? std::to_string(dexa_rank) : "absent") + " (<= 10)");
}

Outcome criterion8() {
  const fs::path work = fs::temp_directory_path() / "texgraph_schema_acceptance";
  fs::remove_all(work);
  pipeline::cmd_synth(pipeline::SynthKind::drkg_mock, work / "raw", 8, 200000);
  pipeline::IngestOptions opts;
  opts.type_order = io::read_lines(work / "raw" / "types.txt");
  pipeline::cmd_ingest(work / "raw" / "triplets.tsv", work / "data", opts);
  const auto manifest = io::read_json(work / "data" / io::kBlockManifest);

  std::vector<std::string> problems;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  expect(manifest.at("tensor_blocks") == 6, "tensor blocks != 6");
  expect(manifest.at("matrix_blocks") == 11, "matrix blocks != 11");
  expect(manifest.at("entity_types") == 13, "entity types != 13");
  expect(manifest.at("relations") == 107, "relations != 107");
  expect(manifest.at("entities") == 97238, "entities != 97238");

  // Every block's dimensions against the typed schema.
  const auto types = synth::drkg_types();
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> want, got;
  for (const auto& b : synth::drkg_blocks()) want.insert({types[b.m].size, types[b.n].size, b.relations});
  for (const auto& b : manifest.at("blocks"))
    got.insert({b.at("dims")[0].get<std::size_t>(), b.at("dims")[1].get<std::size_t>(), b.at("dims")[2].get<std::size_t>()});
  expect(want == got, "block dimensions differ from the schema");

  // Round trip: exported triplets equal the deduplicated input lines.
  const auto data = pipeline::load_ingested(work / "data");
  const auto exported = export_edges(data.blocks, data.vocab);
  io::write_triplets(work / "exported.tsv", exported, data.vocab);
  const auto in_lines = io::read_lines(work / "raw" / "triplets.tsv");
  const auto out_lines = io::read_lines(work / "exported.tsv");
  const std::set<std::string> in_set(in_lines.begin(), in_lines.end());
  const std::set<std::string> out_set(out_lines.begin(), out_lines.end());
  expect(in_set == out_set, "round-trip triplet set differs");
  expect(out_lines.size() == out_set.size(), "export contains duplicates");

  std::string detail = "6 tensors / 11 matrices / 13 types / 107 relations / 97238 entities; " +
                       std::to_string(out_set.size()) + " unique triplets round-tripped";
  if (!problems.empty()) {
    detail = "";
    for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  }
  fs::remove_all(work);
  return verdict(problems.empty(), detail);
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::function<Outcome()>& run) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.kind == Outcome::pass ? "PASS" : o.kind == Outcome::fail ? "FAIL" : "SKIP";
    if (o.kind == Outcome::fail) ++failures;
    std::printf("criterion %d: %s  %s  [%.1f s]\n", id, tag, o.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  };

  const auto inst = coupled_instance();
  Criterion2State c2;
  report(1, criterion1);
  report(2, [&] { return criterion2(inst, c2); });
  report(3, [&] { return criterion3(c2); });
  report(4, [&] { return criterion4(inst); });
  report(5, criterion5);
  report(6, criterion6);
  report(7, criterion7);
  report(8, criterion8);
  return failures == 0 ? 0 : 1;
}
