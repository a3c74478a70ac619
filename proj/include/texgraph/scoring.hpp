#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "texgraph/als.hpp"
#include "texgraph/parallel.hpp"
#include "texgraph/spectral_init.hpp"
#include "texgraph/vocabulary.hpp"

namespace texgraph {

/// Σ_f A_drug(i, f) · C(k, f) · A_disease(j, f) for relation `relation`,
/// whose block must connect the two entities' types.
inline double score_edge(const FactorSet& factors, const TypedVocabulary& vocab, EntityRef drug,
                         Index relation, EntityRef disease) {
  const auto& rel = vocab.relation_info(relation);
  if (rel.block != BlockKey::canonical(drug.type, disease.type))
    throw InputError("relation '" + rel.name + "' does not connect types '" +
                     vocab.type_name(drug.type) + "' and '" + vocab.type_name(disease.type) + "'");
  const auto& a = factors.entity.at(drug.type);
  const auto& b = factors.entity.at(disease.type);
  const auto& c = factors.relation.at(rel.block);
  detail::require(drug.local < a.rows() && disease.local < b.rows(), "score_edge: index out of range");
  double s = 0.0;
  for (std::size_t f = 0; f < factors.rank; ++f)
    s += a(drug.local, f) * c(rel.slab, f) * b(disease.local, f);
  return s;
}

/// Drug-repurposing query: which candidates score highest against the target
/// diseases through the given relations.
struct EvalSpec {
  std::vector<std::string> diseases;
  std::vector<std::string> relations;
  std::vector<std::string> candidates;
  std::vector<std::string> excluded;
  std::vector<std::string> reference;
  std::vector<std::size_t> k_values{50, 100};

  std::size_t max_k() const {
    return k_values.empty() ? 100 : *std::max_element(k_values.begin(), k_values.end());
  }
};

struct RankedDrug {
  std::size_t rank = 0;  ///< 1-based
  std::string drug;
  EntityRef drug_ref;
  double score = 0.0;
  std::string best_disease;
  std::string best_relation;
  bool hit = false;
};

struct RankingReport {
  std::vector<RankedDrug> entries;
  std::size_t k = 0;
  std::size_t candidate_count = 0;
  std::vector<std::string> warnings;
};

/// Scores every (candidate, disease, relation) edge and lists the first K
/// distinct drugs in order of (score desc, drug index, disease index, slab).
/// Each drug appears once, at the position of its best edge.
inline RankingReport rank_candidates(const FactorSet& factors, const TypedVocabulary& vocab,
                                     const EvalSpec& spec) {
  RankingReport report;
  if (spec.diseases.empty()) throw InputError("eval spec lists no diseases");
  if (spec.relations.empty()) throw InputError("eval spec lists no relations");

  std::vector<EntityRef> diseases;
  for (const auto& d : spec.diseases) diseases.push_back(vocab.entity(d));
  std::vector<Index> relations;
  for (const auto& r : spec.relations) relations.push_back(vocab.relation(r));

  std::set<std::string> excluded(spec.excluded.begin(), spec.excluded.end());
  for (const auto& e : spec.excluded)
    if (!vocab.find_entity(e)) report.warnings.push_back("excluded drug '" + e + "' not in vocabulary");

  std::vector<EntityRef> drugs;
  std::set<Index> seen;
  std::optional<Index> drug_type;
  for (const auto& cand : spec.candidates) {
    if (excluded.count(cand)) continue;
    const auto ref = vocab.find_entity(cand);
    if (!ref) {
      report.warnings.push_back("candidate '" + cand + "' not in vocabulary; skipped");
      continue;
    }
    if (drug_type && *drug_type != ref->type)
      throw InputError("candidate '" + cand + "' has a different entity type than earlier candidates");
    drug_type = ref->type;
    if (seen.insert(ref->local).second) drugs.push_back(*ref);
  }
  // Ascending drug index is the tie-break; sort once up front.
  std::sort(drugs.begin(), drugs.end());
  report.candidate_count = drugs.size();

  for (std::size_t r = 0; r < relations.size(); ++r) {
    for (const auto& d : diseases) {
      if (drug_type && vocab.relation_info(relations[r]).block != BlockKey::canonical(*drug_type, d.type))
        throw InputError("relation '" + spec.relations[r] + "' does not connect the candidate and disease types");
    }
  }

  // Best edge per drug: highest score, then lowest disease index, then slab.
  struct Best {
    double score = -std::numeric_limits<double>::infinity();
    std::size_t disease = 0;
    std::size_t relation = 0;
  };
  std::vector<std::size_t> disease_order(diseases.size());
  std::iota(disease_order.begin(), disease_order.end(), 0);
  std::stable_sort(disease_order.begin(), disease_order.end(),
                   [&](std::size_t a, std::size_t b) { return diseases[a].local < diseases[b].local; });
  std::vector<std::size_t> relation_order(relations.size());
  std::iota(relation_order.begin(), relation_order.end(), 0);
  std::stable_sort(relation_order.begin(), relation_order.end(), [&](std::size_t a, std::size_t b) {
    return vocab.relation_info(relations[a]).slab < vocab.relation_info(relations[b]).slab;
  });

  std::vector<Best> best(drugs.size());
  parallel_for(
      drugs.size(),
      [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
          auto& b = best[p];
          for (std::size_t di : disease_order)
            for (std::size_t ri : relation_order) {
              const double s = score_edge(factors, vocab, drugs[p], relations[ri], diseases[di]);
              if (s > b.score) b = {s, di, ri};
            }
        }
      },
      64);

  std::vector<std::size_t> order(drugs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return best[a].score > best[b].score; });

  report.k = spec.max_k();
  if (report.k > drugs.size()) {
    report.warnings.push_back("K = " + std::to_string(report.k) + " exceeds the " +
                              std::to_string(drugs.size()) + " candidates; reporting all");
  }
  const std::size_t take = std::min(report.k, drugs.size());
  for (std::size_t pos = 0; pos < take; ++pos) {
    const auto p = order[pos];
    RankedDrug rd;
    rd.rank = pos + 1;
    rd.drug_ref = drugs[p];
    rd.drug = vocab.entity_name(drugs[p]);
    rd.score = best[p].score;
    rd.best_disease = vocab.entity_name(diseases[best[p].disease]);
    rd.best_relation = vocab.relation_info(relations[best[p].relation]).name;
    report.entries.push_back(std::move(rd));
  }
  return report;
}

struct HitSummary {
  std::map<std::size_t, std::size_t> hits;  ///< K → reference drugs in the top K
  std::size_t reference_total = 0;
  std::size_t reference_known = 0;  ///< denominator: reference drugs in the vocabulary
  std::vector<std::string> warnings;
};

/// Marks report entries that belong to the reference list and counts them in
/// each top-K prefix.
inline HitSummary evaluate_hits(RankingReport& report, const std::vector<std::string>& reference,
                                const std::vector<std::size_t>& k_values,
                                const TypedVocabulary* vocab = nullptr) {
  HitSummary summary;
  std::set<std::string> ref(reference.begin(), reference.end());
  summary.reference_total = ref.size();
  summary.reference_known = ref.size();
  if (vocab) {
    for (const auto& r : ref)
      if (!vocab->find_entity(r)) {
        summary.warnings.push_back("reference drug '" + r +
                                   "' not in vocabulary; excluded from the denominator");
        --summary.reference_known;
      }
  }
  for (auto& e : report.entries) e.hit = ref.count(e.drug) > 0;
  for (std::size_t k : k_values) {
    std::size_t h = 0;
    for (const auto& e : report.entries)
      if (e.rank <= k && e.hit) ++h;
    summary.hits[k] = h;
  }
  return summary;
}

struct ThreewayBaseline {
  DenseMatrix a;  ///< L_e × F
  DenseMatrix c;  ///< K_r × F
  SemiSymmetricCpd init;
  FitResult fit;
};

/// CPD of the symmetrized global tensor: spectral init followed by ALS sweeps
/// on the single semi-symmetric block.
inline ThreewayBaseline fit_threeway_baseline(const GlobalTensor& y, std::size_t rank,
                                              std::size_t sweeps, std::uint64_t seed,
                                              double ridge = 1e-8,
                                              const SweepCallback& on_sweep = {}) {
  ThreewayBaseline out;
  out.init = semi_symmetric_cpd(y, rank, seed);
  BlockSet blocks;
  blocks.emplace(BlockKey{0, 0}, y);
  FactorSet fs;
  fs.rank = rank;
  fs.entity.push_back(out.init.a);
  fs.relation.emplace(BlockKey{0, 0}, out.init.c);
  TrainConfig cfg;
  cfg.rank = rank;
  cfg.max_sweeps = sweeps;
  cfg.ridge = ridge;
  cfg.seed = seed;
  out.fit = fit(blocks, cfg, std::move(fs), on_sweep);
  out.a = out.fit.factors.entity[0];
  out.c = out.fit.factors.relation.at(BlockKey{0, 0});
  return out;
}

}  // namespace texgraph
