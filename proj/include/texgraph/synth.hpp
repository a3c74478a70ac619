#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "texgraph/als.hpp"
#include "texgraph/block_tensor.hpp"
#include "texgraph/vocabulary.hpp"

// Generators for synthetic data: exact low-rank coupled instances, random
// binary graphs, and knowledge-graph triplet files with a fixed schema.

namespace texgraph::synth {

struct BlockShape {
  BlockKey key;
  std::size_t slabs = 1;
};

struct CoupledInstance {
  std::vector<std::size_t> type_sizes;
  BlockSet blocks;
  FactorSet truth;
};

/// Dense real-valued blocks X_{m,n} = ⟦A_m, A_n, C_{m,n}⟧ with standard
/// normal factors. Diagonal blocks are filled from i <= j and mirrored so the
/// slabs are bit-symmetric.
inline CoupledInstance exact_coupled(const std::vector<std::size_t>& type_sizes,
                                     const std::vector<BlockShape>& shapes, std::size_t rank,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  CoupledInstance inst;
  inst.type_sizes = type_sizes;
  inst.truth.rank = rank;
  for (std::size_t size : type_sizes) {
    DenseMatrix a(size, rank);
    for (double& v : a.values()) v = normal(rng);
    inst.truth.entity.push_back(std::move(a));
  }
  for (const auto& s : shapes) {
    DenseMatrix c(s.slabs, rank);
    for (double& v : c.values()) v = normal(rng);
    inst.truth.relation.emplace(s.key, std::move(c));
  }
  for (const auto& s : shapes) {
    const auto& am = inst.truth.entity.at(s.key.m);
    const auto& an = inst.truth.entity.at(s.key.n);
    const auto& c = inst.truth.relation.at(s.key);
    std::vector<TensorEntry> entries;
    entries.reserve(am.rows() * an.rows() * s.slabs);
    for (Index k = 0; k < s.slabs; ++k)
      for (Index i = 0; i < am.rows(); ++i)
        for (Index j = s.key.diagonal() ? i : 0; j < an.rows(); ++j) {
          double v = 0.0;
          for (std::size_t f = 0; f < rank; ++f) v += am(i, f) * an(j, f) * c(k, f);
          entries.push_back({i, j, k, v});
          if (s.key.diagonal() && i != j) entries.push_back({j, i, k, v});
        }
    inst.blocks.emplace(s.key, SparseBlockTensor::from_entries(s.key, am.rows(), an.rows(), s.slabs,
                                                               std::move(entries), false));
  }
  return inst;
}

struct BinaryInstanceOptions {
  std::size_t max_types = 3;
  std::size_t min_size = 6;
  std::size_t max_size = 20;
  std::size_t max_slabs = 3;
  double density = 0.15;
  bool allow_diagonal = true;
};

/// Random binary coupled graph: random type sizes, a random set of blocks
/// (every type covered), Bernoulli edges. Diagonal slabs are symmetrized.
inline CoupledInstance random_binary(std::uint64_t seed, const BinaryInstanceOptions& opts = {}) {
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::bernoulli_distribution edge(opts.density);
  CoupledInstance inst;
  if (!opts.allow_diagonal && opts.max_types < 2)
    throw ContractError("random_binary: off-diagonal blocks need two types");
  const std::size_t types = uniform_int(opts.allow_diagonal ? 1 : 2, opts.max_types);
  for (std::size_t t = 0; t < types; ++t) inst.type_sizes.push_back(uniform_int(opts.min_size, opts.max_size));

  std::set<BlockKey> keys;
  for (Index t = 0; t < types; ++t) {
    // Connect each type to a random partner so every type has a block.
    Index other = Index(uniform_int(0, types - 1));
    if (!opts.allow_diagonal && types > 1)
      while (other == t) other = Index(uniform_int(0, types - 1));
    keys.insert(BlockKey::canonical(t, other));
  }
  for (const auto& key : keys) {
    const std::size_t slabs = uniform_int(1, opts.max_slabs);
    const std::size_t rows = inst.type_sizes[key.m];
    const std::size_t cols = inst.type_sizes[key.n];
    std::vector<TensorEntry> entries;
    for (Index k = 0; k < slabs; ++k)
      for (Index i = 0; i < rows; ++i)
        for (Index j = key.diagonal() ? i : 0; j < cols; ++j) {
          if (!edge(rng)) continue;
          entries.push_back({i, j, k});
          if (key.diagonal() && i != j) entries.push_back({j, i, k});
        }
    inst.blocks.emplace(key, SparseBlockTensor::from_entries(key, rows, cols, slabs, std::move(entries)));
  }
  return inst;
}

/// A raw triplet file in memory.
struct TripletLines {
  std::vector<std::string> type_roster;
  std::vector<std::string> lines;  ///< "head\trelation\ttail"
};

struct SchemaType {
  std::string name;
  std::size_t size;
};

struct SchemaBlock {
  Index m;
  Index n;
  std::size_t relations;
};

/// The typed block layout of the drug-repurposing knowledge graph: 13 entity
/// types and 17 blocks (6 with several relation types, 11 with one).
inline std::vector<SchemaType> drkg_types() {
  return {{"Gene", 39220},
          {"Compound", 24313},
          {"Disease", 5103},
          {"Anatomy", 400},
          {"Tax", 215},
          {"Biological Process", 11381},
          {"Cellular Component", 1391},
          {"Pathway", 1822},
          {"Molecular Function", 2884},
          {"Atc", 4048},
          {"Side Effect", 5701},
          {"Pharmacologic Class", 345},
          {"Symptom", 415}};
}

inline std::vector<SchemaBlock> drkg_blocks() {
  return {{0, 0, 32}, {0, 1, 34}, {0, 2, 15}, {0, 3, 3},  {0, 4, 1},  {0, 5, 1},
          {0, 6, 1},  {0, 7, 1},  {0, 8, 1},  {1, 1, 2},  {1, 2, 10}, {1, 9, 1},
          {1, 10, 1}, {1, 11, 1}, {2, 2, 1},  {2, 3, 1},  {2, 12, 1}};
}

inline std::string relation_name(const std::vector<SchemaType>& types, const SchemaBlock& b,
                                 std::size_t k, bool reversed) {
  const auto& h = types[reversed ? b.n : b.m].name;
  const auto& t = types[reversed ? b.m : b.n].name;
  if (b.m == 1 && b.n == 2 && k == 0) return "MOCK::treats::" + h + ":" + t;
  if (b.m == 1 && b.n == 2 && k == 1) return "MOCK::inhibits::" + h + ":" + t;
  return "MOCK::r" + std::to_string(k) + "::" + h + ":" + t;
}

inline std::string entity_name(const std::vector<SchemaType>& types, Index t, std::size_t i) {
  return types[t].name + "::" + std::to_string(i);
}

/// Triplets following a typed schema. Every entity of every type occurs at
/// least once and every relation at least once; `extra_edges` random edges
/// are added on top. In off-diagonal blocks every third relation is emitted
/// tail-type first so ingestion has to transpose it.
inline TripletLines schema_triplets(const std::vector<SchemaType>& types,
                                    const std::vector<SchemaBlock>& blocks, std::size_t extra_edges,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TripletLines out;
  for (const auto& t : types) out.type_roster.push_back(t.name);

  auto reversed = [](const SchemaBlock& b, std::size_t k) { return b.m != b.n && k % 3 == 2; };
  auto emit = [&](std::size_t bi, std::size_t k, std::size_t i, std::size_t j) {
    const auto& b = blocks[bi];
    const bool rev = reversed(b, k);
    const auto head = entity_name(types, rev ? b.n : b.m, rev ? j : i);
    const auto tail = entity_name(types, rev ? b.m : b.n, rev ? i : j);
    out.lines.push_back(head + '\t' + relation_name(types, b, k, rev) + '\t' + tail);
  };
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  // One edge per relation.
  for (std::size_t bi = 0; bi < blocks.size(); ++bi)
    for (std::size_t k = 0; k < blocks[bi].relations; ++k)
      emit(bi, k, pick(types[blocks[bi].m].size), pick(types[blocks[bi].n].size));

  // Cover every entity through a block that involves its type.
  std::vector<std::vector<std::size_t>> blocks_of(types.size());
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    blocks_of[blocks[bi].m].push_back(bi);
    if (blocks[bi].n != blocks[bi].m) blocks_of[blocks[bi].n].push_back(bi);
  }
  for (Index t = 0; t < types.size(); ++t) {
    if (blocks_of[t].empty()) throw ContractError("schema_triplets: type without a block");
    for (std::size_t i = 0; i < types[t].size; ++i) {
      const auto bi = blocks_of[t][i % blocks_of[t].size()];
      const auto& b = blocks[bi];
      const auto k = pick(b.relations);
      if (b.m == t)
        emit(bi, k, i, pick(types[b.n].size));
      else
        emit(bi, k, pick(types[b.m].size), i);
    }
  }

  // Extra edges, blocks chosen proportionally to their slab count.
  std::vector<double> weights;
  for (const auto& b : blocks) weights.push_back(double(b.relations));
  std::discrete_distribution<std::size_t> which(weights.begin(), weights.end());
  for (std::size_t e = 0; e < extra_edges; ++e) {
    const auto bi = which(rng);
    const auto& b = blocks[bi];
    emit(bi, pick(b.relations), pick(types[b.m].size), pick(types[b.n].size));
  }
  return out;
}

inline TripletLines drkg_mock(std::size_t extra_edges, std::uint64_t seed) {
  return schema_triplets(drkg_types(), drkg_blocks(), extra_edges, seed);
}

/// A small knowledge graph with planted communities and a held-out
/// repurposing query. Genes, compounds and diseases each belong to one of
/// `communities` groups; edges appear mostly within a group. The target
/// diseases are in group 0; compounds of group 0 are split into `known`
/// ones (with treats edges to the targets) and `held_out` ones (without).
struct PlantedKg {
  TripletLines triplets;
  std::vector<std::string> target_diseases;
  std::vector<std::string> relations;  ///< treats, inhibits
  std::vector<std::string> candidates;
  std::vector<std::string> excluded;
  std::vector<std::string> reference;
};

inline PlantedKg planted_kg(std::uint64_t seed, std::size_t communities = 4,
                            std::size_t genes = 200, std::size_t compounds = 120,
                            std::size_t diseases = 40) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif;
  PlantedKg kg;
  kg.triplets.type_roster = {"Gene", "Compound", "Disease"};
  auto group = [&](std::size_t i) { return i % communities; };
  auto gname = [](std::size_t i) { return "Gene::g" + std::to_string(i); };
  auto cname = [](std::size_t i) { return "Compound::c" + std::to_string(i); };
  auto dname = [](std::size_t i) { return "Disease::d" + std::to_string(i); };
  auto add = [&](const std::string& h, const std::string& r, const std::string& t) {
    kg.triplets.lines.push_back(h + '\t' + r + '\t' + t);
  };
  const double p_in = 0.25, p_out = 0.01;
  auto link = [&](std::size_t a, std::size_t b) {
    return unif(rng) < (group(a) == group(b) ? p_in : p_out);
  };
  for (std::size_t i = 0; i < genes; ++i)
    for (std::size_t j = i + 1; j < genes; ++j)
      if (link(i, j)) add(gname(i), "KG::interacts::Gene:Gene", gname(j));
  for (std::size_t c = 0; c < compounds; ++c)
    for (std::size_t g = 0; g < genes; ++g) {
      if (link(c, g)) add(cname(c), "KG::targets::Compound:Gene", gname(g));
      if (link(c, g) && unif(rng) < 0.5) add(cname(c), "KG::binds::Compound:Gene", gname(g));
    }
  for (std::size_t d = 0; d < diseases; ++d)
    for (std::size_t g = 0; g < genes; ++g)
      if (link(d, g)) add(dname(d), "KG::associates::Disease:Gene", gname(g));

  // Targets: group-0 diseases. Known drugs: every other group-0 compound.
  for (std::size_t d = 0; d < diseases; d += communities) kg.target_diseases.push_back(dname(d));
  std::set<std::size_t> held_out;
  for (std::size_t c = 0; c < compounds; c += communities)
    if ((c / communities) % 2 == 1) held_out.insert(c);
  for (std::size_t c = 0; c < compounds; ++c)
    for (std::size_t d = 0; d < diseases; ++d) {
      if (held_out.count(c) && group(d) == 0) continue;
      if (link(c, d)) add(cname(c), unif(rng) < 0.6 ? "KG::treats::Compound:Disease"
                                                     : "KG::inhibits::Compound:Disease",
                          dname(d));
    }
  // Make sure both scoring relations exist.
  add(cname(1), "KG::treats::Compound:Disease", dname(1));
  add(cname(2), "KG::inhibits::Compound:Disease", dname(2));

  kg.relations = {"KG::treats::Compound:Disease", "KG::inhibits::Compound:Disease"};
  for (std::size_t c = 0; c < compounds; ++c) kg.candidates.push_back(cname(c));
  for (std::size_t c : held_out) kg.reference.push_back(cname(c));
  kg.excluded = {cname(0)};
  return kg;
}

}  // namespace texgraph::synth
