#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "texgraph/block_tensor.hpp"
#include "texgraph/dense_matrix.hpp"
#include "texgraph/mttkrp.hpp"
#include "texgraph/parallel.hpp"

namespace texgraph {

/// The learned coupled model: one L_n × F factor per entity type and one
/// K_{m,n} × F factor per block.
struct FactorSet {
  std::size_t rank = 0;
  std::vector<DenseMatrix> entity;
  std::map<BlockKey, DenseMatrix> relation;

  bool operator==(const FactorSet&) const = default;
};

enum class InitMode { random, spectral };

struct TrainConfig {
  std::size_t rank = 50;
  std::size_t max_sweeps = 10;
  double ridge = 1e-8;
  /// Relative loss drop below which fitting stops; 0 runs every sweep.
  double tolerance = 0.0;
  std::uint64_t seed = 0;
  InitMode init = InitMode::spectral;

  void validate() const {
    if (rank < 1) throw InputError("rank must be at least 1");
    if (!(ridge >= 0.0)) throw InputError("ridge must be non-negative");
    if (!(tolerance >= 0.0)) throw InputError("tolerance must be non-negative");
  }
};

/// For each entity type n: the blocks where n is the second mode (S_n⁺ holds
/// their first types) and where n is the first mode (S_n⁻ holds their second
/// types). A diagonal block (n, n) appears in both.
struct SubsetIndex {
  std::vector<std::vector<Index>> plus;
  std::vector<std::vector<Index>> minus;

  static SubsetIndex build(std::size_t type_count, const BlockSet& blocks) {
    SubsetIndex s;
    s.plus.resize(type_count);
    s.minus.resize(type_count);
    for (const auto& [key, x] : blocks) {
      if (key.m >= type_count || key.n >= type_count)
        throw ContractError("SubsetIndex: block references unknown entity type");
      s.plus[key.n].push_back(key.m);
      s.minus[key.m].push_back(key.n);
    }
    return s;
  }
};

/// Shape check of a factor set against a block set.
inline void check_factors(const BlockSet& blocks, const FactorSet& factors) {
  const std::size_t f = factors.rank;
  detail::require(f >= 1, "FactorSet: rank must be positive");
  for (std::size_t t = 0; t < factors.entity.size(); ++t)
    detail::require(factors.entity[t].cols() == f,
                    "FactorSet: entity factor " + std::to_string(t) + " has wrong rank");
  for (const auto& [key, x] : blocks) {
    detail::require(key.n < factors.entity.size(), "FactorSet: missing entity factor");
    detail::require(factors.entity[key.m].rows() == x.rows() &&
                        factors.entity[key.n].rows() == x.cols(),
                    "FactorSet: entity factor rows do not match block dims");
    auto it = factors.relation.find(key);
    detail::require(it != factors.relation.end(), "FactorSet: missing relation factor");
    detail::require(it->second.rows() == x.slab_count() && it->second.cols() == f,
                    "FactorSet: relation factor shape does not match block");
  }
}

/// Entries i.i.d. uniform(0, 1) / √F, drawn for entity types in order and
/// then for blocks in key order.
inline FactorSet random_factors(const std::vector<std::size_t>& type_sizes, const BlockSet& blocks,
                                std::size_t rank, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(double(rank));
  FactorSet fs;
  fs.rank = rank;
  for (std::size_t size : type_sizes) {
    DenseMatrix a(size, rank);
    for (double& v : a.values()) v = unif(rng) * scale;
    fs.entity.push_back(std::move(a));
  }
  for (const auto& [key, x] : blocks) {
    DenseMatrix c(x.slab_count(), rank);
    for (double& v : c.values()) v = unif(rng) * scale;
    fs.relation.emplace(key, std::move(c));
  }
  return fs;
}

/// Per entity type, the local indices with no stored entry in any block.
inline std::vector<std::vector<Index>> zero_degree_entities(const std::vector<std::size_t>& type_sizes,
                                                            const BlockSet& blocks) {
  std::vector<std::vector<char>> seen(type_sizes.size());
  for (std::size_t t = 0; t < type_sizes.size(); ++t) seen[t].assign(type_sizes[t], 0);
  for (const auto& [key, x] : blocks) {
    for (std::size_t k = 0; k < x.slab_count(); ++k) {
      const auto& r = x.slab_rows(k);
      for (std::size_t i = 0; i < x.rows(); ++i)
        if (r.ptr[i + 1] > r.ptr[i]) seen[key.m][i] = 1;
      const auto& c = x.slab_cols(k);
      for (std::size_t j = 0; j < x.cols(); ++j)
        if (c.ptr[j + 1] > c.ptr[j]) seen[key.n][j] = 1;
    }
  }
  std::vector<std::vector<Index>> out(type_sizes.size());
  for (std::size_t t = 0; t < type_sizes.size(); ++t)
    for (Index i = 0; i < type_sizes[t]; ++i)
      if (!seen[t][i]) out[t].push_back(i);
  return out;
}

struct LossParts {
  double data = 0.0;   ///< Σ_blocks ‖X − ⟦A_m, A_n, C⟧‖²
  double ridge = 0.0;  ///< λ · Σ ‖factor‖²
  double total() const noexcept { return data + ridge; }
};

namespace detail {

// The data term is a difference of quantities of size ‖X‖². Near an exact fit
// the double cancellation error exceeds the term itself, so it is accumulated
// in extended precision.
using Wide = long double;

inline std::vector<Wide> wide_gram(const DenseMatrix& a) {
  const std::size_t f = a.cols();
  std::vector<Wide> g(f * f, 0.0L);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t p = 0; p < f; ++p)
      for (std::size_t q = p; q < f; ++q) g[p * f + q] += Wide(r[p]) * r[q];
  }
  for (std::size_t p = 0; p < f; ++p)
    for (std::size_t q = 0; q < p; ++q) g[p * f + q] = g[q * f + p];
  return g;
}

/// ⟨X, ⟦A_m, A_n, C⟧⟩ and ‖X‖², reduced row by row in a fixed order.
inline std::pair<Wide, Wide> wide_inner_and_norm(const SparseBlockTensor& x, const DenseMatrix& a_m,
                                                 const DenseMatrix& a_n, const DenseMatrix& c) {
  const std::size_t f = c.cols();
  std::vector<Wide> inner(x.rows(), 0.0L), norm(x.rows(), 0.0L);
  parallel_for(x.rows(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      auto am = a_m.row(i);
      Wide acc = 0.0L, sq = 0.0L;
      for (std::size_t k = 0; k < x.slab_count(); ++k) {
        const auto& s = x.slab_rows(k);
        auto ck = c.row(k);
        for (auto p = s.ptr[i]; p < s.ptr[i + 1]; ++p) {
          auto an = a_n.row(s.idx[p]);
          Wide t = 0.0L;
          for (std::size_t q = 0; q < f; ++q) t += Wide(am[q]) * an[q] * ck[q];
          const Wide v = s.value(p);
          acc += v * t;
          sq += v * v;
        }
      }
      inner[i] = acc;
      norm[i] = sq;
    }
  });
  Wide a = 0.0L, b = 0.0L;
  for (std::size_t i = 0; i < x.rows(); ++i) a += inner[i], b += norm[i];
  return {a, b};
}

inline double block_residual_sq(const SparseBlockTensor& x, const DenseMatrix& a_m,
                                const DenseMatrix& a_n, const DenseMatrix& c,
                                const std::vector<Wide>& gram_m, const std::vector<Wide>& gram_n) {
  const auto gram_c = wide_gram(c);
  Wide model = 0.0L;
  for (std::size_t i = 0; i < gram_c.size(); ++i) model += gram_m[i] * gram_n[i] * gram_c[i];
  const auto [inner, norm] = wide_inner_and_norm(x, a_m, a_n, c);
  // Rounding can leave a tiny negative value at an exact fit.
  return std::max(double(norm - 2.0L * inner + model), 0.0);
}

}  // namespace detail

/// Regularized coupled objective, evaluated without densifying any block.
inline LossParts total_loss(const BlockSet& blocks, const FactorSet& factors, double ridge) {
  check_factors(blocks, factors);
  std::vector<std::vector<detail::Wide>> grams;
  for (const auto& a : factors.entity) grams.push_back(detail::wide_gram(a));
  LossParts loss;
  for (const auto& [key, x] : blocks) {
    const auto& c = factors.relation.at(key);
    loss.data += detail::block_residual_sq(x, factors.entity[key.m], factors.entity[key.n], c,
                                           grams[key.m], grams[key.n]);
  }
  double norms = 0.0;
  for (const auto& a : factors.entity) norms += frobenius_sq(a);
  for (const auto& [key, c] : factors.relation) norms += frobenius_sq(c);
  loss.ridge = ridge * norms;
  return loss;
}

/// Σ_blocks ‖X‖².
inline double data_norm_sq(const BlockSet& blocks) {
  double s = 0.0;
  for (const auto& [key, x] : blocks) s += x.norm_sq();
  return s;
}

/// Alternating least squares over one coupled data set. Holds the current
/// factors together with their cached Gram matrices.
class CoupledAls {
 public:
  CoupledAls(const BlockSet& blocks, FactorSet factors, double ridge)
      : blocks_(blocks),
        factors_(std::move(factors)),
        ridge_(ridge),
        subsets_(SubsetIndex::build(factors_.entity.size(), blocks)) {
    check_factors(blocks_, factors_);
    for (const auto& a : factors_.entity) entity_grams_.push_back(gram(a));
    for (const auto& [key, c] : factors_.relation) relation_grams_.emplace(key, gram(c));
  }

  const FactorSet& factors() const noexcept { return factors_; }
  FactorSet release() && { return std::move(factors_); }

  /// Solves the normal equations for A_n with all other factors fixed. For
  /// the diagonal block the second occurrence of A_n is frozen at its current
  /// value; with symmetric slabs both MTTKRP terms coincide.
  DenseMatrix solve_entity(Index n, SpdSolveInfo* info = nullptr) const {
    const std::size_t f = factors_.rank;
    const auto& a_n = factors_.entity.at(n);
    DenseMatrix h(f, f);
    DenseMatrix m(f, a_n.rows());
    for (Index first : subsets_.plus.at(n)) {
      const BlockKey key{first, n};
      const auto& x = blocks_.at(key);
      const auto& c = factors_.relation.at(key);
      const auto& gc = relation_grams_.at(key);
      if (key.diagonal()) {
        DenseMatrix once = mttkrp_mode1(x, a_n, c);
        add_into(m, once, 2.0);
        add_into(h, hadamard(gc, entity_grams_[n]), 2.0);
        continue;
      }
      mttkrp_mode2_into(x, factors_.entity[first], c, m);
      add_into(h, hadamard(gc, entity_grams_[first]));
    }
    for (Index second : subsets_.minus.at(n)) {
      const BlockKey key{n, second};
      if (key.diagonal()) continue;  // counted twice above
      const auto& x = blocks_.at(key);
      const auto& c = factors_.relation.at(key);
      mttkrp_mode1_into(x, factors_.entity[second], c, m);
      add_into(h, hadamard(relation_grams_.at(key), entity_grams_[second]));
    }
    return spd_solve_transposed(h, ridge_, m, "entity type " + std::to_string(n), info);
  }

  /// Solves the normal equations for C_{m,n} with A_m, A_n fixed.
  DenseMatrix solve_relation(BlockKey key, SpdSolveInfo* info = nullptr) const {
    const auto& x = blocks_.at(key);
    const DenseMatrix m3 = mttkrp_mode3(x, factors_.entity[key.m], factors_.entity[key.n]);
    const DenseMatrix h = hadamard(entity_grams_[key.n], entity_grams_[key.m]);
    std::ostringstream what;
    what << "relation block (" << key.m << "," << key.n << ")";
    return spd_solve_transposed(h, ridge_, m3, what.str(), info);
  }

  void set_entity(Index n, DenseMatrix a) {
    entity_grams_[n] = gram(a);
    factors_.entity[n] = std::move(a);
  }
  void set_relation(BlockKey key, DenseMatrix c) {
    relation_grams_[key] = gram(c);
    factors_.relation[key] = std::move(c);
  }

  bool has_diagonal_block(Index n) const {
    const auto& plus = subsets_.plus.at(n);
    return std::find(plus.begin(), plus.end(), n) != plus.end();
  }

  /// The part of the objective that depends on A_n.
  double local_loss(Index n) const {
    const auto& a_n = factors_.entity[n];
    const auto g_n = detail::wide_gram(a_n);
    double s = 0.0;
    for (const auto& [key, x] : blocks_) {
      if (key.m != n && key.n != n) continue;
      const auto& a_m = factors_.entity[key.m];
      const auto g_m = key.m == n ? g_n : detail::wide_gram(a_m);
      const auto g_o = key.n == n ? g_n : detail::wide_gram(factors_.entity[key.n]);
      s += detail::block_residual_sq(x, a_m, factors_.entity[key.n], factors_.relation.at(key), g_m, g_o);
    }
    return s + ridge_ * frobenius_sq(a_n);
  }

  /// Moves A_n toward `target` by the largest step in {1, 1/2, ..., 2^-kMaxHalvings}
  /// that does not raise the objective; keeps A_n when none does. Returns the
  /// step taken.
  double step_entity(Index n, const DenseMatrix& target) {
    static constexpr int kMaxHalvings = 30;
    const DenseMatrix start = factors_.entity[n];
    const double before = local_loss(n);
    double t = 1.0;
    for (int h = 0; h <= kMaxHalvings; ++h, t *= 0.5) {
      DenseMatrix trial = target;
      if (h > 0)
        for (std::size_t i = 0; i < trial.size(); ++i)
          trial.data()[i] = start.data()[i] + t * (target.data()[i] - start.data()[i]);
      set_entity(n, std::move(trial));
      if (local_loss(n) <= before) return t;
    }
    set_entity(n, start);
    return 0.0;
  }

  LossParts loss() const {
    LossParts loss;
    double norms = 0.0;
    std::vector<std::vector<detail::Wide>> grams;
    for (const auto& a : factors_.entity) grams.push_back(detail::wide_gram(a));
    for (const auto& [key, x] : blocks_) {
      const auto& c = factors_.relation.at(key);
      loss.data += detail::block_residual_sq(x, factors_.entity[key.m], factors_.entity[key.n], c,
                                             grams[key.m], grams[key.n]);
    }
    for (const auto& g : entity_grams_)
      for (std::size_t q = 0; q < g.rows(); ++q) norms += g(q, q);
    for (const auto& [key, g] : relation_grams_)
      for (std::size_t q = 0; q < g.rows(); ++q) norms += g(q, q);
    loss.ridge = ridge_ * norms;
    return loss;
  }

 private:
  const BlockSet& blocks_;
  FactorSet factors_;
  double ridge_;
  SubsetIndex subsets_;
  std::vector<DenseMatrix> entity_grams_;
  std::map<BlockKey, DenseMatrix> relation_grams_;
};

/// New A_n from the normal equations of the coupled objective.
inline DenseMatrix update_entity_factor(Index n, const BlockSet& blocks, const FactorSet& factors,
                                        double ridge) {
  return CoupledAls(blocks, factors, ridge).solve_entity(n);
}

/// New C_{m,n} from the normal equations of block (m, n).
inline DenseMatrix update_relation_factor(BlockKey key, const BlockSet& blocks,
                                          const FactorSet& factors, double ridge) {
  return CoupledAls(blocks, factors, ridge).solve_relation(key);
}

struct SweepRecord {
  std::size_t sweep = 0;  ///< 1-based
  LossParts loss;
  double seconds = 0.0;
};

struct FitResult {
  FactorSet factors;
  LossParts initial_loss;
  std::vector<SweepRecord> trace;
  bool converged_early = false;
  /// Largest ridge any solve escalated to.
  double max_ridge_used = 0.0;
  /// Entity updates shortened because the full step raised the objective.
  std::size_t damped_updates = 0;
};

using SweepCallback = std::function<void(const SweepRecord&)>;

/// Alternating least squares: every sweep updates all entity factors in type
/// order, then all relation factors in block key order, and records the
/// regularized loss.
inline FitResult fit(const BlockSet& blocks, const TrainConfig& config, FactorSet init,
                     const SweepCallback& on_sweep = {}) {
  config.validate();
  detail::require(init.rank == config.rank, "fit: init rank differs from config rank");
  CoupledAls als(blocks, std::move(init), config.ridge);
  FitResult result;
  result.initial_loss = als.loss();
  result.max_ridge_used = config.ridge;
  double previous = result.initial_loss.total();

  auto finite_or_throw = [](const DenseMatrix& a, const std::string& what, std::size_t sweep) {
    if (!all_finite(a))
      throw NumericalError("non-finite entries in " + what + " at sweep " + std::to_string(sweep));
  };

  for (std::size_t sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    const auto start = std::chrono::steady_clock::now();
    SpdSolveInfo info;
    for (Index n = 0; n < als.factors().entity.size(); ++n) {
      DenseMatrix a = als.solve_entity(n, &info);
      result.max_ridge_used = std::max(result.max_ridge_used, info.ridge_used);
      finite_or_throw(a, "entity factor " + std::to_string(n), sweep);
      // With a diagonal block the update minimizes a surrogate in which the
      // second occurrence of A_n is frozen; it is accepted only as a descent step.
      if (als.has_diagonal_block(n)) {
        if (als.step_entity(n, a) < 1.0) ++result.damped_updates;
      } else {
        als.set_entity(n, std::move(a));
      }
    }
    for (const auto& [key, x] : blocks) {
      DenseMatrix c = als.solve_relation(key, &info);
      result.max_ridge_used = std::max(result.max_ridge_used, info.ridge_used);
      finite_or_throw(c, "relation factor", sweep);
      als.set_relation(key, std::move(c));
    }
    SweepRecord rec;
    rec.sweep = sweep;
    rec.loss = als.loss();
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trace.push_back(rec);
    if (on_sweep) on_sweep(rec);

    const double current = rec.loss.total();
    if (config.tolerance > 0.0 && previous > 0.0 &&
        (previous - current) / previous < config.tolerance) {
      result.converged_early = true;
      break;
    }
    previous = current;
  }
  result.factors = std::move(als).release();
  return result;
}

}  // namespace texgraph
