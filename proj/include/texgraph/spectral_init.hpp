#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "texgraph/als.hpp"
#include "texgraph/block_tensor.hpp"
#include "texgraph/lanczos.hpp"
#include "texgraph/mttkrp.hpp"
#include "texgraph/parallel.hpp"
#include "texgraph/vocabulary.hpp"

namespace texgraph {

/// The global three-way tensor over all entities (global index = type offset
/// + local index, one slab per relation), symmetrized in its first two
/// modes. Stored as a single diagonal block with key (0, 0).
using GlobalTensor = SparseBlockTensor;

/// Y(i, j, k) = min{1, Z(i, j, k) + Z(j, i, k)} where Z holds every edge at
/// global coordinates.
inline GlobalTensor build_symmetrized(const std::vector<Edge>& edges, const TypedVocabulary& vocab) {
  std::vector<TensorEntry> entries;
  entries.reserve(2 * edges.size());
  for (const auto& e : edges) {
    const auto& rel = vocab.relation_info(e.relation);
    const auto h = Index(vocab.global_index({rel.head_type, e.head}));
    const auto t = Index(vocab.global_index({rel.tail_type, e.tail}));
    entries.push_back({h, t, e.relation});
    if (h != t) entries.push_back({t, h, e.relation});
  }
  const std::size_t n = vocab.entity_count();
  return GlobalTensor::from_entries({0, 0}, n, n, vocab.relation_count(), std::move(entries));
}

struct SemiSymmetricCpd {
  DenseMatrix a;  ///< L_e × F, unit-norm columns
  DenseMatrix c;  ///< K_r × F
  double relative_residual = 0.0;  ///< ‖Y − ⟦A, A, C⟧‖ / ‖Y‖
  std::size_t padded_columns = 0;  ///< eigenvectors replaced for rank deficiency
  std::size_t complex_pairs = 0;
  bool random_fallback = false;
  std::vector<std::string> warnings;
};

struct SpectralOptions {
  double eig_tolerance = 1e-6;
  std::size_t max_restarts = 300;
  /// Pencil eigenvalues with |imag| / |real| above this are treated as complex.
  double complex_tolerance = 1e-6;
  /// Relative residual above which the result is replaced by a random init.
  double fallback_residual = 0.9;
};

namespace detail {

/// y = Σ_k Y^k x.
inline void aggregate_matvec(const GlobalTensor& y, std::span<const double> x, std::span<double> out) {
  parallel_for(y.rows(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < y.slab_count(); ++k) {
        const auto& slab = y.slab_rows(k);
        for (auto p = slab.ptr[i]; p < slab.ptr[i + 1]; ++p) s += slab.value(p) * x[slab.idx[p]];
      }
      out[i] = s;
    }
  });
}

/// M_k = Uᵀ Y^k U for every slab, F × F each.
inline std::vector<Eigen::MatrixXd> compress_slabs(const GlobalTensor& y, const DenseMatrix& u) {
  const std::size_t f = u.cols();
  std::vector<Eigen::MatrixXd> out(y.slab_count(), Eigen::MatrixXd::Zero(Eigen::Index(f), Eigen::Index(f)));
  parallel_for(
      y.slab_count(),
      [&](std::size_t lo, std::size_t hi) {
        std::vector<double> t(f);
        for (std::size_t k = lo; k < hi; ++k) {
          const auto& slab = y.slab_rows(k);
          auto& mk = out[k];
          for (std::size_t i = 0; i < y.rows(); ++i) {
            if (slab.ptr[i] == slab.ptr[i + 1]) continue;
            std::fill(t.begin(), t.end(), 0.0);
            for (auto p = slab.ptr[i]; p < slab.ptr[i + 1]; ++p) {
              const double v = slab.value(p);
              auto uj = u.row(slab.idx[p]);
              for (std::size_t q = 0; q < f; ++q) t[q] += v * uj[q];
            }
            auto ui = u.row(i);
            for (std::size_t p = 0; p < f; ++p)
              for (std::size_t q = 0; q < f; ++q) mk(Eigen::Index(p), Eigen::Index(q)) += ui[p] * t[q];
          }
        }
      },
      1);
  return out;
}

inline double semi_symmetric_residual(const GlobalTensor& y, const DenseMatrix& a, const DenseMatrix& c) {
  const DenseMatrix ga = gram(a);
  const double r = y.norm_sq() - 2.0 * sparse_inner(y, a, a, c) + model_norm_sq(ga, ga, gram(c));
  const double norm = y.norm_sq();
  return norm > 0.0 ? std::sqrt(std::max(r, 0.0) / norm) : 0.0;
}

}  // namespace detail

/// Rank-F semi-symmetric CPD Y ≈ ⟦A, A, C⟧ by the two-slab pencil method:
/// truncated eigendecomposition of the aggregate slab, compression of every
/// slab onto that subspace, and generalized eigenvectors of two random slab
/// combinations.
inline SemiSymmetricCpd semi_symmetric_cpd(const GlobalTensor& y, std::size_t rank,
                                           std::uint64_t seed, const SpectralOptions& opts = {}) {
  const std::size_t n = y.rows();
  const std::size_t slabs = y.slab_count();
  detail::require(y.key().diagonal(), "semi_symmetric_cpd: tensor must be symmetric");
  if (rank < 1 || rank > n) throw InputError("semi_symmetric_cpd: rank must be in [1, L_e]");
  if (slabs < 2) throw InputError("semi_symmetric_cpd: the pencil method needs at least 2 slabs");
  if (y.nnz() == 0) throw InputError("semi_symmetric_cpd: tensor has no nonzeros");

  SemiSymmetricCpd out;
  std::mt19937_64 rng(seed);
  const std::size_t f = rank;

  // 1. Truncated EVD of S = Σ_k Y^k.
  LanczosOptions lopts;
  lopts.tolerance = opts.eig_tolerance;
  lopts.max_restarts = opts.max_restarts;
  lopts.seed = rng();
  auto eig = lanczos_largest(
      n, f, [&](std::span<const double> x, std::span<double> yv) { detail::aggregate_matvec(y, x, yv); },
      lopts);
  if (!eig.converged) {
    std::ostringstream msg;
    msg << "semi_symmetric_cpd: eigensolver did not converge after " << eig.restarts
        << " restarts; residuals:";
    for (double r : eig.residuals) msg << ' ' << r;
    throw NumericalError(msg.str());
  }
  DenseMatrix u = std::move(eig.vectors);

  // Columns for (numerically) zero eigenvalues carry no information; replace
  // them with a seeded orthonormal completion.
  const double top = std::abs(eig.values.front());
  std::vector<std::size_t> deficient;
  for (std::size_t q = 0; q < f; ++q)
    if (std::abs(eig.values[q]) <= 1e-10 * top) deficient.push_back(q);
  if (!deficient.empty()) {
    std::normal_distribution<double> normal;
    for (std::size_t q : deficient) {
      std::vector<double> v(n);
      for (int attempt = 0;; ++attempt) {
        for (double& x : v) x = normal(rng);
        for (int pass = 0; pass < 2; ++pass)
          for (std::size_t p = 0; p < f; ++p) {
            if (p == q) continue;
            double h = 0.0;
            for (std::size_t r = 0; r < n; ++r) h += u(r, p) * v[r];
            for (std::size_t r = 0; r < n; ++r) v[r] -= h * u(r, p);
          }
        double nv = 0.0;
        for (double x : v) nv += x * x;
        nv = std::sqrt(nv);
        if (nv > 1e-8 || attempt > 8) {
          for (std::size_t r = 0; r < n; ++r) u(r, q) = v[r] / nv;
          break;
        }
      }
    }
    out.padded_columns = deficient.size();
    out.warnings.push_back("aggregate slab has rank " + std::to_string(f - deficient.size()) +
                           " < F; padded " + std::to_string(deficient.size()) +
                           " eigenvector columns with a random orthonormal completion");
  }

  // 2. Compress every slab.
  const auto compressed = detail::compress_slabs(y, u);

  // 3. Two random slab combinations and their pencil.
  std::normal_distribution<double> normal;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(Eigen::Index(f), Eigen::Index(f));
  Eigen::MatrixXd q = p;
  for (std::size_t k = 0; k < slabs; ++k) {
    const double wk = normal(rng);
    const double vk = normal(rng);
    p += wk * compressed[k];
    q += vk * compressed[k];
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> q_lu(q);
  if (!(q_lu.rcond() > 1e-12)) {
    const double ridge = 1e-12 * std::abs(q.trace()) / double(f);
    q.diagonal().array() += ridge > 0.0 ? ridge : 1e-12;
    q_lu.compute(q);
  }
  const Eigen::MatrixXd pencil = q_lu.solve(p);  // Q⁻¹P; P x = λ Q x
  Eigen::EigenSolver<Eigen::MatrixXd> ges(pencil);
  if (ges.info() != Eigen::Success) throw NumericalError("semi_symmetric_cpd: pencil eigensolve failed");
  const auto lambdas = ges.eigenvalues();
  const auto vecs = ges.eigenvectors();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(Eigen::Index(f), Eigen::Index(f));
  for (Eigen::Index col = 0; col < Eigen::Index(f); ++col) {
    const auto l = lambdas(col);
    const bool complex = std::abs(l.imag()) > opts.complex_tolerance * std::abs(l.real()) &&
                         std::abs(l.imag()) > 0.0;
    if (!complex) {
      x.col(col) = vecs.col(col).real();
      continue;
    }
    // Conjugate pair: span it with the real and imaginary parts.
    x.col(col) = vecs.col(col).real();
    if (col + 1 < Eigen::Index(f)) {
      x.col(col + 1) = vecs.col(col).imag();
      ++col;
    }
    ++out.complex_pairs;
  }
  if (out.complex_pairs > 0)
    out.warnings.push_back(std::to_string(out.complex_pairs) +
                           " complex pencil eigenvalue pairs; used real joint-diagonalization fallback");

  // 4. A = U X⁻ᵀ, C(k, :) = diag(Xᵀ M_k X).
  Eigen::PartialPivLU<Eigen::MatrixXd> x_lu(x.transpose());
  bool degenerate = !(x_lu.rcond() > 1e-14);
  DenseMatrix a(n, f);
  DenseMatrix c(slabs, f);
  if (!degenerate) {
    const Eigen::MatrixXd x_inv_t = x_lu.inverse();
    as_eigen(a) = as_eigen(u) * x_inv_t;
    for (std::size_t k = 0; k < slabs; ++k) {
      const Eigen::MatrixXd d = x.transpose() * compressed[k] * x;
      for (std::size_t col = 0; col < f; ++col) c(k, col) = d(Eigen::Index(col), Eigen::Index(col));
    }
    // 5. Unit-norm columns of A, scale absorbed into C; sign fixed so the
    // largest-magnitude entry of each column is positive.
    for (std::size_t col = 0; col < f; ++col) {
      double norm = 0.0;
      std::size_t arg = 0;
      for (std::size_t r = 0; r < n; ++r) {
        norm += a(r, col) * a(r, col);
        if (std::abs(a(r, col)) > std::abs(a(arg, col))) arg = r;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      const double sign = a(arg, col) < 0.0 ? -1.0 : 1.0;
      for (std::size_t r = 0; r < n; ++r) a(r, col) *= sign / norm;
      for (std::size_t k = 0; k < slabs; ++k) c(k, col) *= norm * norm;
    }
    degenerate = !all_finite(a) || !all_finite(c);
  }

  out.relative_residual = degenerate ? INFINITY : detail::semi_symmetric_residual(y, a, c);
  if (degenerate || !(out.relative_residual <= opts.fallback_residual)) {
    std::ostringstream msg;
    msg << "spectral init residual " << out.relative_residual << " exceeds "
        << opts.fallback_residual << "; falling back to seeded random init";
    out.warnings.push_back(msg.str());
    out.random_fallback = true;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double scale = 1.0 / std::sqrt(double(f));
    for (double& v : a.values()) v = unif(rng) * scale;
    for (double& v : c.values()) v = unif(rng) * scale;
    out.relative_residual = detail::semi_symmetric_residual(y, a, c);
  }
  out.a = std::move(a);
  out.c = std::move(c);
  return out;
}

/// Splits global factors into per-type entity factors (by type offsets) and
/// per-block relation factors (by the relation → slab map).
inline FactorSet scatter(const DenseMatrix& a, const DenseMatrix& c, const TypedVocabulary& vocab) {
  detail::require(a.rows() == vocab.entity_count(), "scatter: A rows differ from L_e");
  detail::require(c.rows() == vocab.relation_count(), "scatter: C rows differ from K_r");
  detail::require(a.cols() == c.cols(), "scatter: rank mismatch");
  const std::size_t f = a.cols();
  FactorSet fs;
  fs.rank = f;
  for (Index t = 0; t < vocab.type_count(); ++t) {
    DenseMatrix at(vocab.type_size(t), f);
    const std::size_t off = vocab.offset(t);
    for (std::size_t i = 0; i < at.rows(); ++i)
      std::copy_n(a.row(off + i).begin(), f, at.row(i).begin());
    fs.entity.push_back(std::move(at));
  }
  for (const auto& [key, rels] : vocab.block_relations()) {
    DenseMatrix ck(rels.size(), f);
    for (std::size_t s = 0; s < rels.size(); ++s)
      std::copy_n(c.row(rels[s]).begin(), f, ck.row(s).begin());
    fs.relation.emplace(key, std::move(ck));
  }
  return fs;
}

/// Inverse of scatter.
inline std::pair<DenseMatrix, DenseMatrix> gather(const FactorSet& fs, const TypedVocabulary& vocab) {
  const std::size_t f = fs.rank;
  DenseMatrix a(vocab.entity_count(), f);
  DenseMatrix c(vocab.relation_count(), f);
  for (Index t = 0; t < vocab.type_count(); ++t) {
    const auto& at = fs.entity.at(t);
    detail::require(at.rows() == vocab.type_size(t), "gather: entity factor rows");
    for (std::size_t i = 0; i < at.rows(); ++i)
      std::copy_n(at.row(i).begin(), f, a.row(vocab.offset(t) + i).begin());
  }
  for (const auto& [key, rels] : vocab.block_relations()) {
    const auto& ck = fs.relation.at(key);
    for (std::size_t s = 0; s < rels.size(); ++s)
      std::copy_n(ck.row(s).begin(), f, c.row(rels[s]).begin());
  }
  return {std::move(a), std::move(c)};
}

/// Global CPD of the symmetrized tensor, scattered into a coupled factor set.
inline FactorSet spectral_init(const std::vector<Edge>& edges, const TypedVocabulary& vocab,
                               std::size_t rank, std::uint64_t seed,
                               SemiSymmetricCpd* details = nullptr,
                               const SpectralOptions& opts = {}) {
  const GlobalTensor y = build_symmetrized(edges, vocab);
  auto cpd = semi_symmetric_cpd(y, rank, seed, opts);
  FactorSet fs = scatter(cpd.a, cpd.c, vocab);
  if (details) *details = std::move(cpd);
  return fs;
}

}  // namespace texgraph
