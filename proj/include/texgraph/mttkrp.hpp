#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "texgraph/block_tensor.hpp"
#include "texgraph/dense_matrix.hpp"
#include "texgraph/parallel.hpp"

// Sparse MTTKRP kernels. The Khatri-Rao products (C ⊙ A) are never formed:
// each kernel walks the stored nonzeros once and does O(F) work per nonzero.
// Every output column is produced by exactly one worker with a fixed
// summation order, so results are bit-identical for any thread count.

namespace texgraph {

namespace detail {

inline void check_rank(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (a.cols() != b.cols())
    throw ContractError(std::string(op) + ": factor ranks differ (" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.cols()) + ")");
}

inline void check_rows(std::size_t got, std::size_t want, const char* op, const char* what) {
  if (got != want)
    throw ContractError(std::string(op) + ": " + what + " has " + std::to_string(got) +
                        " rows, expected " + std::to_string(want));
}

// out(:, o) += Σ_k C(k,:) ∗ Σ_{p ∈ outer o of slab k} x_p · other(idx_p, :)
template <typename SlabAccess>
void mttkrp_outer(const SparseBlockTensor& x, std::size_t outer_dim, SlabAccess slab_of,
                  const DenseMatrix& other, const DenseMatrix& c, DenseMatrix& out) {
  const std::size_t f = c.cols();
  const std::size_t slabs = x.slab_count();
  parallel_for(outer_dim, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> total(f);
    std::vector<double> partial(f);
    for (std::size_t o = lo; o < hi; ++o) {
      std::fill(total.begin(), total.end(), 0.0);
      bool touched = false;
      for (std::size_t k = 0; k < slabs; ++k) {
        const CompressedSlab& s = slab_of(k);
        const auto begin = s.ptr[o];
        const auto end = s.ptr[o + 1];
        if (begin == end) continue;
        touched = true;
        std::fill(partial.begin(), partial.end(), 0.0);
        for (auto p = begin; p < end; ++p) {
          const double v = s.value(p);
          const double* a = other.data() + std::size_t(s.idx[p]) * f;
          for (std::size_t q = 0; q < f; ++q) partial[q] += v * a[q];
        }
        const double* ck = c.data() + k * f;
        for (std::size_t q = 0; q < f; ++q) total[q] += ck[q] * partial[q];
      }
      if (!touched) continue;
      for (std::size_t q = 0; q < f; ++q) out(q, o) += total[q];
    }
  });
}

}  // namespace detail

/// Accumulates (C ⊙ A_other)ᵀ X⁽¹⁾ into `out` (F × rows). A_other indexes
/// the block's second mode.
inline void mttkrp_mode1_into(const SparseBlockTensor& x, const DenseMatrix& a_other,
                              const DenseMatrix& c, DenseMatrix& out) {
  detail::check_rank(a_other, c, "mttkrp_mode1");
  detail::check_rows(a_other.rows(), x.cols(), "mttkrp_mode1", "A_other");
  detail::check_rows(c.rows(), x.slab_count(), "mttkrp_mode1", "C");
  detail::require(out.rows() == c.cols() && out.cols() == x.rows(), "mttkrp_mode1: output shape");
  detail::mttkrp_outer(
      x, x.rows(), [&](std::size_t k) -> const CompressedSlab& { return x.slab_rows(k); }, a_other,
      c, out);
}

inline DenseMatrix mttkrp_mode1(const SparseBlockTensor& x, const DenseMatrix& a_other,
                                const DenseMatrix& c) {
  DenseMatrix out(c.cols(), x.rows());
  mttkrp_mode1_into(x, a_other, c, out);
  return out;
}

/// Accumulates (C ⊙ A_other)ᵀ X⁽²⁾ into `out` (F × cols). A_other indexes
/// the block's first mode; slabs are read through their column form.
inline void mttkrp_mode2_into(const SparseBlockTensor& x, const DenseMatrix& a_other,
                              const DenseMatrix& c, DenseMatrix& out) {
  detail::check_rank(a_other, c, "mttkrp_mode2");
  detail::check_rows(a_other.rows(), x.rows(), "mttkrp_mode2", "A_other");
  detail::check_rows(c.rows(), x.slab_count(), "mttkrp_mode2", "C");
  detail::require(out.rows() == c.cols() && out.cols() == x.cols(), "mttkrp_mode2: output shape");
  detail::mttkrp_outer(
      x, x.cols(), [&](std::size_t k) -> const CompressedSlab& { return x.slab_cols(k); }, a_other,
      c, out);
}

inline DenseMatrix mttkrp_mode2(const SparseBlockTensor& x, const DenseMatrix& a_other,
                                const DenseMatrix& c) {
  DenseMatrix out(c.cols(), x.cols());
  mttkrp_mode2_into(x, a_other, c, out);
  return out;
}

/// (A_n ⊙ A_m)ᵀ X⁽³⁾ as an F × K matrix: column k sums A_m(i,:) ∗ A_n(j,:)
/// over the nonzeros of slab k.
inline DenseMatrix mttkrp_mode3(const SparseBlockTensor& x, const DenseMatrix& a_m,
                                const DenseMatrix& a_n) {
  detail::check_rank(a_m, a_n, "mttkrp_mode3");
  detail::check_rows(a_m.rows(), x.rows(), "mttkrp_mode3", "A_m");
  detail::check_rows(a_n.rows(), x.cols(), "mttkrp_mode3", "A_n");
  const std::size_t f = a_m.cols();
  const std::size_t slabs = x.slab_count();

  // Row chunks depend only on the row count, so the reduction order is
  // independent of threading; at most kMaxChunks partials per slab.
  constexpr std::size_t kMinChunk = 4096;
  constexpr std::size_t kMaxChunks = 64;
  const std::size_t chunk = std::max(kMinChunk, (x.rows() + kMaxChunks - 1) / kMaxChunks);
  const std::size_t chunks = std::max<std::size_t>(1, (x.rows() + chunk - 1) / chunk);
  const std::size_t tasks = slabs * chunks;
  std::vector<double> partial(tasks * f, 0.0);
  parallel_for(
      tasks,
      [&](std::size_t lo, std::size_t hi) {
        for (std::size_t t = lo; t < hi; ++t) {
          const std::size_t k = t / chunks;
          const std::size_t row_lo = (t % chunks) * chunk;
          const std::size_t row_hi = std::min(x.rows(), row_lo + chunk);
          const CompressedSlab& s = x.slab_rows(k);
          double* acc = partial.data() + t * f;
          for (std::size_t i = row_lo; i < row_hi; ++i) {
            const double* am = a_m.data() + i * f;
            for (auto p = s.ptr[i]; p < s.ptr[i + 1]; ++p) {
              const double v = s.value(p);
              const double* an = a_n.data() + std::size_t(s.idx[p]) * f;
              for (std::size_t q = 0; q < f; ++q) acc[q] += v * am[q] * an[q];
            }
          }
        }
      },
      1);
  DenseMatrix out(f, slabs);
  for (std::size_t t = 0; t < tasks; ++t) {
    const std::size_t k = t / chunks;
    const double* acc = partial.data() + t * f;
    for (std::size_t q = 0; q < f; ++q) out(q, k) += acc[q];
  }
  return out;
}

/// ⟨X, ⟦A_m, A_n, C⟧⟩ evaluated over the nonzeros of X.
inline double sparse_inner(const SparseBlockTensor& x, const DenseMatrix& a_m,
                           const DenseMatrix& a_n, const DenseMatrix& c) {
  detail::check_rank(a_m, c, "sparse_inner");
  detail::check_rows(c.rows(), x.slab_count(), "sparse_inner", "C");
  const DenseMatrix m3 = mttkrp_mode3(x, a_m, a_n);
  double s = 0.0;
  for (std::size_t k = 0; k < c.rows(); ++k)
    for (std::size_t q = 0; q < c.cols(); ++q) s += c(k, q) * m3(q, k);
  return s;
}

/// ‖⟦A_m, A_n, C⟧‖²_F = 1ᵀ(A_mᵀA_m ∗ A_nᵀA_n ∗ CᵀC)1, from precomputed Grams.
inline double model_norm_sq(const DenseMatrix& gram_m, const DenseMatrix& gram_n,
                            const DenseMatrix& gram_c) {
  double s = 0.0;
  for (std::size_t i = 0; i < gram_m.size(); ++i)
    s += gram_m.data()[i] * gram_n.data()[i] * gram_c.data()[i];
  return s;
}

}  // namespace texgraph
