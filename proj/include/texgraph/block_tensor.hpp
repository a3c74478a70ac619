#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "texgraph/errors.hpp"
#include "texgraph/vocabulary.hpp"

namespace texgraph {

/// One stored entry (i, j, k) of a third-order tensor.
struct TensorEntry {
  Index i = 0;
  Index j = 0;
  Index k = 0;
  double value = 1.0;
};

/// A sparse matrix in compressed form. `ptr` has one entry per outer index
/// plus one; `idx` holds inner indices sorted within each outer range.
/// `val` is empty for binary (all-ones) data.
struct CompressedSlab {
  std::vector<std::uint32_t> ptr;
  std::vector<Index> idx;
  std::vector<double> val;

  std::size_t nnz() const noexcept { return idx.size(); }
  double value(std::size_t p) const noexcept { return val.empty() ? 1.0 : val[p]; }
  bool operator==(const CompressedSlab&) const = default;
};

/// Third-order tensor for one entity-type pair, stored slab by slab. Every
/// frontal slab keeps a row-compressed copy (for X^kᵀ products) and a
/// column-compressed copy (for X^k products).
///
/// Tensors built from triplets are binary. Real-valued tensors are accepted
/// for synthetic instances where the data is an exact low-rank model.
class SparseBlockTensor {
 public:
  SparseBlockTensor() = default;

  /// Builds the tensor from an unordered entry list. Binary tensors collapse
  /// duplicate coordinates; valued tensors reject them. Diagonal blocks
  /// (key.m == key.n) must have symmetric slabs.
  static SparseBlockTensor from_entries(BlockKey key, std::size_t rows, std::size_t cols,
                                        std::size_t slabs, std::vector<TensorEntry> entries,
                                        bool binary = true) {
    SparseBlockTensor t;
    t.key_ = key;
    t.rows_ = rows;
    t.cols_ = cols;
    t.binary_ = binary;
    t.by_row_.resize(slabs);
    t.by_col_.resize(slabs);
    for (const auto& e : entries) {
      if (e.i >= rows || e.j >= cols || e.k >= slabs)
        throw ContractError("SparseBlockTensor: entry (" + std::to_string(e.i) + "," +
                            std::to_string(e.j) + "," + std::to_string(e.k) +
                            ") outside dims");
    }
    std::sort(entries.begin(), entries.end(), [](const TensorEntry& a, const TensorEntry& b) {
      if (a.k != b.k) return a.k < b.k;
      if (a.i != b.i) return a.i < b.i;
      return a.j < b.j;
    });
    std::size_t begin = 0;
    for (std::size_t k = 0; k < slabs; ++k) {
      std::size_t end = begin;
      while (end < entries.size() && entries[end].k == k) ++end;
      t.build_slab(k, entries.data() + begin, entries.data() + end);
      begin = end;
    }
    if (key.diagonal()) {
      detail::require(rows == cols, "SparseBlockTensor: diagonal block must be square");
      for (std::size_t k = 0; k < slabs; ++k)
        if (!(t.by_row_[k] == t.by_col_[k]))
          throw ContractError("SparseBlockTensor: diagonal block slab " + std::to_string(k) +
                              " is not symmetric");
    }
    return t;
  }

  BlockKey key() const noexcept { return key_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t slab_count() const noexcept { return by_row_.size(); }
  bool binary() const noexcept { return binary_; }

  const CompressedSlab& slab_rows(std::size_t k) const { return by_row_.at(k); }
  const CompressedSlab& slab_cols(std::size_t k) const { return by_col_.at(k); }

  std::size_t nnz() const noexcept {
    std::size_t n = 0;
    for (const auto& s : by_row_) n += s.nnz();
    return n;
  }
  std::size_t slab_nnz(std::size_t k) const { return by_row_.at(k).nnz(); }

  /// nnz / (rows · cols · slabs).
  double sparsity() const noexcept {
    const double cells = double(rows_) * double(cols_) * double(slab_count());
    return cells == 0.0 ? 0.0 : double(nnz()) / cells;
  }

  /// Squared Frobenius norm.
  double norm_sq() const noexcept {
    if (binary_) return double(nnz());
    double s = 0.0;
    for (const auto& slab : by_row_)
      for (double v : slab.val) s += v * v;
    return s;
  }

  /// Entries in (k, i, j) order.
  std::vector<TensorEntry> entries() const {
    std::vector<TensorEntry> out;
    out.reserve(nnz());
    for (Index k = 0; k < by_row_.size(); ++k) {
      const auto& s = by_row_[k];
      for (Index i = 0; i < rows_; ++i)
        for (auto p = s.ptr[i]; p < s.ptr[i + 1]; ++p) out.push_back({i, s.idx[p], k, s.value(p)});
    }
    return out;
  }

  /// For diagonal blocks built from triplets: the edges before
  /// symmetrization, as (head, tail, slab) in deduplicated input order.
  const std::vector<TensorEntry>& directed_edges() const noexcept { return directed_; }
  void set_directed_edges(std::vector<TensorEntry> e) { directed_ = std::move(e); }

  bool operator==(const SparseBlockTensor& o) const {
    return key_ == o.key_ && rows_ == o.rows_ && cols_ == o.cols_ && binary_ == o.binary_ &&
           by_row_ == o.by_row_ && by_col_ == o.by_col_;
  }

 private:
  void build_slab(std::size_t k, const TensorEntry* first, const TensorEntry* last) {
    const std::size_t count = std::size_t(last - first);
    if (count > std::numeric_limits<std::uint32_t>::max())
      throw ContractError("SparseBlockTensor: slab exceeds 2^32 entries");
    auto& r = by_row_[k];
    r.ptr.assign(rows_ + 1, 0);
    r.idx.reserve(count);
    if (!binary_) r.val.reserve(count);
    for (auto* e = first; e != last; ++e) {
      if (e != first && e->i == (e - 1)->i && e->j == (e - 1)->j) {
        if (!binary_)
          throw ContractError("SparseBlockTensor: duplicate entry in valued tensor");
        continue;
      }
      r.ptr[e->i + 1]++;
      r.idx.push_back(e->j);
      if (!binary_) r.val.push_back(e->value);
    }
    for (std::size_t i = 0; i < rows_; ++i) r.ptr[i + 1] += r.ptr[i];

    auto& c = by_col_[k];
    c.ptr.assign(cols_ + 1, 0);
    c.idx.resize(r.nnz());
    if (!binary_) c.val.resize(r.nnz());
    for (Index j : r.idx) c.ptr[j + 1]++;
    for (std::size_t j = 0; j < cols_; ++j) c.ptr[j + 1] += c.ptr[j];
    std::vector<std::uint32_t> cursor(c.ptr.begin(), c.ptr.end() - 1);
    for (Index i = 0; i < rows_; ++i) {
      for (auto p = r.ptr[i]; p < r.ptr[i + 1]; ++p) {
        const auto dst = cursor[r.idx[p]]++;
        c.idx[dst] = i;
        if (!binary_) c.val[dst] = r.val[p];
      }
    }
  }

  BlockKey key_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  bool binary_ = true;
  std::vector<CompressedSlab> by_row_;
  std::vector<CompressedSlab> by_col_;
  std::vector<TensorEntry> directed_;
};

/// The coupled data set: blocks in lexicographic key order.
using BlockSet = std::map<BlockKey, SparseBlockTensor>;

/// Materializes one tensor per block of the vocabulary. Edges whose head
/// type is the block's second type are stored transposed; edges in diagonal
/// blocks are inserted in both orientations; duplicates collapse.
inline BlockSet build_blocks(const std::vector<Edge>& edges, const TypedVocabulary& vocab) {
  std::map<BlockKey, std::vector<TensorEntry>> entries;
  std::map<BlockKey, std::vector<TensorEntry>> directed;
  for (const auto& [key, rels] : vocab.block_relations()) {
    entries[key];
    if (key.diagonal()) directed[key];
  }
  for (const auto& e : edges) {
    if (e.relation >= vocab.relation_count())
      throw ContractError("build_blocks: edge relation out of range");
    const auto& rel = vocab.relation_info(e.relation);
    const auto key = rel.block;
    if (e.head >= vocab.type_size(rel.head_type) || e.tail >= vocab.type_size(rel.tail_type))
      throw ContractError("build_blocks: edge entity out of range for relation '" + rel.name + "'");
    auto& bucket = entries[key];
    if (key.diagonal()) {
      bucket.push_back({e.head, e.tail, rel.slab});
      if (e.head != e.tail) bucket.push_back({e.tail, e.head, rel.slab});
      directed[key].push_back({e.head, e.tail, rel.slab});
    } else if (rel.head_type == key.m) {
      bucket.push_back({e.head, e.tail, rel.slab});
    } else {
      bucket.push_back({e.tail, e.head, rel.slab});
    }
  }
  BlockSet blocks;
  for (auto& [key, list] : entries) {
    auto t = SparseBlockTensor::from_entries(key, vocab.type_size(key.m), vocab.type_size(key.n),
                                             vocab.slab_count(key), std::move(list));
    if (key.diagonal()) {
      auto& d = directed[key];
      std::vector<TensorEntry> unique;
      std::vector<std::size_t> order(d.size());
      for (std::size_t p = 0; p < d.size(); ++p) order[p] = p;
      auto less = [&](std::size_t a, std::size_t b) {
        const auto &x = d[a], &y = d[b];
        return std::tie(x.k, x.i, x.j) < std::tie(y.k, y.i, y.j);
      };
      std::stable_sort(order.begin(), order.end(), less);
      std::vector<char> keep(d.size(), 1);
      for (std::size_t p = 1; p < order.size(); ++p)
        if (!less(order[p - 1], order[p])) keep[order[p]] = 0;
      for (std::size_t p = 0; p < d.size(); ++p)
        if (keep[p]) unique.push_back(d[p]);
      t.set_directed_edges(std::move(unique));
    }
    blocks.emplace(key, std::move(t));
  }
  return blocks;
}

/// Inverse of build_blocks: recovers the directed edge set, undoing the
/// transposition of reversed relations and, through the recorded directed
/// edges, the symmetrization of diagonal blocks. Output is sorted.
inline std::vector<Edge> export_edges(const BlockSet& blocks, const TypedVocabulary& vocab) {
  std::vector<Edge> out;
  for (const auto& [key, t] : blocks) {
    const auto& slab_rel = vocab.block_relations().at(key);
    if (key.diagonal()) {
      for (const auto& e : t.directed_edges()) out.push_back({e.i, slab_rel.at(e.k), e.j});
      continue;
    }
    for (const auto& e : t.entries()) {
      const Index r = slab_rel.at(e.k);
      if (vocab.relation_info(r).head_type == key.m)
        out.push_back({e.i, r, e.j});
      else
        out.push_back({e.j, r, e.i});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace texgraph
