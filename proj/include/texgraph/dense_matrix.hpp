#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "texgraph/errors.hpp"

namespace texgraph {

/// Row-major dense matrix of doubles. Factor matrices, Grams and MTTKRP
/// outputs all use this type.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    detail::require(values_.size() == rows_ * cols_,
                    "DenseMatrix: value count does not match shape");
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline RowMajorMap as_eigen(DenseMatrix& m) {
  return {m.data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())};
}
inline ConstRowMajorMap as_eigen(const DenseMatrix& m) {
  return {m.data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())};
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// AᵀA. Accumulated row by row so the result is independent of threading.
inline DenseMatrix gram(const DenseMatrix& a) {
  const std::size_t f = a.cols();
  DenseMatrix g(f, f);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t p = 0; p < f; ++p) {
      const double rp = r[p];
      if (rp == 0.0) continue;
      for (std::size_t q = p; q < f; ++q) g(p, q) += rp * r[q];
    }
  }
  for (std::size_t p = 0; p < f; ++p)
    for (std::size_t q = 0; q < p; ++q) g(p, q) = g(q, p);
  return g;
}

inline DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shape mismatch");
  DenseMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
  return c;
}

inline void add_into(DenseMatrix& acc, const DenseMatrix& b, double scale = 1.0) {
  detail::require(acc.rows() == b.rows() && acc.cols() == b.cols(), "add_into: shape mismatch");
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += scale * b.data()[i];
}

inline double sum_all(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

inline double frobenius_sq(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

inline bool all_finite(const DenseMatrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

/// Outcome of a ridge-regularized SPD solve.
struct SpdSolveInfo {
  double ridge_used = 0.0;
  double rcond = 0.0;
  int escalations = 0;
};

/// Solves (H + ridge·I) Xᵀ = rhs for X, where rhs is F×L and X is L×F.
/// On a failed or badly conditioned factorization the ridge is escalated
/// ×10 (starting at 1e-8) up to 1e-2; past that a NumericalError is thrown
/// carrying `what` and the reciprocal condition estimate.
inline DenseMatrix spd_solve_transposed(const DenseMatrix& h, double ridge, const DenseMatrix& rhs,
                                        const std::string& what, SpdSolveInfo* info = nullptr) {
  const std::size_t f = h.rows();
  detail::require(h.cols() == f && rhs.rows() == f, "spd_solve: shape mismatch");
  constexpr double kMaxRidge = 1e-2;
  constexpr double kMinRcond = 1e-13;

  Eigen::MatrixXd base = as_eigen(h);
  double lambda = ridge;
  int escalations = 0;
  for (;;) {
    Eigen::MatrixXd reg = base;
    reg.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    const double rc = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    if (llt.info() == Eigen::Success && rc > kMinRcond && std::isfinite(rc)) {
      Eigen::MatrixXd sol = llt.solve(Eigen::MatrixXd(as_eigen(rhs)));
      DenseMatrix out(rhs.cols(), f);
      for (std::size_t i = 0; i < rhs.cols(); ++i)
        for (std::size_t p = 0; p < f; ++p) out(i, p) = sol(Eigen::Index(p), Eigen::Index(i));
      if (info) *info = {lambda, rc, escalations};
      return out;
    }
    const double next = std::max(lambda * 10.0, 1e-8);
    if (next > kMaxRidge * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg << what << ": normal equations singular after ridge escalation to " << lambda
          << " (rcond estimate " << rc << ")";
      throw NumericalError(msg.str());
    }
    lambda = next;
    ++escalations;
  }
}

}  // namespace texgraph
