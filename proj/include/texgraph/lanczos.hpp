#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "texgraph/dense_matrix.hpp"
#include "texgraph/errors.hpp"

namespace texgraph {

struct LanczosOptions {
  /// Krylov basis size per restart cycle; 0 picks max(2k + 1, k + 20).
  std::size_t basis_size = 0;
  /// Ritz residual bound, relative to the largest Ritz value magnitude.
  double tolerance = 1e-6;
  std::size_t max_restarts = 300;
  std::uint64_t seed = 0;
};

struct LanczosResult {
  std::vector<double> values;     ///< sorted by decreasing magnitude
  DenseMatrix vectors;            ///< n × k, orthonormal columns
  std::vector<double> residuals;  ///< ‖A u − θ u‖ per pair
  std::size_t restarts = 0;
  std::size_t matvecs = 0;
  bool converged = false;
};

/// Thick-restart Lanczos for the k eigenpairs of largest magnitude of a
/// symmetric operator. The operator is only applied as `op(x, y)`, writing
/// y = A x. Full reorthogonalization keeps the basis orthonormal; the
/// projected matrix is accumulated explicitly, so it stays exact across
/// restarts.
template <typename MatVec>
LanczosResult lanczos_largest(std::size_t n, std::size_t k, MatVec&& op,
                              const LanczosOptions& opts = {}) {
  detail::require(k >= 1 && k <= n, "lanczos: need 1 <= k <= n");
  std::size_t m = opts.basis_size ? opts.basis_size : std::max(2 * k + 1, k + 20);
  m = std::min(std::max(m, k + 1), n);

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> basis;
  basis.reserve(m + 1);
  Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(Eigen::Index(m), Eigen::Index(m));

  auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  };
  auto normalize = [&](std::vector<double>& v) {
    const double nv = std::sqrt(dot(v, v));
    for (double& x : v) x /= nv;
    return nv;
  };
  // Two Gram-Schmidt passes against the first `count` basis vectors.
  auto orthogonalize = [&](std::vector<double>& w, std::size_t count, std::vector<double>* coef) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < count; ++i) {
        const double h = dot(basis[i], w);
        if (coef) (*coef)[i] += h;
        for (std::size_t r = 0; r < n; ++r) w[r] -= h * basis[i][r];
      }
    }
  };
  auto random_orthogonal = [&](std::size_t count) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      std::vector<double> v(n);
      for (double& x : v) x = normal(rng);
      orthogonalize(v, count, nullptr);
      if (std::sqrt(dot(v, v)) > 1e-8) {
        normalize(v);
        return v;
      }
    }
    throw NumericalError("lanczos: could not extend the Krylov basis");
  };

  LanczosResult result;
  basis.push_back(random_orthogonal(0));
  std::size_t kept = 0;
  std::vector<double> w(n);
  std::vector<double> coef;

  for (std::size_t restart = 0;; ++restart) {
    double beta_last = 0.0;
    std::vector<double> residual_dir;
    for (std::size_t j = kept; j < m; ++j) {
      op(std::span<const double>(basis[j]), std::span<double>(w));
      ++result.matvecs;
      const double wnorm = std::sqrt(dot(w, w));
      coef.assign(j + 1, 0.0);
      orthogonalize(w, j + 1, &coef);
      for (std::size_t i = 0; i <= j; ++i) {
        proj(Eigen::Index(i), Eigen::Index(j)) = coef[i];
        proj(Eigen::Index(j), Eigen::Index(i)) = coef[i];
      }
      const double beta = std::sqrt(dot(w, w));
      const bool breakdown = beta <= 1e-10 * wnorm || beta == 0.0;
      if (j + 1 < m) {
        if (breakdown) {
          basis.push_back(random_orthogonal(j + 1));
        } else {
          for (double& x : w) x /= beta;
          basis.push_back(w);
        }
      } else {
        beta_last = breakdown ? 0.0 : beta;
        if (!breakdown) {
          residual_dir = w;
          for (double& x : residual_dir) x /= beta;
        }
      }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(proj);
    if (eig.info() != Eigen::Success) throw NumericalError("lanczos: projected eigensolve failed");
    const auto& theta = eig.eigenvalues();
    const auto& y = eig.eigenvectors();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(theta(Eigen::Index(a))) > std::abs(theta(Eigen::Index(b)));
    });
    const double scale = std::max(std::abs(theta(Eigen::Index(order[0]))), 1e-300);
    bool converged = true;
    std::vector<double> residuals(k);
    for (std::size_t q = 0; q < k; ++q) {
      residuals[q] = beta_last * std::abs(y(Eigen::Index(m - 1), Eigen::Index(order[q])));
      converged = converged && residuals[q] <= opts.tolerance * scale;
    }

    const bool last = converged || restart >= opts.max_restarts || m == n;
    const std::size_t keep =
        last ? k : std::min(m - 1, k + (m - k) / 2);
    std::vector<std::vector<double>> ritz(keep, std::vector<double>(n, 0.0));
    for (std::size_t q = 0; q < keep; ++q) {
      for (std::size_t j = 0; j < m; ++j) {
        const double c = y(Eigen::Index(j), Eigen::Index(order[q]));
        if (c == 0.0) continue;
        for (std::size_t r = 0; r < n; ++r) ritz[q][r] += c * basis[j][r];
      }
    }

    if (last) {
      result.converged = converged || m == n;
      result.restarts = restart;
      result.values.resize(k);
      result.vectors = DenseMatrix(n, k);
      for (std::size_t q = 0; q < k; ++q) {
        result.values[q] = theta(Eigen::Index(order[q]));
        for (std::size_t r = 0; r < n; ++r) result.vectors(r, q) = ritz[q][r];
      }
      result.residuals = std::move(residuals);
      return result;
    }

    basis = std::move(ritz);
    proj.setZero();
    for (std::size_t q = 0; q < keep; ++q)
      proj(Eigen::Index(q), Eigen::Index(q)) = theta(Eigen::Index(order[q]));
    if (residual_dir.empty()) {
      basis.push_back(random_orthogonal(keep));
    } else {
      // Re-orthogonalize against the compressed basis to absorb rounding.
      orthogonalize(residual_dir, keep, nullptr);
      normalize(residual_dir);
      basis.push_back(std::move(residual_dir));
    }
    kept = keep;
  }
}

}  // namespace texgraph
