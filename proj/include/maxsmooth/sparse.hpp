#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <span>
#include <vector>

#include "maxsmooth/rng.hpp"

namespace maxsmooth {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Symmetric sparse matrix. Both triangles are stored so that products with
// rectangular design matrices stay plain sparse algebra; the constructors
// guarantee symmetry and a compressed, duplicate-free layout.
class SparseSymMatrix {
 public:
  // Empty (dim 0) placeholder; every factory below returns dim >= 1.
  SparseSymMatrix() = default;

  // Triplets describe the upper triangle: an entry (r, c) with r > c is read
  // as (c, r). Duplicates are summed.
  static SparseSymMatrix from_triplets(Index dim, std::span<const Triplet> upper);
  static SparseSymMatrix from_dense(const Mat& m);
  // Takes a fully stored matrix; throws unless it is symmetric.
  static SparseSymMatrix from_full(SpMat m);
  static SparseSymMatrix identity(Index dim, double scale = 1.0);
  static SparseSymMatrix diagonal(const Vec& d);

  Index dim() const { return m_.rows(); }
  Index nonzeros() const { return m_.nonZeros(); }
  double coeff(Index i, Index j) const { return m_.coeff(i, j); }
  const SpMat& matrix() const { return m_; }
  Mat to_dense() const { return Mat(m_); }

  SparseSymMatrix scaled(double s) const;
  SparseSymMatrix operator+(const SparseSymMatrix& other) const;
  Vec operator*(const Vec& x) const;
  double quad_form(const Vec& x) const;

 private:
  explicit SparseSymMatrix(SpMat m) : m_(std::move(m)) {}
  SpMat m_;
};

SparseSymMatrix kron(const SparseSymMatrix& a, const SparseSymMatrix& b);
SparseSymMatrix bdiag(std::span<const SparseSymMatrix> blocks);
// Zᵀ Q Z for a rectangular Z.
SparseSymMatrix congruence(const SpMat& z, const SparseSymMatrix& q);
// Symmetric permutation: result(perm[i], perm[j]) = q(i, j).
SparseSymMatrix permute(const SparseSymMatrix& q, std::span<const Index> perm);

enum class Ordering { Amd, Natural };

// Sparse Cholesky factor P Q Pᵀ = L Lᵀ. The permutation is internal: every
// public operation takes and returns vectors in the original index order.
class CholFactor {
 public:
  using Permutation = Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>;

  Index dim() const { return dim_; }
  Vec solve(const Vec& b) const;
  double logdet() const { return logdet_; }
  // One draw from N(Q⁻¹ b, Q⁻¹).
  Vec sample_canonical(const Vec& b, Rng& rng) const;
  // Pᵀ L⁻ᵀ z; maps standard normals to N(0, Q⁻¹).
  Vec whiten_inverse(const Vec& z) const;

  // L in permuted coordinates, and the permutation as an index vector p
  // with (P x)[i] = x[p[i]].
  Mat lower_dense() const;
  Eigen::VectorXi permutation_indices() const;

 private:
  friend CholFactor factorize_with(const SparseSymMatrix&, const Permutation&);
  using Llt = Eigen::SimplicialLLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>>;
  Index dim_ = 0;
  Permutation p_;
  Permutation pinv_;
  std::shared_ptr<const Llt> llt_;
  double logdet_ = 0.0;
};

CholFactor chol(const SparseSymMatrix& q, Ordering ordering = Ordering::Amd);

struct JitteredChol {
  CholFactor factor;
  double jitter = 0.0;  // δ added to the diagonal; 0 when none was needed
};
// Retries with Q + δI for δ = 1e-10, 1e-9, ..., 1e-6. Only for models that
// are semi-definite by construction.
JitteredChol chol_jitter(const SparseSymMatrix& q);

Vec solve(const CholFactor& f, const Vec& b);
double logdet(const CholFactor& f);
Vec sample_canonical(const CholFactor& f, const Vec& b, Rng& rng);

// Fill-reducing ordering computed once for a fixed sparsity pattern, so that
// repeated factorizations (one per hyperparameter value) skip the analysis.
class CholeskyPattern {
 public:
  explicit CholeskyPattern(const SparseSymMatrix& q, Ordering ordering = Ordering::Amd);
  CholFactor factorize(const SparseSymMatrix& q) const;

 private:
  CholFactor::Permutation p_;
  Index dim_;
};

Vec standard_normal_vector(Index n, Rng& rng);

}  // namespace maxsmooth
