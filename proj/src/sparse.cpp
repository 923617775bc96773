#include "maxsmooth/sparse.hpp"

#include <Eigen/OrderingMethods>
#include <cmath>
#include <random>
#include <string>

#include "maxsmooth/error.hpp"

namespace maxsmooth {

namespace {

void require_square_symmetric(const SpMat& m) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw InvalidArgument("symmetric matrix must be square with dim >= 1");
  }
  const SpMat diff = m - SpMat(m.transpose());
  for (Index k = 0; k < diff.outerSize(); ++k) {
    for (SpMat::InnerIterator it(diff, k); it; ++it) {
      const double scale = std::max(1.0, std::abs(m.coeff(it.row(), it.col())));
      if (std::abs(it.value()) > 1e-12 * scale) {
        throw InvalidArgument("matrix is not symmetric at (" + std::to_string(it.row()) +
                              "," + std::to_string(it.col()) + ")");
      }
    }
  }
}

}  // namespace

SparseSymMatrix SparseSymMatrix::from_triplets(Index dim, std::span<const Triplet> upper) {
  if (dim < 1) throw InvalidArgument("dim must be >= 1");
  std::vector<Triplet> full;
  full.reserve(2 * upper.size());
  for (const auto& t : upper) {
    if (t.row() < 0 || t.col() < 0 || t.row() >= dim || t.col() >= dim) {
      throw InvalidArgument("triplet index out of range");
    }
    full.push_back(t);
    if (t.row() != t.col()) full.emplace_back(t.col(), t.row(), t.value());
  }
  SpMat m(dim, dim);
  m.setFromTriplets(full.begin(), full.end());
  m.makeCompressed();
  return SparseSymMatrix(std::move(m));
}

SparseSymMatrix SparseSymMatrix::from_dense(const Mat& m) {
  SpMat s = m.sparseView();
  s.makeCompressed();
  return from_full(std::move(s));
}

SparseSymMatrix SparseSymMatrix::from_full(SpMat m) {
  require_square_symmetric(m);
  m.makeCompressed();
  return SparseSymMatrix(std::move(m));
}

SparseSymMatrix SparseSymMatrix::identity(Index dim, double scale) {
  if (dim < 1) throw InvalidArgument("dim must be >= 1");
  SpMat m(dim, dim);
  m.reserve(Eigen::VectorXi::Constant(dim, 1));
  for (Index i = 0; i < dim; ++i) m.insert(i, i) = scale;
  m.makeCompressed();
  return SparseSymMatrix(std::move(m));
}

SparseSymMatrix SparseSymMatrix::diagonal(const Vec& d) {
  if (d.size() < 1) throw InvalidArgument("dim must be >= 1");
  SpMat m(d.size(), d.size());
  m.reserve(Eigen::VectorXi::Constant(d.size(), 1));
  for (Index i = 0; i < d.size(); ++i) m.insert(i, i) = d[i];
  m.makeCompressed();
  return SparseSymMatrix(std::move(m));
}

SparseSymMatrix SparseSymMatrix::scaled(double s) const { return SparseSymMatrix(SpMat(s * m_)); }

SparseSymMatrix SparseSymMatrix::operator+(const SparseSymMatrix& other) const {
  if (other.dim() != dim()) throw DimensionMismatch("sparse sum: dimension mismatch");
  SpMat s = m_ + other.m_;
  s.makeCompressed();
  return SparseSymMatrix(std::move(s));
}

Vec SparseSymMatrix::operator*(const Vec& x) const {
  if (x.size() != dim()) throw DimensionMismatch("sparse product: dimension mismatch");
  return m_ * x;
}

double SparseSymMatrix::quad_form(const Vec& x) const { return x.dot((*this) * x); }

SparseSymMatrix kron(const SparseSymMatrix& a, const SparseSymMatrix& b) {
  const Index nb = b.dim();
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(a.nonzeros() * b.nonzeros()));
  const SpMat& am = a.matrix();
  const SpMat& bm = b.matrix();
  for (Index ka = 0; ka < am.outerSize(); ++ka) {
    for (SpMat::InnerIterator ia(am, ka); ia; ++ia) {
      for (Index kb = 0; kb < bm.outerSize(); ++kb) {
        for (SpMat::InnerIterator ib(bm, kb); ib; ++ib) {
          t.emplace_back(ia.row() * nb + ib.row(), ia.col() * nb + ib.col(),
                         ia.value() * ib.value());
        }
      }
    }
  }
  SpMat m(a.dim() * nb, a.dim() * nb);
  m.setFromTriplets(t.begin(), t.end());
  return SparseSymMatrix::from_full(std::move(m));
}

SparseSymMatrix bdiag(std::span<const SparseSymMatrix> blocks) {
  if (blocks.empty()) throw InvalidArgument("bdiag: empty block list");
  Index total = 0;
  Index nnz = 0;
  for (const auto& b : blocks) {
    total += b.dim();
    nnz += b.nonzeros();
  }
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(nnz));
  Index offset = 0;
  for (const auto& b : blocks) {
    const SpMat& m = b.matrix();
    for (Index k = 0; k < m.outerSize(); ++k) {
      for (SpMat::InnerIterator it(m, k); it; ++it) {
        t.emplace_back(offset + it.row(), offset + it.col(), it.value());
      }
    }
    offset += b.dim();
  }
  SpMat m(total, total);
  m.setFromTriplets(t.begin(), t.end());
  return SparseSymMatrix::from_full(std::move(m));
}

SparseSymMatrix congruence(const SpMat& z, const SparseSymMatrix& q) {
  if (z.rows() != q.dim()) throw DimensionMismatch("congruence: rows(Z) != dim(Q)");
  SpMat r = SpMat(z.transpose()) * (q.matrix() * z);
  // Round-off can break exact symmetry in the product; average the triangles.
  SpMat sym = 0.5 * (r + SpMat(r.transpose()));
  return SparseSymMatrix::from_full(std::move(sym));
}

SparseSymMatrix permute(const SparseSymMatrix& q, std::span<const Index> perm) {
  if (static_cast<Index>(perm.size()) != q.dim()) {
    throw DimensionMismatch("permute: permutation length != dim");
  }
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(q.nonzeros()));
  const SpMat& m = q.matrix();
  for (Index k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      t.emplace_back(perm[it.row()], perm[it.col()], it.value());
    }
  }
  SpMat out(q.dim(), q.dim());
  out.setFromTriplets(t.begin(), t.end());
  return SparseSymMatrix::from_full(std::move(out));
}

CholFactor factorize_with(const SparseSymMatrix& q, const CholFactor::Permutation& p) {
  CholFactor f;
  f.dim_ = q.dim();
  f.p_ = p;
  f.pinv_ = p.inverse();
  SpMat permuted;
  permuted = q.matrix().selfadjointView<Eigen::Lower>().twistedBy(p);
  auto llt = std::make_shared<CholFactor::Llt>();
  llt->compute(permuted);
  if (llt->info() != Eigen::Success) {
    throw NotPositiveDefinite("Cholesky factorization hit a non-positive pivot");
  }
  const auto& l = llt->matrixL().nestedExpression();
  double ld = 0.0;
  for (Index k = 0; k < l.outerSize(); ++k) {
    SpMat::InnerIterator it(l, k);
    // Column k of a lower factor starts at the diagonal.
    if (!it || it.row() != k || !(it.value() > 0.0)) {
      throw NotPositiveDefinite("Cholesky factor has a non-positive diagonal");
    }
    ld += std::log(it.value());
  }
  f.logdet_ = 2.0 * ld;
  f.llt_ = std::move(llt);
  return f;
}

namespace {

CholFactor::Permutation compute_ordering(const SparseSymMatrix& q, Ordering ordering) {
  CholFactor::Permutation p(q.dim());
  if (ordering == Ordering::Natural) {
    p.setIdentity();
    return p;
  }
  Eigen::AMDOrdering<int> amd;
  CholFactor::Permutation pinv;
  // Same convention as Eigen's simplicial solvers: the ordering returns P⁻¹.
  amd(q.matrix().selfadjointView<Eigen::Lower>(), pinv);
  p = pinv.inverse();
  return p;
}

}  // namespace

CholFactor chol(const SparseSymMatrix& q, Ordering ordering) {
  return factorize_with(q, compute_ordering(q, ordering));
}

JitteredChol chol_jitter(const SparseSymMatrix& q) {
  try {
    return {chol(q), 0.0};
  } catch (const NotPositiveDefinite&) {
  }
  for (double delta = 1e-10; delta <= 1.0000001e-6; delta *= 10.0) {
    try {
      return {chol(q + SparseSymMatrix::identity(q.dim(), delta)), delta};
    } catch (const NotPositiveDefinite&) {
    }
  }
  throw NotPositiveDefinite("matrix not positive definite even with jitter 1e-6");
}

Vec CholFactor::solve(const Vec& b) const {
  if (b.size() != dim_) throw DimensionMismatch("solve: length(b) != dim");
  Vec pb = p_ * b;
  Vec y = llt_->solve(pb);
  return pinv_ * y;
}

Vec CholFactor::whiten_inverse(const Vec& z) const {
  if (z.size() != dim_) throw DimensionMismatch("whiten_inverse: length(z) != dim");
  Vec v = llt_->matrixU().solve(z);
  return pinv_ * v;
}

Vec CholFactor::sample_canonical(const Vec& b, Rng& rng) const {
  if (b.size() != dim_) throw DimensionMismatch("sample_canonical: length(b) != dim");
  Vec mean = solve(b);
  return mean + whiten_inverse(standard_normal_vector(dim_, rng));
}

Mat CholFactor::lower_dense() const { return Mat(llt_->matrixL().nestedExpression()); }

Eigen::VectorXi CholFactor::permutation_indices() const {
  // (P x)[i] = x[p[i]]; Eigen stores the image of each index, i.e. P e_j = e_{indices[j]}.
  Eigen::VectorXi out(dim_);
  for (Index j = 0; j < dim_; ++j) out[p_.indices()[j]] = static_cast<int>(j);
  return out;
}

Vec solve(const CholFactor& f, const Vec& b) { return f.solve(b); }
double logdet(const CholFactor& f) { return f.logdet(); }
Vec sample_canonical(const CholFactor& f, const Vec& b, Rng& rng) {
  return f.sample_canonical(b, rng);
}

CholeskyPattern::CholeskyPattern(const SparseSymMatrix& q, Ordering ordering)
    : p_(compute_ordering(q, ordering)), dim_(q.dim()) {}

CholFactor CholeskyPattern::factorize(const SparseSymMatrix& q) const {
  if (q.dim() != dim_) throw DimensionMismatch("CholeskyPattern: dimension mismatch");
  return factorize_with(q, p_);
}

Vec standard_normal_vector(Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec z(n);
  for (Index i = 0; i < n; ++i) z[i] = normal(rng);
  return z;
}

}  // namespace maxsmooth
