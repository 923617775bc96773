#include "maxsmooth/gmrf.hpp"

#include <cmath>
#include <numbers>

#include "maxsmooth/error.hpp"

namespace maxsmooth {

namespace {

SparseSymMatrix tridiagonal(Index m, double corner) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(2 * m));
  for (Index i = 0; i < m; ++i) {
    const bool edge = (i == 0 || i == m - 1);
    t.emplace_back(i, i, edge ? corner : 2.0);
    if (i + 1 < m) t.emplace_back(i, i + 1, -1.0);
  }
  return SparseSymMatrix::from_triplets(m, t);
}

// Separable transform: returns V1 * A * V2ᵀ for an n1 x n2 coefficient array.
Vec lattice_synthesis(const Mat& coeffs, Index n1, Index n2) {
  Mat u = dct_basis(n1) * coeffs * dct_basis(n2).transpose();
  return Eigen::Map<const Vec>(u.data(), n1 * n2);
}

}  // namespace

SparseSymMatrix rw_structure(Index m) {
  if (m < 2) throw InvalidArgument("rw_structure: m must be >= 2");
  return tridiagonal(m, 1.0);
}

SparseSymMatrix rw_structure_zero_boundary(Index m) {
  if (m < 1) throw InvalidArgument("rw_structure_zero_boundary: m must be >= 1");
  return tridiagonal(m, 2.0);
}

Vec rw_eigenvalues(Index m, Boundary boundary) {
  Vec lambda(m);
  const double pi = std::numbers::pi;
  for (Index k = 0; k < m; ++k) {
    lambda[k] = boundary == Boundary::Free
                    ? 2.0 * (1.0 - std::cos(pi * static_cast<double>(k) / static_cast<double>(m)))
                    : 2.0 * (1.0 - std::cos(pi * static_cast<double>(k + 1) /
                                            static_cast<double>(m + 1)));
  }
  return lambda;
}

SparseSymMatrix lattice_structure(Index n1, Index n2, Boundary boundary) {
  const Index min_dim = boundary == Boundary::Free ? 2 : 1;
  if (n1 < min_dim || n2 < min_dim) throw InvalidArgument("lattice_structure: invalid dims");
  auto r = [boundary](Index m) {
    return boundary == Boundary::Free ? rw_structure(m) : rw_structure_zero_boundary(m);
  };
  return kron(SparseSymMatrix::identity(n2), r(n1)) + kron(r(n2), SparseSymMatrix::identity(n1));
}

Vec igmrf_eigenvalues(Index n1, Index n2) {
  if (n1 < 2 || n2 < 2) throw InvalidArgument("igmrf_eigenvalues: dims must be >= 2");
  const Vec l1 = rw_eigenvalues(n1, Boundary::Free);
  const Vec l2 = rw_eigenvalues(n2, Boundary::Free);
  Vec out(n1 * n2);
  for (Index i2 = 0; i2 < n2; ++i2) {
    for (Index i1 = 0; i1 < n1; ++i1) out[i1 + n1 * i2] = l1[i1] + l2[i2];
  }
  return out;
}

double igmrf_log_pseudodet(Index n1, Index n2) {
  const Vec lambda = igmrf_eigenvalues(n1, n2);
  return lambda.tail(lambda.size() - 1).array().log().sum();
}

double zero_boundary_logdet(Index n1, Index n2) {
  if (n1 < 1 || n2 < 1) throw InvalidArgument("zero_boundary_logdet: invalid dims");
  const Vec l1 = rw_eigenvalues(n1, Boundary::Zero);
  const Vec l2 = rw_eigenvalues(n2, Boundary::Zero);
  double s = 0.0;
  for (Index i2 = 0; i2 < n2; ++i2) {
    for (Index i1 = 0; i1 < n1; ++i1) s += std::log(l1[i1] + l2[i2]);
  }
  return s;
}

double igmrf_logdensity(const Vec& u, double sigma_u, Index n1, Index n2) {
  if (!(sigma_u > 0.0)) throw InvalidArgument("igmrf_logdensity: sigma_u must be > 0");
  if (u.size() != n1 * n2) throw DimensionMismatch("igmrf_logdensity: length(u) != n1*n2");
  const double rank = static_cast<double>(n1 * n2 - 1);
  const double quad = lattice_structure(n1, n2, Boundary::Free).quad_form(u);
  return -0.5 * rank * std::log(2.0 * std::numbers::pi) - 0.5 * rank * std::log(sigma_u * sigma_u) +
         0.5 * igmrf_log_pseudodet(n1, n2) - 0.5 * quad / (sigma_u * sigma_u);
}

SparseSymMatrix rw1_precision(Index T, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("rw1_precision: sigma must be > 0");
  return rw_structure(T).scaled(1.0 / (sigma * sigma));
}

Mat dct_basis(Index m) {
  Mat v(m, m);
  const double pi = std::numbers::pi;
  for (Index k = 0; k < m; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / static_cast<double>(m))
                                : std::sqrt(2.0 / static_cast<double>(m));
    for (Index j = 0; j < m; ++j) {
      v(j, k) = scale * std::cos(pi * static_cast<double>(k) * (static_cast<double>(j) + 0.5) /
                                 static_cast<double>(m));
    }
  }
  return v;
}

Vec sample_igmrf_lattice(Index n1, Index n2, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw InvalidArgument("sample_igmrf_lattice: sigma must be > 0");
  const Vec lambda = igmrf_eigenvalues(n1, n2);
  Vec z = standard_normal_vector(n1 * n2, rng);
  Mat coeffs(n1, n2);
  for (Index i2 = 0; i2 < n2; ++i2) {
    for (Index i1 = 0; i1 < n1; ++i1) {
      const Index i = i1 + n1 * i2;
      coeffs(i1, i2) = i == 0 ? 0.0 : sigma * z[i] / std::sqrt(lambda[i]);
    }
  }
  return lattice_synthesis(coeffs, n1, n2);
}

Vec sample_zero_boundary_lattice(Index n1, Index n2, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw InvalidArgument("sample_zero_boundary_lattice: tau must be > 0");
  // The zero-boundary structure is diagonalised by the DST-I basis.
  auto dst = [](Index m) {
    Mat v(m, m);
    const double pi = std::numbers::pi;
    const double scale = std::sqrt(2.0 / static_cast<double>(m + 1));
    for (Index k = 0; k < m; ++k) {
      for (Index j = 0; j < m; ++j) {
        v(j, k) = scale * std::sin(pi * static_cast<double>((j + 1) * (k + 1)) /
                                   static_cast<double>(m + 1));
      }
    }
    return v;
  };
  const Vec l1 = rw_eigenvalues(n1, Boundary::Zero);
  const Vec l2 = rw_eigenvalues(n2, Boundary::Zero);
  Vec z = standard_normal_vector(n1 * n2, rng);
  Mat coeffs(n1, n2);
  for (Index i2 = 0; i2 < n2; ++i2) {
    for (Index i1 = 0; i1 < n1; ++i1) {
      coeffs(i1, i2) = z[i1 + n1 * i2] / std::sqrt(tau * (l1[i1] + l2[i2]));
    }
  }
  Mat u = dst(n1) * coeffs * dst(n2).transpose();
  return Eigen::Map<const Vec>(u.data(), n1 * n2);
}

}  // namespace maxsmooth
