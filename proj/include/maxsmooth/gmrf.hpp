#pragma once

#include "maxsmooth/sparse.hpp"

namespace maxsmooth {

// Lattice index convention, used everywhere in the library: cell (i1, i2)
// with 0-based coordinates is stored at i = i1 + n1 * i2, so i1 runs fastest.
// A field stored as a column-major n1 x n2 matrix has the same layout.

enum class Boundary { Free, Zero };

// First-order random-walk structure R_m: tridiagonal, diagonal (1,2,...,2,1),
// off-diagonal -1. Rank m-1.
SparseSymMatrix rw_structure(Index m);
// Same with both corner entries equal to 2. Full rank.
SparseSymMatrix rw_structure_zero_boundary(Index m);
// Eigenvalues of the above, in DCT order k = 0..m-1 (free) or k = 1..m (zero).
Vec rw_eigenvalues(Index m, Boundary boundary);

// Q_u for the first-order lattice field: R_{n1} acting on i1 plus R_{n2} on i2.
SparseSymMatrix lattice_structure(Index n1, Index n2, Boundary boundary);

// Eigenvalues of lattice_structure(n1, n2, Free) in lattice index order,
// λ_i = 2(1-cos(π k1/n1)) + 2(1-cos(π k2/n2)); entry 0 is the zero eigenvalue.
Vec igmrf_eigenvalues(Index n1, Index n2);
// Σ log λ over the nonzero eigenvalues.
double igmrf_log_pseudodet(Index n1, Index n2);
// Log-determinant of lattice_structure(n1, n2, Zero), from its eigenvalues.
double zero_boundary_logdet(Index n1, Index n2);

// Proper density of the intrinsic field restricted to the complement of the
// constant vector (the γ -> 0 limit).
double igmrf_logdensity(const Vec& u, double sigma_u, Index n1, Index n2);

// σ⁻² R_T.
SparseSymMatrix rw1_precision(Index T, double sigma);

// Orthonormal DCT-II basis: column k is the k-th eigenvector of R_m.
Mat dct_basis(Index m);

// Draw from the intrinsic lattice field with precision σ⁻² Q_u, zero
// component along the constant vector.
Vec sample_igmrf_lattice(Index n1, Index n2, double sigma, Rng& rng);
// Draw from N(0, (τ Q_u)⁻¹) with the zero-boundary lattice structure.
Vec sample_zero_boundary_lattice(Index n1, Index n2, double tau, Rng& rng);

}  // namespace maxsmooth
