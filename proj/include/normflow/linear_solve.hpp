#pragma once

#include "normflow/geometry.hpp"

namespace normflow {

/// Solves (diag(d) - beta * L) x = b for the geometry's Laplacian L.
///
/// 1D and radial geometries use a direct tridiagonal (Thomas) solve, the
/// circle its cyclic variant via Sherman-Morrison. 2D geometries run
/// conjugate gradients on the symmetrised system W (diag(d) - beta L) to a
/// relative residual of `cg_tolerance`. `d` must be nonnegative and the
/// system nonsingular (d > 0 somewhere on periodic kinds).
Vector solve_shifted_laplacian(const Geometry& geom, const Vector& d, double beta, const Vector& b,
                               double cg_tolerance = 1e-12);

// Plain tridiagonal solve; sub[0] and super[n-1] are ignored.
Vector solve_tridiagonal(const Vector& sub, const Vector& diag, const Vector& super, const Vector& b);

// Tridiagonal with corner couplings a[0] -> x[n-1] (sub[0]) and
// a[n-1] -> x[0] (super[n-1]).
Vector solve_cyclic_tridiagonal(const Vector& sub, const Vector& diag, const Vector& super,
                                const Vector& b);

}  // namespace normflow
