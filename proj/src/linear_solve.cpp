#include "normflow/linear_solve.hpp"

#include "normflow/errors.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <cmath>

namespace normflow {

Vector solve_tridiagonal(const Vector& sub, const Vector& diag, const Vector& super, const Vector& b) {
    const Eigen::Index n = diag.size();
    Vector c(n);
    Vector x(n);
    double denom = diag[0];
    if (denom == 0.0) throw Error(ErrorCode::LinearSolveFailure, "zero pivot in tridiagonal solve");
    c[0] = super[0] / denom;
    x[0] = b[0] / denom;
    for (Eigen::Index i = 1; i < n; ++i) {
        denom = diag[i] - sub[i] * c[i - 1];
        if (denom == 0.0) throw Error(ErrorCode::LinearSolveFailure, "zero pivot in tridiagonal solve");
        c[i] = super[i] / denom;
        x[i] = (b[i] - sub[i] * x[i - 1]) / denom;
    }
    for (Eigen::Index i = n - 2; i >= 0; --i) x[i] -= c[i] * x[i + 1];
    return x;
}

Vector solve_cyclic_tridiagonal(const Vector& sub, const Vector& diag, const Vector& super,
                                const Vector& b) {
    const Eigen::Index n = diag.size();
    const double alpha = super[n - 1];  // A(n-1, 0)
    const double beta = sub[0];         // A(0, n-1)
    const double gamma = -diag[0];
    Vector d = diag;
    d[0] -= gamma;
    d[n - 1] -= alpha * beta / gamma;
    const Vector x = solve_tridiagonal(sub, d, super, b);
    Vector u = Vector::Zero(n);
    u[0] = gamma;
    u[n - 1] = alpha;
    const Vector z = solve_tridiagonal(sub, d, super, u);
    const double fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    return x - fact * z;
}

Vector solve_shifted_laplacian(const Geometry& geom, const Vector& d, double beta, const Vector& b,
                               double cg_tolerance) {
    const SparseMatrix& L = geom.laplacian();
    const Eigen::Index n = geom.node_count();

    if (geom.grid_axes() == 1) {
        Vector sub = Vector::Zero(n);
        Vector diag = d;
        Vector super = Vector::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (SparseMatrix::InnerIterator it(L, i); it; ++it) {
                const double a = -beta * it.value();
                const Eigen::Index j = it.col();
                if (j == i) {
                    diag[i] += a;
                } else if (j == (i + 1) % n && !(j == 0 && !geom.is_periodic())) {
                    super[i] += a;
                } else {
                    sub[i] += a;
                }
            }
        }
        Vector x = geom.is_periodic() ? solve_cyclic_tridiagonal(sub, diag, super, b)
                                      : solve_tridiagonal(sub, diag, super, b);
        if (!x.allFinite()) throw Error(ErrorCode::LinearSolveFailure, "tridiagonal solve produced NaN");
        return x;
    }

    // W (diag(d) - beta L) is symmetric positive definite because W L is symmetric.
    const Vector& w = geom.weights();
    SparseMatrix A = w.asDiagonal() * L;
    A *= -beta;
    for (Eigen::Index i = 0; i < n; ++i) A.coeffRef(i, i) += w[i] * d[i];
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(cg_tolerance);
    cg.setMaxIterations(std::max<Eigen::Index>(10 * n, 1000));
    cg.compute(A);
    const Vector rhs = w.cwiseProduct(b);
    Vector x = cg.solve(rhs);
    if (cg.info() != Eigen::Success || !x.allFinite()) {
        throw Error(ErrorCode::LinearSolveFailure,
                    "conjugate gradients did not reach tolerance (error " + std::to_string(cg.error()) + ")");
    }
    return x;
}

}  // namespace normflow
