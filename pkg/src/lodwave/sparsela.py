"""Sparse linear algebra kernels: products, CG, saddle-point solves, lambda_max.

Matrix storage and products are scipy CSR/CSC; the iterative kernels are
written out so that iteration counts, determinism and residual verification
stay under our control. Every solve re-verifies its residual with a fresh
matvec before returning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

DIRECT_SADDLE_LIMIT = 50_000


class NonConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SaddleSingularError(RuntimeError):
    pass


def canonical(A) -> sparse.csr_matrix:
    """CSR with summed duplicates and sorted indices."""
    A = sparse.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def matvec(A, x):
    return A @ x


def transpose(A):
    return canonical(A.T)


def add(A, B):
    return canonical(A + B)


def triple_product(P, A):
    """P^T A P, canonicalized. Symmetric in pattern when A is symmetric."""
    return canonical(P.T @ (A @ P))


def is_symmetric(A, tol=1e-14):
    d = A - A.T
    if d.nnz == 0:
        return True
    scale = max(np.abs(A.data).max() if A.nnz else 0.0, 1e-300)
    return np.abs(d.data).max() <= tol * scale


def symmetrize(A):
    return canonical(0.5 * (A + A.T))


def cg_solve(A, b, tol=1e-10, max_iter=None, diag_precond=False, x0=None):
    """Preconditioned conjugate gradients; stops at ||Ax - b|| <= tol ||b||.

    Returns (x, iterations). Raises NonConvergenceError (carrying the final
    residual) if max_iter is hit first. The convergence claim is re-checked
    with an independent matvec before returning.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    if max_iter is None:
        max_iter = max(10 * n, 100)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0

    if diag_precond:
        d = A.diagonal()
        if np.any(d <= 0.0):
            raise ValueError("diagonal preconditioner needs a positive diagonal")
        minv = 1.0 / d
    else:
        minv = None

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A @ x if x0 is not None else b.copy()
    z = minv * r if minv is not None else r
    p = z.copy()
    rz = r @ z
    rn2 = rz if minv is None else r @ r  # plain CG: rz already is ||r||^2
    stop2 = (tol * bnorm) ** 2
    it = 0
    while rn2 > stop2:
        if it >= max_iter:
            raise NonConvergenceError(
                f"cg did not reach tol={tol} in {max_iter} iterations "
                f"(residual {np.sqrt(rn2) / bnorm:.3e} relative)",
                residual=float(np.sqrt(rn2)))
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            raise NonConvergenceError(
                "cg hit a non-positive curvature direction (matrix not SPD "
                "on the Krylov space)", residual=float(np.sqrt(rn2)))
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = minv * r if minv is not None else r
        rz_new = r @ z
        rn2 = rz_new if minv is None else r @ r
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1

    # independent verification of the returned residual
    true_res = np.linalg.norm(b - A @ x)
    if true_res > 10.0 * tol * bnorm:
        raise NonConvergenceError(
            f"cg residual verification failed: recomputed {true_res / bnorm:.3e} "
            f"relative vs tol {tol}", residual=true_res)
    return x, it


@dataclass
class SaddleSystem:
    """KKT data: minimize 1/2 q'Aq - q'r subject to C q = 0."""
    A: sparse.spmatrix
    C: sparse.spmatrix
    rhs: np.ndarray


class SaddleFactorization:
    """Factor a saddle system once, solve for many right-hand sides.

    Empty (all-zero) constraint rows are dropped before factoring. Systems up
    to DIRECT_SADDLE_LIMIT primal unknowns use a sparse LU of the full KKT
    matrix; larger ones fall back to a Schur-complement CG on the constraint
    block (A factored once, SPD).
    """

    def __init__(self, A, C, direct_limit=DIRECT_SADDLE_LIMIT):
        A = canonical(A)
        C = sparse.csr_matrix(C)
        keep = np.diff(C.indptr) > 0
        if not np.all(keep):
            C = C[np.where(keep)[0]]
        C = canonical(C)
        self.A = A
        self.C = C
        self.n = A.shape[0]
        self.m = C.shape[0]
        self.direct = self.n <= direct_limit
        try:
            if self.direct:
                kkt = sparse.bmat([[A, C.T], [C, None]], format="csc")
                self._lu = spla.splu(kkt)
            else:
                self._lu = spla.splu(sparse.csc_matrix(A))
        except RuntimeError as exc:
            raise SaddleSingularError(f"saddle factorization failed: {exc}") from exc

    def solve(self, r, tol=1e-10):
        r = np.asarray(r, dtype=np.float64)
        if self.direct:
            sol = self._lu.solve(np.concatenate([r, np.zeros(self.m)]))
            q, lam = sol[:self.n], sol[self.n:]
        else:
            # Schur complement on the multipliers: (C A^-1 C') lam = C A^-1 r
            Ainv_r = self._lu.solve(r)
            S = spla.LinearOperator(
                (self.m, self.m),
                matvec=lambda mu: self.C @ self._lu.solve(self.C.T @ mu))
            rhs_s = self.C @ Ainv_r
            lam, _ = _cg_operator(S, rhs_s, tol=min(tol, 1e-12))
            q = self._lu.solve(r - self.C.T @ lam)
        self._verify(q, lam, r, tol)
        return q, lam

    def _verify(self, q, lam, r, tol):
        res1 = np.linalg.norm(self.A @ q + self.C.T @ lam - r)
        res2 = np.linalg.norm(self.C @ q) if self.m else 0.0
        scale = max(np.linalg.norm(r), np.linalg.norm(q), 1e-300)
        if not np.isfinite(res1) or not np.isfinite(res2):
            raise SaddleSingularError("saddle solve produced non-finite values "
                                      "(singular KKT system)")
        if res1 > tol * scale or res2 > tol * scale:
            raise SaddleSingularError(
                f"saddle residuals too large: stationarity {res1 / scale:.3e}, "
                f"constraint {res2 / scale:.3e} relative (tol {tol})")


def _cg_operator(op, b, tol):
    """Plain CG on a LinearOperator (used by the Schur path)."""
    n = b.size
    x = np.zeros(n)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0
    for it in range(max(10 * n, 200)):
        if np.sqrt(rr) <= tol * bnorm:
            return x, it
        Ap = op.matvec(p)
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise NonConvergenceError("schur cg did not converge", residual=np.sqrt(rr))


def saddle_solve(A, C, r, tol=1e-10, direct_limit=DIRECT_SADDLE_LIMIT):
    """One-shot KKT solve; see SaddleFactorization for the two paths."""
    fac = SaddleFactorization(A, C, direct_limit=direct_limit)
    return fac.solve(r, tol=tol)


def lambda_max(A, dinv, tol=1e-6, max_iter=20000):
    """Largest eigenvalue of diag(dinv) A via power iteration.

    Iterates on the symmetrized operator D^-1/2 A D^-1/2 (same spectrum) with
    a fixed seeded start vector; converged when the Rayleigh quotient moves
    less than tol relatively. On hitting max_iter the best estimate is
    inflated by 5% and returned with a warning.
    """
    dinv = np.asarray(dinv, dtype=np.float64)
    if np.any(dinv <= 0.0):
        raise ValueError("dinv must be strictly positive")
    s = np.sqrt(dinv)
    n = A.shape[0]
    rng = np.random.default_rng(1234)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = s * (A @ (s * x))
        lam_new = x @ y
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if lam_new > 0.0 and abs(lam_new - lam) <= tol * lam_new:
            return lam_new
        lam = lam_new
    warnings.warn(f"power iteration hit the cap ({max_iter} iterations); "
                  f"returning the estimate inflated by 5%", RuntimeWarning)
    return 1.05 * lam


def gershgorin_upper(A, dinv):
    """Certified upper bound on lambda_max(diag(dinv) A) for symmetric A."""
    s = np.sqrt(np.asarray(dinv, dtype=np.float64))
    B = sparse.csr_matrix(A).copy()
    B.data = np.abs(B.data)
    # row sums of |D^-1/2 A D^-1/2|
    B = sparse.diags(s) @ B @ sparse.diags(s)
    return float(np.asarray(B.sum(axis=1)).ravel().max())
