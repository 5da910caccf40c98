"""Linear solvers for the 5-point operator on the rectangle.

The discrete Laplacian with mirrored, antisymmetric or node-Dirichlet closure is
diagonalised by DCT-II, DST-II and DST-I respectively, so shifted solves
``(I - alpha*L) x = b`` are direct. Conjugate gradients is kept for the
pressure problem, with the transform solve as preconditioner.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft as sfft

NEUMANN = "neumann"
DIRICHLET_CELL = "dirichlet_cell"
DIRICHLET_NODE = "dirichlet_node"


class SolverError(RuntimeError):
    def __init__(self, message: str, history: list[float] | None = None):
        self.history = list(history or [])
        super().__init__(message)


@lru_cache(maxsize=64)
def _eigenvalues(kind: str, n: int, h: float) -> np.ndarray:
    """Eigenvalues of ``-L`` along one axis with ``n`` unknowns."""
    if kind == NEUMANN:
        k = np.arange(n)
        m = n
    elif kind == DIRICHLET_CELL:
        k = np.arange(1, n + 1)
        m = n
    elif kind == DIRICHLET_NODE:
        k = np.arange(1, n + 1)
        m = n + 1
    else:
        raise ValueError(f"unknown boundary kind {kind!r}")
    lam = (2.0 - 2.0 * np.cos(np.pi * k / m)) / (h * h)
    lam.setflags(write=False)
    return lam


def _forward(a, kind, axis):
    if kind == NEUMANN:
        return sfft.dct(a, type=2, norm="ortho", axis=axis)
    if kind == DIRICHLET_CELL:
        return sfft.dst(a, type=2, norm="ortho", axis=axis)
    return sfft.dst(a, type=1, norm="ortho", axis=axis)


def _backward(a, kind, axis):
    if kind == NEUMANN:
        return sfft.idct(a, type=2, norm="ortho", axis=axis)
    if kind == DIRICHLET_CELL:
        return sfft.idst(a, type=2, norm="ortho", axis=axis)
    return sfft.idst(a, type=1, norm="ortho", axis=axis)


def symbol(shape, kinds, spacing) -> np.ndarray:
    """Eigenvalues of ``-L`` on the 2-D tensor grid."""
    lx = _eigenvalues(kinds[0], shape[0], spacing[0])
    ly = _eigenvalues(kinds[1], shape[1], spacing[1])
    return lx[:, None] + ly[None, :]


def shifted_solve(b: np.ndarray, alpha: float, kinds=(NEUMANN, NEUMANN),
                  spacing=(1.0, 1.0)) -> np.ndarray:
    """Solve ``(I - alpha*L) x = b`` exactly (up to round-off)."""
    if alpha == 0.0:
        return b.copy()
    lam = symbol(b.shape, kinds, spacing)
    bh = _forward(_forward(b, kinds[0], 0), kinds[1], 1)
    xh = bh / (1.0 + alpha * lam)
    return _backward(_backward(xh, kinds[0], 0), kinds[1], 1)


def neumann_poisson_direct(b: np.ndarray, spacing) -> np.ndarray:
    """Mean-zero solution of ``L x = b`` for pure-Neumann ``L``; ``b`` must have zero sum."""
    lam = symbol(b.shape, (NEUMANN, NEUMANN), spacing)
    bh = _forward(_forward(b, NEUMANN, 0), NEUMANN, 1)
    xh = np.zeros_like(bh)
    nz = lam > 0
    xh[nz] = -bh[nz] / lam[nz]
    return _backward(_backward(xh, NEUMANN, 0), NEUMANN, 1)


def conjugate_gradient(apply_a, b: np.ndarray, tol: float, maxiter: int = 2000,
                       precond=None, x0: np.ndarray | None = None, project=None):
    """Preconditioned CG for a symmetric semi-definite operator.

    ``project`` (optional) removes the nullspace component after every update.
    Returns ``(x, history)`` where ``history`` holds relative residual norms.
    Raises :class:`SolverError` when ``tol`` is not met within ``maxiter``.
    """
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b) if x0 is None else x0.copy()
    if bnorm == 0.0:
        return np.zeros_like(b), [0.0]
    r = b - apply_a(x)
    if project is not None:
        r = project(r)
    history = [float(np.linalg.norm(r)) / bnorm]
    if history[-1] <= tol:
        return x, history
    z = precond(r) if precond is not None else r
    if project is not None:
        z = project(z)
    p = z.copy()
    rz = float(np.vdot(r, z))
    for _ in range(maxiter):
        ap = apply_a(p)
        pap = float(np.vdot(p, ap))
        if pap == 0.0:
            break
        step = rz / pap
        x += step * p
        r -= step * ap
        if project is not None:
            r = project(r)
        history.append(float(np.linalg.norm(r)) / bnorm)
        if history[-1] <= tol:
            return x, history
        z = precond(r) if precond is not None else r
        if project is not None:
            z = project(z)
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG did not reach relative residual {tol:g} (last {history[-1]:.3e})", history)
