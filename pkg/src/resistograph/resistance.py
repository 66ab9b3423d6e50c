"""Effective resistances via iterative solves against the graph Laplacian.

The Laplacian of a connected graph is symmetric positive semidefinite with
nullspace spanned by the all-ones vector, so pseudoinverse applications
L+ b are computed with MINRES on the projected system. All right-hand
sides for a sample set are advanced together as one blocked iteration;
per-column Givens recurrences keep each solve identical to a standalone
MINRES run, and columns freeze individually once converged.

Pairwise resistances over a sample set S need only the |S| potentials
u_l = L+ e_l; every pairwise vector L+ b_lk is the difference u_l - u_k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import SolverError
from .graph import EdgeGraph

DEFAULT_TOL = 1e-8

# The numba kernel fuses the same recurrence; the numpy loop below is the
# reference implementation and the fallback.
USE_KERNEL = _kernels.HAVE_NUMBA


class _SolveStats:
    """Running count of right-hand sides solved (diagnostic, test hook)."""

    def __init__(self):
        self.rhs_solved = 0


stats = _SolveStats()


@dataclass(frozen=True)
class SampleSet:
    """Ordered distinct node ids carrying genetic data."""

    nodes: np.ndarray
    label: str = "all"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64)
        if np.unique(nodes).size != nodes.size:
            raise ValueError("sample set contains duplicate nodes")
        object.__setattr__(self, "nodes", nodes)

    def __len__(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class SolveCache:
    """Potentials u_l ~ L+ e_l for each sample node, one column per node."""

    nodes: np.ndarray
    potentials: np.ndarray
    residual_norms: np.ndarray

    def column(self, node: int) -> int:
        hits = np.nonzero(self.nodes == node)[0]
        if hits.size == 0:
            raise KeyError(f"node {node} is not in the sample set")
        return int(hits[0])

    def pair_potential(self, l: int, k: int) -> np.ndarray:
        """L+ b_lk = u_l - u_k for sample nodes l, k."""
        return self.potentials[:, self.column(l)] - self.potentials[:, self.column(k)]


@dataclass(frozen=True)
class ResistanceSurface:
    """Symmetric pairwise effective resistances over a sample set."""

    nodes: np.ndarray
    values: np.ndarray


def _check_symmetric(L: sp.spmatrix) -> sp.csr_matrix:
    L = L.tocsr()
    if L.shape[0] != L.shape[1]:
        raise ValueError(f"matrix is not square: {L.shape}")
    if (L != L.T).nnz != 0:
        raise ValueError("matrix is not symmetric")
    return L


def _project(v: np.ndarray) -> np.ndarray:
    return v - v.mean(axis=0)


def _minres_block(L, b, x, rtarget, active, max_iter, normPb):
    if USE_KERNEL:
        n = b.shape[0]
        brk = n * np.finfo(np.float64).eps * normPb
        xT = np.ascontiguousarray(x.T)
        itn = _kernels.minres_block_kernel(
            L.indptr, L.indices, L.data,
            np.ascontiguousarray(b.T), xT, rtarget, active.copy(), int(max_iter), brk,
        )
        x[...] = xT.T
        return itn
    return _minres_block_numpy(L, b, x, rtarget, active, max_iter, normPb)


def _minres_block_numpy(L, b, x, rtarget, active, max_iter, normPb):
    """Blocked MINRES sweep. Mutates x in place; returns iterations used.

    One Paige-Saunders recurrence per column, with per-column Givens
    scalars held in length-k arrays. Columns drop out of ``active`` when
    the recurrence residual estimate reaches its target; converged or
    broken-down columns stop receiving updates. Iterates are re-centered
    against the all-ones nullspace every iteration.
    """
    n, k = b.shape
    eps = np.finfo(np.float64).eps

    r1 = b - L @ x
    r1 = _project(r1)
    y = r1.copy()
    beta = np.sqrt(np.einsum("ij,ij->j", r1, y))
    active = active & (beta > 0)

    oldb = np.zeros(k)
    dbar = np.zeros(k)
    epsln = np.zeros(k)
    phibar = beta.copy()
    cs = np.full(k, -1.0)
    sn = np.zeros(k)
    w = np.zeros((n, k))
    w2 = np.zeros((n, k))
    r2 = r1.copy()

    itn = 0
    while active.any() and itn < max_iter:
        itn += 1
        beta_safe = np.where(beta > 0, beta, 1.0)
        v = y / beta_safe
        y = L @ v
        y = _project(y)
        if itn >= 2:
            oldb_safe = np.where(oldb > 0, oldb, 1.0)
            y -= (beta / oldb_safe) * r1
        alpha = np.einsum("ij,ij->j", v, y)
        y -= (alpha / beta_safe) * r2
        r1 = r2
        r2 = y.copy()
        oldb = beta
        inner = np.einsum("ij,ij->j", r2, r2)
        beta = np.sqrt(inner)

        oldeps = epsln
        delta = cs * dbar + sn * alpha
        gbar = sn * dbar - cs * alpha
        epsln = sn * beta
        dbar = -cs * beta
        gamma = np.sqrt(gbar * gbar + beta * beta)
        gamma = np.maximum(gamma, eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x[...] = np.where(active, x + phi * w, x)

        # Krylov breakdown (beta -> 0) means the column solution is exact.
        converged = np.abs(phibar) <= rtarget
        broken = beta <= n * eps * normPb
        active = active & ~converged & ~broken
    return itn


def solve_psd_block(
    L: sp.spmatrix,
    B: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
    check_symmetry: bool = True,
):
    """Solve L X = P B column-wise on the complement of the ones vector.

    Returns ``(X, residuals)`` where each column satisfies 1'x = 0 and
    ||L x - P b|| <= tol * ||P b||, with P b = b - mean(b). Columns whose
    projected right-hand side vanishes get x = 0. Raises
    :class:`SolverError` when the iteration budget runs out.
    """
    if check_symmetry:
        L = _check_symmetric(L)
    else:
        L = L.tocsr()
    n = L.shape[0]
    B = np.asarray(B, dtype=np.float64)
    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None]
    if B.shape[0] != n:
        raise ValueError(f"rhs has {B.shape[0]} rows, matrix is {n}x{n}")
    k = B.shape[1]
    if max_iter is None:
        max_iter = 10 * n

    b = _project(B.copy())
    normPb = np.sqrt(np.einsum("ij,ij->j", b, b))
    nonzero = normPb > 0
    rtarget = 0.5 * tol * normPb

    if x0 is not None:
        x = _project(np.array(x0, dtype=np.float64, copy=True))
        if x.shape != b.shape:
            raise ValueError("warm-start shape mismatch")
    else:
        x = np.zeros_like(b)
    x[:, ~nonzero] = 0.0

    stats.rhs_solved += int(nonzero.sum())

    budget = max_iter
    active = nonzero.copy()
    for _ in range(3):
        used = _minres_block(L, b, x, rtarget, active, budget, normPb)
        budget -= used
        x = _project(x)
        resid = b - L @ x
        rel = np.zeros(k)
        np.divide(
            np.sqrt(np.einsum("ij,ij->j", resid, resid)),
            normPb,
            out=rel,
            where=nonzero,
        )
        failing = nonzero & (rel > tol)
        if not failing.any():
            return (x[:, 0], float(rel[0])) if squeeze else (x, rel)
        if budget <= 0:
            break
        # Recurrence round-off left some column short of the explicit
        # residual target; restart those columns from their current iterate.
        active = failing
        rtarget = np.where(failing, rtarget * 0.5, rtarget)

    worst = int(np.argmax(rel))
    raise SolverError(
        f"MINRES exceeded {max_iter} iterations "
        f"(worst relative residual {rel[worst]:.3e} > tol {tol:.1e})",
        residual=float(rel[worst]),
    )


def solve_psd(
    L: sp.spmatrix,
    b: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """MINRES solve of the singular system L x = P b; see solve_psd_block."""
    x, _ = solve_psd_block(L, b, tol=tol, max_iter=max_iter, x0=x0)
    return x


def batch_potentials(
    graph: EdgeGraph,
    S: SampleSet,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    weights: np.ndarray | None = None,
    warm: SolveCache | None = None,
) -> SolveCache:
    """Solve the |S| systems L u_l = P e_l in one blocked MINRES sweep.

    ``warm`` potentials from a previous weight vector seed the iteration;
    the returned solutions are still solved to ``tol`` against the current
    Laplacian.
    """
    nodes = S.nodes
    n = graph.n
    if nodes.size and (nodes.min() < 0 or nodes.max() >= n):
        raise ValueError("sample node id out of range")
    if max_iter is None:
        max_iter = 10 * n
    use_warm = (
        warm is not None
        and warm.potentials.shape == (n, nodes.size)
        and np.array_equal(warm.nodes, nodes)
    )

    if USE_KERNEL:
        indptr, indices, data = graph.laplacian_arrays(weights)
        if use_warm:
            xT = np.ascontiguousarray(warm.potentials.T)
        else:
            xT = np.zeros((nodes.size, n))
        stats.rhs_solved += nodes.size
        nodes64 = nodes.astype(np.int64)
        residuals = np.zeros(nodes.size)
        for _ in range(3):
            _, res, ok = _kernels.potentials_kernel(
                indptr, indices, data, nodes64, xT, tol, max_iter
            )
            residuals = res
            if ok.all():
                return SolveCache(nodes=nodes, potentials=xT.T, residual_norms=residuals)
        bad = int(np.argmax(residuals))
        raise SolverError(
            f"potential solve failed for sample set '{S.label}' at node "
            f"{nodes[bad]} (relative residual {residuals[bad]:.3e} > tol {tol:.1e})",
            residual=float(residuals[bad]),
            node=int(nodes[bad]),
        )

    L = graph.laplacian(weights)
    B = np.zeros((n, nodes.size))
    B[nodes, np.arange(nodes.size)] = 1.0
    x0 = warm.potentials if use_warm else None
    try:
        X, rel = solve_psd_block(L, B, tol=tol, max_iter=max_iter, x0=x0, check_symmetry=False)
    except SolverError as exc:
        raise SolverError(
            f"potential solve failed for sample set '{S.label}': {exc}",
            residual=exc.residual,
        ) from exc
    return SolveCache(nodes=nodes, potentials=X, residual_norms=rel)


def effective_resistance(cache: SolveCache, l: int, k: int) -> float:
    """R_lk = b_lk' L+ b_lk from cached potentials; zero when l == k."""
    if l == k:
        return 0.0
    d = cache.pair_potential(l, k)
    return float(d[l] - d[k])


def surface_from_cache(cache: SolveCache) -> np.ndarray:
    """All pairwise resistances of the cached sample set, as a matrix."""
    U = cache.potentials[cache.nodes, :]
    d = np.diag(U).copy()
    R = d[:, None] + d[None, :] - U - U.T
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 0.0)
    return np.maximum(R, 0.0)


def resistance_surface(
    graph: EdgeGraph,
    S: SampleSet,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    weights: np.ndarray | None = None,
    warm: SolveCache | None = None,
) -> ResistanceSurface:
    """Pairwise effective resistances between all sample nodes."""
    cache = batch_potentials(graph, S, tol=tol, max_iter=max_iter, weights=weights, warm=warm)
    return ResistanceSurface(nodes=S.nodes, values=surface_from_cache(cache))
