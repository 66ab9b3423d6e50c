"""Squared-discrepancy loss between effective resistances and observed
dissimilarities, and its analytic gradient.

The loss is ||R_S(w(theta)) - F||_F^2 summed over ordered node pairs
(twice the unordered sum, since both matrices are symmetric with zero
diagonal). Its weight-space gradient uses the rank-one pseudoinverse
perturbation identity: dR_lk / dw_e = -(b_e' L+ b_lk)^2, so

    dL/dw = sum over ordered pairs 2 (F_lk - R_lk) (B L+ b_lk)^o2,

assembled from the |S| cached potentials, then pulled back through the
weight-model Jacobian: dL/dtheta = J' dL/dw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import EdgeGraph
from .resistance import (
    DEFAULT_TOL,
    SampleSet,
    SolveCache,
    batch_potentials,
    surface_from_cache,
)
from .weights import ModelSpec, ThetaVector, edge_weights, weight_jacobian


@dataclass(frozen=True)
class GradientReport:
    """Loss value with parameter- and weight-space gradients.

    ``grad_w`` is the gradient with respect to raw edge weights (the
    J = identity view, exposed for tests); ``cache`` holds the potentials
    used, so callers can warm-start the next evaluation.
    """

    loss: float
    grad: np.ndarray
    grad_w: np.ndarray
    solver_residuals: np.ndarray
    cache: SolveCache


def check_dissimilarity(F: np.ndarray, n_samples: int) -> np.ndarray:
    """Validate a dissimilarity matrix against its sample set size."""
    F = np.asarray(F, dtype=np.float64)
    if F.shape != (n_samples, n_samples):
        raise ValueError(f"dissimilarity shape {F.shape}, expected ({n_samples}, {n_samples})")
    if not np.isfinite(F).all():
        raise ValueError("dissimilarity matrix has non-finite entries")
    if F.size:
        if np.abs(F - F.T).max() > 1e-9:
            raise ValueError("dissimilarity matrix is asymmetric")
        if np.abs(np.diag(F)).max() != 0.0:
            raise ValueError("dissimilarity diagonal must be zero")
        if F.min() < 0:
            raise ValueError("dissimilarity entries must be nonnegative")
    return F


def loss_with_cache(
    theta: ThetaVector,
    graph: EdgeGraph,
    S: SampleSet,
    F: np.ndarray,
    spec: ModelSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    warm: SolveCache | None = None,
) -> tuple[float, SolveCache]:
    """Loss at ``theta`` plus the potentials it was computed from."""
    F = check_dissimilarity(F, len(S))
    w = edge_weights(theta, graph, spec)
    cache = batch_potentials(graph, S, tol=tol, max_iter=max_iter, weights=w, warm=warm)
    R = surface_from_cache(cache)
    E = R - F
    return float(np.sum(E * E)), cache


def loss(
    theta: ThetaVector,
    graph: EdgeGraph,
    S: SampleSet,
    F: np.ndarray,
    spec: ModelSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    warm: SolveCache | None = None,
) -> float:
    value, _ = loss_with_cache(theta, graph, S, F, spec, tol=tol, max_iter=max_iter, warm=warm)
    return value


def gradient(
    theta: ThetaVector,
    graph: EdgeGraph,
    S: SampleSet,
    F: np.ndarray,
    spec: ModelSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    warm: SolveCache | None = None,
) -> GradientReport:
    """Loss and analytic gradient at ``theta``.

    Each pairwise term needs B(u_l - u_k), which is formed from the |S|
    cached potentials; the pair sum is rearranged into two dense products
    so no m x |S|^2 intermediate is materialized:

        dL/dw = (D o D) s - ((D C) o D) 1,   D = B U,  C = 4 (F - R),

    with s the row sums of C (C symmetric, zero diagonal).
    """
    F = check_dissimilarity(F, len(S))
    w = edge_weights(theta, graph, spec)
    cache = batch_potentials(graph, S, tol=tol, max_iter=max_iter, weights=w, warm=warm)
    R = surface_from_cache(cache)
    E = R - F
    loss_value = float(np.sum(E * E))

    D = graph.incidence() @ cache.potentials
    C = -4.0 * E
    s = C.sum(axis=1)
    grad_w = (D * D) @ s - np.einsum("ea,ea->e", D @ C, D)

    J = weight_jacobian(theta, graph, spec)
    grad = J.T @ grad_w
    return GradientReport(
        loss=loss_value,
        grad=grad,
        grad_w=grad_w,
        solver_residuals=cache.residual_norms,
        cache=cache,
    )
