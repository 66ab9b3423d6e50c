"""Projected gradient descent with RMSProp step sizes, and a projected
Nelder-Mead baseline, over the weight-model parameters.

Every parameter update is followed by the componentwise projection
theta <- max(floor, theta) with group-specific floors, which keeps edge
resistances strictly positive. Traces record loss, relative loss
(L(theta_t) / L(theta_0)) and gradient norm per iteration; for
Nelder-Mead one trace row is emitted per objective evaluation so the two
methods can be compared at equal evaluation budgets.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericError
from .graph import EdgeGraph
from .objective import GradientReport, gradient, loss_with_cache
from .resistance import DEFAULT_TOL, SampleSet
from .weights import ModelSpec, ParameterFloors, ThetaVector

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 0.1
    gamma: float = 0.9
    iterations: int = 5000
    floors: ParameterFloors = field(default_factory=ParameterFloors.synthetic)
    seed: int = 0
    rmsprop_eps: float = 1e-8
    init_mode: str = "synthetic"
    solver_tol: float = DEFAULT_TOL
    # Final reported loss is always re-evaluated at this (tighter) tolerance
    # so a looser fit-time solver cannot flatter the result.
    final_eval_tol: float = DEFAULT_TOL
    solver_max_iter: int | None = None
    record_theta_every: int = 50
    warm_start: bool = True

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.init_mode not in ("synthetic", "real"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        fl = self.floors
        if min(fl.beta, fl.beta_opt, fl.beta_sd, fl.alpha) <= 0:
            raise ValueError("floors must be positive")


@dataclass(frozen=True)
class TraceRow:
    iter: int
    loss: float
    rel_loss: float
    grad_norm: float
    wall_ms: float


@dataclass
class FitState:
    """Optimizer state plus the recorded trajectory."""

    theta: ThetaVector
    spec: ModelSpec
    sq_grad_avg: np.ndarray
    iter: int = 0
    trace: list[TraceRow] = field(default_factory=list)
    theta_snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    seed: int = 0
    n_evals: int = 0
    n_updates: int = 0

    @property
    def final_loss(self) -> float:
        if not self.trace:
            raise ValueError("no trace recorded")
        return self.trace[-1].loss


def init_theta(spec: ModelSpec, mode: str, rng: np.random.Generator) -> ThetaVector:
    """Starting point: beta fixed at 1, the rest from discrete uniforms.

    beta_opt and beta_sd come from {1..10}; alpha from {1..100} in
    synthetic mode or {1..10} in real-data mode.
    """
    beta_opt, beta_sd = 0.0, 1.0
    if spec.uses_elevation:
        beta_opt = float(rng.integers(1, 11))
        beta_sd = float(rng.integers(1, 11))
    alpha = np.zeros(0)
    if spec.uses_landcover:
        high = 101 if mode == "synthetic" else 11
        alpha = rng.integers(1, high, size=spec.q).astype(np.float64)
    return ThetaVector(beta=1.0, beta_opt=beta_opt, beta_sd=beta_sd, alpha=alpha)


def rmsprop_step(state: FitState, grad: np.ndarray, cfg: OptimConfig) -> FitState:
    """One RMSProp update followed by the floor projection."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(grad).all():
        raise NumericError(f"non-finite gradient at iteration {state.iter}")
    v = cfg.gamma * state.sq_grad_avg + (1.0 - cfg.gamma) * grad * grad
    vec = state.theta.to_vector(state.spec)
    vec = vec - cfg.learning_rate * grad / (np.sqrt(v) + cfg.rmsprop_eps)
    vec = np.maximum(cfg.floors.vector(state.spec), vec)
    return replace(
        state,
        theta=ThetaVector.from_vector(vec, state.spec),
        sq_grad_avg=v,
        iter=state.iter + 1,
    )


def fit(
    graph: EdgeGraph,
    S: SampleSet,
    F: np.ndarray,
    spec: ModelSpec,
    cfg: OptimConfig,
    theta0: ThetaVector | None = None,
    callback=None,
) -> FitState:
    """Minimize the resistance-matching loss by projected RMSProp descent.

    Deterministic given ``cfg.seed``. The trace records the loss at the
    pre-step iterate each iteration plus a final loss-only row; ``callback``
    (if given) is invoked as ``callback(iter, theta, report)`` per iteration.
    """
    rng = np.random.default_rng(cfg.seed)
    if theta0 is None:
        theta0 = init_theta(spec, cfg.init_mode, rng)
    theta0 = cfg.floors.project(theta0)
    state = FitState(
        theta=theta0,
        spec=spec,
        sq_grad_avg=np.zeros(spec.n_params),
        seed=cfg.seed,
    )

    t0 = time.perf_counter()
    warm = None
    loss0 = None
    for it in range(cfg.iterations):
        report = gradient(
            state.theta, graph, S, F, spec,
            tol=cfg.solver_tol, max_iter=cfg.solver_max_iter, warm=warm,
        )
        if not np.isfinite(report.loss):
            raise NumericError(f"non-finite loss at iteration {it}")
        if loss0 is None:
            loss0 = report.loss if report.loss > 0 else 1.0
        state.trace.append(
            TraceRow(
                iter=it,
                loss=report.loss,
                rel_loss=report.loss / loss0,
                grad_norm=float(np.linalg.norm(report.grad)),
                wall_ms=(time.perf_counter() - t0) * 1e3,
            )
        )
        if it % cfg.record_theta_every == 0:
            state.theta_snapshots.append((it, state.theta.to_vector(spec)))
        if callback is not None:
            callback(it, state.theta, report)
        state = rmsprop_step(state, report.grad, cfg)
        state.n_evals += 1
        state.n_updates += 1
        warm = report.cache if cfg.warm_start else None

    final_loss, _ = loss_with_cache(
        state.theta, graph, S, F, spec,
        tol=min(cfg.solver_tol, cfg.final_eval_tol),
        max_iter=cfg.solver_max_iter, warm=warm,
    )
    if loss0 is None:
        loss0 = final_loss if final_loss > 0 else 1.0
    state.trace.append(
        TraceRow(
            iter=cfg.iterations,
            loss=final_loss,
            rel_loss=final_loss / loss0,
            grad_norm=float("nan"),
            wall_ms=(time.perf_counter() - t0) * 1e3,
        )
    )
    state.theta_snapshots.append((cfg.iterations, state.theta.to_vector(spec)))
    return state


def write_trace_csv(state: FitState, path) -> None:
    """Trace rows as CSV: iter, loss, rel_loss, grad_norm, wall_ms."""
    with open(path, "w") as fh:
        fh.write("iter,loss,rel_loss,grad_norm,wall_ms\n")
        for row in state.trace:
            fh.write(
                f"{row.iter},{row.loss!r},{row.rel_loss!r},{row.grad_norm!r},{row.wall_ms:.3f}\n"
            )


def nelder_mead(
    f,
    x0: np.ndarray,
    max_evals: int,
    floors: np.ndarray | None = None,
    on_eval=None,
):
    """Nelder-Mead simplex minimization with optional floor projection.

    Classical coefficients (reflection 1, expansion 2, contraction 0.5,
    shrink 0.5). Every candidate vertex is projected to ``floors`` before
    evaluation when floors are given. Returns (best_x, best_f, n_evals,
    n_updates, n_restarts).
    """
    n = x0.size
    proj = (lambda x: np.maximum(floors, x)) if floors is not None else (lambda x: x)

    evals = 0

    def feval(x):
        nonlocal evals
        evals += 1
        fx = f(x)
        if on_eval is not None:
            on_eval(evals, x, fx)
        return fx

    def initial_simplex(center):
        # fminsearch-style: 5% perturbation per coordinate, absolute for zeros
        verts = [proj(center.copy())]
        for i in range(n):
            v = center.copy()
            v[i] = v[i] * 1.05 if v[i] != 0 else 0.00025
            verts.append(proj(v))
        return np.array(verts)

    simplex = initial_simplex(x0)
    fvals = np.array([feval(v) for v in simplex[: min(len(simplex), max(1, max_evals))]])
    if fvals.size < n + 1:
        order = np.argsort(fvals, kind="stable")
        return simplex[order[0]], float(fvals[order[0]]), evals, 0, 0

    updates = 0
    restarts = 0
    while evals < max_evals:
        order = np.argsort(fvals, kind="stable")
        simplex = simplex[order]
        fvals = fvals[order]

        spread = np.max(np.abs(simplex - simplex[0]))
        if spread <= 1e-12 * max(1.0, np.max(np.abs(simplex[0]))):
            log.info("degenerate simplex after %d evals; restarting", evals)
            restarts += 1
            simplex = initial_simplex(simplex[0])
            fvals = np.array([feval(v) for v in simplex])
            if evals >= max_evals:
                break
            continue

        centroid = simplex[:-1].mean(axis=0)
        xr = proj(centroid + (centroid - simplex[-1]))
        fr = feval(xr)
        if fr < fvals[0]:
            xe = proj(centroid + 2.0 * (centroid - simplex[-1]))
            if evals < max_evals:
                fe = feval(xe)
                if fe < fr:
                    simplex[-1], fvals[-1] = xe, fe
                else:
                    simplex[-1], fvals[-1] = xr, fr
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = proj(centroid + 0.5 * (xr - centroid))
            else:
                xc = proj(centroid + 0.5 * (simplex[-1] - centroid))
            if evals >= max_evals:
                break
            fc = feval(xc)
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:
                # shrink toward the best vertex
                for i in range(1, n + 1):
                    if evals >= max_evals:
                        break
                    simplex[i] = proj(simplex[0] + 0.5 * (simplex[i] - simplex[0]))
                    fvals[i] = feval(simplex[i])
        updates += 1

    best = int(np.argmin(fvals))
    return simplex[best], float(fvals[best]), evals, updates, restarts


def nelder_mead_fit(
    graph: EdgeGraph,
    S: SampleSet,
    F: np.ndarray,
    spec: ModelSpec,
    cfg: OptimConfig,
    theta0: ThetaVector | None = None,
    project: bool = True,
) -> FitState:
    """Nelder-Mead baseline on the same loss, initialization and floors.

    The evaluation budget is ``cfg.iterations`` objective evaluations (one
    trace row each, tracking the best loss so far); ``project=False`` gives
    the unconstrained variant.
    """
    rng = np.random.default_rng(cfg.seed)
    if theta0 is None:
        theta0 = init_theta(spec, cfg.init_mode, rng)
    if project:
        theta0 = cfg.floors.project(theta0)
    x0 = theta0.to_vector(spec)
    floors_vec = cfg.floors.vector(spec) if project else None

    state = FitState(
        theta=theta0,
        spec=spec,
        sq_grad_avg=np.zeros(spec.n_params),
        seed=cfg.seed,
    )
    t0 = time.perf_counter()
    warm_cache = [None]
    best = [np.inf]
    loss0 = [None]

    def objective(vec):
        value, cache = loss_with_cache(
            ThetaVector.from_vector(vec, spec), graph, S, F, spec,
            tol=cfg.solver_tol, max_iter=cfg.solver_max_iter, warm=warm_cache[0],
        )
        warm_cache[0] = cache if cfg.warm_start else None
        return value

    def record(eval_idx, _x, fx):
        if loss0[0] is None:
            loss0[0] = fx if fx > 0 else 1.0
        best[0] = min(best[0], fx)
        state.trace.append(
            TraceRow(
                iter=eval_idx - 1,
                loss=best[0],
                rel_loss=best[0] / loss0[0],
                grad_norm=float("nan"),
                wall_ms=(time.perf_counter() - t0) * 1e3,
            )
        )

    if cfg.iterations == 0:
        return state

    xbest, fbest, n_evals, n_updates, _ = nelder_mead(
        objective, x0, max_evals=cfg.iterations, floors=floors_vec, on_eval=record
    )
    state.theta = ThetaVector.from_vector(xbest, spec)
    state.iter = n_updates
    state.n_evals = n_evals
    state.n_updates = n_updates
    state.theta_snapshots.append((n_evals, xbest))
    return state
