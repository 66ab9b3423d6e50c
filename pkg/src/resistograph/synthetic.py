"""Synthetic ground-truth experiments: landscape generation, noisy
dissimilarity simulation, recovery-error sweeps and train/test splits.

All randomness flows through seeded generators; a scenario seed fans out
into independent streams for parameter/sample draws, training noise and
test noise, so every experiment is reproducible from its seed alone.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .graph import EdgeGraph, build_grid_graph
from .ingest import LandscapeGrid
from .objective import loss_with_cache
from .optim import FitState, OptimConfig, fit
from .resistance import DEFAULT_TOL, SampleSet, resistance_surface, surface_from_cache
from .weights import ModelSpec, ThetaVector, edge_weights

log = logging.getLogger(__name__)

_STREAM_SCENARIO = 0
_STREAM_TRAIN_NOISE = 1
_STREAM_TEST_NOISE = 2


def _stream(seed: int, which: int) -> np.random.Generator:
    # spawn keys give streams that cannot collide with default_rng(seed)
    # as used for optimizer initialization
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(which,)))


@dataclass(frozen=True)
class SyntheticScenario:
    """Ground truth for one synthetic experiment.

    ``mu`` is the mean off-diagonal entry of the true resistance surface,
    computed before noise injection; ``noise_sigma`` is the noise standard
    deviation (0, 0.05 mu or 0.2 mu in the reference sweeps).
    """

    theta_true: ThetaVector
    S: SampleSet
    noise_sigma: float
    mu: float
    seed: int
    spec: ModelSpec


def random_landscape(
    nrows: int,
    ncols: int,
    n_types: int = 6,
    seed: int = 0,
    smoothness: float = 2.0,
) -> LandscapeGrid:
    """Synthetic landscape: smooth elevation plus patchy landcover.

    Elevation is low-pass filtered white noise scaled to [0, 10]; landcover
    assigns each cell the type of its nearest of ``3 * n_types`` random patch
    centers (every type owns at least one center).
    """
    rng = np.random.default_rng(seed)
    rough = rng.standard_normal((nrows, ncols))
    smooth = ndimage.gaussian_filter(rough, sigma=smoothness, mode="reflect")
    lo, hi = smooth.min(), smooth.max()
    elevation = (smooth - lo) * (10.0 / (hi - lo)) if hi > lo else np.zeros_like(smooth)

    n_centers = 3 * n_types
    centers = np.column_stack(
        [rng.uniform(0, nrows, n_centers), rng.uniform(0, ncols, n_centers)]
    )
    center_type = np.concatenate(
        [np.arange(n_types), rng.integers(0, n_types, n_centers - n_types)]
    )
    rr, cc = np.meshgrid(np.arange(nrows) + 0.5, np.arange(ncols) + 0.5, indexing="ij")
    d2 = (rr[:, :, None] - centers[:, 0]) ** 2 + (cc[:, :, None] - centers[:, 1]) ** 2
    cell_type = center_type[np.argmin(d2, axis=2)]
    presence = np.stack([cell_type == t for t in range(n_types)], axis=-1)

    return LandscapeGrid(
        elevation=elevation,
        landcover_presence=presence,
        mask=np.ones((nrows, ncols), dtype=bool),
        cellsize=1.0,
        type_names=[f"type_{t}" for t in range(n_types)],
    )


def sample_theta_true(spec: ModelSpec, rng: np.random.Generator) -> ThetaVector:
    """Ground-truth parameters drawn from the reference discrete ranges."""
    beta_opt, beta_sd = 0.0, 1.0
    if spec.uses_elevation:
        beta_opt = float(rng.integers(1, 11))
        beta_sd = float(rng.integers(1, 11))
    alpha = np.zeros(0)
    if spec.uses_landcover:
        alpha = rng.integers(1, 101, size=spec.q).astype(np.float64)
    return ThetaVector(beta=1.0, beta_opt=beta_opt, beta_sd=beta_sd, alpha=alpha)


def sample_nodes(graph: EdgeGraph, N: int, rng: np.random.Generator, label: str = "all") -> SampleSet:
    """N distinct nodes, uniform without replacement."""
    if N > graph.n:
        raise ValueError(f"cannot sample {N} nodes from a graph with {graph.n}")
    nodes = rng.choice(graph.n, size=N, replace=False)
    return SampleSet(nodes=np.sort(nodes), label=label)


def make_scenario(
    graph: EdgeGraph,
    spec: ModelSpec,
    N: int,
    noise_factor: float,
    seed: int,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
) -> tuple[SyntheticScenario, np.ndarray]:
    """Draw ground truth and a sample set; returns the scenario plus the
    true resistance surface over the sampled nodes."""
    rng = _stream(seed, _STREAM_SCENARIO)
    theta_true = sample_theta_true(spec, rng)
    S = sample_nodes(graph, N, rng)
    w_true = edge_weights(theta_true, graph, spec)
    R_true = resistance_surface(graph, S, tol=tol, max_iter=max_iter, weights=w_true).values
    n = len(S)
    mu = float(R_true.sum() / (n * (n - 1))) if n > 1 else 0.0
    return (
        SyntheticScenario(
            theta_true=theta_true,
            S=S,
            noise_sigma=noise_factor * mu,
            mu=mu,
            seed=seed,
            spec=spec,
        ),
        R_true,
    )


def _noisy_matrix(R_true: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    n = R_true.shape[0]
    F = R_true.copy()
    iu = np.triu_indices(n, 1)
    z = rng.normal(0.0, sigma, size=iu[0].size)
    F[iu] += z
    F.T[iu] = F[iu]
    np.fill_diagonal(F, 0.0)
    return np.maximum(F, 0.0)


def simulate_F(
    graph: EdgeGraph,
    scenario: SyntheticScenario,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    R_true: np.ndarray | None = None,
) -> np.ndarray:
    """Simulated dissimilarities: true resistances plus one shared Gaussian
    draw per unordered pair, clamped at zero."""
    if R_true is None:
        w_true = edge_weights(scenario.theta_true, graph, scenario.spec)
        R_true = resistance_surface(
            graph, scenario.S, tol=tol, max_iter=max_iter, weights=w_true
        ).values
    rng = _stream(scenario.seed, _STREAM_TRAIN_NOISE)
    return _noisy_matrix(R_true, scenario.noise_sigma, rng)


def presence_fractions(graph: EdgeGraph) -> np.ndarray | None:
    """Fraction of nodes at which each landcover type is present."""
    if graph.node_landcover is None:
        return None
    return graph.node_landcover.astype(np.float64).mean(axis=0)


def relative_parameter_error(
    theta: ThetaVector,
    theta_true: ThetaVector,
    graph: EdgeGraph,
    spec: ModelSpec,
    presence_threshold: float = 0.01,
) -> float:
    """||theta - theta_true|| / ||theta_true|| over identifiable coordinates.

    Landcover coefficients whose type is present at fewer than
    ``presence_threshold`` of nodes are excluded before taking norms (their
    influence on the sampled resistances is negligible). Elevation
    parameters are always kept.
    """
    keep = np.ones(spec.n_params, dtype=bool)
    frac = presence_fractions(graph)
    if spec.uses_landcover and frac is not None:
        offset = 3 if spec.uses_elevation else 0
        keep[offset:] = frac >= presence_threshold
    v = theta.to_vector(spec)[keep]
    vt = theta_true.to_vector(spec)[keep]
    denom = np.linalg.norm(vt)
    if denom == 0:
        raise ValueError("true parameter vector is zero after masking")
    return float(np.linalg.norm(v - vt) / denom)


@dataclass
class SweepCellResult:
    """Outcome of one (N, noise, seed) sweep cell."""

    N: int
    noise_factor: float
    seed: int
    noise_sigma: float
    mu: float
    initial_loss: float
    final_loss: float
    rel_param_error: float
    theta: np.ndarray
    theta_true: np.ndarray
    state: FitState


def run_sweep_cell(
    graph: EdgeGraph,
    spec: ModelSpec,
    N: int,
    noise_factor: float,
    seed: int,
    cfg: OptimConfig,
    presence_threshold: float = 0.01,
) -> SweepCellResult:
    scenario, R_true = make_scenario(
        graph, spec, N, noise_factor, seed, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter
    )
    F = simulate_F(graph, scenario, R_true=R_true)
    cell_cfg = replace(cfg, seed=seed)
    state = fit(graph, scenario.S, F, spec, cell_cfg)
    err = relative_parameter_error(
        state.theta, scenario.theta_true, graph, spec, presence_threshold
    )
    return SweepCellResult(
        N=N,
        noise_factor=noise_factor,
        seed=seed,
        noise_sigma=scenario.noise_sigma,
        mu=scenario.mu,
        initial_loss=state.trace[0].loss,
        final_loss=state.final_loss,
        rel_param_error=err,
        theta=state.theta.to_vector(spec),
        theta_true=scenario.theta_true.to_vector(spec),
        state=state,
    )


def run_sweep(
    graph: EdgeGraph,
    spec: ModelSpec,
    Ns,
    noise_factors,
    seeds,
    cfg: OptimConfig,
    threads: int = 1,
    presence_threshold: float = 0.01,
) -> list[SweepCellResult]:
    """All (N, noise, seed) cells; cells are independent jobs and may run on
    a thread pool, with results returned in cell order regardless."""
    cells = [(N, nf, s) for N in Ns for nf in noise_factors for s in seeds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(run_sweep_cell, graph, spec, N, nf, s, cfg, presence_threshold)
                for (N, nf, s) in cells
            ]
            results = [f.result() for f in futures]
    else:
        results = [
            run_sweep_cell(graph, spec, N, nf, s, cfg, presence_threshold)
            for (N, nf, s) in cells
        ]
    return results


def write_sweep_summary(results: list[SweepCellResult], path) -> None:
    with open(path, "w") as fh:
        fh.write(
            "N,noise_factor,seed,noise_sigma,mu,initial_loss,final_loss,rel_param_error\n"
        )
        for r in results:
            fh.write(
                f"{r.N},{r.noise_factor!r},{r.seed},{r.noise_sigma!r},{r.mu!r},"
                f"{r.initial_loss!r},{r.final_loss!r},{r.rel_param_error!r}\n"
            )


@dataclass
class TrainTestReport:
    """Learning curves for a disjoint train/test node split."""

    scenario: SyntheticScenario
    test_nodes: SampleSet
    state: FitState
    eval_iters: list[int] = field(default_factory=list)
    test_loss_noisy: list[float] = field(default_factory=list)
    test_loss_clean: list[float] = field(default_factory=list)
    rel_param_error: float = float("nan")


def train_test_experiment(
    graph: EdgeGraph,
    spec: ModelSpec,
    N_train: int,
    N_test: int,
    noise_factor: float,
    cfg: OptimConfig,
    seed: int,
    eval_every: int = 25,
    presence_threshold: float = 0.01,
) -> TrainTestReport:
    """Fit on a train sample and track test loss along the trajectory.

    Train and test nodes are disjoint. Test targets are the noiseless true
    resistances over the test nodes plus an independently drawn noise
    matrix; the clean-target loss is tracked alongside.
    """
    if N_train + N_test > graph.n:
        raise ValueError("train + test sample exceeds node count")
    rng = _stream(seed, _STREAM_SCENARIO)
    theta_true = sample_theta_true(spec, rng)
    both = rng.choice(graph.n, size=N_train + N_test, replace=False)
    S_train = SampleSet(np.sort(both[:N_train]), label="train")
    S_test = SampleSet(np.sort(both[N_train:]), label="test")
    if np.intersect1d(S_train.nodes, S_test.nodes).size:
        raise ValueError("train and test sample sets overlap")

    w_true = edge_weights(theta_true, graph, spec)
    R_train = resistance_surface(
        graph, S_train, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter, weights=w_true
    ).values
    R_test = resistance_surface(
        graph, S_test, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter, weights=w_true
    ).values
    n_tr = max(N_train, 2)
    mu = float(R_train.sum() / (n_tr * (n_tr - 1)))
    sigma = noise_factor * mu
    F_train = _noisy_matrix(R_train, sigma, _stream(seed, _STREAM_TRAIN_NOISE))
    F_test = _noisy_matrix(R_test, sigma, _stream(seed, _STREAM_TEST_NOISE))

    scenario = SyntheticScenario(
        theta_true=theta_true, S=S_train, noise_sigma=sigma, mu=mu, seed=seed, spec=spec
    )
    report = TrainTestReport(scenario=scenario, test_nodes=S_test, state=None)
    warm = [None]

    def track(it, theta, _grad_report):
        if it % eval_every != 0 and it != cfg.iterations - 1:
            return
        noisy, cache = loss_with_cache(
            theta, graph, S_test, F_test, spec,
            tol=cfg.solver_tol, max_iter=cfg.solver_max_iter, warm=warm[0],
        )
        warm[0] = cache
        R_hat = surface_from_cache(cache)
        clean = float(np.sum((R_hat - R_test) ** 2))
        report.eval_iters.append(it)
        report.test_loss_noisy.append(noisy)
        report.test_loss_clean.append(clean)

    cell_cfg = replace(cfg, seed=seed)
    state = fit(graph, S_train, F_train, spec, cell_cfg, callback=track)
    report.state = state
    report.rel_param_error = relative_parameter_error(
        state.theta, theta_true, graph, spec, presence_threshold
    )
    return report


def write_train_test_csv(report: TrainTestReport, path) -> None:
    train_loss = {row.iter: row.loss for row in report.state.trace}
    with open(path, "w") as fh:
        fh.write("iter,train_loss,test_loss_noisy,test_loss_clean\n")
        for it, noisy, clean in zip(
            report.eval_iters, report.test_loss_noisy, report.test_loss_clean
        ):
            fh.write(f"{it},{train_loss.get(it, float('nan'))!r},{noisy!r},{clean!r}\n")


def desk_grid(
    nrows: int = 20,
    ncols: int = 20,
    n_types: int = 6,
    landscape_seed: int = 7,
):
    """Standard small benchmark: synthetic landscape plus its grid graph."""
    grid = random_landscape(nrows, ncols, n_types=n_types, seed=landscape_seed)
    return grid, build_grid_graph(grid)
