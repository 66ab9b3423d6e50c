"""Parameterized maps from edge features to edge conductances.

Edge resistance (the reciprocal of conductance) is modeled as an
inverted-Gaussian curve in elevation, a linear form in one-hot landcover
features, or their sum. Analytic Jacobians of the conductances with
respect to the parameters feed the loss gradient: for w = 1/r,
dw/dtheta = -(1/r^2) dr/dtheta.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .graph import MIN_EDGE_WEIGHT, EdgeFeatures, EdgeGraph

MODEL_KINDS = ("elevation", "landcover", "combined")

# Keeps conductances finite should a degenerate feature vector drive the
# modeled resistance to zero.
RESISTANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Which feature blocks the weight model uses, and the landcover arity."""

    kind: str
    q: int = 0
    landcover_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.uses_landcover and self.q <= 0:
            raise ValueError("landcover model needs q >= 1 feature columns")
        if self.kind == "elevation" and self.q not in (0,):
            object.__setattr__(self, "q", 0)
        if self.landcover_names is not None and len(self.landcover_names) != self.q:
            raise ValueError("landcover_names length does not match q")

    @property
    def uses_elevation(self) -> bool:
        return self.kind in ("elevation", "combined")

    @property
    def uses_landcover(self) -> bool:
        return self.kind in ("landcover", "combined")

    @property
    def n_params(self) -> int:
        return (3 if self.uses_elevation else 0) + (self.q if self.uses_landcover else 0)

    @property
    def param_names(self) -> list[str]:
        names = []
        if self.uses_elevation:
            names += ["beta", "beta_opt", "beta_sd"]
        if self.uses_landcover:
            if self.landcover_names is not None:
                names += list(self.landcover_names)
            else:
                names += [f"alpha_{t}" for t in range(self.q)]
        return names


@dataclass(frozen=True)
class ThetaVector:
    """Model parameters: elevation triple plus landcover coefficients."""

    beta: float = 1.0
    beta_opt: float = 0.0
    beta_sd: float = 1.0
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=np.float64))

    def to_vector(self, spec: ModelSpec) -> np.ndarray:
        parts = []
        if spec.uses_elevation:
            parts.append([self.beta, self.beta_opt, self.beta_sd])
        if spec.uses_landcover:
            if self.alpha.shape != (spec.q,):
                raise ValueError(f"alpha has shape {self.alpha.shape}, spec expects ({spec.q},)")
            parts.append(self.alpha)
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])

    @staticmethod
    def from_vector(vec: np.ndarray, spec: ModelSpec) -> "ThetaVector":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {vec.shape}")
        if spec.uses_elevation:
            beta, beta_opt, beta_sd = vec[:3]
            alpha = vec[3:] if spec.uses_landcover else np.zeros(0)
        else:
            beta, beta_opt, beta_sd = 1.0, 0.0, 1.0
            alpha = vec
        return ThetaVector(beta=float(beta), beta_opt=float(beta_opt), beta_sd=float(beta_sd), alpha=alpha)


@dataclass(frozen=True)
class ParameterFloors:
    """Componentwise lower bounds applied by the projection step."""

    beta: float
    beta_opt: float
    beta_sd: float
    alpha: float

    @classmethod
    def synthetic(cls) -> "ParameterFloors":
        return cls(beta=1.0, beta_opt=1.0, beta_sd=1e-3, alpha=1.0)

    @classmethod
    def real_data(cls) -> "ParameterFloors":
        return cls(beta=1e-20, beta_opt=1e-20, beta_sd=1e-3, alpha=1e-20)

    def vector(self, spec: ModelSpec) -> np.ndarray:
        parts = []
        if spec.uses_elevation:
            parts.append([self.beta, self.beta_opt, self.beta_sd])
        if spec.uses_landcover:
            parts.append(np.full(spec.q, self.alpha))
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])

    def project(self, theta: ThetaVector) -> ThetaVector:
        return replace(
            theta,
            beta=max(self.beta, theta.beta),
            beta_opt=max(self.beta_opt, theta.beta_opt),
            beta_sd=max(self.beta_sd, theta.beta_sd),
            alpha=np.maximum(self.alpha, theta.alpha),
        )


def _gaussian_term(theta: ThetaVector, elev):
    if theta.beta_sd == 0:
        raise ValueError("beta_sd must be nonzero")
    z = elev - theta.beta_opt
    return np.exp(-(z * z) / (2.0 * theta.beta_sd**2))


def edge_resistances(theta: ThetaVector, graph: EdgeGraph, spec: ModelSpec) -> np.ndarray:
    """Modeled resistance r = 1/w for every edge, floored away from zero."""
    r = np.zeros(graph.m)
    if spec.uses_elevation:
        if graph.elevation is None:
            raise ValueError("model uses elevation but graph has no elevation features")
        bump = _gaussian_term(theta, graph.elevation)
        r = r + (theta.beta + 1.0 - theta.beta * bump)
    if spec.uses_landcover:
        if graph.landcover is None:
            raise ValueError("model uses landcover but graph has no landcover features")
        if graph.landcover.shape[1] != spec.q:
            raise ValueError(
                f"graph has {graph.landcover.shape[1]} landcover columns, spec expects {spec.q}"
            )
        r = r + graph.landcover @ theta.alpha
    return np.maximum(r, RESISTANCE_FLOOR)


def edge_weights(theta: ThetaVector, graph: EdgeGraph, spec: ModelSpec) -> np.ndarray:
    """Edge conductances w = 1/r; unclassified-landcover edges get the floor weight."""
    w = 1.0 / edge_resistances(theta, graph, spec)
    if graph.edge_unclassified is not None:
        w = np.where(graph.edge_unclassified, MIN_EDGE_WEIGHT, w)
    return w


def _single_edge_graph(f: EdgeFeatures) -> EdgeGraph:
    return EdgeGraph.from_edges(
        2,
        [(0, 1)],
        elevation=None if f.elevation is None else [f.elevation],
        landcover=None if f.landcover is None else [f.landcover],
    )


def edge_resistance(theta: ThetaVector, f: EdgeFeatures, spec: ModelSpec) -> float:
    """Scalar resistance of one edge with features ``f``."""
    return float(edge_resistances(theta, _single_edge_graph(f), spec)[0])


def edge_weight(theta: ThetaVector, f: EdgeFeatures, spec: ModelSpec) -> float:
    return float(edge_weights(theta, _single_edge_graph(f), spec)[0])


def weight_jacobian(theta: ThetaVector, graph: EdgeGraph, spec: ModelSpec) -> np.ndarray:
    """J[k, h] = d w_k / d theta_h, in the packed parameter order.

    Rows are zeroed where the weight is pinned (resistance floor or
    unclassified edge), matching the projection semantics.
    """
    cols = []
    raw = np.zeros(graph.m)
    if spec.uses_elevation:
        if graph.elevation is None:
            raise ValueError("model uses elevation but graph has no elevation features")
        bump = _gaussian_term(theta, graph.elevation)
        z = graph.elevation - theta.beta_opt
        raw = raw + (theta.beta + 1.0 - theta.beta * bump)
        cols.append(1.0 - bump)                                   # dr/dbeta
        cols.append(-theta.beta * bump * z / theta.beta_sd**2)    # dr/dbeta_opt
        cols.append(-theta.beta * bump * z * z / theta.beta_sd**3)  # dr/dbeta_sd
    if spec.uses_landcover:
        if graph.landcover is None:
            raise ValueError("model uses landcover but graph has no landcover features")
        raw = raw + graph.landcover @ theta.alpha
        cols.extend(graph.landcover.T)                            # dr/dalpha_t = C_t

    dr = np.column_stack(cols)
    r = np.maximum(raw, RESISTANCE_FLOOR)
    jac = -dr / (r * r)[:, None]
    pinned = raw < RESISTANCE_FLOOR
    if graph.edge_unclassified is not None:
        pinned = pinned | graph.edge_unclassified
    jac[pinned, :] = 0.0
    return jac
