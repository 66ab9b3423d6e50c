"""Evaluation metrics: linear-fit R^2 between resistances and observed
dissimilarities, and display tables for fitted parameters."""

from __future__ import annotations

import numpy as np

from .weights import ModelSpec, ThetaVector


def _offdiag_pairs(R: np.ndarray, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    R = np.asarray(R, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    if R.shape != F.shape or R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"shape mismatch: {R.shape} vs {F.shape}")
    iu = np.triu_indices(R.shape[0], 1)
    return R[iu], F[iu]


def r_squared_linear_fit(R: np.ndarray, F: np.ndarray, transform: str = "identity") -> float:
    """Coefficient of determination of the OLS fit of dissimilarity on
    resistance, over unordered off-diagonal pairs.

    ``transform`` applies to the dissimilarity side: ``identity`` or
    ``odds`` (F / (1 - F), the convention used with fixation indices).
    """
    x, y = _offdiag_pairs(R, F)
    if x.size < 2:
        raise ValueError("need at least 2 pairs for a linear fit")
    if transform == "odds":
        if (y >= 1).any():
            raise ValueError("odds transform requires dissimilarities < 1")
        y = y / (1.0 - y)
    elif transform != "identity":
        raise ValueError(f"unknown transform {transform!r}")
    if np.ptp(y) == 0:
        raise ValueError("dissimilarities have zero variance")

    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(xm @ xm)
    if sxx == 0:
        return 0.0
    slope = float(xm @ ym) / sxx
    resid = ym - slope * xm
    ss_res = float(resid @ resid)
    ss_tot = float(ym @ ym)
    return 1.0 - ss_res / ss_tot


def parameter_table(
    theta: ThetaVector,
    spec: ModelSpec,
    presence: np.ndarray | None = None,
    presence_threshold: float = 0.02,
) -> list[dict]:
    """Rows of (name, value, rounded) for reporting fitted parameters.

    Landcover rows whose type is present at fewer than
    ``presence_threshold`` of nodes are suppressed.
    """
    vec = theta.to_vector(spec)
    names = spec.param_names
    rows = []
    offset = 3 if spec.uses_elevation else 0
    for h, (name, value) in enumerate(zip(names, vec)):
        if (
            spec.uses_landcover
            and h >= offset
            and presence is not None
            and presence[h - offset] < presence_threshold
        ):
            continue
        rows.append({"name": name, "value": float(value), "rounded": int(round(value))})
    return rows


def format_parameter_table(rows: list[dict]) -> str:
    width = max(len(r["name"]) for r in rows) if rows else 4
    lines = [f"{'name'.ljust(width)}  {'value':>12}  {'rounded':>7}"]
    for r in rows:
        lines.append(f"{r['name'].ljust(width)}  {r['value']:12.4f}  {r['rounded']:7d}")
    return "\n".join(lines)


def write_parameter_csv(rows: list[dict], path) -> None:
    with open(path, "w") as fh:
        fh.write("name,value,rounded\n")
        for r in rows:
            fh.write(f"{r['name']},{r['value']!r},{r['rounded']}\n")
