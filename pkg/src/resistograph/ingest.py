"""Raster and dissimilarity-table ingestion.

Reads plain-text ASCII grid rasters (ESRI-style header), resamples them to
the analysis cell size, and encodes elevation plus one-hot landcover
presence into a :class:`LandscapeGrid`. Also parses the pairwise
genetic-dissimilarity CSV format documented in the README.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass
class RasterLayer:
    """A single raster band with an ESRI-style georeference.

    ``values`` is row-major with the top (northernmost) row first; ``nodata``
    cells keep the sentinel value and are flagged by :meth:`valid_mask`.
    """

    nrows: int
    ncols: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    values: np.ndarray
    categorical: bool = False

    def valid_mask(self) -> np.ndarray:
        return self.values != self.nodata

    @property
    def extent(self) -> tuple[float, float]:
        """(width, height) in map units."""
        return self.ncols * self.cellsize, self.nrows * self.cellsize


def load_ascii_grid(path, categorical: bool = False, valid_codes=None) -> RasterLayer:
    """Parse an ASCII grid raster.

    Header lines: ``ncols``, ``nrows``, ``xllcorner``, ``yllcorner``,
    ``cellsize``, ``NODATA_value``; then ``nrows`` whitespace-separated rows,
    top row first. When ``valid_codes`` is given, every non-nodata value must
    be one of those category codes.
    """
    header: dict[str, float] = {}
    rows: list[np.ndarray] = []
    with open(path) as fh:
        lines = fh.readlines()

    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        key = parts[0].lower()
        if key in HEADER_KEYS and len(header) < len(HEADER_KEYS):
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: malformed header line {line.strip()!r}")
            try:
                header[key] = float(parts[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad header value {parts[1]!r}") from exc
            continue
        try:
            rows.append(np.array([float(v) for v in parts], dtype=np.float64))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric cell value") from exc

    missing = [k for k in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize") if k not in header]
    if missing:
        raise DataError(f"{path}: missing header keys {missing}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if ncols <= 0 or nrows <= 0:
        raise DataError(f"{path}: non-positive raster dimensions {nrows}x{ncols}")
    nodata = header.get("nodata_value", -9999.0)

    if len(rows) != nrows:
        raise DataError(f"{path}: expected {nrows} data rows, found {len(rows)}")
    for r, row in enumerate(rows):
        if row.size != ncols:
            raise DataError(f"{path}: row {r + 1} has {row.size} values, expected {ncols}")
    values = np.vstack(rows)

    if valid_codes is not None:
        codes = set(float(c) for c in valid_codes)
        bad = np.unique(values[(values != nodata) & ~np.isin(values, sorted(codes))])
        if bad.size:
            raise DataError(f"{path}: unknown category codes {bad.tolist()}")
        categorical = True

    return RasterLayer(
        nrows=nrows,
        ncols=ncols,
        xll=header["xllcorner"],
        yll=header["yllcorner"],
        cellsize=header["cellsize"],
        nodata=nodata,
        values=values,
        categorical=categorical,
    )


def write_ascii_grid(path, layer: RasterLayer) -> None:
    """Write ``layer`` in the format read by :func:`load_ascii_grid`."""
    with open(path, "w") as fh:
        fh.write(f"ncols {layer.ncols}\n")
        fh.write(f"nrows {layer.nrows}\n")
        fh.write(f"xllcorner {layer.xll!r}\n")
        fh.write(f"yllcorner {layer.yll!r}\n")
        fh.write(f"cellsize {layer.cellsize!r}\n")
        fh.write(f"NODATA_value {layer.nodata!r}\n")
        for row in layer.values:
            fh.write(" ".join(repr(v) for v in row) + "\n")


def resample(layer: RasterLayer, target_cellsize: float, method: str) -> RasterLayer:
    """Resample to a coarser cell size, sampling at target cell centers.

    ``nearest`` takes the enclosing source pixel; ``bilinear`` interpolates
    the four surrounding source pixel centers, renormalizing over non-nodata
    neighbors. Bilinear is refused for categorical layers.
    """
    if method not in ("nearest", "bilinear"):
        raise ValueError(f"unknown resampling method {method!r}")
    if method == "bilinear" and layer.categorical:
        raise DataError("bilinear resampling requested on a categorical layer")
    if target_cellsize < layer.cellsize:
        raise DataError(
            f"target cellsize {target_cellsize} finer than source {layer.cellsize}"
        )

    width, height = layer.extent
    ncols_out = max(1, int(math.floor(width / target_cellsize + 1e-9)))
    nrows_out = max(1, int(math.floor(height / target_cellsize + 1e-9)))

    # Target cell centers in fractional source-pixel coordinates. Row 0 is the
    # top of both rasters; y decreases with row index.
    cols = (np.arange(ncols_out) + 0.5) * target_cellsize / layer.cellsize
    rows = (np.arange(nrows_out) + 0.5) * target_cellsize / layer.cellsize
    col_f, row_f = np.meshgrid(cols, rows)

    if method == "nearest":
        src_c = np.clip(np.floor(col_f).astype(int), 0, layer.ncols - 1)
        src_r = np.clip(np.floor(row_f).astype(int), 0, layer.nrows - 1)
        out = layer.values[src_r, src_c]
    else:
        out = _bilinear(layer, row_f - 0.5, col_f - 0.5)

    return RasterLayer(
        nrows=nrows_out,
        ncols=ncols_out,
        xll=layer.xll,
        yll=layer.yll + height - nrows_out * target_cellsize,
        cellsize=target_cellsize,
        nodata=layer.nodata,
        values=out,
        categorical=layer.categorical,
    )


def _bilinear(layer: RasterLayer, row_f: np.ndarray, col_f: np.ndarray) -> np.ndarray:
    """Nodata-aware bilinear interpolation at fractional pixel-center coords."""
    row_f = np.clip(row_f, 0.0, layer.nrows - 1.0)
    col_f = np.clip(col_f, 0.0, layer.ncols - 1.0)
    r0 = np.floor(row_f).astype(int)
    c0 = np.floor(col_f).astype(int)
    r1 = np.minimum(r0 + 1, layer.nrows - 1)
    c1 = np.minimum(c0 + 1, layer.ncols - 1)
    fr = row_f - r0
    fc = col_f - c0

    corners = (
        (layer.values[r0, c0], (1 - fr) * (1 - fc)),
        (layer.values[r0, c1], (1 - fr) * fc),
        (layer.values[r1, c0], fr * (1 - fc)),
        (layer.values[r1, c1], fr * fc),
    )
    num = np.zeros_like(row_f, dtype=np.float64)
    den = np.zeros_like(row_f, dtype=np.float64)
    for vals, w in corners:
        ok = vals != layer.nodata
        num += np.where(ok, w * vals, 0.0)
        den += np.where(ok, w, 0.0)
    out = np.full_like(num, layer.nodata)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass
class LandscapeGrid:
    """Environmental layers encoded on the analysis grid.

    ``elevation`` is min-max scaled to [0, 10] over valid cells.
    ``landcover_presence[r, c, t]`` flags presence of type ``t`` at the cell;
    ``unclassified`` flags cells whose landcover code is the designated
    unclassified category (kept out of the presence columns).
    """

    elevation: np.ndarray | None
    landcover_presence: np.ndarray | None
    mask: np.ndarray
    cellsize: float
    type_names: list[str] = field(default_factory=list)
    unclassified: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def n_types(self) -> int:
        return len(self.type_names)


def scale_elevation(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Affine min-max scaling of valid cells to [0, 10]; invalid cells → nan."""
    out = np.full(values.shape, np.nan)
    if not valid.any():
        return out
    lo = values[valid].min()
    hi = values[valid].max()
    if hi > lo:
        out[valid] = (values[valid] - lo) * (10.0 / (hi - lo))
    else:
        out[valid] = 0.0
    return out


def build_landscape(
    elevation: RasterLayer | None,
    landcover: RasterLayer | None,
    cellsize: float,
    code_table: dict[int, str] | None = None,
    unclassified_code: int | None = None,
) -> LandscapeGrid:
    """Resample layers to ``cellsize`` and encode them as a LandscapeGrid.

    Elevation is resampled bilinearly and scaled to [0, 10]; landcover uses
    nearest resampling and the given ``code_table`` (code → type name). Cells
    are valid only where every supplied layer has data.
    """
    if elevation is None and landcover is None:
        raise DataError("need at least one of elevation / landcover layers")
    if landcover is not None and code_table is None:
        raise DataError("landcover layer requires a code table")

    if elevation is not None and landcover is not None:
        if abs(elevation.xll - landcover.xll) > cellsize / 2 or abs(
            elevation.yll - landcover.yll
        ) > cellsize / 2:
            raise DataError("elevation and landcover origins differ by more than half a cell")
        ew, eh = elevation.extent
        lw, lh = landcover.extent
        if abs(ew - lw) > cellsize / 2 or abs(eh - lh) > cellsize / 2:
            raise DataError("elevation and landcover extents differ by more than half a cell")

    elev_rs = resample(elevation, cellsize, "bilinear") if elevation is not None else None
    lc_rs = resample(landcover, cellsize, "nearest") if landcover is not None else None

    if elev_rs is not None and lc_rs is not None:
        nrows = min(elev_rs.nrows, lc_rs.nrows)
        ncols = min(elev_rs.ncols, lc_rs.ncols)
    else:
        ref = elev_rs if elev_rs is not None else lc_rs
        nrows, ncols = ref.nrows, ref.ncols

    mask = np.ones((nrows, ncols), dtype=bool)
    elev_scaled = None
    if elev_rs is not None:
        vals = elev_rs.values[:nrows, :ncols]
        valid = vals != elev_rs.nodata
        mask &= valid
        elev_scaled = vals, valid

    presence = None
    unclassified = None
    type_names: list[str] = []
    if lc_rs is not None:
        codes = lc_rs.values[:nrows, :ncols]
        valid = codes != lc_rs.nodata
        mask &= valid
        known = sorted(code_table)
        declared = [c for c in known if c != unclassified_code]
        type_names = [code_table[c] for c in declared]
        bad = np.unique(codes[valid & ~np.isin(codes, [float(c) for c in known])])
        if bad.size:
            raise DataError(f"landcover codes {bad.tolist()} missing from code table")
        presence = np.stack([codes == float(c) for c in declared], axis=-1)
        if unclassified_code is not None:
            unclassified = codes == float(unclassified_code)
        presence &= valid[:, :, None]

    if not mask.any():
        raise DataError("all cells are nodata after masking")

    if elev_scaled is not None:
        vals, valid = elev_scaled
        elev_out = scale_elevation(vals, valid)
    else:
        elev_out = None

    return LandscapeGrid(
        elevation=elev_out,
        landcover_presence=presence,
        mask=mask,
        cellsize=cellsize,
        type_names=type_names,
        unclassified=unclassified,
    )


@dataclass
class FstTable:
    """Pairwise genetic dissimilarities for georeferenced populations."""

    ids: list[str]
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray


def load_fst(path, grid: LandscapeGrid | None = None) -> FstTable:
    """Parse the dissimilarity CSV (``id,row,col`` block, then ``FST`` matrix).

    Validates symmetry (to 1e-9), zero diagonal and the [0, 1] range. When a
    grid is supplied, population coordinates are snapped to the nearest valid
    cell and the snap distance is logged.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0].replace(" ", "") != "id,row,col":
        raise DataError(f"{path}: expected 'id,row,col' header")

    ids: list[str] = []
    rows: list[int] = []
    cols: list[int] = []
    i = 1
    while i < len(lines) and lines[i].upper() != "FST":
        parts = [p.strip() for p in lines[i].split(",")]
        if len(parts) != 3:
            raise DataError(f"{path}: bad population line {lines[i]!r}")
        ids.append(parts[0])
        rows.append(int(parts[1]))
        cols.append(int(parts[2]))
        i += 1
    if i >= len(lines):
        raise DataError(f"{path}: missing FST matrix block")
    i += 1

    n = len(ids)
    mat_lines = lines[i:]
    if len(mat_lines) != n:
        raise DataError(f"{path}: expected {n} matrix rows, found {len(mat_lines)}")
    values = np.array(
        [[float(v) for v in ln.split(",")] for ln in mat_lines], dtype=np.float64
    )
    if values.shape != (n, n):
        raise DataError(f"{path}: matrix shape {values.shape} does not match {n} populations")
    if np.abs(values - values.T).max() > 1e-9:
        raise DataError(f"{path}: dissimilarity matrix is asymmetric beyond 1e-9")
    if np.abs(np.diag(values)).max() > 0:
        raise DataError(f"{path}: dissimilarity diagonal must be zero")
    if values.min() < 0 or values.max() > 1:
        raise DataError(f"{path}: dissimilarity values outside [0, 1]")

    table = FstTable(
        ids=ids,
        rows=np.array(rows, dtype=int),
        cols=np.array(cols, dtype=int),
        values=values,
    )
    if grid is not None:
        _snap_populations(table, grid)
    return table


def _snap_populations(table: FstTable, grid: LandscapeGrid) -> None:
    valid_r, valid_c = np.nonzero(grid.mask)
    for idx, (r, c) in enumerate(zip(table.rows, table.cols)):
        nrows, ncols = grid.shape
        if 0 <= r < nrows and 0 <= c < ncols and grid.mask[r, c]:
            continue
        d2 = (valid_r - r) ** 2 + (valid_c - c) ** 2
        j = int(np.argmin(d2))
        log.info(
            "population %s snapped from (%d, %d) to (%d, %d), distance %.2f cells",
            table.ids[idx], r, c, valid_r[j], valid_c[j], math.sqrt(d2[j]),
        )
        table.rows[idx] = valid_r[j]
        table.cols[idx] = valid_c[j]
