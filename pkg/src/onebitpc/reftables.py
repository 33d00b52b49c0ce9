"""Reference curves stored at the base station.

Monte-Carlo generation of PMSE(rho), SER(rho) and detection centroids on a
dB grid, a diff-able text file format, piecewise-linear lookup and the
two-branch PMSE -> SER map used by the differential controller.

Stream layout: every grid point draws from sub-streams keyed by its dB value
(not its index), so a row can be regenerated on its own and matches the row
produced as part of a larger grid bit for bit.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.optimize import isotonic_regression

from .channel import apply_uplink, rayleigh_channel
from .numerics import RngStream, quantize_1bit
from .receiver import (
    SerCounter,
    detect_batch,
    estimate_centroids,
    iter_chunks,
    min_distance_detect,
    pmse_samples,
)
from .waveforms import (
    build_multiamp_pilot,
    composite_pairs,
    lower_level_for_composite,
    power_levels,
    qam_constellation,
    zadoff_chu,
)

log = logging.getLogger(__name__)

__all__ = [
    "TableFormatError",
    "TableMismatchError",
    "TableRangeError",
    "BranchMapError",
    "TableMeta",
    "ReferenceTable",
    "BranchMap",
    "gen_tables",
    "interp",
    "build_branch_map",
    "save",
    "load",
    "check_compatible",
    "ladder_levels",
    "pmse_point",
    "ser_point",
    "BUNDLED",
    "bundled_table_path",
]

MAGIC = "# onebitpc-reftable"
FORMAT_VERSION = 1

# sub-stream tags
_PMSE, _CENTROIDS, _SER = 1, 2, 3


class TableFormatError(ValueError):
    pass


class TableMismatchError(ValueError):
    pass


class TableRangeError(ValueError):
    pass


class BranchMapError(ValueError):
    pass


@dataclass(frozen=True)
class TableMeta:
    M: int
    tau: int
    gap_db: float
    L: int
    order: int
    trials: int
    seed: int
    n_data: int = 100
    centroid_trials: int = 1000
    root: int = 1


@dataclass
class ReferenceTable:
    """Grid-indexed reference curves.

    ``pmse[i]`` is the mean PMSE of a two-level pilot whose composite power is
    ``grid_db[i]``. ``ser[i]`` and ``centroids[i]`` belong to a block sent at
    power ``grid_db[i]`` with the ``L``-level ladder centred on it (a single
    pilot level when ``L == 1``). Tables built with ``n_data == 0`` carry PMSE
    only: ``ser`` is NaN and ``centroids`` has zero columns.
    """

    meta: TableMeta
    grid_db: np.ndarray
    pmse: np.ndarray
    ser: np.ndarray
    centroids: np.ndarray

    def __post_init__(self):
        self.grid_db = np.asarray(self.grid_db, dtype=float)
        self.pmse = np.asarray(self.pmse, dtype=float)
        self.ser = np.asarray(self.ser, dtype=float)
        self.centroids = np.asarray(self.centroids, dtype=complex).reshape(self.grid_db.size, -1)
        n = self.grid_db.size
        if n < 2 or np.any(np.diff(self.grid_db) <= 0):
            raise ValueError("grid must hold at least two strictly ascending points")
        if self.pmse.shape != (n,) or self.ser.shape != (n,):
            raise ValueError("pmse and ser must match the grid length")

    @property
    def has_ser(self) -> bool:
        return bool(np.all(np.isfinite(self.ser)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReferenceTable):
            return NotImplemented
        return (
            self.meta == other.meta
            and np.array_equal(self.grid_db, other.grid_db)
            and np.array_equal(self.pmse, other.pmse, equal_nan=True)
            and np.array_equal(self.ser, other.ser, equal_nan=True)
            and np.array_equal(self.centroids, other.centroids, equal_nan=True)
        )


def _grid_key(rho_db: float) -> int:
    k = int(round(float(rho_db) * 1000))
    return 2 * k if k >= 0 else -2 * k - 1


def ladder_levels(rho_db: float, L: int, gap_db: float) -> np.ndarray:
    """Pilot levels of a block sent at ``rho_db`` (one level when ``L == 1``)."""
    if L == 1:
        return np.array([float(rho_db)])
    return power_levels(L, rho_db, gap_db)


def pmse_point(M, tau, gap_db, comp_db, trials, stream: RngStream, root=1) -> np.ndarray:
    """Per-realization PMSE samples of the two-level pilot at composite power ``comp_db``."""
    lo = lower_level_for_composite(comp_db, gap_db)
    q = build_multiamp_pilot(zadoff_chu(tau, root), [lo, lo + gap_db])
    out = []
    for n, gen in iter_chunks(trials, stream):
        h = rayleigh_channel(M, gen, batch=(n,))
        out.append(pmse_samples(quantize_1bit(apply_uplink(h, q, 0.0, gen)), q))
    return np.concatenate(out)


def ser_point(M, pilot, rho_db, constellation, trials, stream: RngStream, centroids, n_data, quantize=True) -> SerCounter:
    counter = SerCounter(constellation.order)
    for n, gen in iter_chunks(trials, stream):
        idx, xh = detect_batch(n, gen, M, rho_db, constellation, pilot, n_data, quantize)
        counter.update(idx, min_distance_detect(xh, centroids))
    return counter


def _table_row(args):
    meta, rho = args
    base = RngStream(meta.seed)
    key = _grid_key(rho)
    pm = pmse_point(meta.M, meta.tau, meta.gap_db, rho, meta.trials, base.child(_PMSE, key), meta.root)
    if meta.n_data == 0:
        return float(np.mean(pm)), float("nan"), np.zeros(0, dtype=complex)
    con = qam_constellation(meta.order)
    pilot = build_multiamp_pilot(zadoff_chu(meta.tau, meta.root), ladder_levels(rho, meta.L, meta.gap_db))
    cs = estimate_centroids(meta.M, rho, con, meta.centroid_trials, base.child(_CENTROIDS, key), pilot, meta.n_data)
    counter = ser_point(meta.M, pilot, rho, con, meta.trials, base.child(_SER, key), cs, meta.n_data)
    return float(np.mean(pm)), counter.ser(), cs.points


def gen_tables(
    M: int,
    tau: int,
    L: int,
    gap_db: float,
    grid_db,
    trials: int,
    order: int,
    master_seed: int,
    n_data: int = 100,
    centroid_trials: int = 1000,
    root: int = 1,
    workers: int = 1,
) -> ReferenceTable:
    """Monte-Carlo reference table; deterministic given ``master_seed``.

    ``trials`` realizations per grid point feed both the PMSE average and the
    SER count (``trials * n_data`` symbols). ``n_data = 0`` skips SER and
    centroids.
    """
    if trials < 1000:
        raise ValueError(f"reference tables need >= 1000 trials per point, got {trials}")
    if L != 1 and (L < 3 or L % 2 == 0):
        raise ValueError(f"L must be 1 or odd >= 3, got {L}")
    grid = np.asarray(grid_db, dtype=float)
    meta = TableMeta(int(M), int(tau), float(gap_db), int(L), int(order), int(trials), int(master_seed),
                     int(n_data), int(centroid_trials), int(root))
    jobs = [(meta, float(r)) for r in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_table_row, jobs))
    else:
        rows = []
        for j in jobs:
            rows.append(_table_row(j))
            log.debug("table row rho=%.2f dB done", j[1])
    pm, ser, cen = zip(*rows)
    return ReferenceTable(meta, grid, np.array(pm), np.array(ser), np.array(cen))


def interp(table: ReferenceTable, rho_db, column: str = "pmse"):
    """Piecewise-linear lookup in (dB, value); no extrapolation."""
    x = np.asarray(rho_db, dtype=float)
    lo, hi = table.grid_db[0], table.grid_db[-1]
    tol = 1e-9
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        bad = x[(x < lo - tol) | (x > hi + tol)]
        raise TableRangeError(f"query {bad.ravel()[:5]} dB outside table range [{lo}, {hi}] dB")
    y = np.interp(np.clip(x, lo, hi), table.grid_db, getattr(table, column))
    return float(y) if y.ndim == 0 else y


def interp_clamped(table: ReferenceTable, rho_db, column: str = "ser"):
    """Like :func:`interp` but holds the edge values outside the grid."""
    x = np.clip(np.asarray(rho_db, dtype=float), table.grid_db[0], table.grid_db[-1])
    return interp(table, x, column)


def observable_powers(rho_db, L: int, gap_db: float) -> np.ndarray:
    """Composite powers the BS measures for a block sent at ``rho_db``."""
    if L == 1:
        return np.array([float(rho_db)])
    return composite_pairs(power_levels(L, rho_db, gap_db)).composite_powers_db


@dataclass(frozen=True)
class BranchMap:
    """PMSE -> SER lookup split at the SER minimum.

    Both branches are parameterized by the block power ``rho_db``; the PMSE
    coordinate is the mean PMSE over the ladder's composite pairs.
    """

    rho_min_db: float
    awgn_rho: np.ndarray
    awgn_pmse: np.ndarray
    awgn_ser: np.ndarray
    qd_rho: np.ndarray
    qd_pmse: np.ndarray
    qd_ser: np.ndarray

    def awgn_branch(self, pmse):
        # pmse decreases with rho on this branch
        return _lookup(pmse, self.awgn_pmse[::-1], self.awgn_ser[::-1])

    def qd_branch(self, pmse):
        return _lookup(pmse, self.qd_pmse, self.qd_ser)

    def ser(self, pmse, quantization_limited: bool):
        return self.qd_branch(pmse) if quantization_limited else self.awgn_branch(pmse)

    def target_rho_db(self, target_ser: float) -> float:
        """Lowest block power on the AWGN branch meeting ``target_ser``.

        Falls back to the SER minimum if the target is never met.
        """
        ok = self.awgn_ser <= target_ser
        if not np.any(ok):
            return float(self.rho_min_db)
        k = int(np.argmax(ok))
        if k == 0:
            return float(self.awgn_rho[0])
        # linear crossing between k-1 and k
        x0, x1 = self.awgn_rho[k - 1], self.awgn_rho[k]
        y0, y1 = self.awgn_ser[k - 1], self.awgn_ser[k]
        return float(x0 + (y0 - target_ser) / (y0 - y1) * (x1 - x0)) if y0 != y1 else float(x1)


def _lookup(x, xp, fp):
    y = np.interp(np.asarray(x, dtype=float), xp, fp)
    return float(y) if y.ndim == 0 else y


def build_branch_map(table: ReferenceTable) -> BranchMap:
    """Split the table at its SER minimum and clean both branches isotonically."""
    if not table.has_ser:
        raise BranchMapError("table carries no SER column")
    meta = table.meta
    lo, hi = table.grid_db[0], table.grid_db[-1]
    rows = []
    for rho, s in zip(table.grid_db, table.ser):
        comps = observable_powers(rho, meta.L, meta.gap_db)
        if comps.min() >= lo - 1e-9 and comps.max() <= hi + 1e-9:
            rows.append((rho, float(np.mean(interp(table, comps))), s))
    if len(rows) < 3:
        raise BranchMapError("table too narrow to evaluate the ladder PMSE")
    rho, pm, ser = map(np.array, zip(*rows))
    ties = np.flatnonzero(ser == ser.min())
    k = int(ties[len(ties) // 2])
    if k == 0 or k == len(ser) - 1:
        raise BranchMapError(
            f"SER minimum at table edge ({rho[k]} dB); grid must span both AWGN- and quantization-limited regions"
        )
    a = slice(0, k + 1)
    q = slice(k, None)
    return BranchMap(
        rho_min_db=float(rho[k]),
        awgn_rho=rho[a],
        awgn_pmse=isotonic_regression(pm[a], increasing=False).x,
        awgn_ser=isotonic_regression(ser[a], increasing=False).x,
        qd_rho=rho[q],
        qd_pmse=isotonic_regression(pm[q], increasing=True).x,
        qd_ser=isotonic_regression(ser[q], increasing=True).x,
    )


def check_compatible(table: ReferenceTable, M: int, tau: int, gap_db: float) -> None:
    have = (table.meta.M, table.meta.tau, table.meta.gap_db)
    want = (int(M), int(tau), float(gap_db))
    if have != want:
        raise TableMismatchError(f"table built for (M, tau, gap_db)={have}, experiment needs {want}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _body_lines(table: ReferenceTable) -> list[str]:
    K = table.centroids.shape[1]
    cols = ["rho_db", "pmse", "ser"]
    for i in range(1, K + 1):
        cols += [f"centroid_re_{i}", f"centroid_im_{i}"]
    lines = [",".join(cols)]
    for r, pm, s, cen in zip(table.grid_db, table.pmse, table.ser, table.centroids):
        vals = [r, pm, s]
        for c in cen:
            vals += [c.real, c.imag]
        lines.append(",".join(_fmt(v) for v in vals))
    return lines


def save(table: ReferenceTable, path) -> None:
    body = _body_lines(table)
    digest = hashlib.sha256("\n".join(body).encode()).hexdigest()
    head = [MAGIC, f"# version={FORMAT_VERSION}"]
    head += [f"# {k}={v}" for k, v in asdict(table.meta).items()]
    head.append(f"# checksum=sha256:{digest}")
    Path(path).write_text("\n".join(head + body) + "\n")


# tables shipped with the package (regenerate with the gen-tables flags in their headers)
BUNDLED = {
    "tau7": "ref_m256_tau7_gap5_L3_qam16.csv",
    "tau127": "pmse_m256_tau127_gap5.csv",
}


def bundled_table_path(name: str) -> Path:
    """Path of a shipped table: ``"tau7"`` (full, three-level ladder) or ``"tau127"`` (PMSE only)."""
    return Path(__file__).parent / "data" / BUNDLED[name]


def load(path) -> ReferenceTable:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise TableFormatError(f"{path}: not a reference table (bad magic line)")
    head = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, val = lines[i][1:].strip().partition("=")
        if not sep:
            raise TableFormatError(f"{path}: malformed header line {lines[i]!r}")
        head[key.strip()] = val.strip()
        i += 1
    if head.get("version") != str(FORMAT_VERSION):
        raise TableFormatError(f"{path}: unsupported format version {head.get('version')!r}")
    body = lines[i:]
    digest = hashlib.sha256("\n".join(body).encode()).hexdigest()
    if head.get("checksum") != f"sha256:{digest}":
        raise TableFormatError(f"{path}: checksum mismatch")
    try:
        kw = {}
        for f in fields(TableMeta):
            kw[f.name] = float(head[f.name]) if f.name == "gap_db" else int(head[f.name])
        meta = TableMeta(**kw)
        data = np.array([[float(v) for v in ln.split(",")] for ln in body[1:]])
    except (KeyError, ValueError) as exc:
        raise TableFormatError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] < 3 or (data.shape[1] - 3) % 2:
        raise TableFormatError(f"{path}: unexpected column layout")
    # assemble parts directly so signed zeros survive
    cen = np.empty((data.shape[0], (data.shape[1] - 3) // 2), dtype=complex)
    cen.real, cen.imag = data[:, 3::2], data[:, 4::2]
    return ReferenceTable(meta, data[:, 0], data[:, 1], data[:, 2], cen)
