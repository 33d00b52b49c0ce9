"""Experiment runners behind the CLI.

Each ``run_*`` function takes a resolved :class:`ExperimentConfig` and
returns an :class:`ExperimentResult` (column names, rows, extra header
info). Writing files is the CLI's job.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

from . import reftables
from .channel import LinkScenario, apply_uplink, mobility_trace, rayleigh_channel, shadowing_trace
from .numerics import RngStream, db2lin, quantize_1bit
from .powerctl import ControllerState, Policy, apply_feedback, conventional_step, dpc_step, single_shot_offset
from .receiver import (
    SerCounter,
    estimate_centroids,
    estimate_channel,
    iter_chunks,
    min_distance_detect,
    pmse_samples,
    soft_detect,
    transmit_block,
)
from .reftables import _grid_key, build_branch_map, check_compatible, interp_clamped, ladder_levels, pmse_point
from .waveforms import build_multiamp_pilot, composite_pairs, lower_level_for_composite, power_levels, qam_constellation, zadoff_chu

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "EXPERIMENTS",
    "parse_grid",
    "parse_configs",
    "run_gen_tables",
    "run_ser_sweep",
    "run_pmse_sweep",
    "run_constel_dump",
    "run_single_shot_eval",
    "run_dpc_scenario",
]

# stream tags; distinct from the table generator's (1, 2, 3)
_SWEEP_CENTROIDS_1BIT, _SWEEP_CENTROIDS_UNQ, _SWEEP_SER = 11, 12, 13
_CONSTEL = 21
_SS_OFFSETS, _SS_BLOCKS = 31, 32
_DPC_SHADOW, _DPC_BLOCK = 41, 42


@dataclass
class ExperimentConfig:
    """Every knob of every experiment; unused fields are ignored by a run."""

    experiment: str = "pmse-sweep"
    m: int = 256
    tau: int = 127
    levels: int = 3
    gap_db: float = 5.0
    rho_start_db: float = 0.0
    order: int = 16
    grid: str = "-30:30:0.5"
    trials: int = 10000
    seed: int = 0
    table: str = ""
    out: str = ""
    n_data: int = 100
    centroid_trials: int = 1000
    workers: int = 1
    # constel-dump
    rho_db: float = -2.0
    # single-shot-eval
    configs: str = "3x7,5x7,7x7,9x7,3x127"
    offset_span_db: float = 5.0
    search_span_db: float = 10.0
    search_step_db: float = 0.1
    # dpc-run
    target_ser: float = 5e-5
    eta_db: float = 0.5
    feedback_rate_hz: float = 100.0
    d0_m: float = 63.73
    velocity_mps: float = 20.0
    distance_m: float = 50.0
    shadow_sigma_db: float = 4.0
    shadow_corr_m: float = 10.0
    epsilon_db: float = -5.0
    noise_floor_db: str = "auto"
    policies: str = "dpc,conventional,fixed"
    conventional_ser: str = "genie"

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.m < 1 or self.tau < 1 or self.trials < 1:
            raise ValueError("m, tau and trials must be positive")
        if self.levels != 1 and (self.levels < 3 or self.levels % 2 == 0):
            raise ValueError(f"levels must be 1 or odd >= 3, got {self.levels}")
        if self.gap_db <= 0:
            raise ValueError("gap-db must be positive")
        if self.order not in (4, 16, 64):
            raise ValueError("order must be 4, 16 or 64")
        if self.n_data < 0 or self.centroid_trials < 1:
            raise ValueError("n-data must be >= 0 and centroid-trials >= 1")
        if self.conventional_ser not in ("genie", "estimated"):
            raise ValueError("conventional-ser must be 'genie' or 'estimated'")
        for p in self.policies.split(","):
            Policy(p.strip())
        parse_grid(self.grid)
        parse_configs(self.configs)
        if self.noise_floor_db != "auto":
            float(self.noise_floor_db)

    @classmethod
    def field_types(cls) -> dict[str, type]:
        hints = {"int": int, "float": float, "str": str}
        return {f.name: hints[f.type] for f in fields(cls)}


EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "gen-tables": {},
    "ser-sweep": {"levels": 1, "grid": "-30:20:2.5"},
    "pmse-sweep": {"grid": "-30:40:2.5", "trials": 1000},
    "constel-dump": {"trials": 1},
    "single-shot-eval": {"trials": 500},
    "dpc-run": {"tau": 7, "levels": 3},
}


@dataclass
class ExperimentResult:
    columns: list[str]
    rows: list[tuple]
    info: dict[str, Any] = field(default_factory=dict)


def parse_grid(text: str) -> np.ndarray:
    """``"start:stop:step"`` (inclusive) or a comma-separated list of dB values."""
    text = text.strip()
    if ":" in text:
        a, b, s = (float(v) for v in text.split(":"))
        if s <= 0 or b < a:
            raise ValueError(f"bad grid range {text!r}")
        n = int(round((b - a) / s))
        grid = np.round(a + s * np.arange(n + 1), 9)
    else:
        grid = np.array([float(v) for v in text.split(",") if v.strip()])
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError(f"grid {text!r} must be non-empty and strictly ascending")
    return grid


def parse_configs(text: str) -> list[tuple[int, int]]:
    """``"3x7,7x7"`` -> ``[(3, 7), (7, 7)]`` as (L, tau)."""
    out = []
    for item in text.split(","):
        L, _, tau = item.strip().partition("x")
        out.append((int(L), int(tau)))
    return out


def run_gen_tables(cfg: ExperimentConfig) -> reftables.ReferenceTable:
    return reftables.gen_tables(
        cfg.m, cfg.tau, cfg.levels, cfg.gap_db, parse_grid(cfg.grid), cfg.trials, cfg.order, cfg.seed,
        n_data=cfg.n_data, centroid_trials=cfg.centroid_trials, workers=cfg.workers,
    )


def run_ser_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """SER through the 1-bit chain and through the same chain without quantization.

    Both chains see the same channel, symbols and noise in every block.
    """
    con = qam_constellation(cfg.order)
    base = zadoff_chu(cfg.tau)
    root = RngStream(cfg.seed)
    ctrials = max(cfg.centroid_trials, 1000)
    rows, below_resolution = [], 0
    for rho in parse_grid(cfg.grid):
        key = _grid_key(rho)
        pilot = build_multiamp_pilot(base, ladder_levels(rho, cfg.levels, cfg.gap_db))
        c1 = estimate_centroids(cfg.m, rho, con, ctrials, root.child(_SWEEP_CENTROIDS_1BIT, key), pilot, cfg.n_data)
        cu = estimate_centroids(cfg.m, rho, con, ctrials, root.child(_SWEEP_CENTROIDS_UNQ, key), pilot, cfg.n_data,
                                quantize=False)
        q_count, u_count = SerCounter(con.order), SerCounter(con.order)
        for n, gen in iter_chunks(cfg.trials, root.child(_SWEEP_SER, key)):
            h = rayleigh_channel(cfg.m, gen, batch=(n,))
            idx = gen.integers(0, con.order, size=(n, cfg.n_data))
            y_p, y_d = transmit_block(h, pilot, con.points[idx], rho, gen, quantize=False)
            for y_pp, y_dd, cs, counter in ((quantize_1bit(y_p), quantize_1bit(y_d), c1, q_count), (y_p, y_d, cu, u_count)):
                soft = soft_detect(y_dd, estimate_channel(y_pp, pilot))
                counter.update(idx, min_distance_detect(soft, cs))
        below_resolution += int(q_count.errors.sum() == 0) + int(u_count.errors.sum() == 0)
        rows.append((rho, q_count.ser(), u_count.ser(), int(q_count.totals.sum())))
    info = {"points_without_errors": below_resolution} if below_resolution else {}
    return ExperimentResult(["rho_db", "ser_1bit", "ser_unquantized", "n_symbols"], rows, info)


def run_pmse_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """Mean PMSE and its standard error per composite power.

    Uses the table generator's streams, so with equal seeds the means equal
    a table's PMSE column.
    """
    root = RngStream(cfg.seed)
    rows = []
    for comp in parse_grid(cfg.grid):
        v = pmse_point(cfg.m, cfg.tau, cfg.gap_db, comp, cfg.trials, root.child(reftables._PMSE, _grid_key(comp)))
        se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
        rows.append((comp, float(np.mean(v)), se))
    return ExperimentResult(["composite_rho_db", "pmse_mean", "pmse_stderr"], rows)


def run_constel_dump(cfg: ExperimentConfig) -> ExperimentResult:
    """Normalized composite-pilot estimates next to the normalized transmitted pilot."""
    lo = lower_level_for_composite(cfg.rho_db, cfg.gap_db)
    levels = np.array([lo, lo + cfg.gap_db])
    q = build_multiamp_pilot(zadoff_chu(cfg.tau), levels)
    w = q / np.linalg.norm(q)
    rows = []
    trial = 0
    for n, gen in iter_chunks(cfg.trials, RngStream(cfg.seed).child(_CONSTEL)):
        h = rayleigh_channel(cfg.m, gen, batch=(n,))
        r = quantize_1bit(apply_uplink(h, q, 0.0, gen))
        v = np.einsum("bmt,bm->bt", np.conj(r), estimate_channel(r, q))
        u = v / np.linalg.norm(v, axis=-1, keepdims=True)
        for b in range(n):
            for k in range(q.size):
                rows.append((trial, k, k // cfg.tau + 1, w[k].real, w[k].imag, u[b, k].real, u[b, k].imag))
            trial += 1
    return ExperimentResult(["trial", "sample", "level", "tx_re", "tx_im", "rx_re", "rx_im"], rows)


def _load_tables(paths: str) -> list[reftables.ReferenceTable]:
    if not paths:
        raise ValueError("this experiment needs --table")
    return [reftables.load(p.strip()) for p in paths.split(",") if p.strip()]


def _pick_table(tables, M, tau, gap_db):
    for t in tables:
        if (t.meta.M, t.meta.tau, t.meta.gap_db) == (M, tau, gap_db):
            return t
    have = [(t.meta.M, t.meta.tau, t.meta.gap_db) for t in tables]
    raise reftables.TableMismatchError(f"no table for (M, tau, gap_db)={(M, tau, gap_db)}; loaded {have}")


def single_shot_pmse(h, gen, nominal_levels, offsets_db, tau, root=1):
    """PMSE of every composite pair for ladders received ``offsets_db`` off nominal.

    Returns ``(n, n_pairs)`` estimates and the nominal composite powers.
    """
    p = zadoff_chu(tau, root)
    q_nom = build_multiamp_pilot(p, nominal_levels)
    q_eff = q_nom[None, :] * np.sqrt(db2lin(offsets_db))[:, None]
    r = quantize_1bit(apply_uplink(h, q_eff, 0.0, gen))
    pairing = composite_pairs(nominal_levels)
    est = np.empty((h.shape[0], len(pairing)))
    for k, (i, j) in enumerate(pairing.pairs):
        cols = np.r_[i * tau:(i + 1) * tau, j * tau:(j + 1) * tau]
        # the BS only knows the nominal ladder; PMSE ignores a common scale
        est[:, k] = pmse_samples(r[..., cols], q_nom[cols])
    return est, pairing.composite_powers_db


def run_single_shot_eval(cfg: ExperimentConfig) -> ExperimentResult:
    """Mean squared error of the single-shot offset estimate per (L, tau).

    Offsets are drawn once and shared by all configurations.
    """
    tables = _load_tables(cfg.table)
    root = RngStream(cfg.seed)
    offsets = root.child(_SS_OFFSETS).generator.uniform(-cfg.offset_span_db, cfg.offset_span_db, cfg.trials)
    rows = []
    for L, tau in parse_configs(cfg.configs):
        table = _pick_table(tables, cfg.m, tau, cfg.gap_db)
        nominal = power_levels(L, cfg.rho_start_db, cfg.gap_db)
        sq = []
        start = 0
        for n, gen in iter_chunks(cfg.trials, root.child(_SS_BLOCKS, L, tau)):
            off = offsets[start:start + n]
            h = rayleigh_channel(cfg.m, gen, batch=(n,))
            est, comps = single_shot_pmse(h, gen, nominal, off, tau)
            for e, o in zip(est, off):
                hat = single_shot_offset(e, comps, table, cfg.search_span_db, cfg.search_step_db)
                sq.append((hat - o) ** 2)
            start += n
        sq = np.array(sq)
        rows.append((L, tau, float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(sq.size))))
    info = {f"overhead.{L}x{tau}": L * tau for L, tau in parse_configs(cfg.configs)}
    if (9, 41) in parse_configs(cfg.configs):
        info["note"] = "tau=41 stands in for 43 (Zadoff-Chu length must be an odd prime)"
    return ExperimentResult(["L", "tau", "mean_squared_offset_error_db2", "stderr_db2"], rows, info)


def dpc_scenario(cfg: ExperimentConfig) -> LinkScenario:
    return LinkScenario(
        shadow_sigma_db=cfg.shadow_sigma_db,
        shadow_corr_distance_m=cfg.shadow_corr_m,
        d0_m=cfg.d0_m,
        velocity_mps=cfg.velocity_mps,
        duration_s=cfg.distance_m / cfg.velocity_mps,
        step_s=1.0 / cfg.feedback_rate_hz,
    )


DPC_COLUMNS = [
    "t_s", "d_m", "shadow_db", "tx_power_db", "genie_ser", "policy",
    "rho_db", "delta_pmse", "mapped_ser", "block_ser", "feedback",
]


def run_dpc_scenario(cfg: ExperimentConfig) -> ExperimentResult:
    """Closed-loop mobility run for each policy under common random numbers.

    Per 1/feedback_rate interval: fresh channel, three-level pilot plus
    ``n_data`` symbols at the current power, PMSE pair and its difference,
    controller feedback, power update. Shadowing, mobility, channel and noise
    draws are shared across policies.
    """
    table = _load_tables(cfg.table)[0]
    check_compatible(table, cfg.m, cfg.tau, cfg.gap_db)
    if table.meta.L != cfg.levels:
        raise reftables.TableMismatchError(f"table ladder has L={table.meta.L}, run uses L={cfg.levels}")
    bmap = build_branch_map(table)
    rho_target = bmap.target_rho_db(cfg.target_ser)
    scen = dpc_scenario(cfg)
    if cfg.noise_floor_db == "auto":
        # 0 dB transmit power with exact pathloss compensation lands on the target at t=0
        nf = float(scen.gain_db(scen.d0_m)) - rho_target
    else:
        nf = float(cfg.noise_floor_db)
    td = mobility_trace(scen)
    root = RngStream(cfg.seed)
    shadow = shadowing_trace(scen, root.child(_DPC_SHADOW))
    gain = scen.gain_db(td[:, 1])
    con = qam_constellation(cfg.order)
    p = zadoff_chu(cfg.tau)
    rel_levels = ladder_levels(0.0, cfg.levels, cfg.gap_db)
    q_nom = build_multiamp_pilot(p, rel_levels)
    tau = cfg.tau
    lo_cols = np.r_[0:2 * tau]
    hi_cols = np.r_[tau:3 * tau]
    policies = [Policy(s.strip()) for s in cfg.policies.split(",")]
    states = {pol: ControllerState(pol, cfg.epsilon_db, cfg.target_ser, cfg.eta_db) for pol in policies}
    tx0 = cfg.epsilon_db
    rows = []
    for k, (t, d) in enumerate(td):
        for pol in policies:
            st = states[pol]
            rho = st.tx_power_db + gain[k] + shadow[k] - nf
            gen = root.child(_DPC_BLOCK, k).generator
            h = rayleigh_channel(cfg.m, gen)
            idx = gen.integers(0, con.order, size=max(cfg.n_data, 1))
            pilot = build_multiamp_pilot(p, rho + rel_levels)
            r_p, r_d = transmit_block(h, pilot, con.points[idx], rho, gen)
            pm_lo = float(pmse_samples(r_p[:, lo_cols], q_nom[lo_cols]))
            pm_hi = float(pmse_samples(r_p[:, hi_cols], q_nom[hi_cols]))
            delta = pm_hi - pm_lo
            mapped = float(bmap.ser(0.5 * (pm_lo + pm_hi), delta > 0))
            genie = float(interp_clamped(table, rho, "ser"))
            # BS-side belief about its operating point: target plus accumulated feedback
            rho_bs = rho_target + (st.tx_power_db - tx0)
            row_idx = int(np.argmin(np.abs(table.grid_db - rho_bs)))
            soft = soft_detect(r_d, estimate_channel(r_p, q_nom))
            block_ser = float(np.mean(min_distance_detect(soft, table.centroids[row_idx]) != idx))
            if pol is Policy.DPC:
                msg = dpc_step(delta, mapped, cfg.target_ser)
            elif pol is Policy.CONVENTIONAL:
                msg = conventional_step(genie if cfg.conventional_ser == "genie" else block_ser, cfg.target_ser)
            else:
                msg = None
            rows.append((t, d, shadow[k], st.tx_power_db, genie, pol.value, rho, delta, mapped, block_ser,
                         0 if msg is None else int(msg.payload)))
            states[pol] = apply_feedback(st, msg, t)
    info = {"rho_target_db": rho_target, "noise_floor_db": nf, "rho_min_db": bmap.rho_min_db, "steps": len(td)}
    return ExperimentResult(DPC_COLUMNS, rows, info)


EXPERIMENTS = {
    "gen-tables": run_gen_tables,
    "ser-sweep": run_ser_sweep,
    "pmse-sweep": run_pmse_sweep,
    "constel-dump": run_constel_dump,
    "single-shot-eval": run_single_shot_eval,
    "dpc-run": run_dpc_scenario,
}
