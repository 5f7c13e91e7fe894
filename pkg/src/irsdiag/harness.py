"""Monte-Carlo trials, parameter sweeps and result files.

Every random quantity of a trial comes from its own stream spawned from
the trial seed, so changing one stage (say, the number of RX antennas)
leaves the draws of the other stages untouched.  Sweep trial seeds are a
SHA-256 digest of the master seed, the grid point (minus the paired axes)
and the trial index.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .anm import AnmConfig, FocussConfig, default_lambda_sparse, diagnose_no_csi
from .channel import channel_vector, mmv_rx_channels, sample_paths
from .config import ScenarioConfig, SweepSpec
from .errors import InvalidInputError
from .full_csi import LassoConfig, default_lambda1, diagnose_full_csi
from .partial_csi import CslrmrConfig, default_delta, diagnose_partial_csi
from .result import DiagnosisResult
from .system import (FailureMask, MeasurementSet, observe_k, observe_mmv, sample_failure_mask,
                     sample_weights, support_f1, threshold_faults)

__all__ = [
    "ResultRow",
    "Scenario",
    "STREAMS",
    "derive_seed",
    "simulate",
    "diagnose",
    "run_trial",
    "run_sweep",
    "persist_results",
    "read_results",
    "summarize",
]

STREAMS = ("tx_paths", "rx_paths", "rx_aoa", "mask", "weights", "noise")


@dataclass
class ResultRow:
    case: str
    N: int
    H: int
    W: int
    K: int
    snr_db: float
    n_faults: int
    L_TX: int
    L_RX: int
    N_RX: int
    trial: int
    seed: int
    nmse: float
    support_f1: float
    runtime_ms: float
    converged: bool
    iterations: int
    method: str = ""
    error: str = ""


ROW_FIELDS = tuple(f.name for f in fields(ResultRow))
_INT_FIELDS = {"N", "H", "W", "K", "n_faults", "L_TX", "L_RX", "N_RX", "trial", "seed", "iterations"}
_FLOAT_FIELDS = {"snr_db", "nmse", "support_f1", "runtime_ms"}


@dataclass
class Scenario:
    """Ground truth and measurements of one trial."""

    config: ScenarioConfig
    mask: FailureMask
    h_tx: np.ndarray
    rx_channels: np.ndarray    # N x N_RX
    measurements: MeasurementSet

    @property
    def h_rx(self) -> np.ndarray:
        return self.rx_channels[:, 0]


def derive_seed(master: int, point: dict, trial: int, exclude=()) -> int:
    """Stable 63-bit seed from the master seed, grid point and trial index."""
    key = {k: v for k, v in sorted(point.items()) if k not in exclude}
    blob = json.dumps([int(master), key, int(trial)], sort_keys=True, default=str)
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "little") >> 1


def _streams(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


def simulate(cfg: ScenarioConfig) -> Scenario:
    """Sample channels, failure mask and weights, and generate the observations."""
    geo = cfg.geometry
    L_tx, L_rx, n_rx = cfg.paths
    rng = _streams(cfg.seed)
    angles = (cfg.angle_min, cfg.angle_max)
    tx = sample_paths(L_tx, rng["tx_paths"], "TX", angles)
    rx = sample_paths(L_rx, rng["rx_paths"], "RX", angles)
    aoas = rng["rx_aoa"].uniform(cfg.angle_min, cfg.angle_max, L_rx)
    h_tx = channel_vector(tx, geo)
    if cfg.case == "mmv":
        rx_channels = mmv_rx_channels(rx, aoas, n_rx, geo)
    else:
        rx_channels = channel_vector(rx, geo)[:, None]
    mask = sample_failure_mask(geo.N, cfg.n_faults, rng["mask"],
                               (cfg.eta_min, cfg.eta_max), (cfg.kappa_min, cfg.kappa_max))
    weights = sample_weights(cfg.K_count, geo.N, rng["weights"], cfg.weight_alphabet)
    if cfg.case == "mmv":
        ms = observe_mmv(mask, weights, h_tx, rx_channels, cfg.snr_linear, rng["noise"])
    else:
        ms = observe_k(mask, weights, h_tx, rx_channels[:, 0], cfg.snr_linear, rng["noise"])
    return Scenario(cfg, mask, h_tx, rx_channels, ms)


def _anm_config(cfg: ScenarioConfig, K: int, n_rx: int) -> AnmConfig:
    if cfg.case == "mmv":
        tau, lam = cfg.tau2, cfg.lambda4
    else:
        tau, lam = cfg.tau1, cfg.lambda3
    if tau is None:
        tau = 0.004 * K
    if lam is None:
        lam = default_lambda_sparse(K, n_rx, cfg.lambda4_nrx_power if cfg.case == "mmv" else 0.0)
    return AnmConfig(tau=tau, lambda_sparse=lam, rho=cfg.anm_rho, max_iter=cfg.anm_max_iter,
                     tol=cfg.anm_tol, inner_max_iter=cfg.anm_inner_max_iter,
                     focuss=FocussConfig(max_iter=cfg.focuss_max_iter, floor=1e-4),
                     sparse_solver=cfg.anm_sparse_solver)


def diagnose(scenario: Scenario) -> DiagnosisResult:
    """Run the diagnosis method selected by the scenario's case and method."""
    cfg = scenario.config
    ms = scenario.measurements
    K, geo = ms.K, cfg.geometry
    m_true = scenario.mask.m
    method = cfg.resolved_method
    if method == "lasso":
        lam = cfg.lambda1 if cfg.lambda1 is not None else default_lambda1(K, ms.snr_linear)
        lcfg = LassoConfig(lam=lam, rho=cfg.lasso_rho, max_iter=cfg.lasso_max_iter,
                           reltol=cfg.lasso_reltol, abstol=cfg.lasso_abstol)
        return diagnose_full_csi(ms, scenario.h_tx, scenario.h_rx, lcfg, m_true, cfg.threshold)
    if method == "cslrmr":
        ccfg = CslrmrConfig(max_iter=cfg.cslrmr_max_iter, reltol=cfg.cslrmr_reltol,
                            abstol=cfg.cslrmr_abstol)
        delta = cfg.delta if cfg.delta is not None else default_delta(K, ms.snr_linear)
        # without CSI the whole cascaded channel is the low-rank unknown
        h_rx = scenario.h_rx if cfg.case == "partial" else np.ones(geo.N)
        return diagnose_partial_csi(ms, h_rx, geo, cfg.lambda2, delta, ccfg, m_true,
                                    cfg.threshold, cfg.guard)
    if method == "anm":
        n_rx = 1 if ms.y.ndim == 1 else ms.y.shape[1]
        return diagnose_no_csi(ms, geo, _anm_config(cfg, K, n_rx), m_true, cfg.threshold, cfg.guard)
    raise InvalidInputError(f"unknown method {method!r}")


def run_trial(cfg: ScenarioConfig, trial: int = 0) -> ResultRow:
    """Simulate and diagnose one trial; solver failures are recorded in the row."""
    L_tx, L_rx, n_rx = cfg.paths
    row = dict(case=cfg.case, N=cfg.N, H=cfg.H, W=cfg.W, K=cfg.K_count, snr_db=float(cfg.snr_db),
               n_faults=cfg.n_faults, L_TX=L_tx, L_RX=L_rx, N_RX=n_rx, trial=trial,
               seed=cfg.seed, method=cfg.resolved_method)
    scenario = simulate(cfg)
    try:
        res = diagnose(scenario)
    except (np.linalg.LinAlgError, InvalidInputError, FloatingPointError) as exc:
        return ResultRow(**row, nmse=math.nan, support_f1=math.nan, runtime_ms=0.0,
                         converged=False, iterations=0, error=f"{type(exc).__name__}: {exc}")
    truth = threshold_faults(scenario.mask.m, cfg.threshold)
    return ResultRow(**row, nmse=float(res.nmse), support_f1=support_f1(truth, res.faults),
                     runtime_ms=float(res.runtime_ms) if cfg.record_timing else 0.0,
                     converged=bool(res.record.converged), iterations=int(res.record.iterations))


def _run_job(job):
    cfg, trial = job
    return run_trial(cfg, trial)


def sweep_jobs(spec: SweepSpec) -> list[tuple[ScenarioConfig, int]]:
    jobs = []
    for point in spec.points():
        for t in range(spec.trials):
            seed = derive_seed(spec.seed, point, t, spec.pair_axes)
            jobs.append((spec.scenario(point, seed), t))
    return jobs


def run_sweep(spec: SweepSpec, parallelism: int = 1, progress=None) -> list[ResultRow]:
    """Cartesian product of the axes times ``trials``; rows come back in grid order."""
    if parallelism < 1:
        raise InvalidInputError(f"parallelism must be >= 1, got {parallelism}")
    jobs = sweep_jobs(spec)
    if parallelism == 1:
        rows = []
        for i, job in enumerate(jobs):
            rows.append(_run_job(job))
            if progress is not None:
                progress(i + 1, len(jobs), rows[-1])
        return rows
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        rows = []
        for i, row in enumerate(pool.map(_run_job, jobs, chunksize=1)):
            rows.append(row)
            if progress is not None:
                progress(i + 1, len(jobs), row)
    return rows


def _fmt(name, value) -> str:
    if name in _FLOAT_FIELDS:
        return format(float(value), ".17g")
    if name == "converged":
        return "1" if value else "0"
    return str(value)


def _parse(name, text):
    if name in _FLOAT_FIELDS:
        return float(text)
    if name in _INT_FIELDS:
        return int(text)
    if name == "converged":
        return text in ("1", "True", "true")
    return text


def persist_results(rows, path, fmt: str = "tabular", append: bool = False):
    """Write rows as CSV (``tabular``) or JSON lines (``records``).

    Floats are written with 17 significant digits, so reading back is
    lossless.  An existing file is only extended when ``append`` is set.
    """
    if fmt not in ("tabular", "records"):
        raise InvalidInputError(f"unknown format {fmt!r}; expected 'tabular' or 'records'")
    exists = os.path.exists(path)
    if exists and not append:
        raise FileExistsError(f"{path} already exists; use append mode (--append) to add rows")
    if exists and fmt == "tabular":
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), None)
        if header is not None and tuple(header) != ROW_FIELDS:
            raise InvalidInputError(f"{path} has a different header; cannot append")
        write_header = header is None
    else:
        write_header = True
    with open(path, "a" if exists else "w", newline="") as fh:
        if fmt == "tabular":
            writer = csv.writer(fh, lineterminator="\n")
            if write_header:
                writer.writerow(ROW_FIELDS)
            for r in rows:
                writer.writerow([_fmt(n, getattr(r, n)) for n in ROW_FIELDS])
        else:
            for r in rows:
                fh.write(json.dumps(asdict(r)) + "\n")


def read_results(path, fmt: Optional[str] = None) -> list[ResultRow]:
    if fmt is None:
        with open(path) as fh:
            first = fh.readline()
        fmt = "records" if first.lstrip().startswith("{") else "tabular"
    rows = []
    with open(path, newline="") as fh:
        if fmt == "tabular":
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != ROW_FIELDS:
                raise InvalidInputError(f"{path}: unexpected header {header}")
            for rec in reader:
                rows.append(ResultRow(**{n: _parse(n, v) for n, v in zip(header, rec)}))
        elif fmt == "records":
            for line in fh:
                if line.strip():
                    rows.append(ResultRow(**json.loads(line)))
        else:
            raise InvalidInputError(f"unknown format {fmt!r}")
    return rows


def summarize(rows, by=("case", "method", "K", "snr_db", "L_TX", "L_RX", "N_RX")) -> list[dict]:
    """Per-group median NMSE (linear and dB), median absolute deviation and mean F1."""
    groups = {}
    for r in rows:
        groups.setdefault(tuple(getattr(r, b) for b in by), []).append(r)
    out = []
    for key, rs in groups.items():
        vals = np.array([r.nmse for r in rs], dtype=float)
        vals = vals[np.isfinite(vals)]
        med = float(np.median(vals)) if vals.size else math.nan
        mad = float(np.median(np.abs(vals - med))) if vals.size else math.nan
        f1 = np.array([r.support_f1 for r in rs], dtype=float)
        out.append(dict(zip(by, key), trials=len(rs), median_nmse=med,
                        median_nmse_db=10 * math.log10(med) if med > 0 else -math.inf,
                        mad_nmse=mad, mean_f1=float(np.nanmean(f1)) if f1.size else math.nan,
                        converged=sum(r.converged for r in rs),
                        runtime_ms=float(np.median([r.runtime_ms for r in rs]))))
    return out
