"""Diagnosis when only the IRS-to-RX channel is known.

Folding ``h_RX`` into the weights, each symbol is a linear functional of
``X = H_TX + D``, where ``H_TX`` is low rank (few TX sub-paths) and
``D = H_TX o (M - 1)`` is sparse.  Both parts are recovered from

    min ||H||_* + lambda_2 ||D||_1   s.t.  ||y - A vec(H + D)||_2 <= delta

and the mask is ``D / H + 1``.

Solver
------
ADMM on the splitting ``x = (H, D, s)`` against ``M w`` with
``w = (H', D')`` and ``M w = (H', D', A vec(H' + D'))``.  The x-block is
separable: singular-value thresholding, complex soft thresholding and a
projection onto the ``delta``-ball around ``y``.  The w-block is a least
squares problem whose normal matrix ``I + 2 A^H A`` does not depend on the
penalty, so it is factored once and the penalty can be adapted freely.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .channel import ArrayGeometry
from .errors import InvalidDimensionError, InvalidInputError
from .linalg import singular_value_threshold, soft_threshold
from .result import ConvergenceRecord, DiagnosisResult
from .system import MeasurementSet, mask_from_deviation, nmse, threshold_faults

__all__ = [
    "FlatOperator",
    "SlrEstimate",
    "CslrmrConfig",
    "build_flat_operator",
    "default_delta",
    "cslrmr_objective",
    "solve_cslrmr",
    "diagnose_partial_csi",
]

DEFAULT_LAMBDA2 = 0.35


@dataclass
class FlatOperator:
    """``K x N`` matrix acting on ``vec(X)`` (column-major) of an ``H x W`` matrix."""

    rows: np.ndarray
    geometry: ArrayGeometry

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=complex))
        if self.rows.shape[1] != self.geometry.N:
            raise InvalidDimensionError(
                f"operator has {self.rows.shape[1]} columns, geometry has N={self.geometry.N}")

    @property
    def K(self) -> int:
        return self.rows.shape[0]

    def vec(self, X):
        return np.asarray(X).reshape(-1, order="F")

    def mat(self, x):
        return np.asarray(x).reshape(self.geometry.H, self.geometry.W, order="F")

    def apply(self, X):
        return self.rows @ self.vec(X)

    def adjoint(self, y):
        return self.mat(self.rows.conj().T @ np.asarray(y))


@dataclass
class SlrEstimate:
    H_hat: np.ndarray
    D_hat: np.ndarray


@dataclass
class CslrmrConfig:
    beta: float = 1.0
    max_iter: int = 5000
    reltol: float = 1e-6
    abstol: float = 1e-9
    adapt_beta: bool = True
    track_objective: bool = False


def build_flat_operator(weights, h_rx, geometry: ArrayGeometry) -> FlatOperator:
    """Row k is ``vec(H_RX o F_mat,k)^T``, i.e. ``(h_RX o f_k)^T``."""
    weights = np.atleast_2d(np.asarray(weights, dtype=complex))
    h_rx = np.asarray(h_rx, dtype=complex).ravel()
    if weights.shape[1] != geometry.N or h_rx.size != geometry.N:
        raise InvalidDimensionError("weighting vectors and h_RX must have length N = H*W")
    return FlatOperator(weights * h_rx[None, :], geometry)


def default_delta(K: int, snr_linear: float) -> float:
    """Expected noise norm ``sqrt(K/SNR)`` plus 10 % slack."""
    if np.isinf(snr_linear):
        return 0.0
    return 1.1 * np.sqrt(K / snr_linear)


def cslrmr_objective(H_hat, D_hat, lambda2) -> float:
    return float(np.linalg.norm(H_hat, "nuc") + lambda2 * np.sum(np.abs(D_hat)))


def _project_ball(v, center, radius):
    diff = v - center
    n = np.linalg.norm(diff)
    if n <= radius:
        return v
    return center + diff * (radius / n)


def solve_cslrmr(y, op: FlatOperator, lambda2: float = DEFAULT_LAMBDA2,
                 delta: float = 0.0, cfg: Optional[CslrmrConfig] = None):
    """Sparse-plus-low-rank recovery from compressed functionals.

    Returns ``(SlrEstimate, record)``.  With ``cfg.track_objective`` the
    record history holds the objective ``||H||_* + lambda2 ||D||_1`` at
    every iterate instead of the residuals.
    """
    if delta < 0:
        raise InvalidInputError(f"delta must be nonnegative, got {delta}")
    if not lambda2 > 0:
        raise InvalidInputError(f"lambda2 must be positive, got {lambda2}")
    cfg = cfg or CslrmrConfig()
    y = np.asarray(y, dtype=complex).ravel()
    if y.size != op.K:
        raise InvalidDimensionError(f"y has length {y.size}, operator has {op.K} rows")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("y contains NaN or inf")

    A = op.rows
    Ah = A.conj().T
    geo = op.geometry
    N = geo.N
    normal = np.eye(N) + 2.0 * (Ah @ A)
    inv = sla.cho_solve(sla.cho_factor(normal), np.eye(N))

    hp = np.zeros(N, dtype=complex)   # w-block: H', D'
    dp = np.zeros(N, dtype=complex)
    Ap = np.zeros(op.K, dtype=complex)
    uh = np.zeros(N, dtype=complex)   # scaled duals
    ud = np.zeros(N, dtype=complex)
    us = np.zeros(op.K, dtype=complex)
    beta = cfg.beta
    sqrt_n = np.sqrt(2 * N + op.K)
    record = ConvergenceRecord()
    r_norm = s_norm = np.inf

    for it in range(1, cfg.max_iter + 1):
        # x-block: separable proximal steps
        h = op.vec(singular_value_threshold(op.mat(hp - uh), 1.0 / beta))
        d = soft_threshold(dp - ud, lambda2 / beta)
        s = _project_ball(Ap - us, y, delta)

        # w-block: least squares coupling through A
        a, b, c = h + uh, d + ud, s + us
        p = inv @ (a + b + 2.0 * (Ah @ c))
        hp_old, dp_old, Ap_old = hp, dp, Ap
        hp = 0.5 * (p + a - b)
        dp = 0.5 * (p - a + b)
        Ap = A @ p

        rh, rd, rs = h - hp, d - dp, s - Ap
        uh, ud, us = uh + rh, ud + rd, us + rs

        r_norm = np.sqrt(np.linalg.norm(rh) ** 2 + np.linalg.norm(rd) ** 2 + np.linalg.norm(rs) ** 2)
        s_norm = beta * np.sqrt(np.linalg.norm(hp - hp_old) ** 2 + np.linalg.norm(dp - dp_old) ** 2
                                + np.linalg.norm(Ap - Ap_old) ** 2)
        x_norm = np.sqrt(np.linalg.norm(h) ** 2 + np.linalg.norm(d) ** 2 + np.linalg.norm(s) ** 2)
        w_norm = np.sqrt(np.linalg.norm(hp) ** 2 + np.linalg.norm(dp) ** 2 + np.linalg.norm(Ap) ** 2)
        u_norm = np.sqrt(np.linalg.norm(uh) ** 2 + np.linalg.norm(ud) ** 2 + np.linalg.norm(us) ** 2)
        eps_pri = sqrt_n * cfg.abstol + cfg.reltol * max(x_norm, w_norm)
        eps_dual = sqrt_n * cfg.abstol + cfg.reltol * beta * u_norm
        if cfg.track_objective:
            record.history.append(cslrmr_objective(op.mat(h), d, lambda2))
        else:
            record.history.append(float(r_norm))
        if r_norm <= eps_pri and s_norm <= eps_dual:
            record.converged = True
            break
        if cfg.adapt_beta:
            if r_norm > 10.0 * s_norm:
                beta *= 2.0
                uh, ud, us = uh / 2.0, ud / 2.0, us / 2.0
            elif s_norm > 10.0 * r_norm:
                beta /= 2.0
                uh, ud, us = uh * 2.0, ud * 2.0, us * 2.0

    record.iterations = it
    record.primal_residual = float(r_norm)
    record.dual_residual = float(s_norm)
    return SlrEstimate(op.mat(h), op.mat(d)), record


def diagnose_partial_csi(measurements: MeasurementSet, h_rx, geometry: ArrayGeometry,
                         lambda2: float = DEFAULT_LAMBDA2, delta: Optional[float] = None,
                         cfg: Optional[CslrmrConfig] = None, m_true=None,
                         threshold: float = 0.2, guard: float = 1e-6) -> DiagnosisResult:
    """Recover the mask with only ``h_RX`` known.

    Passing ``h_rx = 1`` treats the whole cascaded channel as the unknown
    low-rank part, which is how this method is applied without any CSI.
    """
    start = time.perf_counter()
    op = build_flat_operator(measurements.weights, h_rx, geometry)
    if delta is None:
        delta = default_delta(measurements.K, measurements.snr_linear)
    est, record = solve_cslrmr(measurements.y, op, lambda2, delta, cfg)
    m_hat = op.vec(mask_from_deviation(est.D_hat, est.H_hat, guard))
    runtime = (time.perf_counter() - start) * 1e3
    return DiagnosisResult(
        m_hat=m_hat,
        faults=threshold_faults(m_hat, threshold),
        components={"H_hat": est.H_hat, "D_hat": est.D_hat},
        record=record,
        nmse=None if m_true is None else nmse(m_true, m_hat),
        runtime_ms=runtime,
    )
