"""Diagnosis without channel knowledge via atomic norm minimisation.

The cascaded channel ``h = h_TX o h_RX`` is a sum of a few 2-D array atoms,
so it is penalised by the atomic norm (through its two-level Toeplitz
semidefinite characterisation) while the failure deviation
``d = h o (m - 1)`` is penalised by l1, or by the row-wise l_{2,1} norm when
an ``N_RX``-antenna receiver stacks its observations into ``Y``:

    min 1/2 ||Y - F(H + D)||_F^2 + tau/2 (c tr T(u) + tr V) + lambda R(D)
    s.t. Z = [[T(u), H], [H^H, V]] >= 0

The ADMM sweeps V, u, H, D, Z and the multiplier in that order.  ``c`` is
the weight of the Toeplitz trace; the default update subtracts
``tau/(2 rho)`` from the ``(0, 0)`` entry of ``u`` (``c = 1``), while
``exact_trace=True`` uses ``c = 1/N`` so that the relaxation value is the
atomic norm itself.  With one column (``N_RX = 1``) the same code path is
the single-measurement solver.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .channel import ArrayGeometry
from .errors import InvalidDimensionError, InvalidInputError
from .full_csi import LassoADMM
from .linalg import get_layout, psd_project
from .result import ConvergenceRecord, DiagnosisResult
from .system import MeasurementSet, mask_from_deviation, nmse, threshold_faults

__all__ = [
    "AnmConfig",
    "AnmState",
    "AnmSolver",
    "FocussConfig",
    "default_anm_config",
    "default_lambda_sparse",
    "anm_smv_step",
    "solve_anm_smv",
    "solve_anm_mmv",
    "atomic_norm_value",
    "m_focuss",
    "group_lasso_objective",
    "retrieve_mask_smv",
    "retrieve_mask_mmv",
    "diagnose_no_csi",
]


@dataclass
class FocussConfig:
    max_iter: int = 300
    tol: float = 1e-6
    prune: float = 1e-10
    # floor on the reweighting, relative to the largest row norm; a positive
    # floor lets rows zeroed in one warm-started call re-enter in the next
    floor: float = 0.0


@dataclass
class AnmConfig:
    tau: float
    lambda_sparse: float
    rho: float = 1.0
    max_iter: int = 2000
    tol: float = 1e-6
    inner_rho: float = 1.0
    inner_max_iter: int = 20
    inner_tol: float = 1e-8
    focuss: FocussConfig = None
    sparse_solver: str = "auto"
    exact_trace: bool = False
    # residual balancing: rescale rho by ``rho_factor`` when the primal and dual
    # residuals differ by more than ``rho_ratio``
    adapt_rho: bool = False
    rho_ratio: float = 10.0
    rho_factor: float = 2.0
    adapt_every: int = 10

    def __post_init__(self):
        if self.focuss is None:
            # each sweep warm-starts from the previous D, so a few passes suffice
            self.focuss = FocussConfig(max_iter=10, floor=1e-4)
        for name in ("tau", "lambda_sparse", "rho", "inner_rho"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sparse_solver not in ("auto", "admm", "focuss"):
            raise InvalidInputError(f"unknown sparse solver {self.sparse_solver!r}")


def default_lambda_sparse(K: int, n_rx: int = 1, nrx_power: float = 0.0) -> float:
    """``0.006 K / N_RX^p``.

    Row norms of ``D`` and the multi-column atomic norm of ``H`` both grow
    like ``sqrt(N_RX)``, so ``p = 0`` keeps the balance of the
    single-antenna problem.  ``p = 1`` gives the weaker weight
    ``0.006 K / N_RX``, under which the sparse block absorbs most of the
    channel once ``N_RX = 4``.
    """
    return 0.006 * K / n_rx ** nrx_power


def default_anm_config(K: int, n_rx: int = 1, nrx_power: float = 0.0, **overrides) -> AnmConfig:
    """Regularisation ``tau = 0.004 K`` and ``lambda`` from :func:`default_lambda_sparse`."""
    return AnmConfig(tau=0.004 * K, lambda_sparse=default_lambda_sparse(K, n_rx, nrx_power),
                     **overrides)


@dataclass
class AnmState:
    """ADMM iterate.  ``V`` is ``N_c x N_c`` (the scalar ``v`` when ``N_c = 1``)."""

    V: np.ndarray
    u: np.ndarray
    H: np.ndarray
    D: np.ndarray
    Z: np.ndarray
    Lam: np.ndarray
    U_inner: Optional[np.ndarray] = None
    rank: Optional[int] = None

    @property
    def v(self) -> float:
        return float(self.V[0, 0].real)

    @property
    def h(self) -> np.ndarray:
        return self.H[:, 0]

    @property
    def d(self) -> np.ndarray:
        return self.D[:, 0]

    def copy(self) -> "AnmState":
        arrays = (self.V, self.u, self.H, self.D, self.Z, self.Lam, self.U_inner)
        return AnmState(*(None if a is None else a.copy() for a in arrays), rank=self.rank)


def group_lasso_objective(R, F, D, lam) -> float:
    """``1/2 ||R - F D||_F^2 + lam ||D||_{2,1}``."""
    E = R - F @ D
    rows = np.sqrt(np.sum(np.abs(D) ** 2, axis=1))
    return float(0.5 * np.vdot(E, E).real + lam * rows.sum())


def m_focuss(R, F, lam: float, cfg: Optional[FocussConfig] = None, D0=None):
    """Row-sparse regression ``min 1/2 ||R - F D||^2 + lam ||D||_{2,1}`` by M-FOCUSS.

    Iteratively reweighted least squares with diversity ``p = 1``: with
    ``Q = diag(||d_n||)`` each pass solves
    ``D = Q F^H (F Q F^H + lam I)^{-1} R``, whose fixed points satisfy the
    stationarity condition of the objective.  Starts from the minimum-norm
    solution unless ``D0`` is given.  Returns ``(D, record)``.
    """
    cfg = cfg or FocussConfig()
    R = np.asarray(R, dtype=complex)
    squeeze = R.ndim == 1
    if squeeze:
        R = R[:, None]
    F = np.asarray(F, dtype=complex)
    K, N = F.shape
    if R.shape[0] != K:
        raise InvalidDimensionError(f"R has {R.shape[0]} rows, F has {K}")
    if lam < 0:
        raise InvalidInputError(f"lambda must be nonnegative, got {lam}")
    record = ConvergenceRecord()
    if not np.any(R):
        D = np.zeros((N, R.shape[1]), dtype=complex)
        record.converged = True
        return (D[:, 0] if squeeze else D), record

    if D0 is None:
        w = np.ones(N)
    else:
        D0 = np.asarray(D0, dtype=complex).reshape(N, -1)
        w = np.sqrt(np.sum(np.abs(D0) ** 2, axis=1))
        w = np.maximum(w, cfg.floor * max(w.max(), 1e-300))
    D = None
    change = np.inf
    for it in range(1, cfg.max_iter + 1):
        FQ = F * w[None, :]
        G = FQ @ F.conj().T
        G[np.diag_indices(K)] += lam
        D_new = w[:, None] * (F.conj().T @ sla.solve(G, R, assume_a="pos"))
        if D is not None:
            change = np.linalg.norm(D_new - D) / max(np.linalg.norm(D_new), 1e-300)
        D = D_new
        record.history.append(float(change))
        if change < cfg.tol:
            record.converged = True
            break
        w = np.sqrt(np.sum(np.abs(D) ** 2, axis=1))
        w = np.maximum(w, cfg.floor * w.max())
    rows = np.sqrt(np.sum(np.abs(D) ** 2, axis=1))
    D[rows < cfg.prune] = 0.0
    record.iterations = it
    record.primal_residual = float(change)
    return (D[:, 0] if squeeze else D), record


class AnmSolver:
    """Cached factorisations and index tables for one ANM problem instance."""

    low_rank_cutoff = 0.25

    def __init__(self, F, Y, geometry: ArrayGeometry, cfg: AnmConfig):
        F = np.atleast_2d(np.asarray(F, dtype=complex))
        Y = np.asarray(Y, dtype=complex)
        if Y.ndim == 1:
            Y = Y[:, None]
        if F.shape[1] != geometry.N:
            raise InvalidDimensionError(f"F has {F.shape[1]} columns, geometry has N={geometry.N}")
        if Y.shape[0] != F.shape[0]:
            raise InvalidDimensionError(f"Y has {Y.shape[0]} rows, F has {F.shape[0]}")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(Y))):
            raise InvalidInputError("measurements contain NaN or inf")
        self.F, self.Y, self.geometry, self.cfg = F, Y, geometry, cfg
        self.N = geometry.N
        self.n_c = Y.shape[1]
        # atoms are a_W kron a_H, so T(u) has W blocks of H x H Toeplitz matrices
        self.layout = get_layout(geometry.W, geometry.H)
        self.psi_inv = 1.0 / self.layout.psi
        self.Fh = F.conj().T
        self.FhF = self.Fh @ F
        self.FhY = self.Fh @ Y
        self.set_rho(cfg.rho)

        mode = cfg.sparse_solver
        if mode == "auto":
            mode = "admm" if self.n_c == 1 else "focuss"
        self.sparse_mode = mode
        if mode == "admm":
            self.inner = LassoADMM(F, cfg.inner_rho, penalty="group")

    def set_rho(self, rho: float):
        """Refactor the ``h``-update inverse for a new penalty."""
        self.rho = float(rho)
        gram = self.FhF + 2.0 * self.rho * np.eye(self.N)
        self.h_inv = sla.cho_solve(sla.cho_factor(gram), np.eye(self.N))
        c = 1.0 / self.N if self.cfg.exact_trace else 1.0
        self.u_shift = self.cfg.tau / (2.0 * self.rho) * c

    def init_state(self) -> AnmState:
        N, n_c = self.N, self.n_c
        size = N + n_c
        return AnmState(
            V=np.zeros((n_c, n_c), dtype=complex),
            u=np.zeros(self.layout.n_u, dtype=complex),
            H=np.zeros((N, n_c), dtype=complex),
            D=np.zeros((N, n_c), dtype=complex),
            Z=np.zeros((size, size), dtype=complex),
            Lam=np.zeros((size, size), dtype=complex),
        )

    def block_matrix(self, u, H, V) -> np.ndarray:
        return np.block([[self.layout.toeplitz(u), H], [H.conj().T, V]])

    def sparse_step(self, R, state: AnmState):
        lam = self.cfg.lambda_sparse
        if self.sparse_mode == "admm":
            # ||A X - B||^2 + 2 lam R(X) has the same minimiser as the 1/2-scaled problem;
            # a single column is solved as a vector, where row shrinkage is soft thresholding
            if self.n_c == 1:
                U0 = None if state.U_inner is None else state.U_inner[:, 0]
                d, u, _ = self.inner.solve(R[:, 0], 2.0 * lam, self.cfg.inner_max_iter,
                                           reltol=self.cfg.inner_tol,
                                           abstol=self.cfg.inner_tol * 1e-2,
                                           Z0=state.D[:, 0], U0=U0)
                return d[:, None], u[:, None]
            D, U, _ = self.inner.solve(R, 2.0 * lam, self.cfg.inner_max_iter,
                                       reltol=self.cfg.inner_tol, abstol=self.cfg.inner_tol * 1e-2,
                                       Z0=state.D, U0=state.U_inner)
            return D, U
        D0 = state.D if np.any(state.D) else None
        D, _ = m_focuss(R, self.F, lam, self.cfg.focuss, D0=D0)
        return D, None

    def step(self, state: AnmState) -> AnmState:
        """One sweep V -> u -> H -> D -> Z -> Lambda."""
        N, rho, cfg = self.N, self.rho, self.cfg
        Z0, Z1, Zc = state.Z[:N, :N], state.Z[:N, N:], state.Z[N:, N:]
        L0, L1, Lc = state.Lam[:N, :N], state.Lam[:N, N:], state.Lam[N:, N:]

        V = Zc + (Lc - 0.5 * cfg.tau * np.eye(self.n_c)) / rho
        V = 0.5 * (V + V.conj().T)

        u = self.psi_inv * self.layout.adjoint(Z0 + L0 / rho)
        u[0] = u[0].real - self.u_shift

        H = self.h_inv @ (self.FhY - self.Fh @ (self.F @ state.D) + 2.0 * L1 + 2.0 * rho * Z1)

        D, U_inner = self.sparse_step(self.Y - self.F @ H, state)

        M = self.block_matrix(u, H, V)
        # partial eigendecomposition pays off while the iterate stays low rank
        low_rank = state.rank is not None and state.rank < self.low_rank_cutoff * M.shape[0]
        Z, rank = psd_project(M - state.Lam / rho, check=False, positive_only=low_rank,
                              return_rank=True)
        Lam = state.Lam + rho * (Z - M)
        return AnmState(V=V, u=u, H=H, D=D, Z=Z, Lam=Lam, U_inner=U_inner, rank=rank)

    def objective(self, state: AnmState) -> float:
        """Penalised objective at ``(u, H, D, V)`` with the solver's trace weight."""
        E = self.Y - self.F @ (state.H + state.D)
        c = 1.0 / self.N if self.cfg.exact_trace else 1.0
        trace_t = self.N * state.u[0].real
        rows = np.sqrt(np.sum(np.abs(state.D) ** 2, axis=1))
        return float(0.5 * np.vdot(E, E).real
                     + 0.5 * self.cfg.tau * (c * trace_t + np.trace(state.V).real)
                     + self.cfg.lambda_sparse * rows.sum())

    def _balance(self, old: AnmState, new: AnmState):
        r = np.linalg.norm(new.Z - self.block_matrix(new.u, new.H, new.V))
        s = self.rho * np.linalg.norm(new.Z - old.Z)
        if r > self.cfg.rho_ratio * s:
            self.set_rho(self.rho * self.cfg.rho_factor)
        elif s > self.cfg.rho_ratio * r:
            self.set_rho(self.rho / self.cfg.rho_factor)

    def primal_residual(self, state: AnmState) -> float:
        return float(np.linalg.norm(state.Z - self.block_matrix(state.u, state.H, state.V)))

    def solve(self, state: Optional[AnmState] = None, callback=None):
        cfg = self.cfg
        state = state or self.init_state()
        record = ConvergenceRecord()
        change = np.inf
        for it in range(1, cfg.max_iter + 1):
            new = self.step(state)
            if cfg.adapt_rho and it % cfg.adapt_every == 0:
                self._balance(state, new)
            dH = np.linalg.norm(new.H - state.H) ** 2 + np.linalg.norm(new.D - state.D) ** 2
            scale = np.linalg.norm(new.H) ** 2 + np.linalg.norm(new.D) ** 2
            change = np.sqrt(dH / scale) if scale > 0 else np.sqrt(dH)
            state = new
            record.history.append(float(change))
            if callback is not None:
                callback(it, state)
            if change < cfg.tol:
                record.converged = True
                break
        record.iterations = it
        record.primal_residual = self.primal_residual(state)
        record.dual_residual = float(change)
        return state, record


def anm_smv_step(state: AnmState, F, y, cfg: AnmConfig, geometry: ArrayGeometry) -> AnmState:
    """One ADMM sweep of the single-antenna problem (builds a fresh solver cache)."""
    y = np.asarray(y).reshape(-1, 1)
    return AnmSolver(F, y, geometry, cfg).step(state)


def solve_anm_smv(F, y, geometry: ArrayGeometry, cfg: AnmConfig):
    """Joint recovery of the cascaded channel and the failure deviation.

    Returns ``(h_hat, d_hat, record)``.
    """
    y = np.asarray(y)
    if y.ndim != 1:
        raise InvalidDimensionError("single-antenna measurements must be a vector")
    solver = AnmSolver(F, y[:, None], geometry, cfg)
    state, record = solver.solve()
    record.final_state = state
    return state.H[:, 0], state.D[:, 0], record


def solve_anm_mmv(F, Y, geometry: ArrayGeometry, cfg: AnmConfig):
    """Multi-antenna recovery; returns ``(H_hat, D_hat, record)`` with ``N x N_RX`` blocks."""
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    solver = AnmSolver(F, Y, geometry, cfg)
    state, record = solver.solve()
    record.final_state = state
    return state.H, state.D, record


def atomic_norm_value(h, geometry: ArrayGeometry, cfg: Optional[AnmConfig] = None,
                      data_weight: float = 1e6, tol: float = 1e-9,
                      max_iter: int = 5000) -> tuple[float, ConvergenceRecord]:
    """Value of the two-level Toeplitz relaxation of ``||h||_A``.

    The data term pins the ``h`` block: ``F = sqrt(w) I`` and ``y = sqrt(w) h``
    with ``w = data_weight * tau``, and there is no sparse part.  Iterates
    until the relative primal residual and the relative change of the value
    fall below ``tol``.  Returns ``(1/2 (tr T(u)/N + v), record)``.
    """
    h = np.asarray(h, dtype=complex).ravel()
    if h.size != geometry.N:
        raise InvalidDimensionError(f"h has length {h.size}, geometry has N={geometry.N}")
    record = ConvergenceRecord(converged=True)
    if not np.any(h):
        return 0.0, record
    if cfg is None:
        # small penalties move (u, v) fastest; scale with the per-entry magnitude of h
        scale = np.linalg.norm(h) / np.sqrt(geometry.N)
        cfg = AnmConfig(tau=1.0, lambda_sparse=1.0, rho=0.003 / scale)
    cfg = replace(cfg, exact_trace=True)
    root = np.sqrt(data_weight * cfg.tau)
    solver = _PinnedSolver(root * np.eye(geometry.N), (root * h)[:, None], geometry, cfg)
    state = solver.init_state()
    record = ConvergenceRecord()
    value = 0.0
    for it in range(1, max_iter + 1):
        state = solver.step(state)
        new = 0.5 * (state.u[0].real + state.v)
        M = solver.block_matrix(state.u, state.H, state.V)
        primal = np.linalg.norm(state.Z - M) / max(np.linalg.norm(M), 1e-300)
        change = abs(new - value) / max(abs(new), 1e-300)
        value = new
        record.history.append(float(value))
        if primal < tol and change < tol:
            record.converged = True
            break
    record.iterations = it
    record.primal_residual = float(primal)
    record.dual_residual = float(change)
    return float(value), record


class _PinnedSolver(AnmSolver):
    """ANM ADMM with the sparse block held at zero."""

    def sparse_step(self, R, state):
        return np.zeros_like(state.D), None


def retrieve_mask_smv(h_hat, d_hat, guard: float = 1e-6) -> np.ndarray:
    """``d_hat / h_hat + 1`` with guarded division."""
    return mask_from_deviation(d_hat, h_hat, guard)


def retrieve_mask_mmv(H_hat, D_hat, guard: float = 1e-6) -> np.ndarray:
    """Row-wise mean of ``D_hat / H_hat + 1`` over columns that pass the guard."""
    H_hat = np.asarray(H_hat, dtype=complex)
    D_hat = np.asarray(D_hat, dtype=complex)
    if H_hat.ndim == 1:
        H_hat, D_hat = H_hat[:, None], D_hat[:, None]
    if H_hat.shape != D_hat.shape:
        raise InvalidDimensionError(f"shapes differ: {H_hat.shape} vs {D_hat.shape}")
    mag = np.abs(H_hat)
    peak = mag.max() if mag.size else 0.0
    ok = (mag > 0) & (mag >= guard * peak)
    ratios = np.zeros(H_hat.shape, dtype=complex)
    ratios[ok] = D_hat[ok] / H_hat[ok]
    counts = ok.sum(axis=1)
    m = np.ones(H_hat.shape[0], dtype=complex)
    has = counts > 0
    m[has] = 1.0 + ratios[has].sum(axis=1) / counts[has]
    return m


def diagnose_no_csi(measurements: MeasurementSet, geometry: ArrayGeometry,
                    cfg: Optional[AnmConfig] = None, m_true=None,
                    threshold: float = 0.2, guard: float = 1e-6) -> DiagnosisResult:
    """ANM diagnosis; dispatches on whether ``measurements.y`` is a vector or a matrix."""
    start = time.perf_counter()
    Y = np.asarray(measurements.y)
    n_rx = 1 if Y.ndim == 1 else Y.shape[1]
    if cfg is None:
        cfg = default_anm_config(measurements.K, n_rx)
    if Y.ndim == 1:
        h_hat, d_hat, record = solve_anm_smv(measurements.weights, Y, geometry, cfg)
        m_hat = retrieve_mask_smv(h_hat, d_hat, guard)
        components = {"h_hat": h_hat, "d_hat": d_hat}
    else:
        H_hat, D_hat, record = solve_anm_mmv(measurements.weights, Y, geometry, cfg)
        m_hat = retrieve_mask_mmv(H_hat, D_hat, guard)
        components = {"H_hat": H_hat, "D_hat": D_hat}
    runtime = (time.perf_counter() - start) * 1e3
    return DiagnosisResult(
        m_hat=m_hat,
        faults=threshold_faults(m_hat, threshold),
        components=components,
        record=record,
        nmse=None if m_true is None else nmse(m_true, m_hat),
        runtime_ms=runtime,
    )
