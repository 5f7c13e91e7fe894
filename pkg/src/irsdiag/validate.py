"""Fast self-checks of the numerical kernels against independent oracles.

Each check rebuilds its reference by brute force (explicit Kronecker
shift matrices, dense SVDs, subgradient conditions) rather than through
the cached index tables it is checking.  Kernel functions can be swapped
through ``overrides`` to confirm that a broken kernel is caught.
"""
from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .anm import AnmSolver, default_anm_config
from .channel import ArrayGeometry, channel_matrix, channel_vector, sample_paths
from .system import sample_weights

__all__ = ["CheckResult", "ValidationReport", "validate_suite", "CHECKS"]

TOL = 1e-10


@dataclass
class CheckResult:
    name: str
    passed: bool
    runtime_ms: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            out.append(f"{status}  {c.name:<22s} {c.runtime_ms:9.2f} ms  {c.detail}")
        return out


def _shift(n, k):
    return np.eye(n, k=-k)


def _brute_toeplitz(u, H, W):
    """``sum_k u_k (S_k1 kron S_k2)`` plus the Hermitian mirror, with explicit shifts."""
    N = H * W
    T = np.zeros((N, N), dtype=complex)
    for k, (k1, k2) in enumerate(linalg.halfspace_indices(H, W)):
        P = np.kron(_shift(H, k1), _shift(W, k2))
        if k == 0:
            T += u[0].real * P
        else:
            T += u[k] * P + np.conj(u[k]) * P.T
    return T


def check_toeplitz(k, rng, H=3, W=4):
    n_u = linalg.toeplitz_length(H, W)
    u = rng.standard_normal(n_u) + 1j * rng.standard_normal(n_u)
    u[0] = u[0].real
    err = np.abs(k["twofold_toeplitz"](u, H, W) - _brute_toeplitz(u, H, W)).max()
    return err < TOL, f"max err {err:.1e}"


def check_adjoint(k, rng, H=3, W=4):
    N = H * W
    Q = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    got = k["toeplitz_adjoint"](Q, H, W)
    ref = np.array([np.trace(np.kron(_shift(H, k1), _shift(W, k2)).T @ Q)
                    for k1, k2 in linalg.halfspace_indices(H, W)])
    err = np.abs(got - ref).max()
    return err < TOL, f"max err {err:.1e}"


def check_psi(k, rng, H=3, W=4):
    """``Psi_k`` equals the number of stored copies of ``u_k``: ``T*(T(e_k))_k`` without mirrors."""
    psi = k["psi_matrix"](H, W)
    ref = np.array([np.kron(_shift(H, k1), _shift(W, k2)).sum()
                    for k1, k2 in linalg.halfspace_indices(H, W)])
    err = np.abs(np.asarray(psi) - ref).max() if np.shape(psi) == ref.shape else np.inf
    return err < TOL, f"max err {err:.1e}"


def check_psd_projection(k, rng, n=12):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    G = 0.5 * (A + A.conj().T)
    Z = k["psd_project"](G)
    # optimality: Z >= 0, Z - G >= 0 and <Z, Z - G> = 0
    lo_z = np.linalg.eigvalsh(Z).min()
    lo_r = np.linalg.eigvalsh(Z - G).min()
    comp = abs(np.vdot(Z, Z - G))
    scale = np.linalg.norm(G) ** 2
    ok = lo_z > -TOL * scale and lo_r > -TOL * scale and comp < TOL * scale
    return ok, f"min eig {lo_z:.1e}, residual min eig {lo_r:.1e}, complementarity {comp:.1e}"


def check_prox(k, rng, n=40):
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    kappa = 0.7
    x = k["soft_threshold"](z, kappa)
    mag = np.abs(z)
    ref = np.where(mag > kappa, z * (1 - kappa / np.where(mag > 0, mag, 1)), 0)
    e1 = np.abs(x - ref).max()
    M = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    ref2 = (U * np.maximum(s - 1.0, 0)) @ Vh
    e2 = np.abs(k["singular_value_threshold"](M, 1.0) - ref2).max()
    R = rng.standard_normal((8, 3)) + 1j * rng.standard_normal((8, 3))
    rn = np.linalg.norm(R, axis=1, keepdims=True)
    ref3 = R * np.maximum(1 - 1.5 / rn, 0)
    e3 = np.abs(k["row_group_shrink"](R, 1.5) - ref3).max()
    err = max(e1, e2, e3)
    return err < TOL, f"max err {err:.1e}"


def check_smv_mmv(k, rng, H=3, W=3, K=7, sweeps=25):
    geo = ArrayGeometry(H, W)
    F = sample_weights(K, geo.N, rng)
    y = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    cfg = default_anm_config(K, 1, max_iter=sweeps, tol=0.0)
    smv = AnmSolver(F, y, geo, cfg)
    mmv = AnmSolver(F, y[:, None], geo, cfg)
    a, b = smv.init_state(), mmv.init_state()
    err = 0.0
    for _ in range(sweeps):
        a, b = smv.step(a), mmv.step(b)
        err = max(err, np.abs(a.H - b.H).max(), np.abs(a.D - b.D).max(), np.abs(a.Z - b.Z).max())
    return err < TOL, f"max iterate gap {err:.1e}"


def check_channel_forms(k, rng, H=4, W=5):
    geo = ArrayGeometry(H, W)
    paths = sample_paths(3, rng)
    v = channel_vector(paths, geo)
    Mx = channel_matrix(paths, geo)
    err = np.abs(Mx.reshape(-1, order="F") - v).max()
    return err < 1e-12, f"max err {err:.1e}"


CHECKS = [
    ("toeplitz", check_toeplitz),
    ("toeplitz_adjoint", check_adjoint),
    ("psi", check_psi),
    ("psd_projection", check_psd_projection),
    ("prox", check_prox),
    ("smv_mmv_equivalence", check_smv_mmv),
    ("channel_forms", check_channel_forms),
]

KERNELS = ("twofold_toeplitz", "toeplitz_adjoint", "psi_matrix", "psd_project",
           "soft_threshold", "singular_value_threshold", "row_group_shrink")


def validate_suite(overrides=None, stream="stdout", seed=0) -> ValidationReport:
    """Run every check, print one line each, and return the report.

    ``overrides`` maps kernel names (see ``KERNELS``) to replacement
    callables.  ``stream=None`` silences the output.
    """
    if stream == "stdout":
        stream = sys.stdout
    kernels = {name: getattr(linalg, name) for name in KERNELS}
    kernels.update(overrides or {})
    report = ValidationReport()
    for name, fn in CHECKS:
        rng = np.random.default_rng([seed, len(report.checks)])
        t0 = time.perf_counter()
        try:
            ok, detail = fn(kernels, rng)
        except Exception as exc:  # a broken kernel may raise instead of returning garbage
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        report.checks.append(CheckResult(name, bool(ok), (time.perf_counter() - t0) * 1e3, detail))
        if stream is not None:
            print(report.lines()[-1], file=stream)
    return report
