"""Complex linear-algebra kernels shared by the diagnosis solvers.

Two-level Toeplitz machinery
----------------------------
A vector ``u`` of length ``N_u = (H-1)(2W-1) + W`` parameterises an
``N x N`` (``N = H*W``) Hermitian matrix ``T(u)`` made of ``H x H`` blocks,
each a ``W x W`` Toeplitz matrix.  Entry ``u[k]`` belongs to the diagonal
pair ``(k1, k2)`` returned by :func:`halfspace_indices`; it is written on
every position ``(r, c)`` whose block offset is ``k1`` and in-block offset is
``k2``, and its conjugate on the mirrored positions.

The remaining functions are the proximal operators used by the ADMM solvers.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import InvalidDimensionError, InvalidInputError

__all__ = [
    "ToeplitzLayout",
    "halfspace_indices",
    "toeplitz_length",
    "twofold_toeplitz",
    "toeplitz_adjoint",
    "psi_matrix",
    "psd_project",
    "soft_threshold",
    "singular_value_threshold",
    "row_group_shrink",
    "hermitian_asymmetry",
]

HERMITIAN_RTOL = 1e-10


def _check_dims(H, W):
    if int(H) != H or int(W) != W or H < 1 or W < 1:
        raise InvalidDimensionError(f"H and W must be positive integers, got ({H}, {W})")
    return int(H), int(W)


def toeplitz_length(H: int, W: int) -> int:
    H, W = _check_dims(H, W)
    return (H - 1) * (2 * W - 1) + W


def halfspace_indices(H: int, W: int) -> list[tuple[int, int]]:
    """Diagonal pairs ``(k1, k2)`` in the storage order of ``u``.

    Block 0 holds ``(0, 0..W-1)``; block ``k1 >= 1`` holds
    ``(k1, -(W-1)..W-1)``.
    """
    H, W = _check_dims(H, W)
    pairs = [(0, k2) for k2 in range(W)]
    for k1 in range(1, H):
        pairs.extend((k1, k2) for k2 in range(-(W - 1), W))
    return pairs


class ToeplitzLayout:
    """Cached index tables for ``T(u)`` and its adjoint at fixed ``(H, W)``.

    Building the tables costs ``O(N^2)`` once; afterwards :meth:`toeplitz`
    is a gather and :meth:`adjoint` a scatter-add over the stored positions.
    """

    def __init__(self, H: int, W: int):
        H, W = _check_dims(H, W)
        self.H, self.W = H, W
        self.N = H * W
        self.pairs = halfspace_indices(H, W)
        self.n_u = len(self.pairs)
        lookup = {p: k for k, p in enumerate(self.pairs)}

        r = np.arange(self.N)
        block, inner = np.divmod(r, W)
        k1 = block[:, None] - block[None, :]
        k2 = inner[:, None] - inner[None, :]
        stored = (k1 > 0) | ((k1 == 0) & (k2 >= 0))
        # mirrored positions read conj(u) at the negated pair
        a1 = np.where(stored, k1, -k1)
        a2 = np.where(stored, k2, -k2)
        table = np.full((H, 2 * W - 1), -1, dtype=np.intp)
        for (p1, p2), k in lookup.items():
            table[p1, p2 + W - 1] = k
        idx = table[a1, a2 + W - 1]
        self.gather = np.where(stored, idx, idx + self.n_u)
        self.stored_flat = np.flatnonzero(stored)
        self.stored_idx = idx.ravel()[self.stored_flat]

        # Psi: number of stored (unconjugated) occurrences of each pair
        self.psi = np.array([(H - p1) * (W - abs(p2)) for p1, p2 in self.pairs], dtype=float)

    def toeplitz(self, u):
        u = np.asarray(u, dtype=complex)
        ext = np.concatenate([u, u.conj()])
        T = ext[self.gather]
        # the (0,0) diagonal is stored but must stay real
        T[np.diag_indices(self.N)] = u[0].real
        return T

    def adjoint(self, Q):
        q = np.asarray(Q).ravel()[self.stored_flat]
        re = np.bincount(self.stored_idx, weights=q.real, minlength=self.n_u)
        im = np.bincount(self.stored_idx, weights=q.imag, minlength=self.n_u)
        return re + 1j * im


@lru_cache(maxsize=32)
def _layout(H: int, W: int) -> ToeplitzLayout:
    return ToeplitzLayout(H, W)


def get_layout(H: int, W: int) -> ToeplitzLayout:
    H, W = _check_dims(H, W)
    return _layout(H, W)


def twofold_toeplitz(u, H: int, W: int) -> np.ndarray:
    """Assemble the Hermitian two-level Toeplitz matrix ``T(u)``.

    Parameters
    ----------
    u : array_like, complex, length ``(H-1)(2W-1)+W``
        Entry 0 must be real.
    H, W : int
        Number of blocks and block size.

    Returns
    -------
    ndarray, shape (H*W, H*W)
    """
    layout = get_layout(H, W)
    u = np.asarray(u, dtype=complex).ravel()
    if u.size != layout.n_u:
        raise InvalidInputError(f"u has length {u.size}, expected {layout.n_u} for H={H}, W={W}")
    if u[0].imag != 0.0:
        raise InvalidInputError("u[0] must be real for T(u) to be Hermitian")
    return layout.toeplitz(u)


def toeplitz_adjoint(Q, H: int, W: int) -> np.ndarray:
    """Adjoint ``T*(Q)``: entry k is ``tr((Theta_k1 kron Theta_k2) Q)``.

    ``Theta_k`` has ones at ``(i, i + k)``, so entry k sums ``Q`` over the
    positions where ``u[k]`` is stored unconjugated.
    """
    layout = get_layout(H, W)
    Q = np.asarray(Q)
    if Q.shape != (layout.N, layout.N):
        raise InvalidInputError(f"Q has shape {Q.shape}, expected ({layout.N}, {layout.N})")
    return layout.adjoint(Q)


def psi_matrix(H: int, W: int) -> np.ndarray:
    """Diagonal of ``Psi``: ``[HW, H(W-1), ..., H]`` then ``[H-1..1] kron [1..W..1]``."""
    return get_layout(H, W).psi.copy()


def hermitian_asymmetry(G) -> float:
    """Relative Frobenius asymmetry ``||G - G^H|| / ||G||`` (0 for the zero matrix)."""
    G = np.asarray(G)
    scale = np.linalg.norm(G)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(G - G.conj().T) / scale)


def psd_project(G, check: bool = True, positive_only: bool = False,
                return_rank: bool = False):
    """Frobenius-nearest positive semidefinite matrix to Hermitian ``G``.

    ``G`` is symmetrised first to absorb roundoff, then negative eigenvalues
    are clamped to zero.  With ``positive_only`` only the eigenpairs with
    positive eigenvalues are computed, which is much cheaper when the
    projection is known to be low rank.
    """
    G = np.asarray(G)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {G.shape}")
    if check and hermitian_asymmetry(G) > HERMITIAN_RTOL:
        raise InvalidInputError("psd_project requires a Hermitian matrix")
    G = 0.5 * (G + G.conj().T)
    n = G.shape[0]
    try:
        if positive_only:
            w, V = sla.eigh(G, driver="evr", check_finite=False, subset_by_value=(0.0, np.inf))
        else:
            w, V = sla.eigh(G, driver="evr", check_finite=False)
    except np.linalg.LinAlgError:
        # the relatively robust representation driver occasionally fails; fall back
        w, V = sla.eigh(G, driver="evd", check_finite=False)
    keep = w > 0
    w, Vp = w[keep], V[:, keep]
    rank = w.size
    if rank == n:
        Z = G
    else:
        Z = (Vp * w) @ Vp.conj().T
        Z = 0.5 * (Z + Z.conj().T)
    return (Z, rank) if return_rank else Z


def _check_kappa(kappa):
    if kappa < 0:
        raise InvalidInputError(f"threshold must be nonnegative, got {kappa}")


def soft_threshold(z, kappa):
    """Complex soft threshold: ``z * max(0, 1 - kappa/|z|)``, elementwise."""
    _check_kappa(kappa)
    z = np.asarray(z)
    mag = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > kappa, 1.0 - kappa / mag, 0.0)
    out = z * scale
    return out if out.ndim else out[()]


def singular_value_threshold(M, kappa):
    """Prox of ``kappa * ||.||_*``: soft-threshold the singular values of ``M``."""
    _check_kappa(kappa)
    M = np.asarray(M)
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    s = np.maximum(s - kappa, 0.0)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vh[keep]


def row_group_shrink(D, kappa):
    """Prox of ``kappa * ||.||_{2,1}``: scale each row by ``max(0, 1 - kappa/||row||)``."""
    _check_kappa(kappa)
    D = np.asarray(D)
    norms = np.sqrt(np.sum(D.real**2 + D.imag**2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > kappa, 1.0 - kappa / norms, 0.0)
    return D * scale[:, None]
