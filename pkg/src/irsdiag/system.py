"""Failure masks, IRS weighting vectors and the received-signal models.

The received symbol for one weighting vector ``f`` is

    y = sum_n [h_RX o f o m o h_TX]_n + w,    w ~ CN(0, 1/SNR)

with transmit symbol fixed to 1.  The direct TX-RX path is assumed already
subtracted; its estimation error lives inside ``w``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError

__all__ = [
    "DEFAULT_ALPHABET",
    "FailureMask",
    "MeasurementSet",
    "sample_failure_mask",
    "sample_weighting",
    "sample_weights",
    "complex_noise",
    "observe",
    "observe_k",
    "observe_mmv",
    "threshold_faults",
    "nmse",
    "support_f1",
    "db_to_linear",
    "mask_from_deviation",
]

# 2-bit phase alphabet
DEFAULT_ALPHABET = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)


def db_to_linear(snr_db: float) -> float:
    return float(np.inf) if np.isinf(snr_db) and snr_db > 0 else float(10.0 ** (snr_db / 10.0))


@dataclass
class FailureMask:
    m: np.ndarray
    faulty_indices: frozenset

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=complex)
        self.faulty_indices = frozenset(int(i) for i in self.faulty_indices)
        healthy = np.ones(self.m.size, dtype=bool)
        healthy[list(self.faulty_indices)] = False
        if not np.all(self.m[healthy] == 1):
            raise InvalidInputError("healthy elements must have mask exactly 1")
        if np.any(np.abs(self.m[~healthy]) >= 1):
            raise InvalidInputError("faulty elements must have |m| < 1")

    @property
    def N(self) -> int:
        return self.m.size


@dataclass
class MeasurementSet:
    """``K`` weighting vectors (rows of ``weights``) and the symbols they produced.

    ``y`` is length ``K`` for a single RX antenna or ``K x N_RX`` in MMV mode.
    """

    weights: np.ndarray
    y: np.ndarray
    snr_linear: float

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=complex))
        self.y = np.asarray(self.y, dtype=complex)
        if self.weights.shape[0] < 1:
            raise InvalidDimensionError("a measurement set needs K >= 1")
        if self.y.shape[0] != self.weights.shape[0]:
            raise InvalidDimensionError(
                f"{self.weights.shape[0]} weighting vectors but {self.y.shape[0]} observations")
        if not self.snr_linear > 0:
            raise InvalidInputError(f"SNR must be positive, got {self.snr_linear}")

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def is_mmv(self) -> bool:
        return self.y.ndim == 2


def sample_failure_mask(N: int, n_faults: int, rng: np.random.Generator,
                        eta_range=(0.0, 1.0), kappa_range=(0.0, 2 * np.pi)) -> FailureMask:
    """Pick ``n_faults`` distinct elements uniformly and give them ``eta * e^{j kappa}``."""
    if N < 1:
        raise InvalidDimensionError(f"N must be >= 1, got {N}")
    if not 0 <= n_faults <= N:
        raise InvalidInputError(f"n_faults must lie in [0, {N}], got {n_faults}")
    m = np.ones(N, dtype=complex)
    idx = rng.choice(N, size=n_faults, replace=False)
    eta = rng.uniform(*eta_range, size=n_faults)
    kappa = rng.uniform(*kappa_range, size=n_faults)
    m[idx] = eta * np.exp(1j * kappa)
    return FailureMask(m, frozenset(idx.tolist()))


def _check_alphabet(alphabet):
    alphabet = np.atleast_1d(np.asarray(alphabet, dtype=complex))
    if alphabet.size == 0:
        raise InvalidInputError("weighting alphabet is empty")
    if not np.allclose(np.abs(alphabet), 1.0, rtol=0, atol=1e-12):
        raise InvalidInputError("weighting alphabet symbols must have unit modulus")
    return alphabet


def sample_weighting(N: int, rng: np.random.Generator, alphabet=DEFAULT_ALPHABET) -> np.ndarray:
    alphabet = _check_alphabet(alphabet)
    return alphabet[rng.integers(alphabet.size, size=N)]


def sample_weights(K: int, N: int, rng: np.random.Generator, alphabet=DEFAULT_ALPHABET) -> np.ndarray:
    """``K x N`` matrix whose rows are independent weighting vectors.

    Rows are drawn one after another, so the first ``K'`` rows do not depend on ``K``.
    """
    if K < 1:
        raise InvalidDimensionError(f"K must be >= 1, got {K}")
    return np.stack([sample_weighting(N, rng, alphabet) for _ in range(K)])


def complex_noise(size, snr_linear: float, rng: np.random.Generator) -> np.ndarray:
    """``CN(0, 1/snr)`` samples; zeros (and no draws) when ``snr`` is infinite."""
    if not snr_linear > 0:
        raise InvalidInputError(f"SNR must be positive, got {snr_linear}")
    if np.isinf(snr_linear):
        return np.zeros(size, dtype=complex)
    scale = np.sqrt(0.5 / snr_linear)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def _mask_vector(mask):
    return mask.m if isinstance(mask, FailureMask) else np.asarray(mask, dtype=complex)


def observe(mask, f, h_tx, h_rx, snr_linear: float, rng: np.random.Generator) -> complex:
    m = _mask_vector(mask)
    f, h_tx, h_rx = (np.asarray(a) for a in (f, h_tx, h_rx))
    if not (m.shape == f.shape == h_tx.shape == h_rx.shape):
        raise InvalidDimensionError("mask, weighting vector and channels must share length N")
    return complex(np.sum(h_rx * f * m * h_tx) + complex_noise(1, snr_linear, rng)[0])


def observe_k(mask, weights, h_tx, h_rx, snr_linear: float,
              rng: np.random.Generator) -> MeasurementSet:
    """Apply ``observe`` once per row of ``weights`` with independent noise."""
    m = _mask_vector(mask)
    weights = np.atleast_2d(np.asarray(weights, dtype=complex))
    if weights.shape[0] == 0:
        raise InvalidDimensionError("K must be >= 1")
    h_tx, h_rx = np.asarray(h_tx), np.asarray(h_rx)
    if not (weights.shape[1] == m.size == h_tx.size == h_rx.size):
        raise InvalidDimensionError("mask, weighting vectors and channels must share length N")
    y = weights @ (h_rx * m * h_tx)
    y = y + complex_noise(weights.shape[0], snr_linear, rng)
    return MeasurementSet(weights, y, snr_linear)


def observe_mmv(mask, weights, h_tx, rx_channels, snr_linear: float,
                rng: np.random.Generator) -> MeasurementSet:
    """Stacked observations ``Y = F (H o m) + W`` for an ``N_RX``-antenna receiver.

    Noise is drawn column by column, so column 0 matches :func:`observe_k`
    against the first antenna for the same generator state.
    """
    m = _mask_vector(mask)
    weights = np.atleast_2d(np.asarray(weights, dtype=complex))
    rx_channels = np.asarray(rx_channels, dtype=complex)
    if rx_channels.ndim == 1:
        rx_channels = rx_channels[:, None]
    h_tx = np.asarray(h_tx)
    N = m.size
    if weights.shape[1] != N or rx_channels.shape[0] != N or h_tx.size != N:
        raise InvalidDimensionError("mask, weighting vectors and channels must share length N")
    K = weights.shape[0]
    if K == 0:
        raise InvalidDimensionError("K must be >= 1")
    Y = weights @ ((h_tx * m)[:, None] * rx_channels)
    for i in range(rx_channels.shape[1]):
        Y[:, i] += complex_noise(K, snr_linear, rng)
    return MeasurementSet(weights, Y, snr_linear)


def threshold_faults(m_hat, th: float) -> set[int]:
    """Indices with ``|m_hat - 1| >= th``."""
    if th < 0:
        raise InvalidInputError(f"threshold must be nonnegative, got {th}")
    dev = np.abs(np.asarray(m_hat) - 1.0)
    return set(np.flatnonzero(dev >= th).tolist())


def nmse(m_true, m_hat) -> float:
    m_true = np.asarray(m_true)
    m_hat = np.asarray(m_hat)
    if m_true.shape != m_hat.shape:
        raise InvalidDimensionError(f"shapes differ: {m_true.shape} vs {m_hat.shape}")
    denom = np.vdot(m_true, m_true).real
    if denom == 0:
        raise InvalidInputError("NMSE is undefined for an all-zero reference mask")
    diff = m_true - m_hat
    return float(np.vdot(diff, diff).real / denom)


def support_f1(true_set, est_set) -> float:
    """F1 score of an estimated fault set; 1.0 when both sets are empty."""
    true_set, est_set = set(true_set), set(est_set)
    if not true_set and not est_set:
        return 1.0
    tp = len(true_set & est_set)
    return 2.0 * tp / (len(true_set) + len(est_set))


def mask_from_deviation(d_hat, h_hat, guard: float = 1e-6) -> np.ndarray:
    """``d_hat / h_hat + 1`` elementwise, returning 1 where ``|h_hat| < guard * max|h_hat|``.

    Near-zero channel entries carry no usable information about the mask.
    """
    d_hat = np.asarray(d_hat, dtype=complex)
    h_hat = np.asarray(h_hat, dtype=complex)
    if d_hat.shape != h_hat.shape:
        raise InvalidDimensionError(f"shapes differ: {d_hat.shape} vs {h_hat.shape}")
    mag = np.abs(h_hat)
    peak = mag.max() if mag.size else 0.0
    ok = (mag > 0) & (mag >= guard * peak)
    out = np.ones(h_hat.shape, dtype=complex)
    out[ok] = d_hat[ok] / h_hat[ok] + 1.0
    return out
