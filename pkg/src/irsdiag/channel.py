"""Clustered mmWave channels seen by a planar IRS.

A channel over an ``H x W`` IRS is a sum of sub-paths, each contributing
``gain * (a_W kron a_H)``.  Vectors are ordered column-major, i.e. ``h`` is
``vec`` of the ``H x W`` matrix ``sum_l gain_l * a_H a_W^T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError

__all__ = [
    "ArrayGeometry",
    "PathParams",
    "PathSet",
    "CascadedPath",
    "steering_h",
    "steering_w",
    "ula_response",
    "atom",
    "channel_vector",
    "channel_matrix",
    "cascaded_paths",
    "cascaded_channel",
    "rx_ula_steering",
    "sample_paths",
    "mmv_rx_channels",
    "mmv_channels",
    "wrap_frequency",
]


@dataclass(frozen=True)
class ArrayGeometry:
    H: int = 16
    W: int = 16
    d: float = 0.5

    def __post_init__(self):
        if self.H < 1 or self.W < 1:
            raise InvalidDimensionError(f"H and W must be >= 1, got ({self.H}, {self.W})")
        if not self.d > 0:
            raise InvalidInputError(f"element spacing must be positive, got {self.d}")

    @property
    def N(self) -> int:
        return self.H * self.W


@dataclass(frozen=True)
class PathParams:
    gain: complex
    elevation: float
    azimuth: float


@dataclass
class PathSet:
    """Sub-paths of one channel, stored as parallel arrays."""

    gains: np.ndarray
    elevations: np.ndarray
    azimuths: np.ndarray
    role: str = "TX"

    def __post_init__(self):
        self.gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        self.elevations = np.atleast_1d(np.asarray(self.elevations, dtype=float))
        self.azimuths = np.atleast_1d(np.asarray(self.azimuths, dtype=float))
        if not (self.gains.shape == self.elevations.shape == self.azimuths.shape):
            raise InvalidInputError("gains, elevations and azimuths must have equal lengths")
        if self.gains.ndim != 1:
            raise InvalidInputError("path parameters must be one-dimensional")
        if not (np.all(np.isfinite(self.elevations)) and np.all(np.isfinite(self.azimuths))):
            raise InvalidInputError("path angles must be finite")
        if self.role not in ("TX", "RX"):
            raise InvalidInputError(f"role must be 'TX' or 'RX', got {self.role!r}")

    @classmethod
    def from_paths(cls, paths, role="TX"):
        paths = list(paths)
        return cls(
            [p.gain for p in paths],
            [p.elevation for p in paths],
            [p.azimuth for p in paths],
            role=role,
        )

    @property
    def paths(self) -> list[PathParams]:
        return [PathParams(complex(g), float(t), float(p))
                for g, t, p in zip(self.gains, self.elevations, self.azimuths)]

    def __len__(self):
        return self.gains.size


@dataclass(frozen=True)
class CascadedPath:
    gain: complex
    g_W: float
    g_H: float


def ula_response(freq, n: int, d: float = 0.5) -> np.ndarray:
    """``[1, e^{j 2 pi d f}, ..., e^{j 2 pi d (n-1) f}]``."""
    return np.exp(2j * np.pi * d * np.arange(n) * freq)


def steering_h(theta, phi, geometry: ArrayGeometry) -> np.ndarray:
    return ula_response(np.sin(theta) * np.sin(phi), geometry.H, geometry.d)


def steering_w(theta, phi, geometry: ArrayGeometry) -> np.ndarray:
    return ula_response(np.sin(theta) * np.cos(phi), geometry.W, geometry.d)


def atom(g_W, g_H, geometry: ArrayGeometry) -> np.ndarray:
    """Cascaded-channel atom ``a_W(g_W) kron a_H(g_H)``."""
    return np.kron(ula_response(g_W, geometry.W, geometry.d),
                   ula_response(g_H, geometry.H, geometry.d))


def _require_paths(paths: PathSet):
    if len(paths) == 0:
        raise InvalidInputError("path set is empty")


def channel_vector(paths: PathSet, geometry: ArrayGeometry) -> np.ndarray:
    """Kronecker form ``sum_l alpha_l (a_W kron a_H)``."""
    _require_paths(paths)
    h = np.zeros(geometry.N, dtype=complex)
    for g, t, p in zip(paths.gains, paths.elevations, paths.azimuths):
        h += g * np.kron(steering_w(t, p, geometry), steering_h(t, p, geometry))
    return h


def channel_matrix(paths: PathSet, geometry: ArrayGeometry) -> np.ndarray:
    """Matrix form ``sum_l alpha_l a_H a_W^T`` (H x W)."""
    _require_paths(paths)
    M = np.zeros((geometry.H, geometry.W), dtype=complex)
    for g, t, p in zip(paths.gains, paths.elevations, paths.azimuths):
        M += g * np.outer(steering_h(t, p, geometry), steering_w(t, p, geometry))
    return M


def wrap_frequency(g, d: float = 0.5):
    """Map a spatial frequency into one period ``[-1/(2d), 1/(2d))``; ``[-1, 1)`` for d=1/2."""
    period = 1.0 / d
    half = period / 2.0
    return np.mod(np.asarray(g, dtype=float) + half, period) - half


def cascaded_paths(tx: PathSet, rx: PathSet, d: float = 0.5) -> list[CascadedPath]:
    """Equivalent sub-paths of ``h_TX o h_RX``; TX index varies slowest."""
    _require_paths(tx)
    _require_paths(rx)
    out = []
    for ga, ta, pa in zip(tx.gains, tx.elevations, tx.azimuths):
        for gb, tb, pb in zip(rx.gains, rx.elevations, rx.azimuths):
            g_w = np.sin(ta) * np.cos(pa) + np.sin(tb) * np.cos(pb)
            g_h = np.sin(ta) * np.sin(pa) + np.sin(tb) * np.sin(pb)
            out.append(CascadedPath(complex(ga * gb),
                                    float(wrap_frequency(g_w, d)),
                                    float(wrap_frequency(g_h, d))))
    return out


def cascaded_channel(h_tx, h_rx) -> np.ndarray:
    h_tx = np.asarray(h_tx)
    h_rx = np.asarray(h_rx)
    if h_tx.shape != h_rx.shape:
        raise InvalidInputError(f"channel shapes differ: {h_tx.shape} vs {h_rx.shape}")
    return h_tx * h_rx


def rx_ula_steering(theta, n_rx: int, d: float = 0.5) -> np.ndarray:
    if n_rx < 1:
        raise InvalidDimensionError(f"N_RX must be >= 1, got {n_rx}")
    return ula_response(np.sin(theta), n_rx, d)


def sample_paths(L: int, rng: np.random.Generator, role: str = "TX",
                 angle_range=(0.0, 2 * np.pi)) -> PathSet:
    """Draw ``L`` sub-paths: gains ``CN(0, 1/L)``, both angles uniform on ``angle_range``."""
    if L < 1:
        raise InvalidDimensionError(f"number of paths must be >= 1, got {L}")
    gains = np.sqrt(0.5 / L) * (rng.standard_normal(L) + 1j * rng.standard_normal(L))
    lo, hi = angle_range
    theta = rng.uniform(lo, hi, L)
    phi = rng.uniform(lo, hi, L)
    return PathSet(gains, theta, phi, role=role)


def mmv_rx_channels(rx: PathSet, rx_aoas, n_rx: int, geometry: ArrayGeometry) -> np.ndarray:
    """IRS-to-RX channels of an ``n_rx``-element ULA, one column per antenna.

    Column i is ``sum_l alpha_l [a_RX(theta'_l)]_i (a_W kron a_H)(theta_l, phi_l)``,
    i.e. row i of ``H'_RX`` transposed.  Sub-path gains are shared by all antennas.
    """
    _require_paths(rx)
    rx_aoas = np.atleast_1d(np.asarray(rx_aoas, dtype=float))
    if rx_aoas.size != len(rx):
        raise InvalidDimensionError(
            f"need one RX angle of arrival per sub-path: {rx_aoas.size} vs {len(rx)}")
    out = np.zeros((geometry.N, n_rx), dtype=complex)
    for g, t, p, aoa in zip(rx.gains, rx.elevations, rx.azimuths, rx_aoas):
        a_irs = np.kron(steering_w(t, p, geometry), steering_h(t, p, geometry))
        out += g * np.outer(a_irs, rx_ula_steering(aoa, n_rx, geometry.d))
    return out


def mmv_channels(tx: PathSet, rx: PathSet, rx_aoas, n_rx: int,
                 geometry: ArrayGeometry) -> np.ndarray:
    """Cascaded channels ``H = [h_TX o h_RX,1, ..., h_TX o h_RX,N_RX]`` (N x N_RX)."""
    h_tx = channel_vector(tx, geometry)
    return h_tx[:, None] * mmv_rx_channels(rx, rx_aoas, n_rx, geometry)
