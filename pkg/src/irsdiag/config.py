"""Scenario and sweep configuration.

A config file is a flat YAML mapping.  Every key is optional; missing keys
take the defaults below, which follow the standard simulation settings
(16 x 16 surface, 2-bit weights, CN(0, 1/L) gains, uniform angles and
failure parameters, the default regularisation weights).  Keys:

scenario
    case, H, W, d, K, snr_db, n_faults, L_TX, L_RX, N_RX, seed, method,
    alphabet, eta_min, eta_max, kappa_min, kappa_max, angle_min, angle_max,
    threshold, guard
regularisation (``null`` means the K/SNR-dependent default)
    lambda1, lambda2, lambda3, lambda4, tau1, tau2, lambda4_nrx_power, delta
solver
    lasso_rho, lasso_max_iter, lasso_reltol, lasso_abstol,
    cslrmr_max_iter, cslrmr_reltol, cslrmr_abstol,
    anm_rho, anm_max_iter, anm_tol, anm_inner_max_iter, anm_sparse_solver,
    focuss_max_iter, record_timing
sweep (presence of ``axes`` makes the file a sweep)
    axes, trials, pair_axes

``K`` given as a float in ``(0, 1]`` is a fraction of ``N`` and resolves to
``round(K * N)``; an integer is a count.
"""
from __future__ import annotations

import difflib
import itertools
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Union

import numpy as np
import yaml

from .channel import ArrayGeometry
from .errors import ConfigError
from .system import DEFAULT_ALPHABET, db_to_linear

__all__ = [
    "CASES",
    "AXES",
    "ScenarioConfig",
    "SweepSpec",
    "load_config",
    "parse_config",
    "resolve_K",
]

CASES = ("full", "partial", "none", "mmv")
CASE_ALIASES = {
    "fullcsi": "full", "full": "full",
    "partialcsi": "partial", "partial": "partial",
    "nocsi": "none", "none": "none",
    "nocsi-mmv": "mmv", "mmv": "mmv",
}
METHODS = {
    "full": ("lasso",),
    "partial": ("cslrmr",),
    "none": ("anm", "cslrmr"),
    "mmv": ("anm",),
}
DEFAULT_METHOD = {"full": "lasso", "partial": "cslrmr", "none": "anm", "mmv": "anm"}
# (L_TX, L_RX, N_RX) when left unset
CASE_PATHS = {"full": (1, 1, 1), "partial": (4, 1, 1), "none": (4, 4, 1), "mmv": (4, 4, 4)}

AXES = ("K", "snr_db", "n_faults", "L_TX", "L_RX", "N_RX", "method")
SWEEP_KEYS = ("axes", "trials", "pair_axes")


def resolve_K(K, N: int) -> int:
    """Fractions in ``(0, 1]`` (given as floats) scale ``N``; integers are counts."""
    if isinstance(K, bool):
        raise ConfigError(f"K must be a number, got {K!r}")
    if isinstance(K, float):
        if not 0 < K <= 1:
            if K > 1 and K.is_integer():
                return int(K)
            raise ConfigError(f"fractional K must lie in (0, 1], got {K}")
        return max(1, int(round(K * N)))
    if isinstance(K, (int, np.integer)):
        return int(K)
    raise ConfigError(f"K must be an integer count or a fraction, got {K!r}")


def _parse_complex(v, key):
    try:
        if isinstance(v, (list, tuple)) and len(v) == 2:
            return complex(float(v[0]), float(v[1]))
        if isinstance(v, str):
            return complex(v.replace(" ", ""))
        return complex(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {v!r} as a complex number") from None


@dataclass(frozen=True)
class ScenarioConfig:
    case: str = "full"
    H: int = 16
    W: int = 16
    d: float = 0.5
    K: Union[int, float] = 0.8
    snr_db: float = 30.0
    n_faults: int = 5
    L_TX: Optional[int] = None
    L_RX: Optional[int] = None
    N_RX: Optional[int] = None
    seed: int = 0
    method: Optional[str] = None
    alphabet: Optional[tuple] = None
    eta_min: float = 0.0
    eta_max: float = 1.0
    kappa_min: float = 0.0
    kappa_max: float = 2 * math.pi
    angle_min: float = 0.0
    angle_max: float = 2 * math.pi
    threshold: float = 0.2
    guard: float = 1e-6
    lambda1: Optional[float] = None
    lambda2: float = 0.35
    lambda3: Optional[float] = None
    lambda4: Optional[float] = None
    tau1: Optional[float] = None
    tau2: Optional[float] = None
    lambda4_nrx_power: float = 0.0
    delta: Optional[float] = None
    lasso_rho: float = 1.0
    lasso_max_iter: int = 5000
    lasso_reltol: float = 1e-6
    lasso_abstol: float = 1e-8
    cslrmr_max_iter: int = 5000
    cslrmr_reltol: float = 1e-6
    cslrmr_abstol: float = 1e-9
    anm_rho: float = 1.0
    anm_max_iter: int = 2000
    anm_tol: float = 1e-6
    anm_inner_max_iter: int = 20
    anm_sparse_solver: str = "auto"
    focuss_max_iter: int = 10
    record_timing: bool = True

    def __post_init__(self):
        case = CASE_ALIASES.get(str(self.case).lower())
        if case is None:
            raise ConfigError(f"case: unknown case {self.case!r}; expected one of {CASES}")
        object.__setattr__(self, "case", case)
        if isinstance(self.snr_db, str):
            try:
                object.__setattr__(self, "snr_db", float(self.snr_db))
            except ValueError:
                raise ConfigError(f"snr_db: cannot read {self.snr_db!r}") from None
        if self.alphabet is not None:
            alpha = tuple(_parse_complex(v, "alphabet") for v in self.alphabet)
            object.__setattr__(self, "alphabet", alpha)
        self.validate()

    # resolved quantities ------------------------------------------------
    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.H, self.W, self.d)

    @property
    def N(self) -> int:
        return self.H * self.W

    @property
    def K_count(self) -> int:
        return resolve_K(self.K, self.N)

    @property
    def snr_linear(self) -> float:
        return db_to_linear(self.snr_db)

    @property
    def paths(self) -> tuple[int, int, int]:
        dflt = CASE_PATHS[self.case]
        return (self.L_TX or dflt[0], self.L_RX or dflt[1], self.N_RX or dflt[2])

    @property
    def resolved_method(self) -> str:
        return self.method or DEFAULT_METHOD[self.case]

    @property
    def weight_alphabet(self) -> np.ndarray:
        return DEFAULT_ALPHABET if self.alphabet is None else np.array(self.alphabet)

    def validate(self):
        for key in ("H", "W"):
            if int(getattr(self, key)) != getattr(self, key) or getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be a positive integer, got {getattr(self, key)}")
        if not self.d > 0:
            raise ConfigError(f"d: must be positive, got {self.d}")
        K = resolve_K(self.K, self.N)
        if not 1 <= K:
            raise ConfigError(f"K: must be >= 1, got {self.K}")
        if not 0 <= self.n_faults <= self.N:
            raise ConfigError(f"n_faults: must lie in [0, {self.N}], got {self.n_faults}")
        for key in ("L_TX", "L_RX", "N_RX"):
            v = getattr(self, key)
            if v is not None and (int(v) != v or v < 1):
                raise ConfigError(f"{key}: must be a positive integer, got {v}")
        if self.case != "mmv" and self.paths[2] != 1:
            raise ConfigError(f"N_RX: more than one RX antenna needs case 'mmv', got case {self.case!r}")
        if self.method is not None and self.method not in METHODS[self.case]:
            raise ConfigError(f"method: {self.method!r} is not available for case {self.case!r}; "
                              f"expected one of {METHODS[self.case]}")
        if not (0 <= self.eta_min <= self.eta_max <= 1):
            raise ConfigError("eta_min/eta_max: need 0 <= eta_min <= eta_max <= 1")
        if self.kappa_min > self.kappa_max or self.angle_min > self.angle_max:
            raise ConfigError("kappa and angle ranges must be ordered (min <= max)")
        if self.threshold < 0:
            raise ConfigError(f"threshold: must be nonnegative, got {self.threshold}")
        if np.isnan(self.snr_db) or self.snr_db == -np.inf:
            raise ConfigError(f"snr_db: invalid value {self.snr_db}")
        for key in ("lambda1", "lambda3", "lambda4", "tau1", "tau2", "delta"):
            v = getattr(self, key)
            if v is not None and v < 0:
                raise ConfigError(f"{key}: must be nonnegative, got {v}")
        for key in ("lambda2", "lasso_rho", "anm_rho", "anm_tol", "guard"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key}: must be positive, got {getattr(self, key)}")
        for key in ("lasso_max_iter", "cslrmr_max_iter", "anm_max_iter", "anm_inner_max_iter",
                    "focuss_max_iter"):
            if int(getattr(self, key)) != getattr(self, key) or getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be a positive integer, got {getattr(self, key)}")
        if self.anm_sparse_solver not in ("auto", "admm", "focuss"):
            raise ConfigError(f"anm_sparse_solver: unknown solver {self.anm_sparse_solver!r}")
        if self.alphabet is not None:
            a = np.array(self.alphabet)
            if a.size == 0 or not np.allclose(np.abs(a), 1.0, rtol=0, atol=1e-9):
                raise ConfigError("alphabet: symbols must have unit modulus")

    def with_values(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "alphabet" and v is not None:
                v = [str(c) for c in v]
            out[f.name] = v
        return out


SCENARIO_KEYS = tuple(f.name for f in fields(ScenarioConfig))


@dataclass(frozen=True)
class SweepSpec:
    """Grid of scenarios.  ``pair_axes`` are left out of the seed derivation,
    so grid points differing only along them see identical channels, masks,
    weights and noise."""

    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    axes: dict = field(default_factory=dict)
    trials: int = 100
    seed: int = 0
    pair_axes: tuple = ("N_RX", "method")

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError(f"trials: must be a positive integer, got {self.trials}")
        if not isinstance(self.axes, dict):
            raise ConfigError("axes: expected a mapping from parameter name to a list of values")
        axes = {}
        for name, values in self.axes.items():
            if name not in AXES:
                raise ConfigError(f"axes: unknown axis {name!r}; expected one of {AXES}")
            if not isinstance(values, (list, tuple)) or len(values) == 0:
                raise ConfigError(f"axes.{name}: expected a non-empty list of values")
            axes[name] = list(values)
        object.__setattr__(self, "axes", axes)
        for name in self.pair_axes:
            if name not in AXES:
                raise ConfigError(f"pair_axes: unknown axis {name!r}")
        object.__setattr__(self, "pair_axes", tuple(self.pair_axes))
        for point in self.points():
            try:
                self.scenario(point)
            except ConfigError as exc:
                raise ConfigError(f"axes {point}: {exc}") from None

    def points(self) -> list[dict]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.axes.values())]

    def scenario(self, point: dict, seed: Optional[int] = None) -> ScenarioConfig:
        kw = dict(point)
        if seed is not None:
            kw["seed"] = seed
        return replace(self.base, **kw)

    @property
    def n_rows(self) -> int:
        return len(self.points()) * self.trials


def _location(exc) -> str:
    mark = getattr(exc, "problem_mark", None)
    if mark is None:
        return ""
    return f" (line {mark.line + 1}, column {mark.column + 1})"


def parse_config(data, source: str = "<config>") -> Union[ScenarioConfig, SweepSpec]:
    """Validate a mapping of config keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping, got {type(data).__name__}")
    known = set(SCENARIO_KEYS) | set(SWEEP_KEYS)
    for key in data:
        if key not in known:
            hint = difflib.get_close_matches(str(key), sorted(known), n=1)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"{source}: unknown key {key!r}{extra}")
    scen = {k: v for k, v in data.items() if k in SCENARIO_KEYS}
    try:
        base = ScenarioConfig(**scen)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not any(k in data for k in SWEEP_KEYS):
        return base
    kw = {"base": base, "seed": base.seed}
    if "axes" in data:
        kw["axes"] = data["axes"] or {}
    if "trials" in data:
        kw["trials"] = data["trials"]
    if "pair_axes" in data:
        kw["pair_axes"] = tuple(data["pair_axes"] or ())
    try:
        return SweepSpec(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> Union[ScenarioConfig, SweepSpec]:
    """Read a YAML config; a file with ``axes``, ``trials`` or ``pair_axes`` is a sweep."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: parse error{_location(exc)}: {getattr(exc, 'problem', exc)}") from None
    return parse_config(data, str(path))
