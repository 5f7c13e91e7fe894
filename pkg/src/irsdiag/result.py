from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class ConvergenceRecord:
    """Outcome of an iterative solve.

    ``history`` holds one value per iteration of whatever the solver monitors
    (relative change for the ANM solver, combined residual for the others).
    """

    iterations: int = 0
    converged: bool = False
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    history: list = field(default_factory=list)


@dataclass
class DiagnosisResult:
    m_hat: np.ndarray
    faults: set
    components: dict
    record: ConvergenceRecord
    nmse: Optional[float] = None
    runtime_ms: float = 0.0

    def summary(self) -> dict:
        return {
            "n_elements": int(self.m_hat.size),
            "faults": sorted(self.faults),
            "nmse": self.nmse,
            "converged": self.record.converged,
            "iterations": self.record.iterations,
            "runtime_ms": self.runtime_ms,
        }
