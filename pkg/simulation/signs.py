"""Sign-change detection on sampled series."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from simulation.reduced import Trajectory

logger = logging.getLogger(__name__)


@dataclass
class SignChangeReport:
    crossings: list[float] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.crossings)

    @property
    def first(self) -> Optional[float]:
        return self.crossings[0] if self.crossings else None

    def to_dict(self) -> dict:
        return {"count": self.count, "first_crossing": self.first, "crossings": list(self.crossings)}


def detect_sign_changes(
    series: Union[Trajectory, tuple[np.ndarray, np.ndarray]],
    atol: float = 1e-12,
    rtol: float = 1e-10,
) -> SignChangeReport:
    """
    Crossing times between consecutive determinate samples of opposite
    sign, located by linear interpolation. Samples with
    |v| <= max(atol, rtol·max|v|) are sign-indeterminate and skipped.
    """
    if isinstance(series, Trajectory):
        t, v = series.t, series.v
    else:
        t, v = (np.asarray(a, dtype=float) for a in series)
    if len(t) != len(v) or len(t) < 2:
        raise ValueError("series needs matching t and v with at least two samples")

    scale = float(np.max(np.abs(v))) if np.all(np.isfinite(v)) else 0.0
    keep = np.abs(v) > max(atol, rtol * scale)
    t_k, v_k = t[keep], v[keep]
    flips = np.nonzero(np.sign(v_k[:-1]) != np.sign(v_k[1:]))[0]

    crossings = []
    for i in flips:
        t_a, t_b, v_a, v_b = t_k[i], t_k[i + 1], v_k[i], v_k[i + 1]
        crossings.append(float(t_a + (t_b - t_a) * v_a / (v_a - v_b)))

    logger.debug(f"{len(crossings)} sign changes over [{t[0]:.6g}, {t[-1]:.6g}]")
    return SignChangeReport(crossings)
