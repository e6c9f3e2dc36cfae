"""Transition-forbidding check for spontaneous-emission noise suppression.

Nuclear-component overlaps are inputs (computed elsewhere from a spin
Hamiltonian); optical transition amplitudes are proportional to them, so
thresholding the overlaps alone decides which transitions are open. The
noise-critical s-u overlap must be near zero while g-e, g-u and s-e stay
clearly open.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvariantViolation, ThresholdOrder

DEFAULT_EPS_FORBID = 0.05
DEFAULT_EPS_ALLOW = 0.10


@dataclass(frozen=True)
class OverlapSet:
    """Magnitudes of the four nuclear-state overlaps, each in [0, 1]."""

    su: float
    ge: float
    gu: float
    se: float

    def __post_init__(self):
        for name in ("su", "ge", "gu", "se"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise InvariantViolation(f"overlap {name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class ForbiddingReport:
    passed: bool
    forbid_margin: float          # eps_forbid - su  (> 0 means forbidden enough)
    allow_margins: dict[str, float]  # overlap - eps_allow per open transition
    eps_forbid: float
    eps_allow: float


def check_forbidding(
    overlaps: OverlapSet,
    eps_forbid: float = DEFAULT_EPS_FORBID,
    eps_allow: float = DEFAULT_EPS_ALLOW,
) -> ForbiddingReport:
    """Pass iff su < eps_forbid while ge, gu, se all exceed eps_allow.

    Monotone by construction: lowering su or raising any open overlap can
    never flip a pass into a fail. Scaling all overlaps by a common
    electronic factor changes margins but not which side of a threshold a
    ratio test would land on, so thresholds act on the nuclear part alone.
    """
    if not 0.0 < eps_forbid < eps_allow <= 1.0:
        raise ThresholdOrder(
            f"need 0 < eps_forbid < eps_allow <= 1, got {eps_forbid}, {eps_allow}"
        )
    allow_margins = {
        "ge": overlaps.ge - eps_allow,
        "gu": overlaps.gu - eps_allow,
        "se": overlaps.se - eps_allow,
    }
    passed = overlaps.su < eps_forbid and min(allow_margins.values()) > 0.0
    return ForbiddingReport(
        passed=passed,
        forbid_margin=eps_forbid - overlaps.su,
        allow_margins=allow_margins,
        eps_forbid=eps_forbid,
        eps_allow=eps_allow,
    )
