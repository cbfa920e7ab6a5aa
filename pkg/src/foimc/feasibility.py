"""Orders beta for which the gain crossover is real and positive.

All boundaries are closed-form functions of the phase margin phi_m alone:

    beta_x1   = (pi - phi_m) / pi
    beta_x2   = (2 pi - phi_m) / pi
    beta_y1   = (2/pi) atan(-sin(phi_m) / (1 - 2 sin(phi_m/2)**2))
    beta_y2   = beta_y1 + 2
    beta_re1  = (2/pi) asin(2 sin(phi_m/2))          (phi_m < pi/3 only)
    beta_re2  = 2 - beta_re1

and the admissible set is assembled from them in four phase-margin cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    BranchError,
    EmptyFeasibleSetError,
    InfeasibleSpecError,
    NotApplicableError,
)

# phi_m where beta_x1 == beta_re1; exact value 2*atan(1/2) = 0.92729...
CASE_AB_BOUNDARY = 0.9273
MEMBERSHIP_GUARD = 1e-12


def _check_phase_margin(phi_m):
    if not 0 < phi_m < math.pi:
        raise InfeasibleSpecError(
            f"phase margin {phi_m!r} rad outside (0, pi), the admissible phase-margin range"
        )


def beta_x1(phi_m: float) -> float:
    _check_phase_margin(phi_m)
    return (math.pi - phi_m) / math.pi


def beta_x2(phi_m: float) -> float:
    _check_phase_margin(phi_m)
    return (2 * math.pi - phi_m) / math.pi


def _tan_ratio(phi_m):
    _check_phase_margin(phi_m)
    if phi_m == math.pi / 2:
        raise BranchError(
            "beta_y1/beta_y2 are singular at phi_m = pi/2; use the case split "
            "(phi_m <= pi/2 -> beta_y2, phi_m > pi/2 -> beta_y1)"
        )
    return -math.sin(phi_m) / (1 - 2 * math.sin(phi_m / 2) ** 2)


def beta_y1(phi_m: float) -> float:
    """Lower/upper bound from ``omega_g > 0`` on beta in (0, 1]."""
    return 2 / math.pi * math.atan(_tan_ratio(phi_m))


def beta_y2(phi_m: float) -> float:
    """Upper bound from ``omega_g > 0`` on beta in (1, 2)."""
    return 2 / math.pi * (math.pi + math.atan(_tan_ratio(phi_m)))


def _asin_arg(phi_m):
    _check_phase_margin(phi_m)
    arg = 2 * math.sin(phi_m / 2)
    if arg >= 1:
        raise NotApplicableError(
            f"phi_m = {phi_m:g} >= pi/3: omega_g is real for every beta in (0, 2)"
        )
    return arg


def beta_wg_re1(phi_m: float) -> float:
    """Upper end of the lower real-crossover band, valid for ``phi_m < pi/3``.

    At exactly ``pi/3`` both bands meet at beta = 1, which is returned.
    """
    if phi_m == math.pi / 3:
        return 1.0
    return 2 / math.pi * math.asin(_asin_arg(phi_m))


def beta_wg_re2(phi_m: float) -> float:
    if phi_m == math.pi / 3:
        return 1.0
    return 2 / math.pi * (math.pi - math.asin(_asin_arg(phi_m)))


@dataclass(frozen=True)
class BetaFeasibleSet:
    """Union of at most two disjoint open intervals in beta."""

    intervals: tuple[tuple[float, float], ...]
    case_label: str
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if not 1 <= len(self.intervals) <= 2:
            raise ValueError("a feasible set holds one or two intervals")
        prev_hi = -math.inf
        for lo, hi in self.intervals:
            if not (0 <= lo < hi <= 2) or lo < prev_hi:
                raise ValueError(f"malformed interval list {self.intervals}")
            prev_hi = hi

    def __contains__(self, beta) -> bool:
        g = MEMBERSHIP_GUARD
        return any(lo + g < beta < hi - g for lo, hi in self.intervals)

    @property
    def lower(self) -> float:
        return self.intervals[0][0]

    @property
    def upper(self) -> float:
        return self.intervals[-1][1]

    @property
    def measure(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)


def feasible_beta_set(phi_m: float) -> BetaFeasibleSet:
    """Assemble the set of beta giving a real, positive gain crossover."""
    _check_phase_margin(phi_m)
    notes = []
    if phi_m <= CASE_AB_BOUNDARY:
        label = "A"
        raw = [(beta_wg_re2(phi_m), beta_y2(phi_m))]
    elif phi_m < math.pi / 3:
        label = "B"
        raw = [
            (beta_x1(phi_m), beta_wg_re1(phi_m)),
            (beta_wg_re2(phi_m), beta_y2(phi_m)),
        ]
    elif phi_m <= math.pi / 2:
        label = "C"
        if phi_m == math.pi / 2:
            upper = 1.0
            notes.append(
                "phi_m = pi/2: beta_y2 is singular here, its continuous limit 1 "
                "is used as the upper bound"
            )
        else:
            upper = beta_y2(phi_m)
        raw = [(beta_x1(phi_m), upper)]
    else:
        label = "D"
        raw = [(beta_x1(phi_m), beta_y1(phi_m))]

    intervals = []
    for lo, hi in raw:
        if hi - lo > 2 * MEMBERSHIP_GUARD:
            intervals.append((lo, hi))
        else:
            notes.append(f"degenerate interval ({lo:.12g}, {hi:.12g}) dropped")
    if not intervals:
        raise EmptyFeasibleSetError(
            f"no beta gives a real positive gain crossover at phi_m = {phi_m:g} "
            f"(case {label}, numerically degenerate)"
        )
    return BetaFeasibleSet(tuple(intervals), label, tuple(notes))
