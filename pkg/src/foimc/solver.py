"""Closed-form crossover frequencies, filter-constant curves and tuning.

For a fixed order beta the phase-margin pair of equations has the closed-form
gain crossover

    theta w_g = pi - acos(sin(beta pi/2) / (2 sin(phi_m/2))) - (beta pi/2 + phi_m/2)

and the gain-margin pair has the phase crossover

    theta w_p = pi - acos(sin(beta pi/2) / (A_m - 1)) + pi/2 - beta pi/2.

Back-substitution gives two filter constants, ``lambda_a`` (phase margin met
at w_g) and ``lambda_b`` (gain margin met at w_p).  The design is the order
where the two curves cross.  :func:`tune` samples both curves over the
feasible orders, brackets every sign change of ``lambda_a - lambda_b`` and
refines each bracket by bisection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DomainError,
    InfeasibleSampleError,
    InfeasibleSpecError,
    NoIntersectionError,
    RealnessError,
    VerificationError,
)
from .feasibility import BetaFeasibleSet, beta_x1, feasible_beta_set
from .model import FoFilterParams, ProcessModel, RobustnessSpec, TuningResult

log = logging.getLogger(__name__)

# sin(theta w_p) below this is rounding noise around a multiple of pi
SIN_FLOOR = 1e-12

GUIDANCE_LAMBDA_A_ABOVE = (
    "lambda_a > lambda_b over the whole feasible range: reducing phi_m and/or "
    "increasing A_m may result in an intersection"
)
GUIDANCE_LAMBDA_A_BELOW = (
    "lambda_a < lambda_b over the whole feasible range: increasing phi_m and/or "
    "reducing A_m may result in an intersection"
)
GUIDANCE_GENERIC = (
    "lambda_a rises with phi_m and lambda_b rises with A_m; adjust the margins "
    "(lower phi_m and/or raise A_m when lambda_a dominates) and retry"
)


@dataclass(frozen=True)
class SolverOptions:
    grid_points: int = 2000
    refine_tol: float = 1e-12
    max_bisections: int = 200

    def __post_init__(self):
        if self.grid_points < 100:
            raise DomainError("grid_points must be at least 100")
        if not 0 < self.refine_tol <= 1e-3:
            raise DomainError("refine_tol must lie in (0, 1e-3]")
        if self.max_bisections < 20:
            raise DomainError("max_bisections must be at least 20")


@dataclass(frozen=True)
class CurveSample:
    beta: float
    omega_g: float
    omega_p: float
    lambda_a: float
    lambda_b: float


class LambdaSolution(NamedTuple):
    """Filter constant plus the residual of the companion (real-part) equation."""

    value: float
    residual: float


# -- vectorised formulas (no validation, nan where undefined) ---------------

def _omega_g(beta, phi_m, theta, piecewise=False):
    beta = np.asarray(beta, dtype=float)
    ratio = np.sin(beta * np.pi / 2) / (2 * math.sin(phi_m / 2))
    with np.errstate(invalid="ignore"):
        acos = np.arccos(np.where(ratio <= 1, ratio, np.nan))
    eta = beta * np.pi / 2 + phi_m / 2
    wg = (-acos + np.pi - eta) / theta
    if piecewise:
        first = (-acos - eta) / theta
        wg = np.where(beta < (math.pi - phi_m) / math.pi, first, wg)
    return wg


def _omega_p(beta, gain_margin, theta):
    beta = np.asarray(beta, dtype=float)
    ratio = np.sin(beta * np.pi / 2) / (gain_margin - 1)
    return (np.pi - np.arccos(ratio) + np.pi / 2 - beta * np.pi / 2) / theta


def _lambda_a(beta, wg, phi_m, theta):
    tw = theta * wg
    scale = wg**beta
    lam = (np.sin(phi_m + tw) - np.sin(tw)) / (scale * np.sin(beta * np.pi / 2))
    resid = 1 + lam * scale * np.cos(beta * np.pi / 2) - np.cos(tw) + np.cos(phi_m + tw)
    return lam, np.abs(resid)


def _lambda_b(beta, wp, gain_margin, theta):
    tw = theta * wp
    scale = wp**beta
    lam = (gain_margin - 1) * np.sin(tw) / (scale * np.sin(beta * np.pi / 2))
    resid = 1 + lam * scale * np.cos(beta * np.pi / 2) - np.cos(tw) + gain_margin * np.cos(tw)
    return lam, np.abs(resid)


# -- validated scalar operations --------------------------------------------

def _check_common(beta, theta):
    if not 0 < beta < 2:
        raise DomainError(f"beta must lie in (0, 2), got {beta}")
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")


def _check_gain_margin(gain_margin):
    if gain_margin == 1:
        raise InfeasibleSpecError("A_m = 1 is not admissible (c2/r2 -> infinity)")
    if not gain_margin >= 2:
        raise InfeasibleSpecError(
            f"A_m = {gain_margin:g} < 2: the phase crossover is only guaranteed real for A_m >= 2"
        )


def omega_g(beta: float, phi_m: float, theta: float, piecewise: bool = False) -> float:
    """Closed-form gain crossover frequency for order ``beta``.

    By default only the branch valid for ``beta > beta_x1`` is evaluated,
    which is the only branch that can be positive.  ``piecewise=True`` also
    evaluates the lower branch for ``beta < beta_x1`` (always non-positive).
    The result may be non-positive outside the feasible set.
    """
    _check_common(beta, theta)
    bx1 = beta_x1(phi_m)
    ratio = math.sin(beta * math.pi / 2) / (2 * math.sin(phi_m / 2))
    if ratio > 1:
        raise RealnessError(
            f"omega_g is complex at beta = {beta:g}, phi_m = {phi_m:g} "
            f"(acos argument {ratio:.6g} > 1)"
        )
    if beta <= bx1 and not piecewise:
        raise DomainError(
            f"beta = {beta:g} <= beta_x1 = {bx1:g} lies on the lower branch; pass piecewise=True"
        )
    return float(_omega_g(beta, phi_m, theta, piecewise))


def omega_p(beta: float, gain_margin: float, theta: float) -> float:
    """Closed-form phase crossover frequency; real and positive for A_m >= 2."""
    _check_common(beta, theta)
    _check_gain_margin(gain_margin)
    return float(_omega_p(beta, gain_margin, theta))


def lambda_from_pm(beta: float, omega_g: float, phi_m: float, theta: float) -> LambdaSolution:
    """Filter constant placing the phase margin ``phi_m`` at ``omega_g``."""
    _check_common(beta, theta)
    if not omega_g > 0:
        raise DomainError(f"omega_g must be positive, got {omega_g}")
    lam, resid = _lambda_a(beta, omega_g, phi_m, theta)
    if not lam > 0:
        raise InfeasibleSampleError(f"lambda_a = {lam:.6g} is not positive", float(lam))
    return LambdaSolution(float(lam), float(resid))


def lambda_from_gm(beta: float, omega_p: float, gain_margin: float, theta: float) -> LambdaSolution:
    """Filter constant placing the gain margin ``gain_margin`` at ``omega_p``."""
    _check_common(beta, theta)
    _check_gain_margin(gain_margin)
    if not omega_p > 0:
        raise DomainError(f"omega_p must be positive, got {omega_p}")
    lam, resid = _lambda_b(beta, omega_p, gain_margin, theta)
    if not (lam > 0 and math.sin(theta * omega_p) > SIN_FLOOR):
        raise InfeasibleSampleError(f"lambda_b = {lam:.6g} is not positive", float(lam))
    return LambdaSolution(float(lam), float(resid))


# -- curves -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Curves:
    """Sampled lambda_a / lambda_b curves over the feasible orders.

    ``segment`` numbers the feasible interval each sample came from; ``valid``
    marks samples with every quantity finite and positive.
    """

    beta: np.ndarray
    omega_g: np.ndarray
    omega_p: np.ndarray
    lambda_a: np.ndarray
    lambda_b: np.ndarray
    residual_a: np.ndarray
    residual_b: np.ndarray
    segment: np.ndarray
    theta: float

    @property
    def valid(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return (
                np.isfinite(self.lambda_a)
                & np.isfinite(self.lambda_b)
                & (self.omega_g > 0)
                & (self.omega_p > 0)
                & (self.lambda_a > 0)
                & (self.lambda_b > 0)
                & (np.sin(self.theta * self.omega_p) > SIN_FLOOR)
            )

    def samples(self) -> list[CurveSample]:
        idx = np.flatnonzero(self.valid)
        return [
            CurveSample(
                float(self.beta[i]),
                float(self.omega_g[i]),
                float(self.omega_p[i]),
                float(self.lambda_a[i]),
                float(self.lambda_b[i]),
            )
            for i in idx
        ]


def interior_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` equally spaced points strictly inside ``(lo, hi)``."""
    return lo + (hi - lo) * np.arange(1, n + 1) / (n + 1)


def sample_curves(
    spec: RobustnessSpec, theta: float, feasible: BetaFeasibleSet, n: int
) -> Curves:
    betas, segs = [], []
    for k, (lo, hi) in enumerate(feasible.intervals):
        betas.append(interior_grid(lo, hi, n))
        segs.append(np.full(n, k))
    beta = np.concatenate(betas)
    phi, am = spec.phase_margin, spec.gain_margin
    with np.errstate(invalid="ignore", divide="ignore"):
        wg = _omega_g(beta, phi, theta)
        wp = _omega_p(beta, am, theta)
        la, ra = _lambda_a(beta, wg, phi, theta)
        lb, rb = _lambda_b(beta, wp, am, theta)
    return Curves(beta, wg, wp, la, lb, ra, rb, np.concatenate(segs), theta)


def _curve_gap(beta, spec, theta):
    wg = _omega_g(beta, spec.phase_margin, theta)
    wp = _omega_p(beta, spec.gain_margin, theta)
    la, _ = _lambda_a(beta, wg, spec.phase_margin, theta)
    lb, _ = _lambda_b(beta, wp, spec.gain_margin, theta)
    return float(la - lb), float(max(la, lb))


def _bisect(lo, hi, g_lo, spec, theta, opts):
    """Bisection on ``lambda_a - lambda_b``; returns (beta, converged)."""
    for _ in range(opts.max_bisections):
        mid = 0.5 * (lo + hi)
        g, scale = _curve_gap(mid, spec, theta)
        if abs(g) <= opts.refine_tol * scale:
            return mid, True
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            return mid, abs(g) <= 1e-9 * scale
        if (g < 0) == (g_lo < 0):
            lo, g_lo = mid, g
        else:
            hi = mid
    return 0.5 * (lo + hi), False


def find_intersections(curves: Curves, spec, theta, opts) -> list[tuple[float, int, bool]]:
    """Refined intersection orders as ``(beta, left_index, converged)``."""
    valid = curves.valid
    g = curves.lambda_a - curves.lambda_b
    roots = []
    for i in range(len(g)):
        if not valid[i]:
            continue
        if g[i] == 0:
            roots.append((float(curves.beta[i]), i, True))
            continue
        j = i + 1
        if j >= len(g) or not valid[j] or curves.segment[j] != curves.segment[i]:
            continue
        if g[i] * g[j] < 0:
            beta, ok = _bisect(curves.beta[i], curves.beta[j], g[i], spec, theta, opts)
            roots.append((beta, i, ok))
    return roots


def _no_intersection_guidance(curves: Curves) -> str:
    valid = curves.valid
    if not valid.any():
        return "no sample yields positive lambda_a and lambda_b; " + GUIDANCE_GENERIC
    g = (curves.lambda_a - curves.lambda_b)[valid]
    if np.all(g > 0):
        return GUIDANCE_LAMBDA_A_ABOVE
    if np.all(g < 0):
        return GUIDANCE_LAMBDA_A_BELOW
    return GUIDANCE_GENERIC


def tune(
    model: ProcessModel, spec: RobustnessSpec, opts: SolverOptions | None = None
) -> TuningResult:
    """Find (lambda, beta) meeting both margins for ``model``.

    Only the dead time enters the loop; ``k`` and ``tau`` shape the realised
    IMC controller but not the design.
    """
    from .verification import measure_margins

    opts = opts or SolverOptions()
    theta = model.theta
    feasible = feasible_beta_set(spec.phase_margin)
    curves = sample_curves(spec, theta, feasible, opts.grid_points)
    diagnostics = list(feasible.notes)
    dropped = int((~curves.valid).sum())
    if dropped:
        diagnostics.append(f"{dropped} grid samples dropped (non-positive or undefined lambda)")

    roots = find_intersections(curves, spec, theta, opts)
    if not roots:
        raise NoIntersectionError(
            f"lambda_a and lambda_b curves do not intersect for A_m = "
            f"{spec.gain_margin:g}, phi_m = {spec.phase_margin:g} rad",
            _no_intersection_guidance(curves),
        )

    candidates = []
    for beta, idx, converged in roots:
        wg = float(_omega_g(beta, spec.phase_margin, theta))
        wp = float(_omega_p(beta, spec.gain_margin, theta))
        la, _ = _lambda_a(beta, wg, spec.phase_margin, theta)
        lb, _ = _lambda_b(beta, wp, spec.gain_margin, theta)
        params = FoFilterParams(float(0.5 * (la + lb)), float(beta))
        try:
            report = measure_margins(params, theta)
            err = abs(report.gain_margin_measured / spec.gain_margin - 1) + abs(
                report.phase_margin_measured - spec.phase_margin
            ) / spec.phase_margin
        except VerificationError as exc:
            report, err = None, math.inf
            diagnostics.append(f"verification failed at beta = {beta:.6g}: {exc}")
        if not converged:
            diagnostics.append(
                f"bisection at beta = {beta:.9g} stopped before reaching refine_tol"
            )
        candidates.append((err, params, wg, wp, idx, report))

    candidates.sort(key=lambda c: c[0])
    err, params, wg, wp, idx, report = candidates[0]
    if len(candidates) > 1:
        diagnostics.append(
            f"{len(candidates)} intersections found; kept the one with the smallest "
            "measured margin error, others: "
            + ", ".join(f"(lambda={c[1].lam:.6g}, beta={c[1].beta:.6g})" for c in candidates[1:])
        )
    if not wg < wp:
        diagnostics.append(f"omega_g = {wg:.6g} is not below omega_p = {wp:.6g}")
    if report is None:
        gm = pm = math.nan
    else:
        gm, pm = report.gain_margin_measured, report.phase_margin_measured
    log.debug("tuned beta=%.6g lambda=%.6g (error %.3g)", params.beta, params.lam, err)
    return TuningResult(
        params=params,
        omega_g=wg,
        omega_p=wp,
        achieved_gm=gm,
        achieved_pm=pm,
        grid_index=idx,
        diagnostics=tuple(diagnostics),
        model=model,
        spec=spec,
        feasible_set=feasible,
        margins=report,
        curve=curves,
        alternatives=tuple(c[1] for c in candidates[1:]),
    )


def order_trend(
    model: ProcessModel,
    spec: RobustnessSpec,
    opts: SolverOptions | None = None,
    d_gain: float = 0.25,
    d_phase: float = 0.05,
) -> dict:
    """Report how the tuned order moves when either margin is raised.

    Purely diagnostic: the order is typically observed to fall as either
    margin grows, but this is not guaranteed.
    """
    base = tune(model, spec, opts).beta
    out = {"beta": base}
    for key, other in (
        ("gain_margin", RobustnessSpec(spec.gain_margin + d_gain, spec.phase_margin)),
        ("phase_margin", RobustnessSpec(spec.gain_margin, spec.phase_margin + d_phase)),
    ):
        try:
            beta = tune(model, other, opts).beta
        except NoIntersectionError:
            out[key] = None
            continue
        out[key] = {"beta": beta, "decreasing": beta < base}
    return out
