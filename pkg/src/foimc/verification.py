"""Independent checks of a tuned FO-IMC loop.

Nothing in here uses the closed-form crossover expressions.  Margins are read
off a logarithmic frequency sweep of L(j w) and refined by bisection; the
brute-force tuner searches a (beta, lambda) grid using only those sweeps.

Step responses are synthesised in the frequency domain with the real-part
inversion formula for a causal, stable closed loop T(s),

    y(t) = (2/pi) * integral_0^inf Re T(j w) sin(w t) / w dw,

so neither the delay nor s**beta is ever approximated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import least_squares
from scipy.special import sici

from .errors import (
    DomainError,
    IntegrationError,
    NoGainCrossoverError,
    NoPhaseCrossoverError,
    OracleFailureError,
)
from .feasibility import feasible_beta_set
from .model import FoFilterParams, ProcessModel, RobustnessSpec, eval_sensitivity

SWEEP_DECADES = (-4.0, 2.0)
SWEEP_POINTS = 2000
ROOT_RTOL = 1e-10
ORACLE_MAX_OBJECTIVE = 0.05


@dataclass(frozen=True)
class MarginReport:
    gain_margin_measured: float
    phase_margin_measured: float
    omega_g_measured: float
    omega_p_measured: float
    residuals: dict = field(default_factory=dict)


def default_sweep(theta: float, points: int = SWEEP_POINTS) -> np.ndarray:
    """Log-spaced sweep over ``[1e-4/theta, 1e2/theta]``."""
    lo, hi = SWEEP_DECADES
    return np.logspace(lo, hi, points) / theta


def _denominator(lam, beta, theta, w):
    """Real/imag parts of lam (j w)^beta + 1 - exp(-j theta w), rows x sweep.

    ``lam`` and ``beta`` are 1-D of equal length (one filter per row); ``w``
    is either the shared sweep (1-D) or one frequency per row (column).
    """
    if w.ndim == 1:
        # grid searches repeat each order across many lambdas
        orders, inverse = np.unique(beta, return_inverse=True)
        mag = (w ** orders[:, None])[inverse]
    else:
        mag = w ** beta[:, None]
    mag *= lam[:, None]
    half = beta[:, None] * np.pi / 2
    tw = theta * w
    # in place where possible: these arrays are large in grid searches
    re = mag * np.cos(half)
    re += 2.0 * np.sin(0.5 * tw) ** 2
    im = mag
    im *= np.sin(half)
    im += np.sin(tw)
    return re, im


def _loop_phase(re, im, tw, reference):
    """Phase of L = exp(-j tw)/den, shifted by 2 pi k to lie nearest ``reference``."""
    a = -tw - np.arctan2(im, re)
    return a + 2 * np.pi * np.round((reference - a) / (2 * np.pi))


class _Crossings:
    """Crossings of L over the negative real axis along each row of a sweep.

    ``L`` is proportional to ``z = exp(-j tw) * conj(den)``.  A segment between
    consecutive samples that crosses the negative real axis moves the unwrapped
    phase by -2 pi (clockwise) or +2 pi.  The orientation is read from the sign
    of the cross product, which matches ``np.unwrap`` with threshold pi
    without evaluating a 2-D arctangent.  Crossings are sparse, so they are
    kept as an event list sorted by (row, sample).
    """

    def __init__(self, re, im, tw):
        c, s = np.cos(tw), np.sin(tw)
        zi = c * im
        zi += s * re
        np.negative(zi, out=zi)
        below = zi < 0
        rows, k = np.nonzero(below[:, :-1] != below[:, 1:])
        zr0 = c[k] * re[rows, k] - s[k] * im[rows, k]
        zr1 = c[k + 1] * re[rows, k + 1] - s[k + 1] * im[rows, k + 1]
        cross = zr0 * zi[rows, k + 1] - zi[rows, k] * zr1
        step = np.where(below[rows, k], -(cross < 0).astype(np.int64), (cross > 0).astype(np.int64))
        keep = step != 0
        self.rows, self.k, self.step = rows[keep], k[keep], step[keep]
        self.ncols = re.shape[1]
        self.key = self.rows * self.ncols + self.k
        self.total = np.concatenate([[0], np.cumsum(self.step)])

    def winding(self, rows, idx):
        """Net turns accumulated before sample ``idx`` of each row."""
        start = np.searchsorted(self.key, rows * self.ncols)
        stop = np.searchsorted(self.key, rows * self.ncols + idx)
        return self.total[stop] - self.total[start]

    def first_drop(self, nrows):
        """First sample where the unwrapped phase drops through -pi, -1 if none."""
        e = np.arange(self.step.size)
        start = np.searchsorted(self.key, self.rows * self.ncols)
        before = self.total[e] - self.total[start]
        hit = (self.step < 0) & (before == 0)
        out = np.full(nrows, -1)
        r, first = np.unique(self.rows[hit], return_index=True)
        out[r] = self.k[hit][first]
        return out


def _first_true(mask):
    """Index of the first True per row, -1 where there is none."""
    idx = np.argmax(mask, axis=1)
    return np.where(mask[np.arange(mask.shape[0]), idx], idx, -1)


def _bisect_log(f, lo, hi, rtol=ROOT_RTOL):
    """Vectorised bisection in log-frequency; ``f(lo) >= 0 > f(hi)`` per entry."""
    while np.any(hi / lo - 1 > rtol):
        mid = np.sqrt(lo * hi)
        upper = f(mid) >= 0
        lo = np.where(upper, mid, lo)
        hi = np.where(upper, hi, mid)
    return np.sqrt(lo * hi)


def _margins(lam, beta, theta, w):
    """Measured crossovers and margins for a batch of filters.

    Returns arrays (wg, wp, gm, pm, res_g, res_p); nan where a crossing is
    missing from the sweep.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    beta = np.broadcast_to(np.asarray(beta, dtype=float), lam.shape)
    rows = np.arange(lam.size)
    re, im = _denominator(lam, beta, theta, w)
    # |L| >= 1  <=>  |den| <= 1
    inside = re * re
    inside += im * im
    inside = inside <= 1
    crossings = _Crossings(re, im, theta * w)

    gi = _first_true(inside[:, :-1] & ~inside[:, 1:])
    # unwrapped phase first drops through -pi: a clockwise crossing at zero net winding
    pi_ = crossings.first_drop(lam.size)
    has_g, has_p = gi >= 0, pi_ >= 0
    gi, pi_ = np.maximum(gi, 0), np.maximum(pi_, 0)

    def den_at(x):
        r, i = _denominator(lam, beta, theta, x[:, None])
        return r[:, 0], i[:, 0]

    def gain_excess(x):
        r, i = den_at(x)
        return 1 - np.hypot(r, i)

    ref_p = np.full(lam.size, -np.pi)
    r0, i0 = re[rows, gi], im[rows, gi]
    ref_g = _loop_phase(r0, i0, theta * w[gi], 0.0) + 2 * np.pi * crossings.winding(rows, gi)

    def phase_excess(x):
        r, i = den_at(x)
        return _loop_phase(r, i, theta * x, ref_p) + np.pi

    wg = _bisect_log(gain_excess, w[gi], w[gi + 1])
    wp = _bisect_log(phase_excess, w[pi_], w[pi_ + 1])

    rg, ig = den_at(wg)
    rp, ip = den_at(wp)
    pm = np.pi + _loop_phase(rg, ig, theta * wg, ref_g)
    gm = np.hypot(rp, ip)
    res_g = np.abs(1 / np.hypot(rg, ig) - 1)
    res_p = np.abs(_loop_phase(rp, ip, theta * wp, ref_p) + np.pi)
    nan = np.nan
    return (
        np.where(has_g, wg, nan),
        np.where(has_p, wp, nan),
        np.where(has_p, gm, nan),
        np.where(has_g, pm, nan),
        np.where(has_g, res_g, nan),
        np.where(has_p, res_p, nan),
    )


def _resolve_sweep(theta, sweep):
    if sweep is None:
        return default_sweep(theta)
    w = np.asarray(sweep, dtype=float)
    if w.ndim != 1 or w.size < SWEEP_POINTS:
        raise DomainError(f"sweep needs at least {SWEEP_POINTS} frequencies")
    if not (np.all(w > 0) and np.all(np.diff(w) > 0)):
        raise DomainError("sweep must be positive and strictly increasing")
    return w


def measure_margins(params: FoFilterParams, theta: float, sweep=None) -> MarginReport:
    """Gain and phase margins of the FO-IMC loop read from a frequency sweep.

    The gain crossover is the first downward crossing of ``|L| = 1``; the
    phase crossover is the first crossing of the unwrapped phase through
    ``-pi``.  Both are refined by bisection to ``1e-10`` relative.
    """
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    w = _resolve_sweep(theta, sweep)
    wg, wp, gm, pm, rg, rp = (v[0] for v in _margins(params.lam, params.beta, theta, w))
    if math.isnan(wg):
        raise NoGainCrossoverError(
            f"|L(jw)| never crosses 1 on [{w[0]:.3g}, {w[-1]:.3g}] rad/s"
        )
    if math.isnan(wp):
        raise NoPhaseCrossoverError(
            f"arg L(jw) never crosses -pi on [{w[0]:.3g}, {w[-1]:.3g}] rad/s"
        )
    return MarginReport(
        gain_margin_measured=float(gm),
        phase_margin_measured=float(pm),
        omega_g_measured=float(wg),
        omega_p_measured=float(wp),
        residuals={"gain_crossover": float(rg), "phase_crossover": float(rp)},
    )


# -- brute-force oracle -----------------------------------------------------

@dataclass(frozen=True)
class OracleResult:
    """Brute-force optimum plus the coarse grid spacing used to judge agreement."""

    params: FoFilterParams
    objective: float
    beta_step: float
    log_lambda_step: float
    gain_margin: float
    phase_margin: float
    grid_params: FoFilterParams

    def same_cell(self, other: FoFilterParams, cells: float = 1.0) -> bool:
        """True when ``other`` lies within ``cells`` coarse grid cells of the optimum."""
        db = abs(other.beta - self.params.beta) / self.beta_step
        dl = abs(math.log(other.lam / self.params.lam)) / self.log_lambda_step
        return db <= cells and dl <= cells


def _oracle_betas(feasible, count):
    step = feasible.measure / count
    betas, steps = [], []
    for lo, hi in feasible.intervals:
        k = max(1, round((hi - lo) / step))
        h = (hi - lo) / k
        betas.append(lo + h * (np.arange(k) + 0.5))
        steps.append(np.full(k, h))
    return np.concatenate(betas), np.concatenate(steps)


def _objective(lams, betas, spec, theta, w):
    _, _, gm, pm, _, _ = _margins(lams, betas, theta, w)
    obj = (gm / spec.gain_margin - 1) ** 2 + ((pm - spec.phase_margin) / spec.phase_margin) ** 2
    return np.where(np.isfinite(obj), obj, np.inf), gm, pm


def brute_force_search(
    model: ProcessModel,
    spec: RobustnessSpec,
    beta_grid: int = 200,
    lambda_grid: int = 200,
    zoom_passes: int = 4,
) -> OracleResult:
    """Exhaustive (beta, lambda) grid search scored by measured margins.

    The coarse grid covers the feasible orders and ``lambda`` in
    ``[1e-3, 1e3] * theta**beta_mid`` (log-spaced).  The objective is badly
    conditioned along one direction, so the coarse optimum is followed by
    ``zoom_passes`` finer grids centred on the running best.
    """
    if beta_grid < 200 or lambda_grid < 200:
        raise DomainError("oracle grids must be at least 200 x 200")
    theta = model.theta
    feasible = feasible_beta_set(spec.phase_margin)
    betas, steps = _oracle_betas(feasible, beta_grid)
    beta_mid = 0.5 * (feasible.lower + feasible.upper)
    centre = beta_mid * math.log10(theta)
    lams = np.logspace(centre - 3, centre + 3, lambda_grid)
    log_step = 6 * math.log(10) / (lambda_grid - 1)
    w = default_sweep(theta)

    best_obj, best = math.inf, None
    batch = 20
    for start in range(0, len(betas), batch):
        bb = np.repeat(betas[start:start + batch], lambda_grid)
        ll = np.tile(lams, len(bb) // lambda_grid)
        obj, gm, pm = _objective(ll, bb, spec, theta, w)
        j = int(np.argmin(obj))
        if obj[j] < best_obj:
            best_obj = float(obj[j])
            best = (ll[j], bb[j], steps[start + j // lambda_grid], gm[j], pm[j])
    if best is None or best_obj > ORACLE_MAX_OBJECTIVE:
        raise OracleFailureError(
            f"best grid objective {best_obj:.3g} exceeds {ORACLE_MAX_OBJECTIVE}", best_obj
        )
    lam, beta, h, gm, pm = best
    grid_params = FoFilterParams(float(lam), float(beta))
    lo, hi = next((a, b) for a, b in feasible.intervals if a < beta < b)

    half_b, half_l = 6 * h, 4 * log_step
    for _ in range(zoom_passes):
        bz = np.linspace(max(lo + 1e-9, beta - half_b), min(hi - 1e-9, beta + half_b), 25)
        lz = lam * np.exp(np.linspace(-half_l, half_l, 25))
        bb, ll = np.repeat(bz, lz.size), np.tile(lz, bz.size)
        obj, gmz, pmz = _objective(ll, bb, spec, theta, w)
        j = int(np.argmin(obj))
        if obj[j] < best_obj:
            best_obj, lam, beta, gm, pm = float(obj[j]), ll[j], bb[j], gmz[j], pmz[j]
        half_b, half_l = half_b / 4, half_l / 4

    # Final polish: solve measured-margin equalities from the zoomed optimum.
    def residual(x):
        _, _, g, p, _, _ = _margins(np.exp([x[1]]), np.array([x[0]]), theta, w)
        r = np.array([g[0] / spec.gain_margin - 1, (p[0] - spec.phase_margin) / spec.phase_margin])
        return np.where(np.isfinite(r), r, 1.0)

    x0 = np.array([beta, math.log(lam)])
    lo_b, hi_b = lo + 1e-9, hi - 1e-9
    if lo_b < beta < hi_b:
        sol = least_squares(
            residual,
            x0,
            bounds=([lo_b, -np.inf], [hi_b, np.inf]),
            x_scale=[h, log_step],
            xtol=1e-12,
            ftol=1e-14,
        )
        obj = float(np.sum(sol.fun**2))
        if obj < best_obj:
            best_obj = obj
            beta, lam = float(sol.x[0]), float(math.exp(sol.x[1]))
            _, _, g, p, _, _ = _margins(np.array([lam]), np.array([beta]), theta, w)
            gm, pm = g[0], p[0]

    return OracleResult(
        FoFilterParams(float(lam), float(beta)),
        best_obj,
        float(h),
        log_step,
        float(gm),
        float(pm),
        grid_params,
    )


def brute_force_tune(
    model: ProcessModel, spec: RobustnessSpec, beta_grid: int = 200, lambda_grid: int = 200
) -> FoFilterParams:
    return brute_force_search(model, spec, beta_grid, lambda_grid).params


# -- step responses ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StepResponse:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


def _j1(x):
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    out[small] = xs / 3 - xs**3 / 30
    xl = x[~small]
    out[~small] = (np.sin(xl) - xl * np.cos(xl)) / xl**2
    return out


def _filon(w, f, s, kind):
    """Integral of ``f(w) sin(s w)`` (or cos) over ``[w[0], w[-1]]``.

    ``f`` is taken piecewise linear between the nodes; each panel is then
    integrated exactly, so ``s * (panel width)`` may be arbitrarily large.
    Vectorised over the frequencies ``s``.
    """
    c = 0.5 * (w[1:] + w[:-1])
    h = 0.5 * (w[1:] - w[:-1])
    fm = 0.5 * (f[1:] + f[:-1])
    slope = (f[1:] - f[:-1]) / (2 * h)
    out = np.empty(len(s))
    chunk = max(1, 4_000_000 // len(c))
    for start in range(0, len(s), chunk):
        ss = s[start:start + chunk, None]
        x = ss * h
        j0 = np.sinc(x / np.pi)
        j1 = _j1(x)
        sc, cc = np.sin(ss * c), np.cos(ss * c)
        if kind == "sin":
            panel = fm * sc * 2 * h * j0 + slope * cc * 2 * h**2 * j1
        else:
            panel = fm * cc * 2 * h * j0 - slope * sc * 2 * h**2 * j1
        out[start:start + chunk] = panel.sum(axis=1)
    return out


def _eta_step(params, theta, t, w):
    """Step response of exp(-theta s) F(s) on nodes ``w`` (see module docstring).

    Writing F(j w) = P + jQ, Re[exp(-j theta w) F] sin(w t) splits into
    non-oscillatory P/w and Q/w weighted by sines/cosines at t +- theta.
    """
    half = params.beta * np.pi / 2
    mag = params.lam * w**params.beta
    den = (1 + mag * np.cos(half)) ** 2 + (mag * np.sin(half)) ** 2
    P = (1 + mag * np.cos(half)) / den
    Q = -mag * np.sin(half) / den
    sp, sm = t + theta, t - theta
    both = np.concatenate([sp, sm])
    SP = _filon(w, P / w, both, "sin")
    CQ = _filon(w, Q / w, both, "cos")
    n = len(t)
    body = SP[:n] + SP[n:] + CQ[n:] - CQ[:n]
    # below w[0]: P ~ P(w0), Q/w contribution is O(w0**2)
    lead = P[0] * (sici(w[0] * sp)[0] + sici(w[0] * sm)[0])
    return (body + lead) / np.pi


def _adaptive(compute, tol, start, max_points):
    n = start
    prev = compute(n)
    while True:
        n *= 2
        cur = compute(n)
        err = float(np.max(np.abs(cur - prev)))
        if err <= tol:
            return cur
        if n >= max_points:
            raise IntegrationError(
                f"step-response quadrature did not reach {tol:g} (last change {err:.3g})", cur
            )
        prev = cur


def step_response(
    params: FoFilterParams,
    theta: float,
    horizon: float,
    samples: int = 500,
    tol: float = 1e-4,
) -> StepResponse:
    """Unit-step response of the closed FO-IMC loop ``exp(-theta s)/(lam s^beta + 1)``.

    The frequency axis ``[1e-5/theta, 1e4/theta]`` is log-spaced and doubled
    until successive results agree to ``tol``.
    """
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    floor = 10 * max(theta, params.lam ** (1 / params.beta))
    if horizon < floor:
        raise DomainError(f"horizon {horizon:g} is shorter than 10*max(theta, lam^(1/beta)) = {floor:g}")
    if samples < 500:
        raise DomainError("at least 500 samples are required")
    t = np.linspace(0.0, horizon, samples)

    def compute(n):
        w = np.logspace(-5, 4, n) / theta
        return _eta_step(params, theta, t, w)

    return StepResponse(t, _adaptive(compute, tol, 4000, 256_000))


def closed_loop_step_response(
    closed_loop: Callable[[np.ndarray], np.ndarray],
    horizon: float,
    omega_scale: float,
    samples: int = 500,
    tol: float = 1e-3,
) -> StepResponse:
    """Step response of an arbitrary stable closed loop with unit DC gain.

    ``closed_loop`` maps an array of frequencies to T(j w).  ``omega_scale``
    is the frequency (typically 1/theta) above which T oscillates with the
    delay; the grid is log-spaced below it and uniform above it, up to
    ``1e3 * omega_scale``.
    """
    if samples < 2:
        raise DomainError("need at least two samples")
    t = np.linspace(0.0, horizon, samples)

    def compute(n):
        low = np.logspace(-5, 0, n // 4, endpoint=False) * omega_scale
        high = np.linspace(1.0, 1e3, n) * omega_scale
        w = np.concatenate([low, high])
        re = np.real(closed_loop(w))
        body = _filon(w, re / w, t, "sin")
        return 2 / np.pi * (body + re[0] * sici(w[0] * t)[0])

    return StepResponse(t, _adaptive(compute, tol, 25_000, 400_000))


def classical_step_response(
    model: ProcessModel,
    kp: float,
    ki: float,
    kd: float,
    horizon: float,
    samples: int = 500,
) -> StepResponse:
    """Step response of ``C(s) = kp + ki/s + kd s`` around the FOPTD plant.

    Used to compare against PI/PID settings published elsewhere; the design
    of those settings is not part of this package.
    """

    def closed(w):
        s = 1j * w
        cg = (kp + ki / s + kd * s) * model.k * np.exp(-model.theta * s) / (model.tau * s + 1)
        return cg / (1 + cg)

    return closed_loop_step_response(closed, horizon, 1 / model.theta, samples)


# -- disturbance rejection --------------------------------------------------

@dataclass(frozen=True)
class DisturbanceCheck:
    passed: bool
    omegas: tuple[float, ...]
    magnitudes: tuple[float, ...]


DISTURBANCE_PROBES = (1e-4, 1e-5, 1e-6)
DISTURBANCE_LIMIT = 1e-3


def check_disturbance_rejection(params: FoFilterParams, theta: float) -> DisturbanceCheck:
    """Check that ``|1/(1+L)|`` falls towards zero as the frequency does."""
    if not isinstance(params, FoFilterParams):
        raise DomainError("params must be FoFilterParams")
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    omegas = tuple(p / theta for p in DISTURBANCE_PROBES)
    mags = tuple(float(abs(eval_sensitivity(params, theta, w))) for w in omegas)
    decreasing = all(b < a for a, b in zip(mags, mags[1:]))
    return DisturbanceCheck(decreasing and mags[-1] < DISTURBANCE_LIMIT, omegas, mags)
