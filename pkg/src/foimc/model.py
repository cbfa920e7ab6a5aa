"""Domain types and exact frequency responses of the FO-IMC loop.

The plant is a first-order-plus-dead-time (FOPTD) process

    G(s) = k exp(-theta s) / (tau s + 1)

controlled in an IMC structure with the fractional filter

    F(s) = 1 / (lam s**beta + 1),    0 < beta < 2,  lam > 0.

With an exact model the loop transfer function depends on theta, lam and
beta only:

    L(s) = exp(-theta s) / (lam s**beta + 1 - exp(-theta s)).

Every evaluation here keeps the delay term exact (no Pade or rational
approximation of either exp(-theta s) or s**beta).  Frequencies must be
strictly positive; the principal branch (j w)**beta = w**beta exp(j beta pi/2)
is used throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from .errors import DomainError, InfeasibleSpecError, SingularityError

if TYPE_CHECKING:
    from .feasibility import BetaFeasibleSet
    from .verification import MarginReport

SINGULAR_DENOMINATOR = 1e-300


@dataclass(frozen=True)
class ProcessModel:
    """FOPTD plant ``k exp(-theta s) / (tau s + 1)``."""

    k: float
    tau: float
    theta: float

    def __post_init__(self):
        for name in ("k", "tau", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.k == 0:
            raise DomainError("process gain k must be non-zero")
        if self.tau <= 0:
            raise DomainError(f"time constant tau must be positive, got {self.tau}")
        if self.theta <= 0:
            raise DomainError(f"dead time theta must be positive, got {self.theta}")


@dataclass(frozen=True)
class RobustnessSpec:
    """Desired gain margin (absolute ratio) and phase margin (radians)."""

    gain_margin: float
    phase_margin: float

    def __post_init__(self):
        am, pm = self.gain_margin, self.phase_margin
        if not (math.isfinite(am) and math.isfinite(pm)):
            raise InfeasibleSpecError("gain and phase margin must be finite")
        if am == 1:
            raise InfeasibleSpecError(
                "gain margin A_m = 1 is not admissible: the phase-crossover "
                "equation degenerates (c2/r2 -> infinity); A_m >= 2 is required"
            )
        if am < 2:
            raise InfeasibleSpecError(
                f"gain margin A_m = {am:g} is below 2; the phase crossover is only "
                "guaranteed real for A_m >= 2"
            )
        if not 0 < pm < math.pi:
            raise InfeasibleSpecError(
                f"phase margin {pm:g} rad outside (0, pi); phi_m = 0 has no gain "
                "crossover and phi_m >= pi is meaningless"
            )

    @property
    def gain_margin_db(self) -> float:
        return 20.0 * math.log10(self.gain_margin)


@dataclass(frozen=True)
class FoFilterParams:
    """Fractional IMC filter ``1 / (lam s**beta + 1)``."""

    lam: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise DomainError(f"filter constant lambda must be positive, got {self.lam}")
        if not 0 < self.beta < 2:
            raise DomainError(f"fractional order beta must lie in (0, 2), got {self.beta}")


@dataclass(frozen=True)
class ComplexResponse:
    omega: float
    value: complex

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError("response samples need omega > 0")


@dataclass(frozen=True)
class TuningResult:
    """Outcome of :func:`foimc.solver.tune`.

    ``grid_index`` is the index, in the concatenated beta grid, of the sample
    immediately left of the refined intersection.
    """

    params: FoFilterParams
    omega_g: float
    omega_p: float
    achieved_gm: float
    achieved_pm: float
    grid_index: int
    diagnostics: tuple[str, ...] = ()
    model: ProcessModel | None = None
    spec: RobustnessSpec | None = None
    feasible_set: BetaFeasibleSet | None = None
    margins: MarginReport | None = None
    curve: Any = field(default=None, repr=False)
    alternatives: tuple[FoFilterParams, ...] = ()

    @property
    def lam(self) -> float:
        return self.params.lam

    @property
    def beta(self) -> float:
        return self.params.beta


def _positive_omega(omega):
    w = np.asarray(omega, dtype=float)
    if w.size == 0 or not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise DomainError("frequencies must be finite and strictly positive")
    return w


def _wrap(w, value):
    return complex(value) if np.ndim(w) == 0 else value


def _fo_term(lam, beta, w):
    """Real and imaginary parts of lam * (j w)**beta on the principal branch."""
    mag = lam * w**beta
    half = beta * math.pi / 2
    return mag * math.cos(half), mag * math.sin(half)


def eval_filter(params: FoFilterParams, omega):
    """Return ``1 / (lam (j omega)**beta + 1)``; vectorised over ``omega``."""
    w = _positive_omega(omega)
    re, im = _fo_term(params.lam, params.beta, w)
    return _wrap(w, 1.0 / ((1.0 + re) + 1j * im))


def loop_denominator(params: FoFilterParams, theta: float, omega):
    """Real/imaginary split of ``lam (j w)**beta + 1 - exp(-j theta w)``.

    ``1 - cos(theta w)`` is formed as ``2 sin(theta w / 2)**2`` to keep
    precision at low frequency.
    """
    w = _positive_omega(omega)
    if not theta > 0:
        raise DomainError(f"dead time theta must be positive, got {theta}")
    fo_re, fo_im = _fo_term(params.lam, params.beta, w)
    tw = theta * w
    re = 2.0 * np.sin(0.5 * tw) ** 2 + fo_re
    im = fo_im + np.sin(tw)
    return re, im


def eval_open_loop(params: FoFilterParams, theta: float, omega):
    """Loop transfer function ``L(j omega)`` of the FO-IMC scheme."""
    w = _positive_omega(omega)
    re, im = loop_denominator(params, theta, w)
    if np.any(np.hypot(re, im) < SINGULAR_DENOMINATOR):
        raise SingularityError("loop denominator vanished; L(j omega) is singular")
    return _wrap(w, np.exp(-1j * theta * w) / (re + 1j * im))


def eval_complementary(params: FoFilterParams, theta: float, omega):
    """Closed-loop response ``exp(-j theta w) / (lam (j w)**beta + 1)``."""
    w = _positive_omega(omega)
    if not theta > 0:
        raise DomainError(f"dead time theta must be positive, got {theta}")
    return _wrap(w, np.exp(-1j * theta * w) * eval_filter(params, w))


def eval_sensitivity(params: FoFilterParams, theta: float, omega):
    """Sensitivity ``1 / (1 + L(j omega))``."""
    w = _positive_omega(omega)
    return _wrap(w, 1.0 / (1.0 + eval_open_loop(params, theta, w)))


def eval_imc_controller(model: ProcessModel, params: FoFilterParams, omega):
    """IMC controller ``Q(j w) = (tau j w + 1) / (k (lam (j w)**beta + 1))``."""
    w = _positive_omega(omega)
    return _wrap(w, (1.0 + 1j * model.tau * w) / model.k * eval_filter(params, w))


def describe_imc_controller(model: ProcessModel, params: FoFilterParams) -> str:
    return (
        f"Q(s) = ({model.tau:.6g} s + 1) / "
        f"({model.k:.6g} ({params.lam:.6g} s^{params.beta:.6g} + 1))"
    )
