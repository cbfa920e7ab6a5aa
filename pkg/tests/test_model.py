import cmath
import math

import mpmath as mp
import numpy as np
import pytest

from foimc import (
    DomainError,
    FoFilterParams,
    InfeasibleSpecError,
    ProcessModel,
    RobustnessSpec,
    eval_complementary,
    eval_filter,
    eval_open_loop,
    eval_sensitivity,
)
from foimc.errors import SingularityError
from foimc.model import ComplexResponse, describe_imc_controller, eval_imc_controller

EX1 = FoFilterParams(40.46, 1.043)
EX2 = FoFilterParams(4.623, 1.043)


def mp_loop(lam, beta, theta, w):
    """Arbitrary-precision L(jw) straight from the transfer function."""
    mp.mp.dps = 40
    s = mp.mpc(0, w)
    d = mp.exp(-theta * s)
    return complex(d / (lam * s**beta + 1 - d))


# -- domain types -------------------------------------------------------

@pytest.mark.parametrize("k,tau,theta", [(0, 1, 1), (1, 0, 1), (1, -1, 1), (1, 1, 0), (1, 1, math.nan)])
def test_process_model_rejects(k, tau, theta):
    with pytest.raises(DomainError):
        ProcessModel(k, tau, theta)


def test_process_model_any_ratio():
    ProcessModel(-2.0, 1e-3, 1e3)
    ProcessModel(1.0, 1e3, 1e-3)


@pytest.mark.parametrize("am,pm", [(1.5, 1.0), (1.0, 1.0), (3.0, 0.0), (3.0, math.pi), (3.0, -0.1)])
def test_spec_rejects(am, pm):
    with pytest.raises(InfeasibleSpecError):
        RobustnessSpec(am, pm)


def test_spec_messages():
    with pytest.raises(InfeasibleSpecError, match="A_m >= 2"):
        RobustnessSpec(1.5, 1.0)
    with pytest.raises(InfeasibleSpecError, match="c2/r2"):
        RobustnessSpec(1.0, 1.0)


def test_spec_db():
    assert RobustnessSpec(3.0, 1.0).gain_margin_db == pytest.approx(9.5424, abs=1e-4)


@pytest.mark.parametrize("lam,beta", [(0, 1), (-1, 1), (1, 0), (1, 2), (math.inf, 1)])
def test_filter_params_rejects(lam, beta):
    with pytest.raises(DomainError):
        FoFilterParams(lam, beta)


def test_complex_response_positive_omega():
    ComplexResponse(1.0, 1 + 1j)
    with pytest.raises(DomainError):
        ComplexResponse(0.0, 1 + 0j)


# -- filter ---------------------------------------------------------------

def test_filter_dc_limit():
    assert abs(eval_filter(EX1, 1e-9) - 1) < 1e-6


def test_filter_unit_case():
    assert eval_filter(FoFilterParams(1, 1), 1.0) == pytest.approx(0.5 - 0.5j, abs=1e-15)


def test_filter_half_order_against_mpmath():
    mp.mp.dps = 30
    ref = complex(1 / (2 * mp.power(mp.mpc(0, 4), 0.5) + 1))
    got = eval_filter(FoFilterParams(2, 0.5), 4.0)
    assert abs(got - ref) < 1e-14
    assert got == pytest.approx(1 / (3.8284271 + 2.8284271j), rel=1e-7)


def test_filter_integer_order_reduction():
    w = np.logspace(-3, 3, 50)
    got = eval_filter(FoFilterParams(2.5, 1.0), w)
    assert np.allclose(got, 1 / (2.5j * w + 1), rtol=1e-14, atol=0)


@pytest.mark.parametrize("w", [0.0, -1.0, [1.0, 0.0], math.nan])
def test_nonpositive_omega(w):
    with pytest.raises(DomainError):
        eval_filter(EX1, w)


def test_vectorised_shape():
    w = np.logspace(-2, 0, 7)
    assert eval_open_loop(EX1, 40, w).shape == (7,)
    assert isinstance(eval_open_loop(EX1, 40, 0.1), complex)


# -- open loop -------------------------------------------------------------

def test_open_loop_gain_crossover_example_one():
    L = eval_open_loop(EX1, 40, 0.01391)
    assert abs(abs(L) - 1) < 2e-2
    assert abs(cmath.phase(L) - (-math.pi + 1.1345)) < 2e-2


def test_open_loop_phase_crossover_example_one():
    assert abs(abs(eval_open_loop(EX1, 40, 0.05066)) - 1 / 3) < 1e-2


def test_open_loop_low_frequency_series():
    w = 1e-6
    L = eval_open_loop(EX1, 40, w)
    series = 1 / abs(40.46 * (1j * w) ** 1.043 + 40j * w)
    assert abs(L) > 1e3
    assert abs(L) == pytest.approx(series, rel=1e-4)


def test_open_loop_against_mpmath():
    rng = np.random.default_rng(11)
    for _ in range(50):
        lam = 10 ** rng.uniform(-2, 2)
        beta = rng.uniform(0.05, 1.95)
        theta = 10 ** rng.uniform(-1, 1.5)
        w = 10 ** rng.uniform(-3, 1) / theta
        got = eval_open_loop(FoFilterParams(lam, beta), theta, w)
        ref = mp_loop(lam, beta, theta, w)
        assert abs(got - ref) <= 1e-9 * abs(ref)


def test_open_loop_singularity():
    with pytest.raises(SingularityError):
        eval_open_loop(FoFilterParams(1e-10, 1.9), 1e-10, 1e-300)


# -- closed loop --------------------------------------------------------

def test_complementary_dc():
    w = 1e-9
    eta = eval_complementary(EX1, 40, w)
    assert abs(eta - cmath.exp(-40j * w)) < 1e-6


def test_complementary_unit_case():
    assert eval_complementary(FoFilterParams(1, 1), 1.0, 1.0) == pytest.approx(
        cmath.exp(-1j) / (1 + 1j), abs=1e-15
    )


def test_complementary_matches_loop_ratio():
    w = np.logspace(-4, 1, 400)
    L = eval_open_loop(EX1, 40, w)
    eta = eval_complementary(EX1, 40, w)
    ok = np.abs(1 + L) > 1e-8
    ref = L / (1 + L)
    assert np.all(np.abs(eta - ref)[ok] <= 1e-10 * np.abs(ref)[ok])
    L1 = eval_open_loop(EX1, 40, 0.01)
    assert abs(eval_complementary(EX1, 40, 0.01) - L1 / (1 + L1)) <= 1e-10 * abs(L1 / (1 + L1))


def test_sensitivity_plus_complementary_is_one():
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for _ in range(1000):
        p = FoFilterParams(10 ** rng.uniform(-2, 3), rng.uniform(0.01, 1.99))
        theta = 10 ** rng.uniform(-1, 2)
        w = 10 ** rng.uniform(-4, 2) / theta
        total = eval_sensitivity(p, theta, w) + eval_complementary(p, theta, w)
        worst = max(worst, abs(total - 1))
    assert worst < 1e-12


@pytest.mark.parametrize("params,theta", [(EX1, 40.0), (EX2, 5.0)])
def test_sensitivity_vanishes_at_low_frequency(params, theta):
    w = 1e-6
    eps = abs(eval_sensitivity(params, theta, w))
    assert eps < 1e-3
    series = abs(params.lam * (1j * w) ** params.beta + 1j * theta * w)
    assert eps == pytest.approx(series, rel=1e-3)


def test_sensitivity_decreasing_below_crossover():
    w = np.logspace(-9, -3, 60) / 40
    mags = np.abs(eval_sensitivity(EX1, 40, w))
    assert np.all(np.diff(mags) > 0)


# -- controller ------------------------------------------------------------

def test_imc_controller():
    model = ProcessModel(0.43, 148, 40)
    q = eval_imc_controller(model, EX1, 0.02)
    ref = (148 * 0.02j + 1) / (0.43 * (40.46 * (0.02j) ** 1.043 + 1))
    assert q == pytest.approx(ref, rel=1e-13)
    text = describe_imc_controller(model, EX1)
    assert text == "Q(s) = (148 s + 1) / (0.43 (40.46 s^1.043 + 1))"
