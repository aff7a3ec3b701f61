from __future__ import annotations

import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hotspots import potential as pot
from hotspots import profiles as prof
from hotspots.errors import AmbiguousClass, DivergentGamma

R_TEST = np.geomspace(1e-3, 1e3, 61)


@pytest.fixture(scope="module")
def zero3():
    spec = pot.zero(3)
    return spec, prof.solve_profiles(spec, 2, r_max=1e4)


def test_zero_potential_profiles(zero3):
    spec, (U0, U1) = zero3
    assert_allclose(U0(R_TEST), 1.0, rtol=1e-12)
    assert_allclose(U1(R_TEST), R_TEST, rtol=1e-10)
    cls = prof.classify_operator(U0, spec)
    assert (cls.tag, cls.a_exponent) == ("S", 0.0)
    assert_allclose(cls.c_star, 1.0, rtol=1e-10)


@pytest.mark.parametrize("N, lam", [(2, 0.5), (3, 2.0), (3, -0.2), (4, -0.75), (5, 3.0)])
def test_hardy_profile_is_monomial(N, lam):
    spec = pot.hardy(N, lam)
    U = prof.solve_profile(spec, 0, r_max=1e4)
    a = pot.characteristic_exponents(N, lam).a_plus
    assert_allclose(U(R_TEST), R_TEST ** a, rtol=1e-8)


def test_hardy_classification():
    spec = pot.hardy(3, 2.0)
    cls = prof.classify_operator(prof.solve_profile(spec, 0, r_max=1e4), spec)
    assert cls.tag == "S"
    assert_allclose([cls.a_exponent, cls.c_star], [1.0, 1.0], rtol=1e-10)


def test_hardy_threshold_classification_records_evidence():
    spec = pot.hardy(4, -1.0)
    U = prof.solve_profile(spec, 0, r_max=1e4)
    cls = prof.classify_operator(U, spec, raise_ambiguous=False)
    assert cls.tag in ("S_star", "C")
    assert set(cls.evidence) >= {"S_star", "C"}


def test_near_threshold_tail_is_ambiguous():
    spec = pot.lorentz(3, -0.2499)
    U = prof.solve_profile(spec, 0, r_max=1e4)
    with pytest.raises(AmbiguousClass) as info:
        prof.classify_operator(U, spec)
    assert info.value.classification.ambiguous


def test_F_closed_forms(zero3):
    _, (U0, _) = zero3
    r = np.geomspace(0.1, 100, 40)
    F = prof.compute_F(U0)
    assert_allclose(F(r), r ** 2 / 6, rtol=1e-6)
    assert F(np.array([0.0]))[0] == 0.0
    for N, lam in ((3, 2.0), (4, 0.5), (3, -0.2)):
        U = prof.solve_profile(pot.hardy(N, lam), 0, r_max=1e4)
        a = U.a_plus_origin
        assert_allclose(prof.compute_F(U)(r), r ** 2 / (2 * (N + 2 * a)), rtol=1e-6)


def test_gamma_vanishes_for_zero_potential(zero3):
    spec, (U0, U1) = zero3
    for U in (U0, U1):
        G = prof.compute_Gamma(spec, U)
        assert np.max(np.abs(G.values)) == 0.0


@pytest.mark.parametrize("spec", [pot.decaying(3, 1.0, 4.0), pot.lorentz(3, 0.5),
                                  pot.decaying(3, -0.1, 5.0)])
def test_gamma_identity(spec):
    for U in prof.solve_profiles(spec, 2, r_max=1e4):
        G = prof.compute_Gamma(spec, U)
        assert G.identity_error < 1e-5


def test_gamma_limit_finite_for_fast_decay():
    spec = pot.decaying(3, 1.0, 4.0)
    U = prof.solve_profile(spec, 0, r_max=1e4)
    G = prof.compute_Gamma(spec, U, need_limit=True)
    assert math.isfinite(G.limit) and G.limit > 0
    assert_allclose(U.c_infinity, 1.0 + G.limit, rtol=1e-4)


def test_gamma_limit_diverges_for_inverse_square_tail():
    spec = pot.lorentz(3, 0.5)
    U = prof.solve_profile(spec, 0, r_max=1e4)
    with pytest.raises(DivergentGamma):
        prof.compute_Gamma(spec, U, need_limit=True)


def test_lambda_values(zero3):
    spec, (U0, _) = zero3
    assert prof.compute_Lambda(spec, U0) == 0.0
    pos = pot.decaying(3, 1.0, 5.0)
    # regression value from an independent quadrature at rtol 1e-12
    assert_allclose(prof.compute_Lambda(pos, prof.solve_profile(pos, 0, r_max=1e4)),
                    0.381311246, rtol=1e-6)
    neg = pot.decaying(3, -1.0, 5.0)
    Un = prof.solve_profile(neg, 0, r_max=1e4)
    assert prof.compute_Lambda(neg, Un) < 0
    assert not prof.compute_Pi(Un).is_empty


def test_pi_cases(zero3):
    _, (U0, _) = zero3
    pz = prof.compute_Pi(U0)
    assert pz.is_unbounded_plateau and pz.min_pi == 0.0
    ph = prof.compute_Pi(prof.solve_profile(pot.hardy(3, 1.0), 0, r_max=1e4))
    assert ph.is_empty
    Uw = prof.solve_profile(pot.lorentz(3, -0.2), 0, r_max=1e4)
    pw = prof.compute_Pi(Uw)
    assert not pw.is_empty and pw.min_pi == 0.0
    assert Uw.a_infinity < 0


def test_ring_potential_pi_regression():
    r = np.geomspace(1e-6, 1e6, 481)
    spec = pot.tabulated(3, r, np.exp(-r ** 2) - 0.2 / (1 + r ** 2))
    U = prof.solve_profile(spec, 0, r_max=1e4)
    pi = prof.compute_Pi(U)
    assert_allclose(pi.min_pi, 3.3407, rtol=1e-4)
    assert_allclose(U.derivative(np.array([pi.min_pi]))[0], 0.0, atol=1e-8)


def test_S_heat_case(zero3):
    _, (U0, U1) = zero3
    M, xi = 2.0, 3.0
    S = prof.compute_S(U0, U1, M, xi)
    rr = S.r[(S.r > 0.1) & (S.r < 10)]
    assert_allclose(S.values[(S.r > 0.1) & (S.r < 10)], -M * rr ** 2 / 2 + xi * rr, rtol=1e-6, atol=1e-9)
    assert_allclose(S.maximizer, xi / M, rtol=1e-6)
    assert prof.compute_S(U0, U1, M, 0.0).maximizer == 0.0


def test_S_decreases_to_minus_infinity_when_A_zero():
    spec = pot.decaying(3, 1.0, 4.0)
    U0, U1 = prof.solve_profiles(spec, 2, r_max=1e4)
    S = prof.compute_S(U0, U1, 1.0, 0.5)
    assert S.values[-1] < -1e6


def test_ode_residual_small():
    spec = pot.lorentz(3, 0.5)
    for U in prof.solve_profiles(spec, 3, r_max=1e4):
        assert prof.ode_residual(U) < 1e-6


def test_classification_json_is_valid(zero3):
    spec, (U0, _) = zero3
    payload = json.loads(prof.classification_json(prof.classify_operator(U0, spec), scenario="x"))
    assert payload["tag"] == "S" and payload["scenario"] == "x"
