from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from hotspots import potential as pot
from hotspots import profiles as prof
from hotspots import spectral as sp
from hotspots.errors import TruncationWarning


@pytest.fixture(scope="module")
def zero_profiles():
    return {N: prof.solve_profiles(pot.zero(N), 3, r_max=1e4) for N in (2, 3)}


def bump(x0, width=1.0, weight=1.0):
    x0 = np.asarray(x0, dtype=float)

    def phi(x):
        return weight * np.exp(-np.sum((x - x0) ** 2, axis=-1) / width)

    return phi


def grid_integral(f, N, L=10.0, n=401):
    """Trapezoid rule on [-L, L]^N; exponentially accurate for Gaussian integrands."""
    s = np.linspace(-L, L, n)
    h = s[1] - s[0]
    X = np.stack(np.meshgrid(*([s] * N), indexing="ij"), axis=-1)
    return np.sum(f(X), axis=tuple(range(N))) * h ** N


def test_harmonic_constants():
    h2, h3 = sp.harmonic_constants(2), sp.harmonic_constants(3)
    assert_allclose([h2.sphere_area, h2.q_star], [2 * math.pi, (2 * math.pi) ** -0.5], rtol=1e-15)
    assert_allclose(h3.sphere_area, 4 * math.pi, rtol=1e-15)
    for N in range(2, 9):
        h = sp.harmonic_constants(N)
        assert_allclose(h.q_N / h.q_star, math.sqrt(N), rtol=1e-14)


def test_kappa_and_c_A():
    for N in range(2, 7):
        assert_allclose(sp.kappa_constant(N, 0.0), 2 ** N * math.pi ** (N / 2), rtol=1e-13)
    assert_allclose(sp.kappa_constant(3, 1.0), 32 * math.pi ** 1.5 * 1.5, rtol=1e-13)
    assert_allclose(sp.c_A(2, 0.0), 2 ** -0.5, rtol=1e-14)
    with pytest.raises(ValueError):
        sp.kappa_constant(3, -1.5)


@pytest.mark.parametrize("N", [2, 3])
def test_harmonics_are_orthonormal(N):
    nodes, w = sp.sphere_rule(N, 32)
    Q = [q for k in range(4) for q in sp.angular_harmonics(N, k)]
    G = np.array([[np.sum(w * a(nodes) * b(nodes)) for b in Q] for a in Q])
    assert_allclose(G, np.eye(len(Q)), atol=1e-12)


def test_harmonic_counts():
    assert [len(sp.angular_harmonics(3, k)) for k in range(4)] == [1, 3, 5, 7]
    assert [len(sp.angular_harmonics(2, k)) for k in range(4)] == [1, 2, 2, 2]
    assert len(sp.mode_indices(5, 2)) == 6


def test_radial_data_has_only_the_radial_mode(zero_profiles):
    phi = sp.FunctionData(3, lambda x: np.exp(-np.sum(x * x, axis=-1) / 4))
    d = sp.decompose(phi, zero_profiles[3], 3)
    assert_allclose(d.Xi_phi, 0.0, atol=1e-12)
    assert_allclose([v for (k, i), v in d.M_ki.items() if k > 0], 0.0, atol=1e-12)
    assert abs(sp.coefficient_M_ki(d, 1, 2)) < 1e-12
    # int exp(-|x|^2/4) dx = (4 pi)^(3/2)
    assert_allclose(d.pairing, (4 * math.pi) ** 1.5, rtol=1e-12)


def test_odd_data_has_zero_mass(zero_profiles):
    phi = sp.FunctionData(3, lambda x: x[..., 0] * np.exp(-np.sum(x * x, axis=-1)))
    d = sp.decompose(phi, zero_profiles[3], 3)
    assert abs(d.M_phi) < 1e-14
    nonzero = {key for key, v in d.M_ki.items() if abs(v) > 1e-12}
    assert nonzero == {(1, 1)}


@pytest.mark.filterwarnings("ignore::hotspots.errors.TruncationWarning")
@pytest.mark.parametrize("N, x0", [(2, (1.0, -0.5)), (3, (0.7, 0.2, -0.4))])
def test_gaussian_bump_moments_match_direct_quadrature(zero_profiles, N, x0):
    phi = bump(x0)
    d = sp.decompose(sp.FunctionData(N, phi), zero_profiles[N], 3)
    n = 401 if N == 2 else 121
    mass = grid_integral(phi, N, n=n)
    first = grid_integral(lambda X: X * phi(X)[..., None], N, n=n)
    assert_allclose(d.pairing, mass, rtol=1e-10)
    assert_allclose(d.Xi_phi, first, rtol=1e-10, atol=1e-12)
    kap = sp.kappa_constant(N, 0.0)
    assert_allclose(d.M_phi, mass / kap, rtol=1e-10)
    assert d.M_phi > 0
    assert_allclose(np.cross(np.r_[d.Xi_phi, [0] * (3 - N)], np.r_[x0, [0] * (3 - N)]), 0.0, atol=1e-12)


@pytest.mark.filterwarnings("ignore::hotspots.errors.TruncationWarning")
def test_orthonormality_reduction(zero_profiles):
    # int U_2 Q_{2,1} phi dx by 2-D quadrature equals the radial mode integral
    N = 2
    profiles = zero_profiles[N]
    phi = bump((0.8, 0.3), width=0.7)
    d = sp.decompose(sp.FunctionData(N, phi), profiles, 3)
    Q = sp.angular_harmonics(N, 2)[0]

    def integrand(X):
        r = np.linalg.norm(X, axis=-1)
        th = X / np.where(r > 0, r, 1.0)[..., None]
        return profiles[2](r) * Q(th) * phi(X)

    direct = grid_integral(integrand, N, n=601)
    U2 = profiles[2]
    scale = sp.c_A(N, U2.a_infinity) ** 2 / U2.c_infinity ** 2
    assert_allclose(d.M_ki[(2, 1)] / scale, direct, rtol=1e-9)


@pytest.mark.filterwarnings("ignore::hotspots.errors.TruncationWarning")
def test_M_1i_along_rotated_axis(zero_profiles):
    # data whose first moment points along e_1 has M_{1,i} supported on i = 1
    N = 3
    d = sp.decompose(sp.FunctionData(N, bump((0.9, 0.0, 0.0))), zero_profiles[N], 2)
    U1 = zero_profiles[N][1]
    h = sp.harmonic_constants(N)
    factor = sp.c_A(N, U1.a_infinity) ** 2 / U1.c_infinity ** 2
    assert_allclose([sp.coefficient_M_ki(d, 1, i) for i in (1, 2, 3)],
                    [factor * h.q_N * d.Xi_norm, 0.0, 0.0], atol=1e-12)


def test_truncation_warning_for_rough_data(zero_profiles):
    phi = sp.FunctionData(2, bump((2.5, 0.0), width=0.2))
    with pytest.warns(TruncationWarning):
        sp.decompose(phi, zero_profiles[2], 2)


def test_mode_list_synthesis_round_trip(zero_profiles):
    modes = (sp.RadialMode(0, 1, lambda r: np.exp(-r ** 2)),
             sp.RadialMode(1, 2, lambda r: 0.5 * r * np.exp(-r ** 2)),
             sp.RadialMode(2, 1, lambda r: 0.2 * r ** 2 * np.exp(-r ** 2)))
    ml = sp.ModeList(2, modes)
    via_function = sp.decompose(sp.FunctionData(2, ml), zero_profiles[2], 3)
    via_modes = sp.decompose(ml, zero_profiles[2], 3)
    for key in ((0, 1), (1, 2), (2, 1)):
        assert_allclose(via_function.M_ki[key], via_modes.M_ki[key], rtol=1e-10)
    # Parseval: band-limited data leaves no residual energy
    assert via_function.residual_energy <= 1e-9 * via_function.total_norm


def test_mode_list_rejects_high_modes_in_high_dimension():
    with pytest.raises(ValueError):
        sp.ModeList(4, (sp.RadialMode(2, 1, lambda r: r),))


@settings(max_examples=15, deadline=None)
@given(angle=st.floats(0, 2 * math.pi), x=st.floats(-1.5, 1.5), y=st.floats(-1.5, 1.5))
def test_rotation_equivariance(zero_profiles, angle, x, y):
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s], [s, c]])
    phi = bump((x, y), width=0.9)
    d = sp.decompose(sp.FunctionData(2, phi), zero_profiles[2], 2, check_norms=False)
    dr = sp.decompose(sp.FunctionData(2, lambda X: phi(X @ R)), zero_profiles[2], 2, check_norms=False)
    assert_allclose(dr.pairing, d.pairing, rtol=1e-11)
    assert_allclose(dr.Xi_phi, R @ d.Xi_phi, atol=1e-11 * d.pairing)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(zero_profiles, a, b):
    f, g = bump((0.5, 0.0)), bump((-0.3, 0.8), width=1.4)
    P = zero_profiles[2]
    df = sp.decompose(sp.FunctionData(2, f), P, 3, check_norms=False)
    dg = sp.decompose(sp.FunctionData(2, g), P, 3, check_norms=False)
    dh = sp.decompose(sp.FunctionData(2, lambda X: a * f(X) + b * g(X)), P, 3, check_norms=False)
    tol = 1e-11 * (abs(a) + abs(b) + 1) * 10
    assert abs(dh.pairing - (a * df.pairing + b * dg.pairing)) <= tol
    assert_allclose(dh.Xi_phi, a * df.Xi_phi + b * dg.Xi_phi, atol=tol)


def test_radial_integral_vector_valued():
    v = sp.radial_integral(lambda r: np.stack([np.exp(-r), r * np.exp(-r)], axis=-1))
    assert_allclose(v, [1.0, 1.0], rtol=1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert_allclose(sp.radial_integral(lambda r: np.exp(-r * r)), math.sqrt(math.pi) / 2, rtol=1e-13)


def test_weighted_norm_of_gaussian():
    # int exp(-r^2/2) exp(r^2/4) r^2 dr = sqrt(pi) * 2^(3/2) / 4 * ... closed form via Gamma
    val = sp.weighted_norm2(lambda r: np.exp(-r * r / 4), 3)
    assert_allclose(val, math.gamma(1.5) / 2 * 4 ** 1.5, rtol=1e-9)


@pytest.mark.parametrize("f", [
    lambda r: r ** 2.5 * np.exp(-r * r / 3) * (1 + np.cos(3 * r)),
    lambda r: r ** 0.3 / (1 + r ** 4),
    lambda r: np.exp(-(r - 7.0) ** 2 * 20),
])
def test_radial_integral_matches_quad(f):
    from scipy.integrate import quad
    ref = sum(quad(f, a, b, epsabs=0, epsrel=1e-13, limit=400)[0]
              for a, b in ((0, 1), (1, 10), (10, np.inf)))
    assert_allclose(sp.radial_integral(f), ref, rtol=1e-10)
