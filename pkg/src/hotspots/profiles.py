"""Positive harmonic profiles U_k of -Delta + V_k and the functionals built on them.

The radial equation ``U'' + (N-1)/r U' - V_k U = 0`` is integrated in
``s = log r`` after factoring out the origin behaviour ``r**a``
(``a = A+(lambda1 + omega_k)``)::

    U = r**a Y,   r U' = r**a P,
    Y_s = P - a Y,
    P_s = r**2 V_k Y - (N - 2 + a) P.

Both coefficients are bounded under condition (V), so the inverse-square
singularity at the origin never enters the integrator.  Nested integrals
(F_k, Gamma_k, Lambda) are evaluated the same way: as scaled ODE
quadratures over ``s`` driven by the profile's dense output.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .errors import (
    AmbiguousClass,
    DivergentGamma,
    HotSpotsError,
    ProfileVanishes,
    StiffnessFailure,
    TailDivergence,
    UnsupportedRegime,
)
from .potential import (
    PotentialSpec,
    angular_eigenvalue,
    characteristic_exponents,
)

__all__ = [
    "HarmonicProfile",
    "OperatorClass",
    "RadialTable",
    "GammaTable",
    "PiSummary",
    "STable",
    "profile_grid",
    "solve_profile",
    "solve_profiles",
    "ode_residual",
    "classify_operator",
    "compute_F",
    "compute_Gamma",
    "compute_Lambda",
    "compute_Pi",
    "compute_S",
    "export_profile_csv",
    "classification_json",
]

R0 = 1e-6
RTOL = 1e-11
ATOL = 1e-30
LAMBDA_STAR_TOL = 1e-9


def profile_grid(r_max: float, r0: float = R0, per_decade_inner: int = 48,
                 h_uniform: float = 0.05, r_uniform: float = 100.0,
                 per_decade_outer: int = 200) -> np.ndarray:
    """Radial grid: geometric on [r0, 1], uniform on [1, r_uniform], geometric beyond."""
    inner = np.geomspace(r0, 1.0, int(round(per_decade_inner * math.log10(1.0 / r0))) + 1)
    top = min(r_max, r_uniform)
    n_mid = max(int(round((top - 1.0) / h_uniform)), 1)
    mid = np.linspace(1.0, top, n_mid + 1)[1:]
    parts = [inner, mid]
    if r_max > top:
        n_out = max(int(round(per_decade_outer * math.log10(r_max / top))), 1)
        parts.append(np.geomspace(top, r_max, n_out + 1)[1:])
    return np.concatenate(parts)


def _local_exponent(g, r0):
    """Power-law exponent of g near r0 estimated from two samples, or None."""
    g1, g2 = float(g(np.array([r0]))[0]), float(g(np.array([r0 / 10.0]))[0])
    if g1 == 0.0 or g2 == 0.0 or g1 * g2 < 0:
        return None
    beta = math.log10(abs(g1 / g2))
    return beta if beta > 1e-8 else None


def _aitken(c1, c2, c3):
    """Aitken extrapolation of a geometrically converging triple."""
    d1, d2 = c2 - c1, c3 - c2
    den = d2 - d1
    if den == 0.0 or d1 * d2 <= 0.0 or abs(d2) >= abs(d1):
        return c3
    return c3 - d2 * d2 / den


@dataclass(frozen=True, eq=False)
class HarmonicProfile:
    """Tabulated positive solution U_k with fitted tail constants.

    Calling the profile evaluates U_k anywhere in ``(0, inf)``: the dense
    ODE solution inside the grid, the two-term series below ``r0`` and the
    fitted power law beyond ``r_max``.
    """

    k: int
    dimension: int
    grid: np.ndarray = field(repr=False)
    u_values: np.ndarray = field(repr=False)
    u_prime: np.ndarray = field(repr=False)
    a_plus_origin: float
    a_infinity: float
    c_infinity: float
    log_corrected: bool
    fitted_exponent: float
    spec: PotentialSpec = field(repr=False)
    _dense: object = field(repr=False, default=None)
    _series: tuple = field(repr=False, default=(0.0, 0.0, 0.0))

    @property
    def r0(self) -> float:
        return float(self.grid[0])

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])

    def _eval(self, r):
        r = np.asarray(r, dtype=float)
        a = self.a_plus_origin
        u = np.empty_like(r)
        du = np.empty_like(r)
        lo = r < self.r0
        hi = r > self.r_max
        mid = ~(lo | hi)
        if np.any(mid):
            rm = r[mid]
            Y, P = self._dense(np.log(rm))
            ra = rm ** a
            u[mid] = ra * Y
            du[mid] = ra * P / rm
        if np.any(lo):
            # two-term series r^a (1 + e (r/r0)^b) below the first grid point
            rl = r[lo]
            e, b = self._series[0], self._series[1]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                x = (rl / self.r0) ** b if b > 0 else np.zeros_like(rl)
                Ys = 1.0 + e * x
                dYs = np.where(rl > 0, e * b * x / rl, 0.0)
                if a == 0:
                    ra, dra = np.ones_like(rl), np.zeros_like(rl)
                else:
                    ra = np.where(rl > 0, rl ** a, 0.0 if a > 0 else np.inf)
                    dra = np.where(rl > 0, a * rl ** (a - 1.0), 0.0 if a > 1 else np.inf)
                u[lo] = ra * Ys
                du[lo] = np.nan_to_num(dra * Ys + ra * dYs, nan=0.0)
        if np.any(hi):
            rh = r[hi]
            uM, dM = self.u_values[-1], self.u_prime[-1]
            p = dM * self.r_max / uM
            u[hi] = uM * (rh / self.r_max) ** p
            du[hi] = p * u[hi] / rh
        return u, du

    def __call__(self, r):
        return self._eval(r)[0]

    def derivative(self, r):
        return self._eval(r)[1]

    def scaled(self, r):
        """Y = r**-a U, the origin-normalized profile (tends to 1 at 0)."""
        r = np.asarray(r, dtype=float)
        return self(r) / r ** self.a_plus_origin

    @property
    def potential_k(self):
        return self.spec.V_k(self.k)


def _series_start(spec: PotentialSpec, k: int, a: float, r0: float):
    """Two-term origin series ``r**a (1 + e (r/r0)**b)`` seeded at r0.

    The correction solves ``e'' + (N - 1 + 2a)/r e' = W`` with
    ``W = V - lambda1 / r**2`` approximated by a local power law.
    """
    N = spec.dimension
    gW = lambda r: spec.r2V(r) - spec.lambda1
    gw0 = float(gW(np.array([r0]))[0])
    if gw0 == 0.0:
        return 0.0, 0.0, 0.0
    b = _local_exponent(gW, r0)
    if b is None:
        b = spec.theta
    p = N - 1.0 + 2.0 * a
    eps = gw0 / (b * (b + p - 1.0))
    deps = gw0 / (b + p - 1.0) / r0
    return eps, b, deps


def solve_profile(spec: PotentialSpec, k: int = 0, r_max: float = 1e4,
                  r0: float = R0, grid=None) -> HarmonicProfile:
    """Integrate the normalized positive solution U_k outward from ``r0``.

    Raises :class:`ProfileVanishes` if U_k crosses zero (the operator is
    then not nonnegative) and :class:`StiffnessFailure` if the integrator
    cannot make progress.
    """
    if r_max < 10:
        raise ValueError("r_max must be >= 10")
    N = spec.dimension
    om = angular_eigenvalue(N, k)
    a = characteristic_exponents(N, spec.lambda1 + om).a_plus
    eps, b, deps = _series_start(spec, k, a, r0)
    y0 = [1.0 + eps, a * (1.0 + eps) + r0 * deps]
    c = N - 2.0 + a

    def rhs(s, y):
        r = math.exp(s)
        g = float(spec.r2V(np.array([r]))[0]) + om
        return [y[1] - a * y[0], g * y[0] - c * y[1]]

    def vanish(s, y):
        return y[0]

    vanish.terminal = True
    vanish.direction = -1

    s0, s1 = math.log(r0), math.log(r_max)
    sol = solve_ivp(rhs, (s0, s1), y0, method="DOP853", rtol=RTOL, atol=ATOL,
                    dense_output=True, events=vanish)
    if sol.status == 1 and sol.t_events[0].size:
        raise ProfileVanishes(float(math.exp(sol.t_events[0][0])))
    if sol.status != 0:
        raise StiffnessFailure(f"profile integration failed for k = {k}: {sol.message}")

    def dense(s):
        y = sol.sol(np.atleast_1d(s))
        return y[0], y[1]

    r = profile_grid(r_max, r0) if grid is None else np.asarray(grid, dtype=float)
    Y, P = dense(np.log(r))
    if np.any(Y <= 0):
        j = int(np.argmax(Y <= 0))
        raise ProfileVanishes(float(r[j]))
    ra = r ** a
    u = ra * Y
    du = ra * P / r

    # free power-law fit over the last decade
    tail = r >= r[-1] / 10.0
    slope = float(np.polyfit(np.log(r[tail]), np.log(u[tail]), 1)[0])
    if k >= 1:
        a_inf = characteristic_exponents(N, spec.lambda2 + om).a_plus
        log_corr = False
    else:
        tag, a_inf, _ = _best_tail_model(r, u, spec)
        log_corr = tag == "S_star"
    c_inf = _tail_constant(r, u, a_inf, log_corr)
    return HarmonicProfile(
        k=k, dimension=N, grid=r, u_values=u, u_prime=du, a_plus_origin=a,
        a_infinity=a_inf, c_infinity=c_inf, log_corrected=log_corr,
        fitted_exponent=slope, spec=spec, _dense=dense, _series=(eps, b, deps),
    )


def solve_profiles(spec: PotentialSpec, k_max: int, r_max: float = 1e4, **kwargs):
    """Profiles U_0 .. U_{k_max - 1}."""
    return [solve_profile(spec, k, r_max=r_max, **kwargs) for k in range(k_max)]


def _tail_shape(r, A, log_corrected):
    shape = A * np.log(r)
    if log_corrected:
        shape = shape + np.log(np.log(2.0 + r))
    return shape


def _tail_constant(r, u, A, log_corrected):
    """c with U ~ c r^A (times log(2 + r) if log corrected), extrapolated."""
    ratio = u * np.exp(-_tail_shape(r, A, log_corrected))
    rm = r[-1]
    picks = [np.interp(math.log(x), np.log(r), ratio) for x in (rm / 10.0, rm / math.sqrt(10.0), rm)]
    return float(_aitken(*picks))


def _candidates(spec: PotentialSpec):
    N = spec.dimension
    pair = characteristic_exponents(N, spec.lambda2)
    critical_double = abs(spec.lambda2 - spec.lambda_star) <= LAMBDA_STAR_TOL
    cands = {}
    if critical_double:
        cands["C"] = (pair.a_minus, False)
        cands["S_star"] = (pair.a_plus, True)
    else:
        cands["S"] = (pair.a_plus, False)
        cands["C"] = (pair.a_minus, False)
    return cands


def _fit_residuals(r, u, spec, window=10.0):
    tail = r >= r[-1] / window
    lr, lu = r[tail], np.log(u[tail])
    out = {}
    for tag, (A, logc) in _candidates(spec).items():
        dev = lu - _tail_shape(lr, A, logc)
        out[tag] = float(max(np.sqrt(np.mean((dev - dev.mean()) ** 2)), 1e-12))
    return out


def _best_tail_model(r, u, spec):
    res = _fit_residuals(r, u, spec)
    tag = min(res, key=res.get)
    A, _ = _candidates(spec)[tag]
    return tag, A, res


@dataclass(frozen=True)
class OperatorClass:
    """Asymptotic class of L_V decided by tail fits of U."""

    tag: str
    a_exponent: float
    c_star: float
    evidence: dict
    ambiguous: bool = False

    def to_dict(self) -> dict:
        return {"tag": self.tag, "A": self.a_exponent, "c_star": self.c_star,
                "evidence": dict(self.evidence), "ambiguous": self.ambiguous}


def classify_operator(profile_k0: HarmonicProfile, spec: PotentialSpec, *,
                      raise_ambiguous: bool = True) -> OperatorClass:
    """Pick S, S_star or C by least-squares fits of log U over the last decade.

    Raises :class:`AmbiguousClass` (carrying the tentative class) when the two
    best residuals are within a factor 2 of each other.
    """
    if profile_k0.k != 0:
        raise ValueError("classification needs the k = 0 profile")
    if profile_k0.r_max < 1e3 * (1 - 1e-12):
        raise ValueError("classification needs a profile integrated to r_max >= 1e3")
    r, u = profile_k0.grid, profile_k0.u_values
    res = _fit_residuals(r, u, spec)
    order = sorted(res, key=res.get)
    tag = order[0]
    A, logc = _candidates(spec)[tag]
    ambiguous = len(order) > 1 and res[order[1]] < 2.0 * res[order[0]]
    cls = OperatorClass(tag=tag, a_exponent=float(A), c_star=_tail_constant(r, u, A, logc),
                        evidence=res, ambiguous=ambiguous)
    if tag == "C" and not A > -spec.dimension / 2.0:
        raise UnsupportedRegime(f"critical class with A = {A} <= -N/2")
    if ambiguous and raise_ambiguous:
        raise AmbiguousClass(
            f"tail fits {order[0]} ({res[order[0]]:.3g}) and {order[1]} "
            f"({res[order[1]]:.3g}) differ by less than a factor 2", cls)
    return cls


def ode_residual(profile: HarmonicProfile, r=None, rel_step: float = 1e-3) -> float:
    """Scaled sup-norm of ``U'' + (N-1)/r U' - V_k U`` by centered differences of U'."""
    if r is None:
        g = profile.grid
        r = g[1:-1]
        r = r[(r > profile.r0 * 1.01) & (r < profile.r_max / 1.01)]
    r = np.asarray(r, dtype=float)
    N = profile.dimension
    d2 = (profile.derivative(r * (1 + rel_step)) - profile.derivative(r * (1 - rel_step))) / (2 * rel_step * r)
    d1 = profile.derivative(r)
    u = profile(r)
    vk = profile.spec.V_k(profile.k)(r)
    terms = [d2, (N - 1) / r * d1, -vk * u]
    scale = sum(np.abs(t) for t in terms) + 1e-300
    return float(np.max(np.abs(sum(terms)) / scale))


# -- nested integrals -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadialTable:
    """A radial function tabulated on a profile grid, with its derivative."""

    r: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    derivative: np.ndarray = field(repr=False)
    value_at_zero: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        from scipy.interpolate import CubicHermiteSpline
        spl = CubicHermiteSpline(self.r, self.values, self.derivative, extrapolate=True)
        out = spl(np.clip(x, self.r[0], self.r[-1]))
        return np.where(x < self.r[0], self.value_at_zero + (self.values[0] - self.value_at_zero)
                        * (x / self.r[0]) ** 2, out)


def _scaled_quadrature(profile, rhs, y0):
    """Run a quadrature ODE in s over the profile's grid, return states at grid nodes."""
    r = profile.grid
    s = np.log(r)
    sol = solve_ivp(rhs, (s[0], s[-1]), y0, method="DOP853", rtol=RTOL, atol=1e-300,
                    t_eval=s)
    if sol.status != 0:
        raise HotSpotsError(f"quadrature failed: {sol.message}")
    return sol.y


def compute_F(profile: HarmonicProfile) -> RadialTable:
    """``F_k(r) = int_0^r s^{1-N} U_k^-2 (int_0^s tau^{N-1} U_k^2 dtau) ds``.

    The inner integral is carried as a scaled state and the outer one
    reuses it, both integrated adaptively in ``log r``.
    """
    N, a = profile.dimension, profile.a_plus_origin
    q = N + 2.0 * a

    def rhs(s, y):
        Y = float(profile.scaled(np.array([math.exp(s)]))[0])
        # y[0] = I r^-(N+2a),  y[1] = F r^-2
        return [Y * Y - q * y[0], y[0] / (Y * Y) - 2.0 * y[1]]

    Y0 = float(profile.scaled(np.array([profile.r0]))[0])
    y = _scaled_quadrature(profile, rhs, [Y0 * Y0 / q, 1.0 / (2.0 * q)])
    r = profile.grid
    F = r * r * y[1]
    inner = r ** q * y[0]
    u = profile.u_values
    dF = r ** (1.0 - N) * inner / (u * u)
    return RadialTable(r=r, values=F, derivative=dF, value_at_zero=0.0)


@dataclass(frozen=True, eq=False)
class GammaTable(RadialTable):
    k: int = 0
    limit: float = math.inf
    identity_error: float = math.nan
    partial_sums: tuple = ()


def _inner_outer(spec, profile, k):
    """Scaled states for J = int tau^{N+k-1} V U_k and G = int s^{1-N-2k} J."""
    N, a = spec.dimension, profile.a_plus_origin
    e = a - k
    m = N + k - 2.0 + a
    g = spec.r2V
    beta = _local_exponent(lambda x: g(x), profile.r0)
    g0 = float(g(np.array([profile.r0]))[0])
    if beta is None:
        beta = 0.0 if spec.lambda1 != 0 else spec.theta
    J0 = g0 / (m + beta) if (m + beta) != 0 else 0.0
    G0 = J0 / (e + beta) if (e + beta) > 0 else 0.0

    def rhs(s, y):
        r = math.exp(s)
        Y = float(profile.scaled(np.array([r]))[0])
        gv = float(g(np.array([r]))[0])
        return [gv * Y - m * y[0], y[0] - e * y[1]]

    Y0 = float(profile.scaled(np.array([profile.r0]))[0])
    y = _scaled_quadrature(profile, rhs, [J0 * Y0, G0 * Y0])
    r = profile.grid
    J = r ** m * y[0]
    G = r ** e * y[1]
    return J, G


def compute_Gamma(spec: PotentialSpec, profile: HarmonicProfile, *, need_limit: bool = False,
                  check: bool = True, identity_rtol: float = 1e-5) -> GammaTable:
    """``Gamma_k(r) = r^k int_0^r s^{1-N-2k} (int_0^s tau^{N+k-1} V U_k dtau) ds``.

    Also measures the decomposition ``U_k = r^k [lambda1 = 0] + Gamma_k`` on
    ``[1, r_max]``; with ``check`` an error above ``identity_rtol`` raises.
    ``limit`` is Gamma_0(inf) (tail extrapolated from the last decade) or
    ``inf``; ``need_limit`` turns a divergent tail into :class:`DivergentGamma`.
    """
    if spec.lambda1 < 0:
        raise ValueError("Gamma_k is defined for lambda1 >= 0")
    k = profile.k
    N = spec.dimension
    J, G = _inner_outer(spec, profile, k)
    r = profile.grid
    gam = r ** k * G
    dG = r ** (1.0 - N - 2 * k) * J
    dgam = k * r ** (k - 1.0) * G + r ** k * dG if k else dG

    base = r ** k if spec.lambda1 == 0 else 0.0
    sel = r >= 1.0
    err = np.abs(profile.u_values[sel] - (base[sel] if np.ndim(base) else base) - gam[sel])
    ident = float(np.max(err / profile.u_values[sel])) if np.any(sel) else math.nan

    # tail of the outer integral (only Gamma_0 has a finite limit in general)
    limit = math.inf
    partial = tuple(float(np.interp(math.log(x), np.log(r), G))
                    for x in np.geomspace(1.0, r[-1], int(math.log10(r[-1])) + 1))
    tail = r >= r[-1] / 10.0
    q = dG[tail]
    if k == 0:
        if np.all(q == 0):
            limit = float(G[-1])
        elif np.all(q > 0) or np.all(q < 0):
            slope = float(np.polyfit(np.log(r[tail]), np.log(np.abs(q)), 1)[0])
            if slope < -1.05:
                limit = float(G[-1] + dG[-1] * r[-1] / (-slope - 1.0))
    if need_limit and not math.isfinite(limit):
        raise DivergentGamma(f"outer integral of Gamma_{k} does not converge", partial)
    table = GammaTable(r=r, values=gam, derivative=dgam, value_at_zero=0.0, k=k,
                       limit=limit, identity_error=ident, partial_sums=partial)
    if check and ident > identity_rtol:
        raise HotSpotsError(
            f"decomposition U_{k} = r^k[l1=0] + Gamma_{k} off by {ident:.3g} (> {identity_rtol})")
    return table


def compute_Lambda(spec: PotentialSpec, profile: HarmonicProfile) -> float:
    """``Lambda = int_0^inf tau^{N-1} V U dtau`` with a ``mu r^-d`` tail correction."""
    N = spec.dimension
    if profile.k != 0:
        raise ValueError("Lambda uses the k = 0 profile")
    if spec.tail is None:
        raise TailDivergence("no declared decay model V ~ mu r^-d for the tail")
    mu, d = spec.tail
    if mu == 0.0:
        return 0.0
    if not d > N:
        raise TailDivergence(f"d = {d} <= N = {N}: Lambda is not absolutely convergent")
    J, _ = _inner_outer(spec, profile, 0)
    R = profile.r_max
    c_tail = profile.u_values[-1]
    return float(J[-1] + mu * c_tail * R ** (N - d) / (d - N))


@dataclass(frozen=True)
class PiSummary:
    """Global maximizers of U."""

    min_pi: float | None
    max_u: float
    is_empty: bool
    is_unbounded_plateau: bool
    maximizers: tuple = ()
    note: str = ""

    def to_dict(self) -> dict:
        return dict(vars(self), maximizers=list(self.maximizers))


def compute_Pi(profile: HarmonicProfile, *, rtol: float = 1e-10) -> PiSummary:
    """Scan the grid for global maximizers of U_0 and refine each by golden section."""
    if profile.k != 0:
        raise ValueError("Pi is defined from the k = 0 profile")
    r, u = profile.grid, profile.u_values
    if profile.a_plus_origin < 0:
        return PiSummary(None, math.inf, True, False, note="U is unbounded at the origin")
    umax = float(u.max())
    if np.all(np.abs(u - umax) <= rtol * abs(umax)):
        return PiSummary(0.0, umax, False, True, (0.0,), note="U constant on the grid")
    j = int(np.argmax(u))
    if j == r.size - 1 and profile.u_prime[-1] > 0:
        return PiSummary(None, umax, True, False,
                         note="sup U approached only as r -> inf (U increasing at r_max)")
    interior = np.r_[False, (u[1:-1] >= u[:-2]) & (u[1:-1] >= u[2:]), False]
    interior[0] = u[0] >= u[1]
    cand = np.flatnonzero(interior & (u >= (1.0 - 1e-6) * umax))
    found = []
    for i in cand:
        if i == 0:
            # U decreasing from the origin: the sup is U(0)
            if profile.a_plus_origin == 0:
                found.append((0.0, float(profile(np.array([0.0]))[0])))
            continue
        res = minimize_scalar(lambda x: -float(profile(np.array([x]))[0]),
                              bounds=(r[i - 1], r[i + 1]), method="bounded",
                              options={"xatol": 1e-10 * max(r[i], 1.0)})
        found.append((float(res.x), float(-res.fun)))
    best = max(v for _, v in found)
    maxima = sorted({round(x, 9) for x, v in found if v >= (1.0 - rtol) * best})
    return PiSummary(float(maxima[0]), best, False, False, tuple(maxima))


@dataclass(frozen=True, eq=False)
class STable:
    r: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    maximizer: float
    second_derivative: float


def compute_S(profile0: HarmonicProfile, profile1: HarmonicProfile, M_phi: float,
              Xi_norm: float, *, c_star: float | None = None, c1: float | None = None,
              pi: PiSummary | None = None, F0: RadialTable | None = None) -> STable:
    """Selection functional ``S = -(N/c*^2) M U F_0 + |Xi| U_1 / c_1^2`` and its maximizer on Pi.

    ``M_phi`` is the raw pairing ``int phi U dx``; with it the heat-equation
    maximizer is the center of mass.
    """
    if not M_phi > 0:
        raise ValueError("M_phi must be positive")
    N = profile0.dimension
    cs = profile0.c_infinity if c_star is None else c_star
    c1v = profile1.c_infinity if c1 is None else c1
    F0 = compute_F(profile0) if F0 is None else F0
    r = profile0.grid

    def S(x):
        x = np.asarray(x, dtype=float)
        return -(N / cs ** 2) * M_phi * profile0(x) * F0(x) + Xi_norm * profile1(x) / c1v ** 2

    vals = S(r)
    pi = compute_Pi(profile0) if pi is None else pi
    if pi.is_unbounded_plateau:
        j = int(np.argmax(vals))
        if j == 0:
            rstar = 0.0
        else:
            lo, hi = r[j - 1], r[min(j + 1, r.size - 1)]
            rstar = float(minimize_scalar(lambda x: -float(S(np.array([x]))[0]),
                                          bounds=(lo, hi), method="bounded",
                                          options={"xatol": 1e-12}).x)
    elif pi.is_empty:
        rstar = math.nan
    else:
        pts = np.asarray(pi.maximizers, dtype=float)
        rstar = float(pts[int(np.argmax(S(pts)))])
    h = 1e-3 * max(rstar, 1.0) if math.isfinite(rstar) else math.nan
    if math.isfinite(rstar):
        x = np.array([max(rstar - h, 0.0), rstar, rstar + h])
        sv = S(x)
        s2 = float((sv[2] - 2 * sv[1] + sv[0]) / h ** 2) if rstar >= h else float(
            2 * (sv[2] - sv[1]) / h ** 2)
    else:
        s2 = math.nan
    return STable(r=r, values=vals, maximizer=rstar, second_derivative=s2)


# -- export -------------------------------------------------------------------

def export_profile_csv(path, profile: HarmonicProfile, F: RadialTable | None = None,
                       Gamma: RadialTable | None = None) -> None:
    """Write ``r, U, U', F, Gamma`` rows (missing columns left empty)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "U", "dU", "F", "Gamma"])
        for j, r in enumerate(profile.grid):
            w.writerow([
                repr(float(r)), repr(float(profile.u_values[j])), repr(float(profile.u_prime[j])),
                "" if F is None else repr(float(F.values[j])),
                "" if Gamma is None else repr(float(Gamma.values[j])),
            ])


def classification_json(cls: OperatorClass, **extra) -> str:
    payload = cls.to_dict()
    payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True, default=float)
