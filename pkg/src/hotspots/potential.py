"""Radial potentials V(r), the sampled condition-(V) check, and exponent algebra.

A potential is described by a frozen :class:`PotentialSpec` holding
closures for ``V``, ``V'`` and ``r**2 * V``.  The last one is what the
profile integrator consumes; keeping it separate lets exact families such
as ``hardy`` return ``lambda`` without round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConditionVError, PotentialError

__all__ = [
    "ExponentPair",
    "PotentialSpec",
    "hardy_threshold",
    "characteristic_exponents",
    "angular_eigenvalue",
    "mode_exponent_origin",
    "mode_exponent_infinity",
    "zero",
    "hardy",
    "lorentz",
    "decaying",
    "tabulated",
    "load_tabulated",
    "probe_grid",
    "SubCheck",
    "ValidationReport",
    "validate_condition_V",
    "mode_gap",
]

# tolerance used when comparing a declared lambda with the Hardy threshold
LAMBDA_TOL = 1e-12


def hardy_threshold(N: int) -> float:
    """lambda_* = -(N-2)**2 / 4."""
    return -((N - 2) ** 2) / 4.0


@dataclass(frozen=True)
class ExponentPair:
    a_minus: float
    a_plus: float

    def __iter__(self):
        yield self.a_minus
        yield self.a_plus


def characteristic_exponents(N: int, lam: float) -> ExponentPair:
    """Roots of ``a**2 + (N-2) a - lam = 0`` ordered ``a_minus <= a_plus``.

    Raises :class:`PotentialError` when ``lam`` is below the Hardy
    threshold (complex roots).
    """
    if N < 2:
        raise PotentialError(f"dimension must be >= 2, got {N}")
    lam_star = hardy_threshold(N)
    if lam < lam_star - LAMBDA_TOL * max(1.0, abs(lam_star)):
        raise PotentialError(
            f"lambda = {lam!r} is below the Hardy threshold {lam_star!r} for N = {N}"
        )
    b = N - 2.0
    disc = max(b * b + 4.0 * lam, 0.0)
    sq = math.sqrt(disc)
    # cancellation-free pair: a_minus has no cancellation, a_plus from the product
    a_minus = (-b - sq) / 2.0
    if a_minus != 0.0:
        a_plus = -lam / a_minus
    else:
        a_plus = (-b + sq) / 2.0
    if a_plus < a_minus:
        a_plus = a_minus
    return ExponentPair(a_minus, a_plus)


def angular_eigenvalue(N: int, k: int) -> float:
    """Eigenvalue ``k (N + k - 2)`` of minus the Laplace-Beltrami operator on S^{N-1}."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return float(k * (N + k - 2))


@dataclass(frozen=True)
class PotentialSpec:
    """A radial potential together with its declared endpoint behaviour.

    ``lambda1`` / ``lambda2`` are the limits of ``r**2 V(r)`` at 0 and at
    infinity, ``theta`` the rate at which they are approached.
    """

    dimension: int
    family: str
    params: dict
    lambda1: float
    lambda2: float
    theta: float
    V: Callable = field(repr=False, compare=False)
    dV: Callable = field(repr=False, compare=False)
    r2V: Callable = field(repr=False, compare=False)
    # decay model V ~ mu r^-d at infinity, when known; used for tail extrapolation
    tail: tuple | None = None

    def __post_init__(self):
        N = self.dimension
        if N < 2:
            raise PotentialError(f"dimension must be >= 2, got {N}")
        lam_star = hardy_threshold(N)
        for name in ("lambda1", "lambda2"):
            lam = getattr(self, name)
            if lam < lam_star - LAMBDA_TOL * max(1.0, abs(lam_star)):
                raise PotentialError(
                    f"{name} = {lam!r} is below the Hardy threshold {lam_star!r}"
                )
        if not self.theta > 0:
            raise PotentialError(f"theta must be positive, got {self.theta!r}")

    @property
    def lambda_star(self) -> float:
        return hardy_threshold(self.dimension)

    def V_k(self, k: int) -> Callable:
        """Potential of the k-th angular mode, ``V + omega_k / r**2``."""
        om = angular_eigenvalue(self.dimension, k)
        return lambda r: self.V(r) + om / np.asarray(r, dtype=float) ** 2

    def describe(self) -> dict:
        return {
            "dimension": self.dimension,
            "family": self.family,
            "params": dict(self.params),
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "theta": self.theta,
        }


def mode_exponent_origin(spec: PotentialSpec, k: int) -> float:
    """A+(lambda1 + omega_k): behaviour of U_k at the origin."""
    N = spec.dimension
    return characteristic_exponents(N, spec.lambda1 + angular_eigenvalue(N, k)).a_plus


def mode_exponent_infinity(spec: PotentialSpec, k: int) -> float:
    """A_k = A+(lambda2 + omega_k) for k >= 1 (the k = 0 exponent depends on the class)."""
    N = spec.dimension
    return characteristic_exponents(N, spec.lambda2 + angular_eigenvalue(N, k)).a_plus


def mode_gap(spec: PotentialSpec) -> tuple[float, float]:
    """Return (A+(lambda2), A_1) and check the strict gap between them."""
    a0 = characteristic_exponents(spec.dimension, spec.lambda2).a_plus
    a1 = mode_exponent_infinity(spec, 1)
    if not a1 > a0:
        raise PotentialError(f"mode gap violated: A_1 = {a1} <= A+(lambda2) = {a0}")
    return a0, a1


# -- families -----------------------------------------------------------------

def _arr(r):
    return np.asarray(r, dtype=float)


def zero(N: int) -> PotentialSpec:
    return PotentialSpec(
        dimension=N, family="zero", params={}, lambda1=0.0, lambda2=0.0, theta=1.0,
        V=lambda r: np.zeros_like(_arr(r)),
        dV=lambda r: np.zeros_like(_arr(r)),
        r2V=lambda r: np.zeros_like(_arr(r)),
        tail=(0.0, math.inf),
    )


def hardy(N: int, lam: float) -> PotentialSpec:
    """Pure inverse-square potential ``lam / r**2``."""
    lam = float(lam)
    return PotentialSpec(
        dimension=N, family="hardy", params={"lambda": lam},
        lambda1=lam, lambda2=lam, theta=1.0,
        V=lambda r: lam / _arr(r) ** 2,
        dV=lambda r: -2.0 * lam / _arr(r) ** 3,
        r2V=lambda r: np.full_like(_arr(r), lam),
        tail=(lam, 2.0),
    )


def lorentz(N: int, lambda2: float) -> PotentialSpec:
    """``lambda2 / (1 + r**2)``: bounded at the origin, inverse-square at infinity."""
    lam = float(lambda2)
    return PotentialSpec(
        dimension=N, family="lorentz", params={"lambda2": lam},
        lambda1=0.0, lambda2=lam, theta=1.0,
        V=lambda r: lam / (1.0 + _arr(r) ** 2),
        dV=lambda r: -2.0 * lam * _arr(r) / (1.0 + _arr(r) ** 2) ** 2,
        r2V=lambda r: lam * _arr(r) ** 2 / (1.0 + _arr(r) ** 2),
        tail=(lam, 2.0),
    )


def decaying(N: int, mu: float, d: float) -> PotentialSpec:
    """``mu (1 + r**2)**(-d/2)`` with ``d >= 2``."""
    mu, d = float(mu), float(d)
    if d < 2:
        raise PotentialError(f"decaying potential needs d >= 2 (got d = {d})")
    lam2 = mu if d == 2 else 0.0
    theta = 1.0 if d == 2 else min(2.0, d - 2.0) / 2.0
    return PotentialSpec(
        dimension=N, family="decaying", params={"mu": mu, "d": d},
        lambda1=0.0, lambda2=lam2, theta=theta,
        V=lambda r: mu * (1.0 + _arr(r) ** 2) ** (-d / 2.0),
        dV=lambda r: -mu * d * _arr(r) * (1.0 + _arr(r) ** 2) ** (-d / 2.0 - 1.0),
        r2V=lambda r: mu * _arr(r) ** 2 * (1.0 + _arr(r) ** 2) ** (-d / 2.0),
        tail=(mu, d),
    )


def tabulated(N: int, r, V, lambda1=None, lambda2=None, theta: float = 1.0,
              name: str = "table") -> PotentialSpec:
    """Potential interpolated from samples ``(r_i, V_i)``.

    ``g = r**2 V`` is interpolated against ``log r`` with a monotone cubic
    (PCHIP), which keeps V continuously differentiable.  Outside the table
    ``g`` is held at its end values, so the endpoint limits are exactly the
    first and last ``r_i**2 V_i``.
    """
    r = np.asarray(r, dtype=float)
    V = np.asarray(V, dtype=float)
    if r.ndim != 1 or r.shape != V.shape or r.size < 4:
        raise PotentialError("tabulated potential needs matching 1-D arrays with >= 4 rows")
    if np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise PotentialError("tabulated radii must be positive and strictly increasing")
    g = r * r * V
    s = np.log(r)
    interp = PchipInterpolator(s, g, extrapolate=False)
    dinterp = interp.derivative()
    s_lo, s_hi = s[0], s[-1]
    g_lo, g_hi = g[0], g[-1]

    def r2V(x):
        x = _arr(x)
        sx = np.log(x)
        out = interp(np.clip(sx, s_lo, s_hi))
        out = np.where(sx < s_lo, g_lo, out)
        return np.where(sx > s_hi, g_hi, out)

    def Vf(x):
        x = _arr(x)
        return r2V(x) / x ** 2

    def dVf(x):
        x = _arr(x)
        sx = np.log(x)
        inside = (sx >= s_lo) & (sx <= s_hi)
        gp = np.where(inside, dinterp(np.clip(sx, s_lo, s_hi)), 0.0)
        return (gp - 2.0 * r2V(x)) / x ** 3

    lam1 = float(g_lo if lambda1 is None else lambda1)
    lam2 = float(g_hi if lambda2 is None else lambda2)
    return PotentialSpec(
        dimension=N, family="tabulated",
        params={"name": name, "rows": int(r.size)},
        lambda1=lam1, lambda2=lam2, theta=float(theta),
        V=Vf, dV=dVf, r2V=r2V, tail=None,
    )


def load_tabulated(path, N: int, **kwargs) -> PotentialSpec:
    """Read a two-column (r, V) text file and build a tabulated potential."""
    data = np.loadtxt(Path(path), ndmin=2)
    if data.shape[1] != 2:
        raise PotentialError(f"{path}: expected two columns (r, V), got {data.shape[1]}")
    kwargs.setdefault("name", Path(path).name)
    return tabulated(N, data[:, 0], data[:, 1], **kwargs)


# -- condition (V) ------------------------------------------------------------

def probe_grid(r_min: float = 1e-4, r_max: float = 1e4, per_decade: int = 64) -> np.ndarray:
    """Geometric probe grid with ``per_decade`` points per decade."""
    n = int(round(per_decade * math.log10(r_max / r_min))) + 1
    return np.geomspace(r_min, r_max, n)


@dataclass
class SubCheck:
    name: str
    passed: bool
    value: float
    witness: float | None = None
    note: str = ""


@dataclass
class ValidationReport:
    spec: dict
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> SubCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "passed": self.passed,
            "checks": [vars(c).copy() for c in self.checks],
        }


def _growth_witness(values, radii, atol=1e-12):
    """Radius where the sequence keeps growing toward its end, or None.

    The maximum over the last half of the samples may exceed the maximum over
    the first half by at most 1%: bounded sequences (including ones that
    settle on a constant) pass, growing ones do not.
    """
    h = values.size // 2
    first, last = values[:h], values[h:]
    if last.max() > 1.01 * first.max() + atol:
        return float(radii[h + int(np.argmax(last))])
    return None


def validate_condition_V(spec: PotentialSpec, grid=None, *, strict: bool = True,
                         fd_rtol: float = 1e-2) -> ValidationReport:
    """Sample-based check of the regularity and endpoint contract.

    The three sub-checks are ``C1`` (V' agrees with centered differences of
    V and has no jumps), ``limit_origin`` / ``limit_infinity`` (the weighted
    deviations ``r**-theta |r**2 V - lambda1|`` and
    ``r**theta |r**2 V - lambda2|`` shrink monotonically over the extreme
    decade) and ``r3_dV_bounded`` (``sup_{r >= 1} |r**3 V'|`` is finite and
    not growing over the last decade).  With ``strict`` (default) a failing
    sub-check raises :class:`ConditionVError` carrying the report.
    """
    r = probe_grid() if grid is None else np.asarray(grid, dtype=float)
    if r[0] > 1e-4 * (1 + 1e-12) or r[-1] < 1e4 * (1 - 1e-12):
        raise ValueError("probe grid must span at least [1e-4, 1e4]")
    per_decade = (r.size - 1) / math.log10(r[-1] / r[0])
    dec = max(int(round(per_decade)), 2)
    lam1, lam2, th = spec.lambda1, spec.lambda2, spec.theta
    V = np.asarray(spec.V(r), dtype=float)
    dV = np.asarray(spec.dV(r), dtype=float)
    g = np.asarray(spec.r2V(r), dtype=float)
    checks = []

    # (i) C^1
    finite = np.all(np.isfinite(V)) and np.all(np.isfinite(dV))
    fd = (V[2:] - V[:-2]) / (r[2:] - r[:-2])
    scale = np.abs(dV[1:-1]) + np.abs(V[1:-1]) / r[1:-1] + 1e-300
    err = np.abs(fd - dV[1:-1]) / scale
    # where V and V' both underflow there is nothing to compare
    err[scale < 1e-250] = 0.0
    # where the mismatch is above tolerance, sample V' densely across the
    # stencil: for continuous V' the largest step between neighbouring samples
    # shrinks with the spacing, across a jump it stays put
    bad = []
    for j in np.flatnonzero(err > fd_rtol):
        a, b = r[j], r[j + 2]
        steps = []
        for n in (65, 513):
            d = np.asarray(spec.dV(np.linspace(a, b, n)), dtype=float)
            steps.append(float(np.max(np.abs(np.diff(d)))))
        if steps[1] > 0.5 * steps[0] and steps[1] > fd_rtol * scale[j]:
            bad.append(j)
    bad = np.asarray(bad, dtype=int)
    checks.append(SubCheck(
        "C1", bool(finite and bad.size == 0), float(err.max() if err.size else 0.0),
        witness=None if bad.size == 0 else float(r[1 + bad[0]]),
        note="max relative mismatch between V' and centered differences of V "
             "(points above tolerance must converge under stencil halving)",
    ))

    # (ii) endpoint limits, sampled over the extreme decades
    dev0 = r[:dec + 1] ** (-th) * np.abs(g[:dec + 1] - lam1)
    # toward zero means reading the first decade backwards
    w0 = _growth_witness(dev0[::-1], r[:dec + 1][::-1])
    checks.append(SubCheck(
        "limit_origin", w0 is None and bool(np.all(np.isfinite(dev0))), float(dev0[0]),
        witness=w0, note="r^-theta |r^2 V - lambda1| over the first decade",
    ))
    devinf = r[-dec - 1:] ** th * np.abs(g[-dec - 1:] - lam2)
    winf = _growth_witness(devinf, r[-dec - 1:])
    checks.append(SubCheck(
        "limit_infinity", winf is None and bool(np.all(np.isfinite(devinf))), float(devinf[-1]),
        witness=winf, note="r^theta |r^2 V - lambda2| over the last decade",
    ))

    # (iii) sup_{r >= 1} |r^3 V'|
    mask = r >= 1.0
    q = np.abs(r[mask] ** 3 * dV[mask])
    sup = float(q.max()) if q.size else 0.0
    last = q[-dec:]
    prev = q[-2 * dec:-dec]
    growing = bool(last.max() > 1.01 * prev.max() + 1e-12) if prev.size else False
    ok = np.isfinite(sup) and not growing
    checks.append(SubCheck(
        "r3_dV_bounded", bool(ok), sup,
        witness=float(r[mask][-dec:][int(np.argmax(last))]) if not ok else None,
        note="sup over r >= 1 of |r^3 V'(r)|",
    ))

    report = ValidationReport(spec=spec.describe(), checks=checks)
    if strict and not report.passed:
        failed = [f"{c.name} (witness r = {c.witness})" for c in checks if not c.passed]
        raise ConditionVError("condition (V) failed: " + ", ".join(failed), report)
    return report
