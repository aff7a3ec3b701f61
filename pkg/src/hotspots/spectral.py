"""Spherical-harmonic decomposition of initial data and its moment functionals.

Initial data ``phi`` is written as ``sum_{k,i} phi^{k,i}(|x|) Q_{k,i}(x/|x|)``
with an orthonormal real basis ``Q_{k,i}`` of spherical harmonics on
``S^{N-1}``, normalized so that ``Q_{0,1} = q_*`` and
``Q_{1,i} = q_N x_i / |x|``.  Data may be given directly as such a mode
list (any N) or as a closed-form function of x (N in {2, 3}), which is then
projected mode by mode with a sphere quadrature rule.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import TruncationWarning

__all__ = [
    "HarmonicConstants",
    "harmonic_constants",
    "kappa_constant",
    "c_A",
    "angular_harmonics",
    "mode_indices",
    "sphere_rule",
    "RadialMode",
    "ModeList",
    "FunctionData",
    "ModeDecomposition",
    "radial_integral",
    "weighted_norm2",
    "decompose",
    "coefficient_M_ki",
]


@dataclass(frozen=True)
class HarmonicConstants:
    q_star: float
    q_N: float
    sphere_area: float


def harmonic_constants(N: int) -> HarmonicConstants:
    """``|S^{N-1}| = 2 pi^{N/2} / Gamma(N/2)``, ``q_* = |S|^{-1/2}``, ``q_N = sqrt(N) q_*``."""
    if N < 2:
        raise ValueError("N must be >= 2")
    area = 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)
    qs = area ** -0.5
    return HarmonicConstants(q_star=qs, q_N=math.sqrt(N) * qs, sphere_area=area)


def kappa_constant(N: int, A: float) -> float:
    """``kappa = 2^{N+2A} pi^{N/2} Gamma((N+2A)/2) / Gamma(N/2)``; needs ``N + 2A > 0``."""
    if not N + 2.0 * A > 0:
        raise ValueError(f"kappa needs N + 2A > 0 (N = {N}, A = {A})")
    return math.exp((N + 2.0 * A) * math.log(2.0) + 0.5 * N * math.log(math.pi)
                    + math.lgamma((N + 2.0 * A) / 2.0) - math.lgamma(N / 2.0))


def c_A(N: int, A: float) -> float:
    """``c_A = [2^{N+2A-1} Gamma((N+2A)/2)]^{-1/2}``."""
    if not N + 2.0 * A > 0:
        raise ValueError(f"c_A needs N + 2A > 0 (N = {N}, A = {A})")
    return math.exp(-0.5 * ((N + 2.0 * A - 1.0) * math.log(2.0) + math.lgamma((N + 2.0 * A) / 2.0)))


# -- angular basis ------------------------------------------------------------

def _num_harmonics(N: int, k: int) -> int:
    if k == 0:
        return 1
    if N == 2:
        return 2
    lower = math.comb(N + k - 3, k - 2) if k >= 2 else 0
    return math.comb(N + k - 1, k) - lower


def mode_indices(N: int, m_max: int):
    """All (k, i) with k < m_max (i is 1-based)."""
    if N >= 4 and m_max > 2:
        raise ValueError("for N >= 4 only modes k = 0, 1 are supported")
    return [(k, i) for k in range(m_max) for i in range(1, _num_harmonics(N, k) + 1)]


def angular_harmonics(N: int, k: int) -> list[Callable]:
    """Orthonormal real harmonics Q_{k,i} evaluated on unit vectors of shape (..., N)."""
    hc = harmonic_constants(N)
    if k == 0:
        return [lambda th: np.full(np.shape(th)[:-1], hc.q_star)]
    if k == 1:
        return [lambda th, j=j: hc.q_N * th[..., j] for j in range(N)]
    if N == 2:
        c = 1.0 / math.sqrt(math.pi)
        return [lambda th: c * np.cos(k * np.arctan2(th[..., 1], th[..., 0])),
                lambda th: c * np.sin(k * np.arctan2(th[..., 1], th[..., 0]))]
    if N == 3:
        out = []

        def real_ylm(th, m):
            polar = np.arccos(np.clip(th[..., 2], -1.0, 1.0))
            azim = np.arctan2(th[..., 1], th[..., 0])
            y = special.sph_harm_y(k, abs(m), polar, azim)
            if m == 0:
                return y.real
            sign = (-1) ** abs(m)
            return math.sqrt(2.0) * sign * (y.real if m > 0 else y.imag)

        for m in range(-k, k + 1):
            out.append(lambda th, m=m: real_ylm(th, m))
        return out
    raise ValueError("for N >= 4 only modes k = 0, 1 are supported")


def sphere_rule(N: int, n: int = 48):
    """Quadrature nodes (M, N) and weights (M,) on S^{N-1}.

    N = 2: trapezoidal rule with ``2n`` equispaced angles.  N = 3: product
    of ``n``-point Gauss-Legendre in ``cos(polar)`` and ``2n``-point
    trapezoid in azimuth (exact for spherical polynomials below degree 2n).
    """
    if N == 2:
        ang = np.arange(2 * n) * (math.pi / n)
        nodes = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        return nodes, np.full(2 * n, math.pi / n)
    if N == 3:
        z, wz = np.polynomial.legendre.leggauss(n)
        az = np.arange(2 * n) * (math.pi / n)
        Z, AZ = np.meshgrid(z, az, indexing="ij")
        s = np.sqrt(1.0 - Z ** 2)
        nodes = np.stack([s * np.cos(AZ), s * np.sin(AZ), Z], axis=-1).reshape(-1, 3)
        w = (wz[:, None] * np.full(2 * n, math.pi / n)[None, :]).reshape(-1)
        return nodes, w
    raise ValueError("sphere quadrature is only provided for N in {2, 3}")


# -- initial data -------------------------------------------------------------

@dataclass(frozen=True)
class RadialMode:
    """One summand ``phi^{k,i}(|x|) Q_{k,i}(x/|x|)`` of the initial data."""

    k: int
    i: int
    profile: Callable = field(repr=False)

    def __call__(self, r):
        return np.asarray(self.profile(np.asarray(r, dtype=float)), dtype=float)


@dataclass(frozen=True)
class ModeList:
    dimension: int
    modes: tuple

    def __post_init__(self):
        for m in self.modes:
            if self.dimension >= 4 and m.k > 1:
                raise ValueError("for N >= 4 only modes k = 0, 1 are supported")
            if not 1 <= m.i <= _num_harmonics(self.dimension, m.k):
                raise ValueError(f"mode index i = {m.i} out of range for k = {m.k}")

    def __call__(self, x):
        """Evaluate the synthesized field at points x of shape (..., N)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            th = x / r[..., None]
        th = np.where(r[..., None] > 0, th, np.eye(self.dimension)[0])
        out = np.zeros(r.shape)
        for m in self.modes:
            Q = angular_harmonics(self.dimension, m.k)[m.i - 1]
            out = out + m(r) * Q(th)
        return out


@dataclass(frozen=True)
class FunctionData:
    """Initial data given as a vectorized function of x (shape (..., N))."""

    dimension: int
    func: Callable = field(repr=False)
    expression: str | None = None

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError("function-form data is only supported for N in {2, 3}; "
                             "use a mode list for N >= 4")

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)


class _SphereProjector:
    """Evaluates phi once per set of radii and projects onto every requested harmonic.

    All mode profiles of one decomposition share a projector, so evaluating
    every mode at the same radii (as the evolution engine does) costs a single
    pass of sphere quadrature.  The last result is cached.
    """

    def __init__(self, data: FunctionData, harmonics: Sequence[Callable], nodes, weights,
                 chunk: int = 256):
        self.data = data
        self.nodes = nodes
        self.qw = np.stack([Q(nodes) * weights for Q in harmonics], axis=-1)
        self.chunk = chunk
        self._key = None
        self._val = None

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        key = (r.shape, r.tobytes())
        if key != self._key:
            flat = r.reshape(-1)
            out = np.empty((flat.size, self.qw.shape[1]))
            for s in range(0, flat.size, self.chunk):
                rr = flat[s:s + self.chunk]
                vals = self.data(rr[:, None, None] * self.nodes[None, :, :])
                out[s:s + self.chunk] = vals @ self.qw
            self._key, self._val = key, out.reshape(r.shape + (self.qw.shape[1],))
        return self._val


class _ProjectedRadial:
    """``phi^{k,i}(r) = int_S phi(r theta) Q_{k,i}(theta) dtheta`` by sphere quadrature."""

    def __init__(self, projector: _SphereProjector, column: int):
        self.projector = projector
        self.column = column

    def __call__(self, r):
        return self.projector(r)[..., self.column]


# -- radial integrals -----------------------------------------------------------

_GL_LO = np.polynomial.legendre.leggauss(15)
_GL_HI = np.polynomial.legendre.leggauss(31)


def _panel_rule(a, b, rule):
    x, w = rule
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid[:, None] + half[:, None] * x[None, :], half[:, None] * w[None, :]


def _adaptive_gauss(g: Callable, a: float, b: float, epsrel: float, panels: int = 8,
                    max_rounds: int = 60) -> np.ndarray:
    """Vectorized adaptive Gauss-Legendre on [a, b].

    ``g`` maps a 1-D array of nodes to values of shape (n,) or (n, m).  Each
    round evaluates every open panel with 15 and 31 nodes in one call; a
    panel is accepted when the two estimates agree to ``epsrel`` times the
    L1 size of the integrand, shared out in proportion to the panel width.
    """
    lo = np.linspace(a, b, panels + 1)
    lo, hi = lo[:-1], lo[1:]
    total, l1 = None, None
    for _ in range(max_rounds):
        x1, w1 = _panel_rule(lo, hi, _GL_LO)
        x2, w2 = _panel_rule(lo, hi, _GL_HI)
        vals = np.asarray(g(np.concatenate([x1.ravel(), x2.ravel()])), dtype=float)
        tail = vals.shape[1:]
        v1 = vals[:x1.size].reshape(x1.shape + tail)
        v2 = vals[x1.size:].reshape(x2.shape + tail)
        wb = (slice(None), slice(None)) + (None,) * len(tail)
        est1 = np.sum(w1[wb] * v1, axis=1)
        est2 = np.sum(w2[wb] * v2, axis=1)
        size = np.sum(w2[wb] * np.abs(v2), axis=1)
        if total is None:
            total, l1 = np.zeros(tail), float(np.max(size.sum(axis=0), initial=0.0))
        err = np.abs(est2 - est1).reshape(len(lo), -1).max(axis=1)
        ok = err <= epsrel * l1 * (hi - lo) / (b - a) + 1e-300
        ok |= (hi - lo) <= 1e-13 * max(abs(a), abs(b), 1.0)
        total = total + est2[ok].sum(axis=0)
        if ok.all():
            return total
        lo, hi = lo[~ok], hi[~ok]
        mid = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    warnings.warn("radial_integral: panel refinement did not converge", RuntimeWarning, stacklevel=3)
    return total + est2[~ok].sum(axis=0)


def radial_integral(f: Callable, r_split: float = 10.0, r_cut: float = math.inf,
                    epsrel: float = 1e-12):
    """``int_0^r_cut f(r) dr`` by vectorized adaptive Gauss-Legendre panels.

    ``f`` is evaluated on arrays of radii and may return one column per
    integrand (shape (n, m)); the result then has shape (m,).  Beyond
    ``r_split`` an infinite range is mapped to ``[0, 1)`` by
    ``r = r_split + s / (1 - s)``.
    """
    def fr(r):
        return np.asarray(f(r), dtype=float)

    total = 0.0
    for a, b in ((0.0, 1.0), (1.0, r_split)):
        b = min(b, r_cut)
        if b > a:
            total = total + _adaptive_gauss(fr, a, b, epsrel)
    if r_cut > r_split:
        if math.isfinite(r_cut):
            total = total + _adaptive_gauss(fr, r_split, r_cut, epsrel)
        else:
            def mapped(s):
                one = 1.0 - s
                v = fr(r_split + s / one)
                jac = 1.0 / one ** 2
                return v * jac.reshape(jac.shape + (1,) * (v.ndim - 1))

            total = total + _adaptive_gauss(mapped, 0.0, 1.0, epsrel)
    return float(total) if np.ndim(total) == 0 else np.asarray(total)


# e^{r^2/4} overflows double precision just beyond r = 53
WEIGHT_CUT = 50.0


def weighted_norm2(f: Callable, N: int) -> float:
    """``int_0^inf f(r)^2 e^{r^2/4} r^{N-1} dr`` (the Gaussian-weighted radial norm).

    ``f`` may return several columns; the result then has one entry per column.
    """
    def integrand(r):
        r = np.asarray(r, dtype=float)
        fr = np.asarray(f(r), dtype=float)
        with np.errstate(under="ignore"):
            w = np.exp(r * r / 4.0) * r ** (N - 1)
            return fr * fr * w.reshape(w.shape + (1,) * (fr.ndim - 1))

    return radial_integral(integrand, r_cut=WEIGHT_CUT, epsrel=1e-10)


# -- decomposition ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModeDecomposition:
    """Finite spherical-harmonic representation of phi plus its moments.

    ``M_phi`` is the normalized moment ``(1/(c_* kappa)) int phi U dx``;
    ``pairing`` the raw ``int phi U dx``; ``Xi_phi`` the first-harmonic
    moment ``int phi U_1(|y|) y/|y| dy``.
    """

    dimension: int
    modes: tuple = field(repr=False)
    m_max: int
    M_phi: float
    pairing: float
    Xi_phi: np.ndarray
    M_ki: dict
    c_star: float
    A: float
    kappa: float
    mode_norms: dict = field(repr=False, default_factory=dict)
    total_norm: float | None = None
    residual_energy: float | None = None

    @property
    def Xi_norm(self) -> float:
        return float(np.linalg.norm(self.Xi_phi))

    def mode(self, k: int, i: int) -> RadialMode:
        for m in self.modes:
            if (m.k, m.i) == (k, i):
                return m
        raise KeyError((k, i))


def decompose(phi, profiles: Sequence, m_max: int = 3, *, A: float | None = None,
              c_star: float | None = None, require_positive_M: bool = False,
              quad_order: int = 48, check_norms: bool = True) -> ModeDecomposition:
    """Split phi into radial mode profiles and compute M(phi), Xi(phi), M_{k,i}.

    ``profiles[k]`` is the harmonic profile U_k (at least k = 0, 1 and every
    k present in the data).  ``A`` and ``c_star`` default to the k = 0
    profile's tail exponent and constant; pass the operator class values to
    override.
    """
    if isinstance(phi, FunctionData):
        N = phi.dimension
        nodes, weights = sphere_rule(N, quad_order)
        idx = mode_indices(N, m_max)
        proj = _SphereProjector(phi, [angular_harmonics(N, k)[i - 1] for k, i in idx], nodes, weights)
        modes = tuple(RadialMode(k, i, _ProjectedRadial(proj, j)) for j, (k, i) in enumerate(idx))
    elif isinstance(phi, ModeList):
        N = phi.dimension
        modes = tuple(m for m in phi.modes if m.k < m_max)
    else:
        raise TypeError("phi must be a ModeList or FunctionData")

    hc = harmonic_constants(N)
    U0 = profiles[0]
    A = U0.a_infinity if A is None else A
    cs = U0.c_infinity if c_star is None else c_star
    kap = kappa_constant(N, A)

    def moments(r):
        return np.stack([m(r) * profiles[m.k](r) for m in modes], axis=-1) * (r ** (N - 1))[:, None]

    raw = dict(zip(((m.k, m.i) for m in modes), np.atleast_1d(radial_integral(moments)).tolist()))
    pairing = raw.get((0, 1), 0.0) / hc.q_star
    Xi = np.zeros(N)
    for i in range(1, N + 1):
        Xi[i - 1] = raw.get((1, i), 0.0) / hc.q_N
    M_ki = {}
    for (k, i), v in raw.items():
        Ak = A if k == 0 else profiles[k].a_infinity
        ck = cs if k == 0 else profiles[k].c_infinity
        M_ki[(k, i)] = c_A(N, Ak) ** 2 / ck ** 2 * v
    M_phi = pairing / (cs * kap)
    if require_positive_M and not M_phi > 0:
        raise ValueError(f"M(phi) = {M_phi:.6g} is not positive")

    norms, total, resid = {}, None, None
    if check_norms:
        values = np.atleast_1d(weighted_norm2(lambda r: np.stack([m(r) for m in modes], axis=-1), N))
        norms = dict(zip(((m.k, m.i) for m in modes), values.tolist()))
        if isinstance(phi, FunctionData):
            nodes, weights = sphere_rule(N, quad_order)
            full = _ProjectedRadial(_SphereProjector(FunctionData(N, lambda x: phi(x) ** 2),
                                                     [lambda th: np.ones(th.shape[:-1])], nodes, weights), 0)
            total = radial_integral(
                lambda r: full(r) * np.exp(r * r / 4.0) * r ** (N - 1), r_cut=WEIGHT_CUT, epsrel=1e-10)
            resid = max(total - sum(norms.values()), 0.0)
            if total > 0 and resid > 1e-6 * total:
                warnings.warn(
                    f"truncation at m_max = {m_max} leaves {resid / total:.3g} of the weighted norm",
                    TruncationWarning, stacklevel=2)
    return ModeDecomposition(
        dimension=N, modes=modes, m_max=m_max, M_phi=M_phi, pairing=pairing, Xi_phi=Xi,
        M_ki=M_ki, c_star=cs, A=A, kappa=kap, mode_norms=norms, total_norm=total,
        residual_energy=resid,
    )


def coefficient_M_ki(decomp: ModeDecomposition, k: int, i: int) -> float:
    """``M_{k,i} = (c_{A_k}^2 / c_k^2) int_0^inf phi^{k,i} U_k r^{N-1} dr`` (0 if the mode is absent)."""
    return float(decomp.M_ki.get((k, i), 0.0))
