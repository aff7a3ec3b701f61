"""Hot-spot location, tracking, rate fitting and theoretical prediction.

The hot-spot set of ``u(t)`` is the set of its spatial maximizers.  It is
located by a lattice scan of the ball ``B(0, L sqrt(t))`` followed by local
ascent from every near-maximal lattice basin.  When the field only has modes
k <= 1 the angular maximization is explicit and the search reduces to one
radial dimension, which is how N >= 4 runs are analysed.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage, optimize, special

from .errors import InsufficientSpan, NoRoot, UnsupportedRegime
from .evolution import EvolutionState, radial_part, reconstruct
from .profiles import (PiSummary, compute_F, compute_Gamma, compute_Lambda, compute_Pi,
                       compute_S)
from .spectral import harmonic_constants

__all__ = [
    "HotSpotRecord",
    "HotSpotTrajectory",
    "locate_hotspots",
    "locate_hotspots_radial",
    "hotspot_record",
    "track_hotspots",
    "numerical_hessian",
    "hessian_at",
    "RadiusLaw",
    "Prediction",
    "predict",
    "solve_implicit_radius",
    "corollary_radius",
    "RateFit",
    "fit_rate",
    "GaussianBoundReport",
    "check_gaussian_bound",
    "write_trajectory_csv",
    "comparison_report",
]

CONTAINMENT_L = 8.0


# -- records ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HotSpotRecord:
    """Maximizers of one field at time t.

    ``kind`` is ``"points"`` for isolated maximizers, ``"sphere"`` for a
    rotation-invariant maximizing sphere (radial data) and ``"plateau"`` for a
    flat maximal region, in which case ``points`` holds its bounding box.
    ``hessian`` carries one flag per point: ``negative_definite``,
    ``indeterminate``, ``not_definite`` or ``singular`` (unbounded maximum).
    """

    t: float
    points: np.ndarray
    max_value: float
    multiplicity: int
    hessian: tuple
    kind: str = "points"
    cell: float = math.nan

    @property
    def point(self) -> np.ndarray:
        return self.points[0]

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.points[0]))

    @property
    def is_unique(self) -> bool:
        return (self.kind == "points" and self.multiplicity == 1
                and all(h in ("negative_definite", "singular") for h in self.hessian))


def numerical_hessian(field: Callable, x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Hessian of a scalar field at x with step h."""
    x = np.asarray(x, dtype=float)
    n = x.size
    E = np.eye(n) * h
    pts = [x]
    for i in range(n):
        pts += [x + E[i], x - E[i]]
        for j in range(i + 1, n):
            pts += [x + E[i] + E[j], x + E[i] - E[j], x - E[i] + E[j], x - E[i] - E[j]]
    vals = iter(np.asarray(field(np.array(pts)), dtype=float))
    f0 = next(vals)
    H = np.zeros((n, n))
    for i in range(n):
        fp, fm = next(vals), next(vals)
        H[i, i] = (fp - 2.0 * f0 + fm) / h ** 2
        for j in range(i + 1, n):
            fpp, fpm, fmp, fmm = next(vals), next(vals), next(vals), next(vals)
            H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h * h)
    return H


def _hessian_flag(H: np.ndarray, rel: float = 1e-8) -> str:
    eig = np.linalg.eigvalsh(H)
    scale = np.max(np.abs(eig))
    if not np.all(np.isfinite(eig)) or scale == 0 or np.min(np.abs(eig)) < rel * scale:
        return "indeterminate"
    return "negative_definite" if np.all(eig < 0) else "not_definite"


def hessian_at(field: Callable, x: np.ndarray, h: float, *, rtol: float = 0.1,
               max_halvings: int = 8) -> np.ndarray:
    """Central-difference Hessian, halving ``h`` until the eigenvalues settle.

    Starting from ``h`` (the fine cell), the step is halved until two
    successive eigenvalue sets agree to ``rtol`` relative to the smallest
    eigenvalue magnitude, so weak directions are not swamped by truncation
    error from strongly curved ones.
    """
    H = numerical_hessian(field, x, h)
    eig = np.linalg.eigvalsh(H)
    for _ in range(max_halvings):
        h *= 0.5
        H_new = numerical_hessian(field, x, h)
        eig_new = np.linalg.eigvalsh(H_new)
        if not np.all(np.isfinite(eig_new)):
            break
        H, settled = H_new, np.max(np.abs(eig_new - eig)) <= rtol * np.min(np.abs(eig_new))
        eig = eig_new
        if settled:
            break
    return H


def _cluster(points: np.ndarray, values: np.ndarray, radius: float):
    order = np.argsort(-values)
    kept = []
    for j in order:
        if all(np.linalg.norm(points[j] - points[k]) > radius for k in kept):
            kept.append(j)
    return kept


def locate_hotspots(field: Callable, R: float, t: float, dimension: int, *,
                    resolution: int = 257, screen_rtol: float = 1e-2,
                    accept_rtol: float = 1e-6, cluster_cells: float = 2.0,
                    fine_factor: int = 4, chunk: int = 1 << 18,
                    plateau_rtol: float = 1e-12) -> HotSpotRecord:
    """Lattice scan of B(0, R) followed by local ascent on near-maximal basins.

    ``resolution`` is the number of lattice points per axis (forced odd so
    the origin is a lattice point).  Lattice local maxima within
    ``screen_rtol`` of the lattice maximum are refined by Nelder-Mead;
    refined points within ``accept_rtol`` of the best value are kept and
    clustered at ``cluster_cells`` lattice cells.  The Hessian is taken by
    central differences (:func:`hessian_at`) starting from one fine cell
    (``cell / fine_factor``).
    """
    N = dimension
    n = resolution + (resolution + 1) % 2
    axis = np.linspace(-R, R, n)
    cell = axis[1] - axis[0]
    grids = np.meshgrid(*([axis] * N), indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=-1)
    inside = np.linalg.norm(X, axis=-1) <= R
    vals = np.full(X.shape[0], -np.inf)
    idx = np.flatnonzero(inside)
    for s in range(0, idx.size, chunk):
        sel = idx[s:s + chunk]
        vals[sel] = field(X[sel])
    vals = np.where(np.isnan(vals), -np.inf, vals)
    vmax = float(np.max(vals))
    fine = cell / fine_factor
    if vmax == math.inf:
        j = int(np.argmax(vals))
        return HotSpotRecord(t, X[j][None, :].copy(), math.inf, 1, ("singular",), "points", fine)

    near = vals >= vmax - plateau_rtol * abs(vmax)
    if np.count_nonzero(near) > max(3 ** N, 0.01 * idx.size):
        pts = X[near]
        box = np.stack([pts.min(axis=0), pts.max(axis=0)])
        return HotSpotRecord(t, box, vmax, int(np.count_nonzero(near)), ("indeterminate",),
                             "plateau", fine)

    V = vals.reshape((n,) * N)
    peak = ndimage.maximum_filter(V, size=3, mode="constant", cval=-np.inf)
    cand = np.flatnonzero(((V == peak) & (V >= vmax - screen_rtol * abs(vmax))).ravel())
    cand = cand[np.argsort(-vals[cand])][:64]

    def neg(x):
        if np.linalg.norm(x) > R:
            return math.inf
        return -float(field(np.asarray(x, dtype=float)[None, :])[0])

    refined, rvals = [], []
    for j in cand:
        x0 = X[j]
        simplex = np.vstack([x0] + [x0 + 0.5 * cell * e for e in np.eye(N)])
        res = optimize.minimize(neg, x0, method="Nelder-Mead",
                                options={"initial_simplex": simplex, "xatol": 1e-9 * max(R, 1.0),
                                         "fatol": 1e-15 * max(abs(vmax), 1e-300), "maxiter": 4000})
        x, v = (res.x, -res.fun) if -res.fun >= vals[j] else (x0, vals[j])
        refined.append(np.asarray(x, dtype=float))
        rvals.append(float(v))
    refined = np.array(refined)
    rvals = np.array(rvals)
    best = float(rvals.max())
    ok = rvals >= best - accept_rtol * abs(best)
    pts, pv = refined[ok], rvals[ok]
    keep = _cluster(pts, pv, cluster_cells * cell)
    pts = pts[keep]
    flags = tuple(_hessian_flag(hessian_at(field, p, fine)) for p in pts)
    return HotSpotRecord(t, pts, best, len(keep), flags, "points", fine)


def locate_hotspots_radial(state: EvolutionState, R: float | None = None, *,
                           accept_rtol: float = 1e-6, direction_atol: float = 1e-12,
                           fine_factor: int = 4) -> HotSpotRecord:
    """Exact angular maximization for fields made of modes k <= 1 only.

    With ``u = q_* v_0(r) + q_N c(r) . theta`` the maximum over directions at
    radius r is ``q_* v_0(r) + q_N |c(r)|``, attained at ``theta = c/|c|``.
    """
    if any(m.k > 1 for m in state.modes):
        raise ValueError("radial reduction needs modes k <= 1 only")
    N = state.dimension
    hc = harmonic_constants(N)
    R = state.R if R is None else min(R, state.R)
    ks = {(m.k, m.i) for m in state.modes}

    def parts(r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        v0 = radial_part(state, 0, 1, r) if (0, 1) in ks else np.zeros_like(r)
        c = np.stack([radial_part(state, 1, i, r) if (1, i) in ks else np.zeros_like(r)
                      for i in range(1, N + 1)], axis=-1)
        return v0, c

    def g(r):
        v0, c = parts(r)
        return hc.q_star * v0 + hc.q_N * np.linalg.norm(c, axis=-1)

    r = state.grid.nodes[state.grid.nodes <= R]
    gv = g(r)
    gv = np.where(np.isnan(gv), -np.inf, gv)
    j = int(np.argmax(gv))
    cell = float(state.grid.spacing_at(r[j]))
    fine = cell / fine_factor
    if gv[j] == math.inf:
        return HotSpotRecord(state.time, np.zeros((1, N)), math.inf, 1, ("singular",), "points", fine)
    if j == 0:
        rstar, best = 0.0, float(gv[0])
        if r.size > 1:
            res = optimize.minimize_scalar(lambda x: -float(g(x)[0]), bounds=(0.0, r[1]),
                                           method="bounded", options={"xatol": 1e-12})
            if -res.fun > best:
                rstar, best = float(res.x), float(-res.fun)
    else:
        lo, hi = r[j - 1], r[min(j + 1, r.size - 1)]
        res = optimize.minimize_scalar(lambda x: -float(g(x)[0]), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-12 * max(1.0, r[j])})
        rstar, best = float(res.x), float(-res.fun)
    _, c = parts(rstar)
    cn = float(np.linalg.norm(c[0]))
    scale = float(np.max(np.abs(gv[np.isfinite(gv)]))) or 1.0

    def field(x):
        return reconstruct(state, x)

    if rstar == 0.0 or cn > direction_atol * scale:
        theta = c[0] / cn if cn > 0 else np.eye(N)[0]
        p = rstar * theta
        flag = _hessian_flag(hessian_at(field, p, fine)) if rstar + fine < state.R else "indeterminate"
        return HotSpotRecord(state.time, p[None, :], best, 1, (flag,), "points", fine)
    p = rstar * np.eye(N)[0]
    return HotSpotRecord(state.time, p[None, :], best, 1, ("indeterminate",), "sphere", fine)


def hotspot_record(state: EvolutionState, *, L: float = CONTAINMENT_L, method: str = "auto",
                   resolution: int | None = None, **kwargs) -> HotSpotRecord:
    """Locate the hot spots of an evolution snapshot inside ``B(0, min(L sqrt(t), R_dom))``.

    ``method="auto"`` uses the exact radial reduction when only modes k <= 1
    are present and the lattice scan otherwise.
    """
    R = min(L * math.sqrt(max(state.time, 1e-12)), state.R)
    N = state.dimension
    if method == "auto":
        method = "radial" if all(m.k <= 1 for m in state.modes) else "lattice"
    if method == "radial":
        return locate_hotspots_radial(state, R, **kwargs)
    if resolution is None:
        resolution = 257 if N == 2 else 129
    return locate_hotspots(lambda x: reconstruct(state, x), R, state.time, N,
                           resolution=resolution, **kwargs)


@dataclass(frozen=True, eq=False)
class HotSpotTrajectory:
    records: tuple
    fitted: "RateFit | None" = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def positions(self) -> np.ndarray:
        return np.array([r.point for r in self.records])

    @property
    def radii(self) -> np.ndarray:
        return np.array([r.radius for r in self.records])


def track_hotspots(snapshots: Sequence[EvolutionState], **kwargs) -> HotSpotTrajectory:
    return HotSpotTrajectory(tuple(hotspot_record(s, **kwargs) for s in snapshots))


# -- predictions -----------------------------------------------------------------------

@dataclass(frozen=True)
class RadiusLaw:
    """Predicted hot-spot radius as a function of t."""

    kind: str  # "constant", "closed" or "implicit"
    descriptor: str
    evaluate: Callable = field(repr=False, compare=False)

    def __call__(self, t):
        return self.evaluate(t)


@dataclass(frozen=True, eq=False)
class Prediction:
    case_tag: str
    radius_law: RadiusLaw
    direction: np.ndarray | None
    direction_note: str
    limit_point: np.ndarray | None
    uniqueness_expected: bool
    uniqueness_basis: str
    hypotheses: dict = field(default_factory=dict)
    alternatives: dict = field(default_factory=dict)
    quantities: dict = field(default_factory=dict)

    def to_dict(self, times: Sequence[float] = ()) -> dict:
        out = {
            "case_tag": self.case_tag,
            "radius_law": {"kind": self.radius_law.kind, "descriptor": self.radius_law.descriptor},
            "direction": None if self.direction is None else [float(v) for v in self.direction],
            "direction_note": self.direction_note,
            "limit_point": None if self.limit_point is None else [float(v) for v in self.limit_point],
            "uniqueness_expected": self.uniqueness_expected,
            "uniqueness_basis": self.uniqueness_basis,
            "hypotheses": self.hypotheses,
            "alternatives": {k: v.descriptor for k, v in self.alternatives.items()},
            "quantities": self.quantities,
        }
        if times:
            out["predicted_radius"] = {repr(float(t)): _safe(self.radius_law, t) for t in times}
            for name, law in self.alternatives.items():
                out[f"predicted_radius_{name}"] = {repr(float(t)): _safe(law, t) for t in times}
        return out


def _safe(law, t):
    """``law(t)``, or None where the law is undefined (no root, or t too small)."""
    try:
        v = float(law(t))
    except (NoRoot, ValueError, ZeroDivisionError):
        return None
    return v if math.isfinite(v) and v >= 0 else None


def solve_implicit_radius(profile0, t: float, c_star: float | None = None,
                          r_lo: float = 1.0, r_hi: float | None = None) -> float:
    """Root of ``t U'(rho) / (c_* rho) = 1/2`` by a geometrically grown bracket and bisection.

    The bracket starts at ``[r_lo, 2 r_lo]`` and is widened downward to the
    profile's inner radius and upward to its outer radius.
    """
    cs = profile0.c_infinity if c_star is None else c_star
    lo_lim = getattr(profile0, "r0", 1e-6)
    hi_lim = getattr(profile0, "r_max", 1e4) if r_hi is None else r_hi

    def f(r):
        return t * float(np.asarray(profile0.derivative(np.array([r])))[0]) / (cs * r) - 0.5

    lo, hi = r_lo, 2.0 * r_lo
    flo = f(lo)
    while flo < 0 and lo / 2.0 >= lo_lim:
        lo /= 2.0
        flo = f(lo)
    if flo == 0:
        return lo
    fhi = f(hi)
    while fhi > 0 and hi * 2.0 <= hi_lim:
        hi *= 2.0
        fhi = f(hi)
    if not (flo > 0 > fhi):
        raise NoRoot(f"no sign change of t U'(r)/(c* r) - 1/2 on [{lo:.3g}, {hi:.3g}] at t = {t:.6g}",
                     endpoints=((lo, flo), (hi, fhi)))
    return float(optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-12))


def corollary_radius(t: float, *, N: int, mu: float, d: float, gamma0_inf: float,
                     lambda1: float = 0.0, Lambda: float | None = None,
                     form: str = "with_D", lambda_atol: float = 1e-10) -> float:
    """Closed-form hot-spot radius for ``V ~ mu r^{-d}`` with ``A = 0`` and ``Pi`` empty.

    ``form="with_D"`` divides every branch by ``D = Gamma_0(inf) + 1`` (or
    ``Gamma_0(inf)`` when ``lambda1 > 0``).
    ``form="without_D"`` keeps ``D`` only in the branches driven by ``Lambda``;
    in the ``mu r^{-d}``-driven branches the constant cancels against the
    ``c_*`` of the implicit equation because ``U' ~ mu c_* r^{1-d} / (N - d)``.
    """
    if d <= 2:
        raise UnsupportedRegime("closed forms need d > 2")
    D = gamma0_inf + (1.0 if lambda1 == 0 else 0.0)
    if form not in ("with_D", "without_D"):
        raise ValueError("form must be 'with_D' or 'without_D'")
    Dmu = D if form == "with_D" else 1.0
    if mu > 0:
        if d < N:
            return (2.0 * mu * t / (Dmu * (N - d))) ** (1.0 / d)
        if d == N:
            return (2.0 * mu * t * math.log(t) / (Dmu * N)) ** (1.0 / N)
        if Lambda is not None and Lambda > lambda_atol:
            return (2.0 * Lambda * t / D) ** (1.0 / N)
        raise UnsupportedRegime("mu > 0, d > N needs Lambda > 0 (otherwise Pi is not empty)")
    if mu < 0 and d > N and Lambda is not None:
        if Lambda > lambda_atol:
            return (2.0 * Lambda * t / D) ** (1.0 / N)
        if abs(Lambda) <= lambda_atol:
            return (2.0 * abs(mu) * t / (Dmu * (d - N))) ** (1.0 / d)
    raise UnsupportedRegime(f"no closed form for mu = {mu}, d = {d}, N = {N}")


def _second_derivative(profile, spec, r):
    r = np.asarray(r, dtype=float)
    N = profile.dimension
    return spec.V(r) * profile(r) - (N - 1) / r * profile.derivative(r)


def _concave_near(profile, spec, r0, width, tol=1e-8):
    lo = max(r0 - width, 1e-3 * width)
    r = np.linspace(lo, r0 + width, 41)
    U2 = _second_derivative(profile, spec, r)
    scale = max(1.0, float(np.max(np.abs(profile(r)))))
    return bool(np.all(U2 <= tol * scale))


def _hessian_nonpositive_at_origin(profile, spec, width=0.1, tol=1e-8):
    r = np.linspace(1e-3 * width, width, 41)
    U2 = _second_derivative(profile, spec, r)
    U1 = profile.derivative(r)
    scale = max(1.0, float(np.max(np.abs(profile(r)))))
    return bool(np.all(U2 <= tol * scale) and np.all(U1 <= tol * scale))


def predict(classification, profiles: Sequence, decomp, spec, *, pi: PiSummary | None = None,
            xi_atol: float = 1e-10) -> Prediction:
    """Theoretical hot-spot behavior from the operator class and the data moments."""
    if classification.ambiguous:
        raise UnsupportedRegime("classification is ambiguous")
    N = spec.dimension
    A = classification.a_exponent
    cs = classification.c_star
    if not A > -N / 2.0:
        raise UnsupportedRegime(f"A = {A:.6g} <= -N/2")
    if not decomp.M_phi > 0:
        raise UnsupportedRegime(f"M(phi) = {decomp.M_phi:.6g} is not positive")
    U0, U1 = profiles[0], profiles[1]
    Xi = np.asarray(decomp.Xi_phi, dtype=float)
    xin = float(np.linalg.norm(Xi))
    has_dir = xin > xi_atol * max(1.0, abs(decomp.pairing))
    direction = Xi / xin if has_dir else None
    dnote = "Xi/|Xi|" if has_dir else "undetermined (Xi = 0)"
    q = {"A": A, "c_star": cs, "M_phi": decomp.M_phi, "pairing": decomp.pairing,
         "Xi": [float(v) for v in Xi], "lambda1": spec.lambda1, "lambda2": spec.lambda2}
    a_tol = 1e-8

    if spec.lambda1 < 0:
        law = RadiusLaw("constant", "rho(t) = 0", lambda t: 0.0)
        return Prediction("I", law, None, "origin", np.zeros(N), True, "H = {0} for large t",
                          {"lambda1<0": True}, {}, q)

    if A > a_tol:
        law = RadiusLaw("closed", f"rho(t) = sqrt(2 A t), A = {A:.6g}",
                        lambda t, A=A: math.sqrt(2.0 * A * t))
        return Prediction("II1", law, direction, dnote, None, has_dir,
                          "single escaping point when Xi != 0", {"Xi!=0": has_dir}, {}, q)

    pi = compute_Pi(U0) if pi is None else pi
    q["Pi"] = pi.to_dict()

    if A < -a_tol:
        rstar = float(pi.min_pi)
        limit = rstar * direction if has_dir else (np.zeros(N) if rstar == 0 else None)
        law = RadiusLaw("constant", f"rho -> min Pi = {rstar:.6g}", lambda t, r=rstar: r)
        if rstar == 0:
            hyp = {"r*=0": True, "V_finite_at_0": bool(np.isfinite(spec.V(1e-9))),
                   "hessian_U<=0_near_0": _hessian_nonpositive_at_origin(U0, spec)}
            basis = "limit at the origin with nonpositive Hessian of U nearby"
        else:
            hyp = {"r*>0": True, "U''<=0_near_r*": _concave_near(U0, spec, rstar, 0.05 * rstar),
                   "Xi!=0": has_dir}
            basis = "limit on a sphere where U is concave, Xi != 0"
        return Prediction("II3", law, direction, dnote, limit, all(hyp.values()), basis, hyp, {}, q)

    # A = 0
    if pi.is_empty:
        F0 = None
        alts = {}
        implicit = RadiusLaw("implicit", "t U'(rho) / (c* rho) = 1/2",
                             lambda t, U0=U0, cs=cs: solve_implicit_radius(U0, t, cs))
        if N == 2 and classification.tag != "C":
            law = RadiusLaw("closed", "rho(t) = 2 t / log t", lambda t: 2.0 * t / math.log(t))
            alts["implicit"] = implicit
            return Prediction("II2a", law, direction, dnote, None, has_dir,
                              "single escaping point when Xi != 0", {"Xi!=0": has_dir}, alts, q)
        if spec.tail is not None:
            mu, d = spec.tail
            try:
                gam = compute_Gamma(spec, U0, need_limit=True)
                g0 = float(gam.limit)
                lam = None
                if d > N:
                    lam = compute_Lambda(spec, U0)
                q.update(Gamma0_inf=g0, Lambda=lam)
                for form in ("with_D", "without_D"):
                    corollary_radius(1e4, N=N, mu=mu, d=d, gamma0_inf=g0, lambda1=spec.lambda1,
                                     Lambda=lam, form=form)
                    alts[f"corollary_{form}"] = RadiusLaw(
                        "closed", f"closed form ({form}) for V ~ {mu:g} r^-{d:g}",
                        lambda t, form=form, g0=g0, lam=lam, mu=mu, d=d: corollary_radius(
                            t, N=N, mu=mu, d=d, gamma0_inf=g0, lambda1=spec.lambda1, Lambda=lam,
                            form=form))
            except Exception as exc:  # closed forms are auxiliary
                q["closed_form_note"] = str(exc)
        return Prediction("II2b", implicit, direction, dnote, None, has_dir,
                          "single escaping point when Xi != 0", {"Xi!=0": has_dir}, alts, q)

    F0 = compute_F(U0)
    S = compute_S(U0, U1, decomp.pairing, xin, c_star=cs, c1=U1.c_infinity, pi=pi, F0=F0)
    rstar = float(S.maximizer)
    q.update(S_maximizer=rstar, S_second_derivative=S.second_derivative)
    limit = rstar * direction if has_dir else (np.zeros(N) if rstar == 0 else None)
    law = RadiusLaw("constant", f"rho -> argmax of S on Pi = {rstar:.6g}", lambda t, r=rstar: r)
    if rstar == 0:
        hyp = {"r*=0": True, "V_finite_at_0": bool(np.isfinite(spec.V(1e-9))),
               "hessian_U<=0_near_0": _hessian_nonpositive_at_origin(U0, spec)}
        basis = "limit at the origin with nonpositive Hessian of U nearby"
        expected = all(hyp.values())
    else:
        U2 = float(_second_derivative(U0, spec, np.array([rstar]))[0])
        b = U2 < 0 and has_dir
        c = _concave_near(U0, spec, rstar, 0.05 * rstar) and S.second_derivative < 0 and has_dir
        hyp = {"U''(r*)<0": U2 < 0, "U''<=0_near_r*": _concave_near(U0, spec, rstar, 0.05 * rstar),
               "S''(r*)<0": bool(S.second_derivative < 0), "Xi!=0": has_dir}
        basis = "strict concavity of U at r*" if b else "concave U near r* and S''(r*) < 0"
        expected = bool(b or c)
    return Prediction("II2c", law, direction, dnote, limit, expected, basis, hyp, {}, q)


# -- fitting ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RateFit:
    mode: str
    exponent: float | None
    coefficient: float | None
    residual: float
    limit: np.ndarray | None
    n_records: int
    t_range: tuple

    def to_dict(self) -> dict:
        return {"mode": self.mode, "exponent": self.exponent, "coefficient": self.coefficient,
                "residual": self.residual,
                "limit": None if self.limit is None else [float(v) for v in self.limit],
                "n_records": self.n_records, "t_range": list(self.t_range)}


def _as_arrays(records):
    if len(records) and isinstance(records[0], HotSpotRecord):
        return np.array([r.t for r in records]), np.array([r.point for r in records])
    t, x = records
    return np.asarray(t, dtype=float), np.asarray(x, dtype=float)


def fit_rate(records, mode: str = "escape", *, window_decades: float | None = None,
             exponent: float | None = None, min_records: int = 8,
             min_decades: float = 1.5) -> RateFit:
    """Fit hot-spot records.

    ``escape``: least squares of ``log|x|`` against ``log t`` (or only the
    coefficient when ``exponent`` is fixed).  ``log``: the same against
    ``log(t / log t)``.  ``bounded``: mean of x weighted by ``t**2``, which
    down-weights early records whose offset from the limit decays like 1/t.
    ``window_decades`` keeps only the final part of the record span.
    """
    t, X = _as_arrays(records)
    if t.size < min_records or math.log10(t.max() / t.min()) < min_decades - 1e-9:
        raise InsufficientSpan(f"need >= {min_records} records over >= {min_decades} decades "
                               f"(got {t.size} over {math.log10(t.max() / t.min()):.3g})")
    if window_decades is not None:
        keep = t >= t.max() * 10.0 ** (-window_decades) * (1 - 1e-12)
        t, X = t[keep], X[keep]
    rng = (float(t.min()), float(t.max()))
    if mode == "bounded":
        w = t ** 2
        lim = np.sum(w[:, None] * X.reshape(t.size, -1), axis=0) / w.sum()
        res = float(np.sqrt(np.mean(np.sum((X.reshape(t.size, -1) - lim) ** 2, axis=-1))))
        return RateFit("bounded", None, None, res, lim, int(t.size), rng)
    r = np.linalg.norm(X.reshape(t.size, -1), axis=-1) if X.ndim > 1 else np.abs(X)
    if np.any(r <= 0):
        raise ValueError("escape fits need positive radii")
    if mode == "escape":
        s = np.log(t)
    elif mode == "log":
        s = np.log(t / np.log(t))
    else:
        raise ValueError(f"unknown fit mode {mode!r}")
    y = np.log(r)
    if exponent is None:
        G = np.column_stack([s, np.ones_like(s)])
        (p, b), *_ = np.linalg.lstsq(G, y, rcond=None)
    else:
        p = float(exponent)
        b = float(np.mean(y - p * s))
    resid = float(np.sqrt(np.mean((y - p * s - b) ** 2)))
    return RateFit(mode, float(p), float(math.exp(b)), resid, None, int(t.size), rng)


# -- Gaussian bound ----------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianBoundReport:
    times: tuple
    constants: tuple

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(c) for c in self.constants)

    def to_dict(self) -> dict:
        return {"times": list(self.times), "constants": list(self.constants)}


def _minimal_constant(ratio, a):
    """Smallest C with ``C exp(-a / C) >= ratio`` for every pair (ratio, a)."""
    ratio = np.asarray(ratio, dtype=float)
    a = np.asarray(a, dtype=float)
    pos = ratio > 0
    C = np.zeros_like(ratio)
    zero_a = pos & (a == 0)
    C[zero_a] = ratio[zero_a]
    m = pos & (a > 0)
    C[m] = a[m] / special.lambertw(a[m] / ratio[m]).real
    return float(np.max(C)) if C.size else 0.0


def check_gaussian_bound(snapshots: Sequence[EvolutionState], profile0, *, mass: float | None = None,
                         n_dirs: int = 8, floor: float = 1e-8) -> GaussianBoundReport:
    """Minimal constant C of the upper Gaussian estimate at each snapshot.

    The data are treated as a point mass at the origin with weight
    ``mass = int |phi| U`` (default: the t = 0 pairing), so the comparison
    function is ``C t^{-N/2} U(min(r, sqrt t)) mass / U(sqrt t)^2 exp(-r^2/(C t))``.
    Radii where |u| is below ``floor`` times its maximum are skipped, since
    there the field is dominated by discretization error.
    """
    if len(snapshots) < 3:
        raise ValueError("need at least three snapshots")
    times, consts = [], []
    for s in snapshots:
        N = s.dimension
        t = s.time
        m = s.ledger[0][1] if mass is None else mass
        r = s.grid.nodes[1:]
        if N in (2, 3):
            from .spectral import sphere_rule
            dirs, _ = sphere_rule(N, n_dirs)
        else:
            dirs = np.vstack([np.eye(N), -np.eye(N)])
        u = np.abs(reconstruct(s, r[:, None, None] * dirs[None, :, :])).max(axis=1)
        keep = u >= floor * u.max()
        r, u = r[keep], u[keep]
        st = math.sqrt(t)
        K = t ** (-N / 2.0) * profile0(np.minimum(r, st)) * m / float(profile0(np.array([st]))[0]) ** 2
        consts.append(_minimal_constant(u / K, r * r / t))
        times.append(t)
    return GaussianBoundReport(tuple(times), tuple(consts))


# -- reports ------------------------------------------------------------------------------

def write_trajectory_csv(path, trajectory: HotSpotTrajectory, prediction: Prediction | None = None) -> None:
    """Columns: t, x_1..x_N, max value, multiplicity, predicted radius, direction, errors."""
    recs = trajectory.records
    N = recs[0].points.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(N)] + ["max_value", "multiplicity", "kind",
                   "hessian", "predicted_radius"] + [f"predicted_dir_{i + 1}" for i in range(N)]
                   + ["radial_error", "angular_error_deg"])
        for rec in recs:
            x = rec.point
            pr = _safe(prediction.radius_law, rec.t) if prediction else None
            d = prediction.direction if prediction is not None else None
            rerr = "" if pr is None else repr(abs(rec.radius - pr))
            if d is not None and rec.radius > 0:
                cosang = float(np.clip(np.dot(x, d) / rec.radius, -1.0, 1.0))
                aerr = repr(math.degrees(math.acos(cosang)))
            else:
                aerr = ""
            w.writerow([repr(rec.t)] + [repr(float(v)) for v in x]
                       + [repr(rec.max_value), rec.multiplicity, rec.kind, ";".join(rec.hessian),
                          "" if pr is None else repr(pr)]
                       + (["" for _ in range(N)] if d is None else [repr(float(v)) for v in d])
                       + [rerr, aerr])


def comparison_report(prediction: Prediction, trajectory: HotSpotTrajectory,
                      fit: RateFit | None = None, **extra) -> str:
    payload = {"prediction": prediction.to_dict([r.t for r in trajectory.records]),
               "fit": None if fit is None else fit.to_dict(),
               "records": [{"t": r.t, "point": [float(v) for v in r.point], "max_value": r.max_value,
                            "multiplicity": r.multiplicity, "kind": r.kind,
                            "hessian": list(r.hessian)} for r in trajectory.records]}
    payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True, default=float)
