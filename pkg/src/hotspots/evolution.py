"""Mode-by-mode evolution of the heat flow in the divergence-form gauge.

Each spherical-harmonic mode ``u_{k,i}(r,t) Q_{k,i}`` is written as
``u_{k,i} = w U_k``, which turns the singular radial operator into

    w_t = nu^{-1} (nu w')',     nu(r) = r^{N-1} U_k(r)^2,

a weighted diffusion without any potential term.  It is discretized with
piecewise-linear finite elements on ``[0, R_dom]`` (weighted mass and
stiffness matrices from per-cell Gauss quadrature) and Crank-Nicolson in
time.  Since ``sum_j phi_j = 1`` the weighted mass ``1^T M w`` is conserved
by the discrete flow up to the outer Dirichlet flux, which is the discrete
form of the conserved pairing ``int u U dx``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline

from .errors import DomainEscape, LinearSolveFailure, OutOfDomain
from .spectral import ModeDecomposition, angular_harmonics, harmonic_constants

__all__ = [
    "StepPolicy",
    "RadialGrid",
    "domain_radius",
    "radial_grid",
    "ModeField",
    "EvolutionState",
    "initialize",
    "step",
    "run",
    "RunResult",
    "reconstruct",
    "radial_part",
    "conserved_pairing",
    "save_checkpoint",
    "load_checkpoint",
    "export_snapshot_csv",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class StepPolicy:
    """Geometric time-step schedule ``dt = clip(eta t, dt_min, dt_frac_max t)``.

    The first ``startup_steps`` steps use backward Euler to damp the
    high-frequency content of the projected initial data.
    """

    eta: float = 0.05
    dt_min: float = 1e-3
    dt_frac_max: float = 0.25
    startup_steps: int = 4
    escape_tol: float = 1e-6

    def next_dt(self, t: float) -> float:
        dt = max(self.dt_min, self.eta * t)
        if t > 0:
            dt = min(dt, max(self.dt_frac_max * t, self.dt_min))
        return dt


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    refine: int
    patch: float
    spacing: float

    @property
    def R(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def fine_cell(self) -> float:
        return self.spacing / self.refine

    def spacing_at(self, r: float) -> float:
        j = int(np.clip(np.searchsorted(self.nodes, r), 1, self.nodes.size - 1))
        return float(self.nodes[j] - self.nodes[j - 1])

    def to_dict(self) -> dict:
        return {"R": self.R, "n_cells": self.n_cells, "refine": self.refine,
                "patch": self.patch, "spacing": self.spacing}


def domain_radius(t_end: float, factor: float = 10.0, minimum: float = 20.0) -> float:
    """``R_dom = max(minimum, factor sqrt(t_end))``."""
    return max(minimum, factor * math.sqrt(t_end))


def _build_nodes(R, h, refine, patch, growth=1.1):
    hf = h / refine
    m = max(1, int(math.ceil(patch / hf)))
    parts = [np.linspace(0.0, patch, m + 1)]
    r, s, ramp = patch, hf, []
    while s * growth < h and r < R:
        s *= growth
        r += s
        ramp.append(r)
    parts.append(np.array(ramp))
    rest = R - r
    if rest > 0:
        m2 = max(1, int(math.ceil(rest / h)))
        parts.append(np.linspace(r, R, m2 + 1)[1:])
    nodes = np.concatenate(parts)
    return nodes[nodes <= R + 1e-12]


def radial_grid(R: float, n_cells: int = 4096, refine: int = 10, patch: float = 1.0) -> RadialGrid:
    """Vertex grid on [0, R]: spacing ``h/refine`` on [0, patch], a geometric ramp, then ``h``.

    ``h`` is chosen so that the total cell count is as close to
    ``n_cells`` as possible without exceeding it.
    """
    if R <= patch:
        raise ValueError("domain radius must exceed the refined patch")
    lo, hi = 1e-6, R
    for _ in range(100):
        mid = math.sqrt(lo * hi)
        if _build_nodes(R, mid, refine, patch).size - 1 > n_cells:
            lo = mid
        else:
            hi = mid
    nodes = _build_nodes(R, hi, refine, patch)
    return RadialGrid(nodes=nodes, refine=refine, patch=patch, spacing=hi)


# -- per-mode operators ---------------------------------------------------------

class _ModeOperator:
    """Weighted P1 mass/stiffness matrices for one angular order k."""

    def __init__(self, grid: RadialGrid, profile, N: int):
        r = grid.nodes
        a, b = r[:-1], r[1:]
        h = b - a
        xq = a[:, None] + 0.5 * h[:, None] * (1.0 + _GL_X[None, :])
        wq = 0.5 * h[:, None] * _GL_W[None, :]
        U = profile(xq)
        nu = xq ** (N - 1) * U ** 2
        n0 = (b[:, None] - xq) / h[:, None]
        n1 = 1.0 - n0
        m00 = np.sum(wq * nu * n0 * n0, axis=1)
        m01 = np.sum(wq * nu * n0 * n1, axis=1)
        m11 = np.sum(wq * nu * n1 * n1, axis=1)
        kk = np.sum(wq * nu, axis=1) / h ** 2
        n = r.size
        self.M_diag = np.zeros(n)
        self.M_diag[:-1] += m00
        self.M_diag[1:] += m11
        self.M_off = m01
        self.K_diag = np.zeros(n)
        self.K_diag[:-1] += kk
        self.K_diag[1:] += kk
        self.K_off = -kk
        self.lumped = self.M_diag.copy()
        self.lumped[:-1] += m01
        self.lumped[1:] += m01
        self._xq, self._wq, self._n0, self._n1 = xq, wq, n0, n1
        self.U_nodes = profile(r)
        self.profile = profile
        self.N = N

    def load(self, radial) -> np.ndarray:
        """``b_j = int r^{N-1} U_k phi^{k,i} N_j dr`` (right side of the L2(nu) projection)."""
        vals = np.asarray(radial(self._xq.ravel()), dtype=float).reshape(self._xq.shape)
        g = self._wq * self._xq ** (self.N - 1) * self.profile(self._xq) * vals
        out = np.zeros(self.M_diag.size)
        out[:-1] += np.sum(g * self._n0, axis=1)
        out[1:] += np.sum(g * self._n1, axis=1)
        return out

    def mass_times(self, w: np.ndarray) -> np.ndarray:
        out = self.M_diag * w
        out[:-1] += self.M_off * w[1:]
        out[1:] += self.M_off * w[:-1]
        return out

    def stiff_times(self, w: np.ndarray) -> np.ndarray:
        out = self.K_diag * w
        out[:-1] += self.K_off * w[1:]
        out[1:] += self.K_off * w[:-1]
        return out

    def solve(self, c_mass: float, c_stiff: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(c_mass M + c_stiff K) x = rhs`` on the free nodes (last node is Dirichlet)."""
        n = rhs.size - 1
        ab = np.zeros((3, n))
        ab[1] = c_mass * self.M_diag[:n] + c_stiff * self.K_diag[:n]
        off = c_mass * self.M_off[:n - 1] + c_stiff * self.K_off[:n - 1]
        ab[0, 1:] = off
        ab[2, :-1] = off
        try:
            x = linalg.solve_banded((1, 1), ab, rhs[:n], check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise LinearSolveFailure(f"banded solve failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise LinearSolveFailure("banded solve produced non-finite values")
        return np.append(x, 0.0)


# -- state ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModeField:
    k: int
    i: int
    w: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class EvolutionState:
    """Immutable snapshot of all mode fields at one time."""

    dimension: int
    grid: RadialGrid
    modes: tuple
    time: float
    ledger: tuple
    policy: StepPolicy
    profiles: Mapping = field(repr=False)
    operators: Mapping = field(repr=False)
    steps_taken: int = 0
    _splines: dict = field(default_factory=dict, repr=False, compare=False)

    def mode(self, k: int, i: int) -> ModeField:
        for m in self.modes:
            if (m.k, m.i) == (k, i):
                return m
        raise KeyError((k, i))

    @property
    def R(self) -> float:
        return self.grid.R

    def spline(self, k: int, i: int) -> CubicSpline:
        key = (k, i)
        if key not in self._splines:
            self._splines[key] = CubicSpline(self.grid.nodes, self.mode(k, i).w,
                                             bc_type=((1, 0.0), "not-a-knot"))
        return self._splines[key]


def initialize(decomp: ModeDecomposition, profiles: Mapping | Sequence, grid: RadialGrid,
               policy: StepPolicy | None = None) -> EvolutionState:
    """Project each radial mode onto the grid: ``w_0 = P_nu(phi^{k,i} / U_k)``.

    The projection is the weighted L2 one, so ``1^T M w_0`` equals the
    discrete ``int r^{N-1} U_k phi^{k,i} dr`` and the initial pairing is exact
    up to quadrature.
    """
    N = decomp.dimension
    profs = dict(enumerate(profiles)) if not isinstance(profiles, Mapping) else dict(profiles)
    ops = {}
    modes = []
    for m in decomp.modes:
        if m.k not in ops:
            ops[m.k] = _ModeOperator(grid, profs[m.k], N)
        op = ops[m.k]
        b = op.load(m)
        w = op.solve(1.0, 0.0, b)
        modes.append(ModeField(m.k, m.i, w))
    state = EvolutionState(dimension=N, grid=grid, modes=tuple(modes), time=0.0, ledger=(),
                           policy=policy or StepPolicy(), profiles=profs, operators=ops)
    return replace(state, ledger=((0.0, conserved_pairing(state)),))


def _escape_fraction(state: EvolutionState) -> float:
    if 0 not in state.operators:
        return 0.0
    op = state.operators[0]
    w = state.mode(0, 1).w
    mass = op.lumped * np.abs(w)
    total = mass.sum()
    if total <= 0:
        return 0.0
    outer = state.grid.nodes >= 0.9 * state.R
    return float(mass[outer].sum() / total)


def step(state: EvolutionState, dt: float, scheme: str = "cn", check_escape: bool = True) -> EvolutionState:
    """Advance every mode by one Crank-Nicolson (or backward Euler) step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    theta = {"cn": 0.5, "be": 1.0}[scheme]
    new = []
    for m in state.modes:
        op = state.operators[m.k]
        rhs = op.mass_times(m.w) - (1.0 - theta) * dt * op.stiff_times(m.w)
        new.append(ModeField(m.k, m.i, op.solve(1.0, theta * dt, rhs)))
    out = replace(state, modes=tuple(new), time=state.time + dt, steps_taken=state.steps_taken + 1,
                  _splines={})
    if check_escape:
        frac = _escape_fraction(out)
        if frac > state.policy.escape_tol:
            raise DomainEscape(
                f"{frac:.3g} of the pairing mass lies in the outer 10% of the domain at "
                f"t = {out.time:.6g}; enlarge the domain radius", fraction=frac, t=out.time)
    return out


@dataclass(frozen=True, eq=False)
class RunResult:
    state: EvolutionState
    snapshots: tuple

    def snapshot_at(self, t: float) -> EvolutionState:
        for s in self.snapshots:
            if math.isclose(s.time, t, rel_tol=1e-12, abs_tol=1e-14):
                return s
        raise KeyError(t)


def run(state: EvolutionState, t_end: float, record_times: Sequence[float] = ()) -> RunResult:
    """Advance to ``t_end`` on the geometric schedule, landing exactly on record times.

    Each record appends ``(t, pairing)`` to the conservation ledger and
    stores the state as a snapshot.
    """
    if t_end < state.time:
        raise ValueError("t_end precedes the current time")
    if t_end == state.time:
        return RunResult(state, ())
    targets = sorted({float(t) for t in record_times if state.time < t <= t_end})
    stops = targets + ([t_end] if not targets or targets[-1] < t_end else [])
    snaps = []
    cur = state
    for stop in stops:
        while cur.time < stop * (1.0 - 1e-13):
            dt = cur.policy.next_dt(cur.time)
            if cur.time + dt > stop or stop - (cur.time + dt) < 0.1 * dt:
                dt = stop - cur.time
            scheme = "be" if cur.steps_taken < cur.policy.startup_steps else "cn"
            try:
                cur = step(cur, dt, scheme=scheme)
            except LinearSolveFailure as exc:
                raise LinearSolveFailure(f"{exc} (t = {cur.time:.6g})") from exc
        cur = replace(cur, time=stop)
        if stop in targets:
            cur = replace(cur, ledger=cur.ledger + ((stop, conserved_pairing(cur)),))
            snaps.append(cur)
    return RunResult(cur, tuple(snaps))


# -- evaluation -------------------------------------------------------------------

def conserved_pairing(state: EvolutionState) -> float:
    """Discrete ``int u U dx = q_* |S| int_0^R nu w_{0,1} dr``."""
    if 0 not in state.operators:
        raise KeyError("the k = 0 mode is not present")
    hc = harmonic_constants(state.dimension)
    w = state.mode(0, 1).w
    return float(np.sum(state.operators[0].mass_times(w)) * hc.q_star * hc.sphere_area)


def radial_part(state: EvolutionState, k: int, i: int, r) -> np.ndarray:
    """``u_{k,i}(r, t) = w_{k,i}(r, t) U_k(r)`` by cubic interpolation of w."""
    r = np.asarray(r, dtype=float)
    if np.any(r > state.R * (1 + 1e-12)) or np.any(r < 0):
        raise OutOfDomain(f"radius outside [0, {state.R:.6g}]")
    w = state.spline(k, i)(r)
    U = state.profiles[k](r)
    with np.errstate(invalid="ignore"):
        out = w * U
    if k > 0:
        out = np.where(r == 0, 0.0, out)
    return out


def reconstruct(state: EvolutionState, points) -> np.ndarray:
    """``u(x, t) = sum_{k,i} w_{k,i}(|x|) U_k(|x|) Q_{k,i}(x/|x|)`` at points (..., N)."""
    x = np.asarray(points, dtype=float)
    N = state.dimension
    if x.shape[-1] != N:
        raise ValueError(f"points must have trailing dimension {N}")
    r = np.linalg.norm(x, axis=-1)
    if np.any(r > state.R * (1 + 1e-12)):
        raise OutOfDomain(f"{int(np.sum(r > state.R))} point(s) beyond R_dom = {state.R:.6g}")
    with np.errstate(invalid="ignore", divide="ignore"):
        th = x / r[..., None]
    th = np.where(r[..., None] > 0, th, np.eye(N)[0])
    out = np.zeros(r.shape)
    for m in state.modes:
        Q = angular_harmonics(N, m.k)[m.i - 1]
        out = out + radial_part(state, m.k, m.i, r) * Q(th)
    return out


# -- persistence --------------------------------------------------------------------

def save_checkpoint(state: EvolutionState, path) -> None:
    """Binary checkpoint: one JSON header line, then little-endian float64 arrays.

    The arrays are the grid nodes followed by each mode's w, in header order.
    """
    header = {
        "format": "hotspots-checkpoint/1",
        "N": state.dimension,
        "grid": state.grid.to_dict(),
        "n_nodes": int(state.grid.nodes.size),
        "modes": [[m.k, m.i] for m in state.modes],
        "t": state.time,
        "steps_taken": state.steps_taken,
        "ledger": [list(e) for e in state.ledger],
        "policy": {k: getattr(state.policy, k) for k in StepPolicy.__dataclass_fields__},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(state.grid.nodes.astype("<f8").tobytes())
        for m in state.modes:
            fh.write(m.w.astype("<f8").tobytes())


def load_checkpoint(path, profiles: Mapping | Sequence) -> EvolutionState:
    """Inverse of :func:`save_checkpoint`; profiles must be supplied again."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    n = header["n_nodes"]
    nodes = data[:n].copy()
    g = header["grid"]
    grid = RadialGrid(nodes=nodes, refine=g["refine"], patch=g["patch"], spacing=g["spacing"])
    profs = dict(enumerate(profiles)) if not isinstance(profiles, Mapping) else dict(profiles)
    N = header["N"]
    ops, modes = {}, []
    for j, (k, i) in enumerate(header["modes"]):
        if k not in ops:
            ops[k] = _ModeOperator(grid, profs[k], N)
        modes.append(ModeField(k, i, data[n * (j + 1): n * (j + 2)].copy()))
    return EvolutionState(dimension=N, grid=grid, modes=tuple(modes), time=header["t"],
                          ledger=tuple(tuple(e) for e in header["ledger"]),
                          policy=StepPolicy(**header["policy"]), profiles=profs, operators=ops,
                          steps_taken=header["steps_taken"])


def export_snapshot_csv(state: EvolutionState, directory, prefix: str = "snapshot") -> list[Path]:
    """One CSV per mode with columns r, w, u_radial."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    r = state.grid.nodes
    for m in state.modes:
        u = m.w * state.operators[m.k].U_nodes
        if m.k > 0:
            u = np.where(r == 0, 0.0, u)
        p = directory / f"{prefix}_t{state.time:.6g}_k{m.k}_i{m.i}.csv"
        np.savetxt(p, np.column_stack([r, m.w, u]), delimiter=",", header="r,w,u_radial",
                   comments="", fmt="%.12e")
        paths.append(p)
    return paths
