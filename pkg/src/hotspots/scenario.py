"""Scenario configuration and the classify -> evolve -> analyze pipeline.

A scenario is a YAML file; see the bundled examples in
``hotspots/scenarios``.  The pipeline is split into :func:`prepare`
(validation, profiles, classification, decomposition and prediction),
:func:`evolve` and :func:`analyze`, so the ``classify`` command can stop
after the first stage.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from scipy.interpolate import CubicSpline

from . import evolution as ev
from . import hotspot as hs
from . import potential as pot
from . import profiles as prof
from . import spectral as sp
from .errors import ConfigError, DivergentGamma, TailDivergence
from .expressions import function_of_r, function_of_x

__all__ = [
    "Scenario",
    "load_scenario",
    "bundled_scenarios",
    "bundled_path",
    "build_potential",
    "build_initial_data",
    "Prepared",
    "prepare",
    "evolve",
    "analyze",
    "SummaryCheck",
    "PipelineResult",
    "run_pipeline",
    "write_outputs",
    "format_summary",
]

FORMATS = {"csv", "json"}

EVOLUTION_DEFAULTS = {"t_end": 1000.0, "records": 12, "record_start": 1.0, "grid_cells": 4096,
                      "domain_factor": 10.0, "eta": 0.05, "dt_min": 1e-3, "r_max": 1e4}
ANALYSIS_DEFAULTS = {"fit": "auto", "fit_window_decades": 1.5, "scan_resolution": None,
                     "method": "auto", "prediction": True, "L": hs.CONTAINMENT_L}
TOLERANCE_DEFAULTS = {"limit_rtol": 0.02, "limit_cells": 2.0, "exponent_atol": 0.02,
                      "coefficient_rtol": 0.05, "radius_rtol": 0.10, "angle_deg": 5.0,
                      "conservation_rtol": 1e-3}


@dataclass(frozen=True)
class Scenario:
    name: str
    dimension: int
    potential: dict
    initial_data: dict
    m_max: int
    evolution: dict
    analysis: dict
    tolerances: dict
    outputs: dict
    seed: int = 0
    base_dir: Path | None = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def record_times(self) -> np.ndarray:
        e = self.evolution
        n = int(e["records"])
        if n <= 0:
            return np.array([])
        start = min(float(e["record_start"]), float(e["t_end"]))
        return np.geomspace(start, float(e["t_end"]), n)

    def with_overrides(self, *, grid_cells: int | None = None, t_end: float | None = None,
                       out: str | None = None) -> "Scenario":
        evo = dict(self.evolution)
        if grid_cells is not None:
            evo["grid_cells"] = int(grid_cells)
        if t_end is not None:
            evo["t_end"] = float(t_end)
            evo["record_start"] = min(float(evo["record_start"]), float(t_end))
        outputs = dict(self.outputs)
        if out is not None:
            outputs["directory"] = str(out)
        return replace(self, evolution=evo, outputs=outputs)


def _require(tree: dict, key: str, where: str):
    if not isinstance(tree, dict) or key not in tree:
        raise ConfigError(f"missing key '{where}{key}'", where + key)
    return tree[key]


def _number(value, key, kind=float):
    try:
        out = kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"key '{key}' must be a number (got {value!r})", key) from exc
    if isinstance(out, float) and not math.isfinite(out):
        raise ConfigError(f"key '{key}' must be finite", key)
    return out


def _merge(defaults: dict, given, key: str) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"key '{key}' must be a mapping", key)
    unknown = set(given) - set(defaults)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown key '{key}.{name}'", f"{key}.{name}")
    out = dict(defaults)
    out.update(given)
    return out


def parse_scenario(tree: Any, base_dir: Path | None = None) -> Scenario:
    """Validate a parsed YAML tree and build a :class:`Scenario`."""
    if not isinstance(tree, dict):
        raise ConfigError("scenario must be a mapping at the top level")
    name = str(_require(tree, "name", ""))
    N = _number(_require(tree, "dimension", ""), "dimension", int)
    if N < 2:
        raise ConfigError("dimension must be >= 2", "dimension")
    potential = _require(tree, "potential", "")
    if not isinstance(potential, dict) or "family" not in potential:
        raise ConfigError("missing key 'potential.family'", "potential.family")
    init = _require(tree, "initial_data", "")
    if not isinstance(init, dict) or init.get("type") not in ("function", "modes"):
        raise ConfigError("initial_data.type must be 'function' or 'modes'", "initial_data.type")
    if init["type"] == "function":
        _require(init, "expression", "initial_data.")
        if N not in (2, 3):
            raise ConfigError("function-form initial data needs dimension 2 or 3; use modes",
                              "initial_data.type")
    else:
        lst = _require(init, "list", "initial_data.")
        if not isinstance(lst, list) or not lst:
            raise ConfigError("initial_data.list must be a non-empty list", "initial_data.list")
        for j, m in enumerate(lst):
            for k in ("k", "i", "profile"):
                _require(m, k, f"initial_data.list[{j}].")
    decomp = tree.get("decomposition") or {}
    m_max = _number(decomp.get("m_max", 3 if N <= 3 else 2), "decomposition.m_max", int)
    if not 1 <= m_max <= (2 if N >= 4 else 8):
        raise ConfigError("decomposition.m_max must be between 1 and 8 (at most 2 when N >= 4)",
                          "decomposition.m_max")
    evo = _merge(EVOLUTION_DEFAULTS, tree.get("evolution"), "evolution")
    for k in ("t_end", "record_start", "domain_factor", "eta", "dt_min", "r_max"):
        evo[k] = _number(evo[k], f"evolution.{k}")
    for k in ("records", "grid_cells"):
        evo[k] = _number(evo[k], f"evolution.{k}", int)
    if not evo["t_end"] > 1:
        raise ConfigError("evolution.t_end must exceed 1", "evolution.t_end")
    ana = _merge(ANALYSIS_DEFAULTS, tree.get("analysis"), "analysis")
    if ana["fit"] not in ("auto", "escape", "bounded", "log", "none"):
        raise ConfigError("analysis.fit must be auto, escape, bounded, log or none", "analysis.fit")
    if ana["fit"] != "none" and evo["records"] < 8:
        raise ConfigError("rate fitting needs at least 8 records", "evolution.records")
    tol = _merge(TOLERANCE_DEFAULTS, tree.get("tolerances"), "tolerances")
    outputs = tree.get("outputs") or {}
    if not isinstance(outputs, dict):
        raise ConfigError("key 'outputs' must be a mapping", "outputs")
    formats = outputs.get("formats", ["csv", "json"])
    if not isinstance(formats, list) or not set(formats) <= FORMATS:
        raise ConfigError("outputs.formats entries must be csv or json", "outputs.formats")
    outputs = {"directory": str(outputs.get("directory", f"out/{name}")), "formats": list(formats)}
    seed = _number(tree.get("seed", 0), "seed", int)
    return Scenario(name=name, dimension=N, potential=dict(potential), initial_data=dict(init),
                    m_max=m_max, evolution=evo, analysis=ana, tolerances=tol, outputs=outputs,
                    seed=seed, base_dir=base_dir, raw=tree)


def load_scenario(path) -> Scenario:
    """Read and validate a YAML scenario file (a bundled name is also accepted)."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_path(str(path))
        if bundled is None:
            raise ConfigError(f"scenario file {path} not found")
        p = bundled
    try:
        tree = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    return parse_scenario(tree, p.parent)


def _scenario_dir():
    return resources.files("hotspots") / "scenarios"


def bundled_scenarios() -> list[str]:
    return sorted(p.name[:-5] for p in _scenario_dir().iterdir() if p.name.endswith(".yaml"))


def bundled_path(name: str) -> Path | None:
    p = _scenario_dir() / f"{name}.yaml"
    return Path(str(p)) if p.is_file() else None


# -- building blocks ---------------------------------------------------------------

def _resolve(sc: Scenario, path: str) -> Path:
    p = Path(path)
    if not p.is_absolute() and sc.base_dir is not None:
        p = sc.base_dir / p
    return p


def build_potential(sc: Scenario) -> pot.PotentialSpec:
    P = sc.potential
    fam = P["family"]
    N = sc.dimension
    try:
        if fam == "zero":
            return pot.zero(N)
        if fam == "hardy":
            return pot.hardy(N, _number(_require(P, "lambda", "potential."), "potential.lambda"))
        if fam == "lorentz":
            return pot.lorentz(N, _number(_require(P, "lambda2", "potential."), "potential.lambda2"))
        if fam == "decaying":
            return pot.decaying(N, _number(_require(P, "mu", "potential."), "potential.mu"),
                                _number(_require(P, "d", "potential."), "potential.d"))
        if fam == "tabulated":
            f = _resolve(sc, str(_require(P, "file", "potential.")))
            data = np.loadtxt(f, ndmin=2)
            return pot.tabulated(N, data[:, 0], data[:, 1], lambda1=P.get("lambda1"),
                                 lambda2=P.get("lambda2"), theta=float(P.get("theta", 1.0)),
                                 name=str(P.get("name", f.stem)))
    except pot.PotentialError:
        raise
    except (OSError, ValueError) as exc:
        raise ConfigError(f"invalid potential: {exc}", "potential") from exc
    raise ConfigError(f"unknown potential family {fam!r}", "potential.family")


def _table_profile(path: Path):
    data = np.loadtxt(path, ndmin=2)
    spl = CubicSpline(data[:, 0], data[:, 1])
    r_end = data[-1, 0]

    def g(r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= r_end, spl(np.minimum(r, r_end)), 0.0)

    return g


def build_initial_data(sc: Scenario):
    init = sc.initial_data
    N = sc.dimension
    if init["type"] == "function":
        expr = str(init["expression"])
        return sp.FunctionData(N, function_of_x(expr, N, "initial_data.expression"), expr)
    modes = []
    for j, m in enumerate(init["list"]):
        key = f"initial_data.list[{j}].profile"
        prof_spec = m["profile"]
        if isinstance(prof_spec, dict) and "table" in prof_spec:
            g = _table_profile(_resolve(sc, str(prof_spec["table"])))
        else:
            g = function_of_r(str(prof_spec), key)
        modes.append(sp.RadialMode(int(m["k"]), int(m["i"]), g))
    try:
        return sp.ModeList(N, tuple(modes))
    except ValueError as exc:
        raise ConfigError(str(exc), "initial_data.list") from exc


# -- pipeline --------------------------------------------------------------------------

@dataclass(eq=False)
class Prepared:
    scenario: Scenario
    spec: pot.PotentialSpec
    validation: pot.ValidationReport
    profiles: list
    classification: prof.OperatorClass
    pi: prof.PiSummary | None = None
    gamma0_inf: float | None = None
    Lambda: float | None = None
    decomposition: sp.ModeDecomposition | None = None
    prediction: hs.Prediction | None = None
    notes: list = field(default_factory=list)

    @property
    def ambiguous(self) -> bool:
        return bool(self.classification.ambiguous)

    def report(self) -> dict:
        out = {
            "scenario": self.scenario.name,
            "potential": self.spec.describe(),
            "validation": self.validation.to_dict(),
            "classification": self.classification.to_dict(),
            "Pi": None if self.pi is None else self.pi.to_dict(),
            "Gamma0_inf": self.gamma0_inf,
            "Lambda": self.Lambda,
            "notes": list(self.notes),
        }
        if self.decomposition is not None:
            d = self.decomposition
            out["moments"] = {"M_phi": d.M_phi, "pairing": d.pairing,
                              "Xi": [float(v) for v in d.Xi_phi],
                              "M_ki": {f"{k},{i}": v for (k, i), v in sorted(d.M_ki.items())},
                              "residual_energy": d.residual_energy, "total_norm": d.total_norm}
        if self.prediction is not None:
            out["prediction"] = self.prediction.to_dict()
        return out


def prepare(sc: Scenario) -> Prepared:
    """Validation, profiles, classification, Pi/Gamma/Lambda, decomposition and prediction.

    Raises :class:`ConditionVError` on validation failure.  An ambiguous
    classification does not raise: the result is returned with
    ``ambiguous`` set and no prediction, so a report can still be written.
    """
    spec = build_potential(sc)
    report = pot.validate_condition_V(spec, strict=True)
    N = sc.dimension
    r_max = max(float(sc.evolution["r_max"]),
                2.0 * ev.domain_radius(sc.evolution["t_end"], sc.evolution["domain_factor"]))
    profiles = prof.solve_profiles(spec, max(sc.m_max, 2), r_max=r_max)
    cls = prof.classify_operator(profiles[0], spec, raise_ambiguous=False)
    out = Prepared(sc, spec, report, profiles, cls)
    pi = prof.compute_Pi(profiles[0])
    out.pi = pi
    if abs(cls.a_exponent) < 1e-8 and spec.lambda1 >= 0:
        try:
            out.gamma0_inf = float(prof.compute_Gamma(spec, profiles[0], need_limit=True).limit)
        except DivergentGamma as exc:
            out.notes.append(f"Gamma_0(inf): {exc}")
    if spec.tail is not None and math.isfinite(spec.tail[1]) and spec.tail[1] > N:
        try:
            out.Lambda = float(prof.compute_Lambda(spec, profiles[0]))
        except TailDivergence as exc:
            out.notes.append(f"Lambda: {exc}")
    phi = build_initial_data(sc)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out.decomposition = sp.decompose(phi, profiles, sc.m_max, A=cls.a_exponent, c_star=cls.c_star)
    out.notes.extend(str(w.message) for w in caught)
    if sc.analysis["prediction"] and not cls.ambiguous:
        out.prediction = hs.predict(cls, profiles, out.decomposition, spec, pi=pi)
    return out


def evolve(prep: Prepared) -> ev.RunResult:
    sc = prep.scenario
    e = sc.evolution
    R = ev.domain_radius(e["t_end"], e["domain_factor"])
    grid = ev.radial_grid(R, e["grid_cells"])
    policy = ev.StepPolicy(eta=e["eta"], dt_min=e["dt_min"])
    state = ev.initialize(prep.decomposition, prep.profiles, grid, policy)
    return ev.run(state, e["t_end"], sc.record_times)


@dataclass(frozen=True)
class SummaryCheck:
    name: str
    value: float | None
    target: str
    passed: bool | None

    def line(self) -> str:
        mark = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        v = "n/a" if self.value is None else f"{self.value:.6g}"
        return f"[{mark}] {self.name}: {v} ({self.target})"


@dataclass(eq=False)
class PipelineResult:
    prepared: Prepared
    run: ev.RunResult
    trajectory: hs.HotSpotTrajectory
    fit: hs.RateFit | None
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)


def _window(records, t_end, decades):
    t0 = t_end * 10.0 ** (-decades) * (1 - 1e-12)
    return [r for r in records if r.t >= t0]


def analyze(prep: Prepared, run: ev.RunResult) -> PipelineResult:
    sc = prep.scenario
    ana, tol = sc.analysis, sc.tolerances
    traj = hs.track_hotspots(run.snapshots, L=ana["L"], method=ana["method"],
                             resolution=ana["scan_resolution"])
    pred = prep.prediction
    checks = []
    led = np.array([p for _, p in run.state.ledger])
    drift = float(np.max(np.abs(led / led[0] - 1.0)))
    checks.append(SummaryCheck("conservation drift", drift, f"< {tol['conservation_rtol']:g}",
                               drift < tol["conservation_rtol"]))
    t_end = sc.evolution["t_end"]
    win = _window(traj.records, t_end, ana["fit_window_decades"])
    mode = ana["fit"]
    if mode == "auto" and pred is not None:
        mode = "escape" if pred.case_tag in ("II1", "II2a", "II2b") else "bounded"
    fit = None
    if mode not in ("none", "auto"):
        fit = hs.fit_rate(traj.records, mode, window_decades=ana["fit_window_decades"])
        traj = replace(traj, fitted=fit)
    if pred is not None and win:
        last = win[-1]
        tag = pred.case_tag
        if tag == "II1":
            A = prep.classification.a_exponent
            free = hs.fit_rate(traj.records, "escape", window_decades=ana["fit_window_decades"])
            fixed = hs.fit_rate(traj.records, "escape", window_decades=ana["fit_window_decades"],
                                exponent=0.5)
            checks.append(SummaryCheck("radius exponent", free.exponent,
                                       f"0.5 +- {tol['exponent_atol']:g}",
                                       abs(free.exponent - 0.5) <= tol["exponent_atol"]))
            target = math.sqrt(2 * A)
            rel = abs(fixed.coefficient / target - 1)
            checks.append(SummaryCheck("coefficient at exponent 1/2", fixed.coefficient,
                                       f"sqrt(2A) = {target:.6g} +- {100 * tol['coefficient_rtol']:g}%",
                                       rel <= tol["coefficient_rtol"]))
            checks.append(SummaryCheck("coefficient at free exponent", free.coefficient,
                                       "reported only", None))
        elif tag in ("II2b", "II2a"):
            law = pred.radius_law if tag == "II2b" else pred.alternatives["implicit"]
            errs = []
            for r in win:
                pr = hs._safe(law, r.t)
                if pr:
                    errs.append(abs(r.radius / pr - 1))
            worst = max(errs) if errs else None
            checks.append(SummaryCheck("radius vs implicit law (final window)", worst,
                                       f"< {100 * tol['radius_rtol']:g}%",
                                       None if tag == "II2a" or worst is None else worst <= tol["radius_rtol"]))
            if tag == "II2a":
                stated = pred.radius_law(last.t)
                checks.append(SummaryCheck("radius / stated law 2t/log t at t_end",
                                           last.radius / stated, "reported only", None))
                if fit is not None:
                    checks.append(SummaryCheck("fitted radius exponent", fit.exponent,
                                               "reported only", None))
        else:
            if pred.limit_point is not None:
                err = float(np.linalg.norm(last.point - pred.limit_point))
                target = tol["limit_rtol"] * float(np.linalg.norm(pred.limit_point)) \
                    + tol["limit_cells"] * last.cell
                checks.append(SummaryCheck("distance to predicted limit at t_end", err,
                                           f"<= {target:.4g}", err <= target))
            else:
                rp = pred.radius_law(last.t)
                err = abs(last.radius - rp)
                target = tol["limit_rtol"] * rp + tol["limit_cells"] * last.cell
                checks.append(SummaryCheck("radius error at t_end", err, f"<= {target:.4g}",
                                           err <= target))
        aims = tag in ("II1", "II2a", "II2b") or (
            pred.limit_point is not None and np.linalg.norm(pred.limit_point) > 0)
        if pred.direction is not None and aims and last.radius > 0:
            ang = math.degrees(math.acos(float(np.clip(last.point @ pred.direction / last.radius, -1, 1))))
            checks.append(SummaryCheck("angle to Xi/|Xi| at t_end (deg)", ang,
                                       f"< {tol['angle_deg']:g}", ang < tol["angle_deg"]))
        if pred.uniqueness_expected:
            ok = all(r.is_unique for r in win)
            checks.append(SummaryCheck("unique nondegenerate maximizer in final window",
                                       float(sum(r.is_unique for r in win)), f"all {len(win)} records", ok))
    return PipelineResult(prep, run, traj, fit, checks)


def run_pipeline(sc: Scenario) -> PipelineResult:
    prep = prepare(sc)
    return analyze(prep, evolve(prep))


# -- outputs ---------------------------------------------------------------------------

def format_summary(res: PipelineResult) -> str:
    prep = res.prepared
    pred = prep.prediction
    cls = prep.classification
    lines = [f"scenario {prep.scenario.name} (N = {prep.spec.dimension}, {prep.spec.family})",
             f"class {cls.tag}, A = {cls.a_exponent:.6g}, c* = {cls.c_star:.6g}"]
    if pred is not None:
        lines.append(f"case {pred.case_tag}: {pred.radius_law.descriptor}; direction {pred.direction_note}")
        if pred.limit_point is not None:
            lines.append("predicted limit point " + np.array2string(pred.limit_point, precision=6))
    last = res.trajectory.records[-1] if res.trajectory.records else None
    if last is not None:
        lines.append(f"hot spot at t = {last.t:.6g}: " + np.array2string(last.point, precision=6)
                     + f" ({last.kind}, multiplicity {last.multiplicity})")
    if res.fit is not None:
        f = res.fit
        if f.mode == "bounded":
            lines.append("fitted limit " + np.array2string(f.limit, precision=6))
        else:
            lines.append(f"fitted |x| = {f.coefficient:.6g} t^{f.exponent:.6g} (residual {f.residual:.3g})")
    lines.extend(c.line() for c in res.checks)
    lines.append("overall: " + ("PASS" if res.passed else "FAIL"))
    return "\n".join(lines)


def write_classification(prep: Prepared, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "classification.json"
    p.write_text(json.dumps(prep.report(), indent=2, sort_keys=True, default=float))
    return p


def write_profiles(prep: Prepared, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, U in enumerate(prep.profiles):
        F = prof.compute_F(U)
        G = None
        if prep.spec.lambda1 >= 0:
            G = prof.compute_Gamma(prep.spec, U, check=False)
        p = out / f"profile_k{k}.csv"
        prof.export_profile_csv(p, U, F, G)
        paths.append(p)
    return paths


def write_outputs(res: PipelineResult, out_dir=None) -> dict:
    """Write trajectory, comparison, profile and conservation files plus the summary."""
    prep = res.prepared
    sc = prep.scenario
    out = Path(out_dir if out_dir is not None else sc.outputs["directory"])
    out.mkdir(parents=True, exist_ok=True)
    fmts = set(sc.outputs["formats"])
    written = {}
    if "csv" in fmts:
        p = out / "trajectory.csv"
        hs.write_trajectory_csv(p, res.trajectory, prep.prediction)
        written["trajectory"] = p
        p = out / "conservation.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "pairing", "relative_drift"])
            p0 = res.run.state.ledger[0][1]
            for t, v in res.run.state.ledger:
                w.writerow([repr(float(t)), repr(float(v)), repr(float(v / p0 - 1.0))])
        written["conservation"] = p
        written["profiles"] = write_profiles(prep, out)
        with open(out / "summary_checks.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["check", "value", "target", "passed"])
            for c in res.checks:
                w.writerow([c.name, "" if c.value is None else repr(float(c.value)), c.target,
                            "" if c.passed is None else c.passed])
        written["checks"] = out / "summary_checks.csv"
    if "json" in fmts:
        written["classification"] = write_classification(prep, out)
        if prep.prediction is not None:
            p = out / "comparison.json"
            p.write_text(hs.comparison_report(
                prep.prediction, res.trajectory, res.fit, scenario=sc.name, seed=sc.seed,
                checks=[{"name": c.name, "value": c.value, "target": c.target, "passed": c.passed}
                        for c in res.checks]))
            written["comparison"] = p
    p = out / "summary.txt"
    p.write_text(format_summary(res) + "\n")
    written["summary"] = p
    return written
