"""Scenario files: validation, weight construction and problem assembly."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .checkpoint import config_hash
from .dual import DualProblem, admissible_window
from .errors import NLHelmholtzError, ScenarioError
from .grid import Field, GridSpec, load_field
from .resolvent import METHODS, AbsorptionSchedule
from .solver import SolverConfig

TOP_KEYS = {"name", "dim", "grid", "p", "scenario_class", "Q", "resolvent", "solver",
            "farfield", "extended_half_width", "ladders", "seed", "assertions"}
REQUIRED = ("name", "dim", "grid", "p", "scenario_class", "Q")
Q_TYPES = ("gaussian", "periodic_cosine", "indicator_ball", "file")
SOLVER_KEYS = set(SolverConfig.__dataclass_fields__)
ASSERT_KEYS = {"crit_residual", "critical_identity", "pde_residual", "decay_exponent",
               "monotone_slack", "levels_increasing"}


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _find_k(obj, path="") -> list:
    out = []
    if isinstance(obj, dict):
        for key, val in obj.items():
            if key == "k":
                out.append(f"{path}k: the wavenumber is fixed to 1; rescale x by k to "
                           f"reduce -Delta u - k^2 u to the k = 1 equation")
            out += _find_k(val, f"{path}{key}.")
    return out


def _check_Q(spec, N, L, errors, base_dir):
    if not isinstance(spec, dict) or spec.get("type") not in Q_TYPES:
        errors.append(f"Q.type must be one of {Q_TYPES}")
        return
    t = spec["type"]
    if t == "gaussian":
        a, s = spec.get("amplitude"), spec.get("sigma")
        c = spec.get("center", [0.0] * N)
        if not _num(a):
            errors.append("Q.amplitude must be a number")
        elif a < 0:
            errors.append("Q must be nonnegative")
        if not (_num(s) and s > 0):
            errors.append("Q.sigma must be positive")
        if not (isinstance(c, list) and len(c) == N and all(_num(x) for x in c)):
            errors.append(f"Q.center must be a list of {N} numbers")
    elif t == "indicator_ball":
        a, r = spec.get("amplitude"), spec.get("radius")
        if not _num(a):
            errors.append("Q.amplitude must be a number")
        elif a < 0:
            errors.append("Q must be nonnegative")
        if not (_num(r) and r > 0):
            errors.append("Q.radius must be positive")
    elif t == "periodic_cosine":
        base, T, terms = spec.get("base"), spec.get("period"), spec.get("terms")
        if not _num(base):
            errors.append("Q.base must be a number")
        if not (_num(T) and T > 0):
            errors.append("Q.period must be positive")
        if not (isinstance(terms, list) and terms):
            errors.append("Q.terms must be a nonempty list")
            return
        amp = 0.0
        for j, term in enumerate(terms):
            a, k = term.get("amplitude") if isinstance(term, dict) else None, \
                term.get("wave_vector") if isinstance(term, dict) else None
            if not _num(a):
                errors.append(f"Q.terms[{j}].amplitude must be a number")
            else:
                amp += abs(a)
            if not (isinstance(k, list) and len(k) == N and all(_int(x) for x in k)):
                errors.append(f"Q.terms[{j}].wave_vector must be {N} integers "
                              f"(units of 2 pi / period)")
        if _num(base) and base < amp:
            errors.append("Q must be nonnegative: periodic_cosine base must be at least "
                          "the sum of |amplitudes|")
        if _num(T) and T > 0 and _num(L):
            cells = 2 * L / T
            if abs(cells - round(cells)) > 1e-9 or round(cells) < 1:
                errors.append("Q.period must divide the box length 2L")
    elif t == "file":
        p = spec.get("path")
        if not isinstance(p, str):
            errors.append("Q.path must be a string")
        elif not (Path(base_dir) / p).exists():
            errors.append(f"Q.path {p!r} does not exist")


def validate(doc: dict, base_dir=".") -> list:
    """Every problem with a scenario document, as a list of messages."""
    if not isinstance(doc, dict):
        return ["scenario must be a JSON object"]
    errors = _find_k(doc)
    for key in sorted(set(doc) - TOP_KEYS - {"k"}):
        errors.append(f"unknown field {key!r}")
    for key in REQUIRED:
        if key not in doc:
            errors.append(f"missing field {key!r}")
    N = doc.get("dim")
    if not (_int(N) and N >= 3):
        errors.append("dim must be an integer >= 3")
        N = None
    gd = doc.get("grid", {})
    L = n = None
    if not isinstance(gd, dict):
        errors.append("grid must be an object")
    else:
        L, n = gd.get("half_width"), gd.get("points")
        if not (_num(L) and L > 0):
            errors.append("grid.half_width must be positive")
            L = None
        if not (_int(n) and n >= 4 and n % 2 == 0):
            errors.append("grid.points must be an even integer >= 4")
            n = None
    cls = doc.get("scenario_class")
    if cls not in ("decaying", "periodic"):
        errors.append("scenario_class must be 'decaying' or 'periodic'")
    p = doc.get("p")
    if not _num(p):
        errors.append("p must be a number")
    elif N is not None and cls in ("decaying", "periodic"):
        lo, hi = admissible_window(N)
        ok = (lo < p < hi) if cls == "periodic" else (lo <= p < hi)
        if not ok:
            errors.append(f"p = {p} outside the {cls} window with endpoints "
                          f"{lo:.4g} and {hi:.4g}")
    if N is not None and "Q" in doc:
        _check_Q(doc["Q"], N, L, errors, base_dir)
        qt = doc["Q"].get("type") if isinstance(doc["Q"], dict) else None
        if cls == "periodic" and qt not in ("periodic_cosine", None):
            errors.append("periodic scenarios need a periodic_cosine weight")
        if cls == "decaying" and qt == "periodic_cosine":
            errors.append("decaying scenarios need a weight that vanishes at infinity")
        if (cls == "periodic" and qt == "periodic_cosine" and n and L
                and _num(doc["Q"].get("period")) and doc["Q"]["period"] > 0):
            cells = round(2 * L / doc["Q"]["period"])
            if cells >= 1 and n % cells:
                errors.append("the Q period lattice must divide the grid")
    res = doc.get("resolvent", {})
    if not isinstance(res, dict):
        errors.append("resolvent must be an object")
    else:
        for key in sorted(set(res) - {"boundary", "method", "schedule"}):
            errors.append(f"unknown field resolvent.{key}")
        if res.get("method", "multiplier") not in METHODS:
            errors.append(f"resolvent.method must be one of {METHODS}")
        b = res.get("boundary")
        if b is not None and b not in ("free", "periodic"):
            errors.append("resolvent.boundary must be 'free' or 'periodic'")
        sch = res.get("schedule")
        if sch is not None:
            try:
                s = AbsorptionSchedule(**sch)
                if L and n:
                    s.check(GridSpec(N or 3, L, n))
            except (TypeError, ValueError) as exc:
                errors.append(f"resolvent.schedule: {exc}")
        elif cls == "periodic":
            errors.append("periodic scenarios need resolvent.schedule")
    sv = doc.get("solver", {})
    if not isinstance(sv, dict):
        errors.append("solver must be an object")
    else:
        for key in sorted(set(sv) - SOLVER_KEYS):
            errors.append(f"unknown field solver.{key}")
        try:
            SolverConfig(**{k: v for k, v in sv.items() if k in SOLVER_KEYS})
        except (TypeError, ValueError) as exc:
            errors.append(f"solver: {exc}")
    ff = doc.get("farfield")
    if ff is not None and not (isinstance(ff, dict) and _int(ff.get("mesh_order", 3))
                               and ff.get("mesh_order", 3) >= 1):
        errors.append("farfield.mesh_order must be a positive integer")
    Le = doc.get("extended_half_width")
    if Le is not None and not (_num(Le) and L and Le >= L):
        errors.append("extended_half_width must be a number >= grid.half_width")
    lad = doc.get("ladders", {})
    if not isinstance(lad, dict):
        errors.append("ladders must be an object")
    else:
        box = Le or L
        for key in sorted(set(lad) - {"farfield", "decay_window"}):
            errors.append(f"unknown field ladders.{key}")
        rr = lad.get("farfield")
        if rr is not None:
            if not (isinstance(rr, list) and rr and all(_num(x) and x > 0 for x in rr)):
                errors.append("ladders.farfield must be a list of positive radii")
            elif box and max(rr) > box / 2 + 1e-12:
                errors.append(f"ladders.farfield radii must not exceed half the box "
                              f"({box / 2})")
        dw = lad.get("decay_window")
        if dw is not None:
            if not (isinstance(dw, list) and len(dw) == 2 and all(_num(x) for x in dw)
                    and 1 <= dw[0] < dw[1]):
                errors.append("ladders.decay_window must be [r_min, r_max] with 1 <= r_min < r_max")
            elif box and dw[1] > box / 2 + 1e-12:
                errors.append(f"ladders.decay_window must end by half the box ({box / 2})")
    sd = doc.get("seed", 0)
    if not _int(sd):
        errors.append("seed must be an integer")
    asr = doc.get("assertions", {})
    if not isinstance(asr, dict):
        errors.append("assertions must be an object")
    else:
        for key in sorted(set(asr) - ASSERT_KEYS):
            errors.append(f"unknown field assertions.{key}")
    return errors


def _Q_values(spec: dict, grid: GridSpec, base_dir) -> np.ndarray:
    t = spec["type"]
    X = grid.coords()
    if t == "gaussian":
        c = spec.get("center", [0.0] * grid.dim)
        r2 = sum((x - ci) ** 2 for x, ci in zip(X, c))
        return spec["amplitude"] * np.exp(-r2 / (2 * spec["sigma"] ** 2))
    if t == "indicator_ball":
        return np.where(grid.radius() <= spec["radius"], float(spec["amplitude"]), 0.0)
    if t == "periodic_cosine":
        k0 = 2 * math.pi / spec["period"]
        out = np.full(grid.shape, float(spec["base"]))
        for term in spec["terms"]:
            out = out + term["amplitude"] * np.cos(sum(k0 * kj * x for kj, x in
                                                       zip(term["wave_vector"], X)))
        return out
    path = Path(base_dir) / spec["path"]
    if path.suffix == ".npy":
        a = np.load(path)
        if a.shape != grid.shape:
            raise ScenarioError([f"Q file shape {a.shape} does not match grid {grid.shape}"])
        return a
    f = load_field(path)
    if f.grid != grid:
        raise ScenarioError(["Q file grid does not match the scenario grid"])
    return f.values.real


@dataclass
class Scenario:
    doc: dict
    base_dir: str = "."

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        if not path.exists() and path.parent == Path(".") and bundled(path.name).exists():
            path = bundled(path.name)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError([f"cannot read scenario {path}: {exc}"]) from exc
        return cls.from_dict(doc, path.parent)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "Scenario":
        errors = validate(doc, base_dir)
        if errors:
            raise ScenarioError(errors)
        return cls(copy.deepcopy(doc), str(base_dir))

    @property
    def name(self) -> str:
        return self.doc["name"]

    @property
    def hash(self) -> str:
        return config_hash(self.doc)

    @property
    def grid(self) -> GridSpec:
        g = self.doc["grid"]
        return GridSpec(self.doc["dim"], float(g["half_width"]), g["points"])

    @property
    def extended_grid(self) -> GridSpec | None:
        Le = self.doc.get("extended_half_width")
        if Le is None or self.boundary == "periodic":
            return None
        return self.grid.with_points(float(Le))

    @property
    def boundary(self) -> str:
        r = self.doc.get("resolvent", {})
        default = "periodic" if self.doc["scenario_class"] == "periodic" else "free"
        return r.get("boundary") or default

    @property
    def schedule(self) -> AbsorptionSchedule | None:
        s = self.doc.get("resolvent", {}).get("schedule")
        return AbsorptionSchedule(**s) if s else None

    @property
    def solver_config(self) -> SolverConfig:
        sv = dict(self.doc.get("solver", {}))
        sv.setdefault("seed", self.doc.get("seed", 0))
        return SolverConfig(**sv)

    @property
    def period_cells(self) -> int | None:
        Q = self.doc["Q"]
        if self.doc["scenario_class"] != "periodic":
            return None
        cells = round(2 * self.grid.half_width / Q["period"])
        return self.grid.points_per_axis // cells

    @property
    def assertions(self) -> dict:
        return dict(self.doc.get("assertions", {}))

    def problem(self) -> DualProblem:
        g = self.grid
        try:
            Q = Field.real(g, _Q_values(self.doc["Q"], g, self.base_dir))
            return DualProblem(Q, float(self.doc["p"]), self.schedule,
                               self.doc.get("resolvent", {}).get("method", "multiplier"),
                               self.doc["scenario_class"], self.boundary)
        except NLHelmholtzError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError([str(exc)]) from exc


def bundled(name: str) -> Path:
    """Path of a scenario file shipped with the package (".json" may be omitted)."""
    if not name.endswith(".json"):
        name += ".json"
    ref = resources.files("nlhelmholtz") / "scenarios" / name
    return Path(str(ref))
