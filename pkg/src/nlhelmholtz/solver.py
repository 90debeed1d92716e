"""Critical points of the dual energy by nonlinear power iteration."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dual import DualProblem, DualState, duality_map, evaluate_direction
from .errors import (DegenerateDirection, NotConverged, PartialMultiplicity,
                     RecenterUnavailable)
from .grid import Field, GridSpec, torus_displacement

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    tol_crit: float = 1e-6
    max_iter: int = 5000
    recenter_every: int = 25
    deflation_count: int = 1
    seed: int = 0
    restart_count: int = 3
    # weight of the duality-map term added before inversion; 0 is the plain step
    shift: float = 0.0
    recenter_radius: float | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.tol_crit > 0:
            raise ValueError("tol_crit must be positive")
        if self.max_iter < 1 or self.deflation_count < 1 or self.restart_count < 0:
            raise ValueError("max_iter, deflation_count >= 1 and restart_count >= 0 required")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SolutionRecord:
    v_star: Field
    u_star: Field
    J_value: float
    crit_residual: float
    pde_residual_l2: float | None = None
    farfield: object = None
    decay_fit: object = None
    lattice_shift_applied: tuple = ()
    iterations: int = 0
    seed: int = 0
    rayleigh_decreases: list = field(default_factory=list)
    rayleigh_steps: int = 0
    run_levels: list = field(default_factory=list)

    @property
    def monotone_fraction(self) -> float:
        if not self.rayleigh_steps:
            return 1.0
        return 1.0 - len(self.rayleigh_decreases) / self.rayleigh_steps


# ---------------------------------------------------------------- steps

def _power_step(prob: DualProblem, w: np.ndarray, Kw: np.ndarray, shift: float) -> np.ndarray:
    pp, p = prob.p_prime, prob.p
    nw = prob.norm(w, pp)
    if prob.norm(Kw, p) <= 1e-14 * nw:
        raise DegenerateDirection("K_p annihilates the direction")
    z = Kw
    if shift:
        z = Kw + shift * (prob.pair(w, Kw) / nw ** 2) * duality_map(w / nw, pp) * nw
    out = duality_map(z, p)
    return out / prob.norm(out, pp)


def power_step(prob: DualProblem, w: Field, shift: float = 0.0) -> Field:
    """Normalize |K_p w|^{p-2} K_p w to unit L^{p'} norm.

    With ``shift`` > 0 the operator K_p w + shift * rayleigh * |w|^{p'-2} w is
    inverted instead; fixed points are unchanged.
    """
    a = prob._real(w)
    return Field(prob.grid, _power_step(prob, a, prob.K(a), shift), True)


# ---------------------------------------------------------------- recentering

def lattice_points(grid: GridSpec, period_cells: int) -> np.ndarray:
    """Q-period lattice indices in [0, m)^N, lexicographic order."""
    n = grid.points_per_axis
    if period_cells <= 0 or n % period_cells:
        raise RecenterUnavailable("period lattice must divide the torus")
    m = n // period_cells
    ks = np.stack(np.meshgrid(*([np.arange(m)] * grid.dim), indexing="ij"), -1)
    return ks.reshape(-1, grid.dim)


def recenter(w: Field, rho: float, period_cells: int | None, s: float = 4.0 / 3.0):
    """Translate w by a Q-period lattice vector so its heaviest rho-ball sits at the origin.

    Returns (shifted field, shift in lattice units). ``s`` is the exponent of
    the ball mass (p' for dual iterates).
    """
    if not period_cells:
        raise RecenterUnavailable("recentering needs a periodic scenario")
    g = w.grid
    n = g.points_per_axis
    m = n // period_cells
    ks = lattice_points(g, period_cells)
    a = np.abs(w.values) ** s
    # ball mask around the origin node, rolled to each lattice point
    d = torus_displacement(g, [0.0] * g.dim)
    mask = sum(c * c for c in d) <= rho * rho
    idx = np.argwhere(mask) - n // 2
    masses = []
    for k in ks:
        sel = tuple(((idx[:, i] + n // 2 + k[i] * period_cells) % n) for i in range(g.dim))
        masses.append(float(np.sum(a[sel])))
    masses = np.array(masses)
    top = masses.max()
    best = int(np.flatnonzero(masses >= top * (1 - 1e-12))[0])
    k = ks[best]
    out = w.values
    for ax in range(g.dim):
        out = np.roll(out, -int(k[ax]) * period_cells, axis=ax)
    shift = tuple(int(((-kk + m // 2) % m) - m // 2) for kk in k)
    return Field(g, out, w.realness_tag), shift


def _roll(a: np.ndarray, shift, period_cells: int) -> np.ndarray:
    for ax, s in enumerate(shift):
        a = np.roll(a, int(s) * period_cells, axis=ax)
    return a


# ---------------------------------------------------------------- driver

def initial_direction(prob: DualProblem, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(prob.grid.shape) * prob.q
    return w / prob.norm(w, prob.p_prime)


@dataclass
class RunResult:
    state: DualState
    w: np.ndarray
    converged: bool
    shift: tuple
    decreases: list
    steps: int
    seed: int


def run_power_iteration(prob: DualProblem, w: np.ndarray, cfg: SolverConfig, *,
                        seed: int = 0, period_cells: int | None = None,
                        deflate: list | None = None, deflate_steps: int | None = None,
                        start_iter: int = 0,
                        shift0: tuple | None = None,
                        on_iter: Callable | None = None) -> RunResult:
    """Iterate power steps from w until the residual drops below tol_crit.

    Directions in ``deflate`` are projected out (in the K_p form) during the
    first ``deflate_steps`` steps, or throughout when that is None.
    """
    N = prob.grid.dim
    total_shift = np.array(shift0 if shift0 else (0,) * N)
    Kdefl = [(d, prob.K(d)) for d in (deflate or [])]
    w = _deflate(prob, w, Kdefl)
    decreases, prev_ray, steps = [], None, 0
    best = None
    rho = prob.grid.half_width / 4
    it = start_iter
    while True:
        Kw = prob.K(w)
        st = evaluate_direction(prob, w, Kw, it)
        if best is None or st.crit_residual < best[0].crit_residual:
            best = (st, w)
        if prev_ray is not None:
            steps += 1
            if st.rayleigh < prev_ray * (1 - 1e-13):
                decreases.append((it, prev_ray, st.rayleigh))
                log.info("Rayleigh quotient decreased at step %d: %.12g -> %.12g",
                         it, prev_ray, st.rayleigh)
        prev_ray = st.rayleigh
        if on_iter is not None:
            on_iter(it, w, st, tuple(int(x) for x in total_shift))
        if st.crit_residual <= cfg.tol_crit:
            return RunResult(st, w, True, tuple(int(x) for x in total_shift),
                             decreases, steps, seed)
        if it >= start_iter + cfg.max_iter:
            st, w = best
            return RunResult(st, w, False, tuple(int(x) for x in total_shift),
                             decreases, steps, seed)
        w = _power_step(prob, w, Kw, cfg.shift)
        if deflate_steps is None or it - start_iter < deflate_steps:
            w = _deflate(prob, w, Kdefl)
        it += 1
        if period_cells and cfg.recenter_every and it % cfg.recenter_every == 0:
            r = cfg.recenter_radius or rho
            wf, sh = recenter(Field(prob.grid, w, True), r, period_cells, prob.p_prime)
            w = wf.values.real
            total_shift = total_shift + np.array(sh)
            m = prob.grid.points_per_axis // period_cells
            total_shift = (total_shift + m // 2) % m - m // 2


def _deflate(prob, w, Kdefl):
    if not Kdefl:
        return w
    for d, Kd in Kdefl:
        w = w - prob.pair(w, Kd) / prob.pair(d, Kd) * d
    return w / prob.norm(w, prob.p_prime)


def primal_from_dual(prob: DualProblem, v: np.ndarray) -> Field:
    """u = Re R(Q^{1/p} v) on the problem grid."""
    return Field(prob.grid, prob.resolvent_real(prob.q * v), True)


def _record(prob: DualProblem, res: RunResult, levels) -> SolutionRecord:
    from .diagnostics import pde_residual
    v = res.state.v
    u = primal_from_dual(prob, v.values.real)
    rec = SolutionRecord(v, u, res.state.J_value, res.state.crit_residual,
                         lattice_shift_applied=res.shift, iterations=res.state.iteration,
                         seed=res.seed, rayleigh_decreases=res.decreases,
                         rayleigh_steps=res.steps, run_levels=list(levels))
    rec.pde_residual_l2 = pde_residual(prob, u)[0]
    return rec


def solve_mountain_pass(prob: DualProblem, cfg: SolverConfig | None = None, *,
                        initial: Field | None = None, period_cells: int | None = None,
                        on_iter: Callable | None = None, resume: dict | None = None
                        ) -> SolutionRecord:
    """Lowest converged positive level over the seeded run and restart_count restarts.

    ``resume`` (from a checkpoint) supplies run index, iteration, w and the
    best run so far; the remaining runs follow as in an uninterrupted solve.
    """
    cfg = cfg or SolverConfig()
    if prob.scenario_class == "periodic" and period_cells is None:
        log.warning("periodic scenario without a period lattice; recentering disabled")
    runs = 1 + cfg.restart_count
    best, levels, last = None, [], None
    first = 0
    if resume:
        first = resume["run"]
        levels = list(resume.get("levels", []))
        if resume.get("best_w") is not None:
            st = evaluate_direction(prob, resume["best_w"])
            best = RunResult(st, resume["best_w"], True, tuple(resume.get("best_shift", ())),
                             [], 0, resume.get("best_seed", 0))
    for run in range(first, runs):
        seed = cfg.seed + run
        start, shift0 = 0, None
        if resume and run == first:
            w0, start, shift0 = resume["w"], resume["iteration"], resume.get("shift")
        elif run == 0 and initial is not None:
            w0 = prob._real(initial)
            w0 = w0 / prob.norm(w0, prob.p_prime)
        else:
            w0 = initial_direction(prob, seed)
        def hook(it, w, st, sh, _run=run, _levels=levels):
            if on_iter is not None:
                on_iter(_run, it, w, st, sh, _levels, best)
        res = run_power_iteration(prob, w0, cfg, seed=seed, period_cells=period_cells,
                                  start_iter=start, shift0=shift0, on_iter=hook)
        last = res
        if res.converged and res.state.J_value > 0:
            levels.append(res.state.J_value)
            if best is None or res.state.J_value < best.state.J_value * (1 - 1e-12):
                best = res
    if best is None:
        raise NotConverged(f"no run reached crit_residual <= {cfg.tol_crit}", best=last.state)
    return _record(prob, best, levels)


# ---------------------------------------------------------------- multiplicity

def _smooth_bump(grid: GridSpec, center, radius: float) -> np.ndarray:
    d = torus_displacement(grid, center)
    t = np.sqrt(sum(c * c for c in d)) / radius
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1 - t * t, 1.0)), 0.0)
    return out


def bump_directions(prob: DualProblem, m: int, delta: float | None = None):
    """m disjoint bumps of diameter delta/m^2 on a line, neighbours delta/m apart.

    delta defaults to the largest value (halving from the box size) whose
    bump balls are all filled by {Q > 0} on the grid; returns (bumps, delta).
    """
    g = prob.grid
    Q = prob.Q.values.real
    center = [0.0] * g.dim
    if delta is None:
        delta = g.half_width
        while delta > 2 * g.spacing * m * m:
            if _bumps_inside(g, Q, m, delta):
                break
            delta /= 2
    tau = delta / m ** 2
    radius = max(tau / 2, g.spacing)
    sep = delta / m
    offs = (np.arange(m) - (m - 1) / 2) * sep
    bumps = []
    for o in offs:
        c = list(center)
        c[0] = o
        z = _smooth_bump(g, c, radius)
        bumps.append(z / prob.norm(z, prob.p_prime))
    return bumps, delta


def _bumps_inside(g, Q, m, delta) -> bool:
    tau = delta / m ** 2
    radius = max(tau / 2, g.spacing)
    sep = delta / m
    if (m - 1) / 2 * sep + radius > g.half_width:
        return False
    for o in (np.arange(m) - (m - 1) / 2) * sep:
        c = [o] + [0.0] * (g.dim - 1)
        d = torus_displacement(g, c)
        ball = sum(x * x for x in d) <= radius * radius
        if not np.all(Q[ball] > 0):
            return False
    return True


def sign_patterns(m: int):
    """Sign vectors with leading +1, ordered by number of sign changes."""
    pats = [np.array([1] + [1 - 2 * ((k >> j) & 1) for j in range(m - 1)])
            for k in range(2 ** (m - 1))]
    return sorted(pats, key=lambda s: (int(np.sum(s[1:] != s[:-1])), list(-s)))


def solve_multiplicity(prob: DualProblem, cfg: SolverConfig, warmup: int = 10) -> list:
    """Search m distinct critical pairs seeded from bump combinations.

    Each search deflates previously found v_j in the K_p form for its first
    ``warmup`` steps and then iterates freely, so that what it converges to
    is a critical point of J itself and not of its restriction.
    """
    m = cfg.deflation_count
    if m == 1:
        return [solve_mountain_pass(prob, cfg)]
    if prob.scenario_class != "decaying":
        raise ValueError("multiplicity search needs a decaying weight")
    bumps, _ = bump_directions(prob, m)
    found: list[SolutionRecord] = []
    for signs in sign_patterns(m):
        if len(found) == m:
            break
        w0 = sum(s * b for s, b in zip(signs, bumps))
        w0 = w0 / prob.norm(w0, prob.p_prime)
        defl = [rec.v_star.values.real for rec in found]
        res = run_power_iteration(prob, w0, cfg, seed=cfg.seed, deflate=defl,
                                  deflate_steps=warmup)
        if not (res.converged and res.state.J_value > 0):
            log.info("bump seed %s did not converge (residual %.3g)",
                     signs.tolist(), res.state.crit_residual)
            continue
        rec = _record(prob, res, [res.state.J_value])
        if all(distinctness(prob, rec.v_star, o.v_star) > 10 * cfg.tol_crit for o in found):
            found.append(rec)
    found.sort(key=lambda r: r.J_value)
    if len(found) < m:
        raise PartialMultiplicity(f"found {len(found)} of {m} solutions", found)
    return found


def distinctness(prob: DualProblem, a: Field, b: Field) -> float:
    """min over signs of ||a -+ b||_{p'} / ||a||_{p'}."""
    x, y = a.values.real, b.values.real
    pp = prob.p_prime
    return min(prob.norm(x - y, pp), prob.norm(x + y, pp)) / prob.norm(x, pp)
