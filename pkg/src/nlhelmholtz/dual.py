"""Dual operator K_p, dual energy J, its gradient and ray maximization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (ExpectedRealField, GridMismatch, InvalidExponent, InvalidProblem,
                     NonpositiveQuadraticForm)
from .grid import Field, GridSpec, _lp
from .resolvent import (AbsorptionSchedule, METHODS, kernel_convolve, resolvent_operator)


def admissible_window(N: int) -> tuple[float, float]:
    """(2(N+1)/(N-1), 2N/(N-2))."""
    return 2.0 * (N + 1) / (N - 1), 2.0 * N / (N - 2)


def check_exponent(p: float, N: int, scenario_class: str) -> None:
    lo, hi = admissible_window(N)
    if scenario_class == "periodic":
        ok = lo < p < hi
    elif scenario_class == "decaying":
        ok = lo <= p < hi
    else:
        raise InvalidProblem(f"unknown scenario class {scenario_class!r}")
    if not ok:
        raise InvalidExponent(
            f"p = {p} outside the {scenario_class} window ({lo:.4g}, {hi:.4g})")


def duality_map(a: np.ndarray, s: float) -> np.ndarray:
    """|a|^{s-2} a with the value 0 at a = 0."""
    return np.sign(a) * np.abs(a) ** (s - 1.0)


class DualProblem:
    """Weight Q, exponent p and the resolvent that together define K_p and J."""

    def __init__(self, Q: Field, p: float, schedule: AbsorptionSchedule | None = None,
                 method: str = "multiplier", scenario_class: str = "decaying",
                 boundary: str | None = None, check_window: bool = True):
        if not Q.is_real():
            raise InvalidProblem("Q must be real")
        q = Q.values.real
        if np.any(q < 0):
            raise InvalidProblem("Q must be nonnegative")
        if not q.max() > 0:
            raise InvalidProblem("Q must not vanish identically")
        if check_window:
            check_exponent(p, Q.grid.dim, scenario_class)
        if method not in METHODS:
            raise InvalidProblem(f"method must be one of {METHODS}")
        self.Q = Field(Q.grid, q, True)
        self.p = float(p)
        self.p_prime = self.p / (self.p - 1.0)
        if not 1 < self.p_prime < 2:
            raise InvalidExponent("need 1 < p' < 2")
        self.schedule = schedule
        self.method = method
        self.scenario_class = scenario_class
        self.boundary = boundary or ("periodic" if scenario_class == "periodic" else "free")
        self.q = q ** (1.0 / self.p)
        if method == "kernel_convolution":
            g = self.grid
            self._R = lambda f: kernel_convolve(Field(g, f)).values
        else:
            self._R = resolvent_operator(self.grid, schedule, self.boundary)

    @property
    def grid(self) -> GridSpec:
        return self.Q.grid

    @property
    def dv(self) -> float:
        return self.grid.cell_volume

    # array-level kernels; inputs and outputs are real ndarrays
    def K(self, v: np.ndarray) -> np.ndarray:
        return self.q * self._R(self.q * v).real

    def resolvent_real(self, f: np.ndarray) -> np.ndarray:
        return self._R(f).real

    def norm(self, v: np.ndarray, s: float) -> float:
        return _lp(v, s, self.dv)

    def pair(self, a: np.ndarray, b: np.ndarray) -> float:
        return self.dv * float(np.vdot(a.ravel(), b.ravel()).real)

    def _real(self, v: Field) -> np.ndarray:
        if v.grid != self.grid:
            raise GridMismatch("field grid differs from problem grid")
        if not v.is_real():
            raise ExpectedRealField("dual iterates must be real")
        return v.values.real


def kp_apply(prob: DualProblem, v: Field) -> Field:
    """Q^{1/p} Re R(Q^{1/p} v)."""
    return Field(prob.grid, prob.K(prob._real(v)), True)


def j_eval(prob: DualProblem, v: Field) -> float:
    a = prob._real(v)
    pp = prob.p_prime
    return prob.norm(a, pp) ** pp / pp - 0.5 * prob.pair(a, prob.K(a))


def j_grad(prob: DualProblem, v: Field) -> Field:
    a = prob._real(v)
    return Field(prob.grid, duality_map(a, prob.p_prime) - prob.K(a), True)


def _nehari(norm_pp: float, quad: float, pp: float) -> float:
    if not quad > 0:
        raise NonpositiveQuadraticForm(f"<w, K_p w> = {quad:.3e} is not positive")
    return (norm_pp / quad) ** (1.0 / (2.0 - pp))


def nehari_scale(prob: DualProblem, w: Field) -> float:
    """Maximizer t* of t -> J(t w)."""
    a = prob._real(w)
    pp = prob.p_prime
    return _nehari(prob.norm(a, pp) ** pp, prob.pair(a, prob.K(a)), pp)


@dataclass
class DualState:
    v: Field
    J_value: float
    rayleigh: float
    crit_residual: float
    iteration: int = 0


def evaluate_direction(prob: DualProblem, w: np.ndarray, Kw: np.ndarray | None = None,
                       iteration: int = 0) -> DualState:
    """Scale w onto its ray maximum and measure the critical-equation residual.

    Directions with a nonpositive quadratic form get an infinite residual and
    are returned unscaled.
    """
    pp, p = prob.p_prime, prob.p
    if Kw is None:
        Kw = prob.K(w)
    nw = prob.norm(w, pp)
    quad = prob.pair(w, Kw)
    ray = quad / nw ** 2 if nw > 0 else 0.0
    if not quad > 0:
        return DualState(Field(prob.grid, w, True), float("nan"), ray, float("inf"), iteration)
    t = _nehari(nw ** pp, quad, pp)
    v, Kv = t * w, t * Kw
    res = prob.norm(v - duality_map(Kv, p), pp) / prob.norm(v, pp)
    J = prob.norm(v, pp) ** pp / pp - 0.5 * prob.pair(v, Kv)
    return DualState(Field(prob.grid, v, True), J, ray, res, iteration)
