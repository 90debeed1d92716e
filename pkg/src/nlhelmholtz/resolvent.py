"""Helmholtz resolvent at energy 1: torus multipliers, truncated-kernel free-space
convolution and direct sampled-kernel convolution."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.special import jv

from .errors import GridMismatch, InvalidAbsorption, ScheduleTooAggressive
from .grid import Field, GridSpec, fftn, ifftn, require_real, sphere_area
from .kernel import phi_radial, phi_radial_derivative, sampled_phi

METHODS = ("multiplier", "kernel_convolution")
BOUNDARIES = ("free", "periodic")


def floor_eps(grid: GridSpec) -> float:
    """Smallest admissible absorption on this lattice."""
    return grid.freq_spacing ** 2 / 4.0


@dataclass(frozen=True)
class AbsorptionSchedule:
    eps0: float
    levels: int = 2
    ratio: float = 2.0
    extrapolation_order: int = 1

    def __post_init__(self):
        if not self.eps0 > 0:
            raise InvalidAbsorption("eps0 must be positive")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.ratio != 2.0:
            raise ValueError("only ratio 2 is supported")
        if not 0 <= self.extrapolation_order < self.levels:
            raise ValueError("extrapolation_order must be < levels")

    @property
    def epsilons(self) -> list[float]:
        return [self.eps0 / self.ratio ** j for j in range(self.levels)]

    def weights(self) -> tuple[list[float], list[float]]:
        """Lagrange weights at eps = 0 over the finest order+1 levels."""
        eps = self.epsilons[self.levels - 1 - self.extrapolation_order:]
        w = [math.prod(e / (e - ej) for e in eps if e != ej) for ej in eps]
        return eps, w

    def check(self, grid: GridSpec) -> None:
        lo = floor_eps(grid)
        if self.epsilons[-1] < lo * (1 - 1e-12):
            raise ScheduleTooAggressive(
                f"finest eps {self.epsilons[-1]:.4g} below lattice floor {lo:.4g}")

    def to_dict(self):
        return {"eps0": self.eps0, "levels": self.levels, "ratio": self.ratio,
                "extrapolation_order": self.extrapolation_order}


# ---------------------------------------------------------------- torus

def resolvent_eps_apply(f: Field, eps: float) -> Field:
    """Torus multiplier 1/(|xi|^2 - 1 - i eps)."""
    if not eps > 0:
        raise InvalidAbsorption(f"eps must be positive, got {eps}")
    s2 = f.grid.freq_sq()
    return Field(f.grid, ifftn(fftn(f.values) / (s2 - 1.0 - 1j * eps)))


def torus_symbol(grid: GridSpec, schedule: AbsorptionSchedule) -> np.ndarray:
    """Richardson-combined torus multiplier."""
    schedule.check(grid)
    d = grid.freq_sq() - 1.0
    eps, w = schedule.weights()
    return sum(wj / (d - 1j * e) for wj, e in zip(w, eps))


def spectral_helmholtz(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """(-Delta_spectral - 1) u on the torus."""
    return ifftn((grid.freq_sq() - 1.0) * fftn(u))


# ---------------------------------------------------------------- free space

def _truncated_symbol_3d(s, D, kappa):
    """Fourier transform of 1_{|x|<D} e^{i kappa|x|}/(4 pi|x|) at |xi| = s."""
    s = np.asarray(s, float)
    pos = s > 1e-12
    ss = np.where(pos, s, 1.0)
    sinc = np.where(pos, np.sin(s * D) / ss, D)
    num = 1.0 - np.exp(1j * kappa * D) * (np.cos(s * D) - 1j * kappa * sinc)
    den = s * s - kappa * kappa
    if kappa != 1.0:
        return num / den
    near = np.abs(den) < 1e-9
    out = num / np.where(near, 1.0, den)
    out[near] = (1j * D - 1j * np.exp(1j * D) * np.sin(D)) / 2
    return out


def _truncated_symbol(s, D, N, kappa):
    """Same for general N by Green's identity on the ball B_D."""
    if N == 3:
        return _truncated_symbol_3d(s, D, kappa)
    if N % 2 == 0 and kappa != 1.0:
        raise NotImplementedError("absorbing free-space kernel needs odd dimension")
    s = np.asarray(s, float)
    mu = N / 2 - 1
    c = (2 * math.pi) ** (N / 2)
    t = s * D
    tp = np.where(t > 1e-8, t, 1.0)
    S = np.where(t > 1e-8, c * tp ** (-mu) * jv(mu, tp), sphere_area(N))
    sS1 = np.where(t > 1e-8, -c * s * tp ** (-mu) * jv(mu + 1, tp), 0.0)
    ph, dph = phi_radial(D, N, kappa), phi_radial_derivative(D, N, kappa)
    num = 1.0 + D ** (N - 1) * (dph * S - ph * sS1)
    den = s * s - kappa * kappa
    near = np.abs(den) < 1e-7
    out = num / np.where(near, 1.0, den)
    if np.any(near):
        d = 1e-4
        out[near] = 0.5 * (_truncated_symbol(s[near] + d, D, N, kappa)
                           + _truncated_symbol(s[near] - d, D, N, kappa))
    return out


class FreeSpaceResolvent:
    """Aperiodic (eps-)resolvent from a source box to a concentric target box.

    The kernel is the fundamental solution truncated at a radius D that
    exceeds every source-target distance; its exact Fourier transform is
    sampled on an auxiliary torus large enough that the truncated kernel
    does not alias, then restricted to the needed displacements.
    """

    def __init__(self, source: GridSpec, eps: float = 0.0, target: GridSpec | None = None):
        target = source if target is None else target
        if (target.dim != source.dim or abs(target.spacing - source.spacing) > 1e-12 * source.spacing
                or target.half_width < source.half_width
                or (target.points_per_axis - source.points_per_axis) % 2):
            raise GridMismatch("target must be a concentric enlargement with the same spacing")
        if eps < 0:
            raise InvalidAbsorption("eps must be >= 0")
        self.source, self.target, self.eps = source, target, float(eps)
        N, h = source.dim, source.spacing
        ns, nt = source.points_per_axis, target.points_per_axis
        self.offset = (nt - ns) // 2
        reach = source.half_width + target.half_width
        self.D = math.sqrt(N) * reach + h
        M = sfft.next_fast_len(int(math.ceil((self.D + reach) / h)) + 2)
        kappa = complex(np.sqrt(1 + 1j * self.eps)) if self.eps else 1.0
        k = 2 * math.pi * np.fft.fftfreq(M, d=h)
        ks = np.meshgrid(*([k] * N), indexing="ij", sparse=True)
        s = np.sqrt(sum(c * c for c in ks))
        ker = ifftn(_truncated_symbol(s, self.D, N, kappa))
        del s
        self.P = P = ns + nt
        # displacement index m - offset for m in [-(ns-1), nt-1], stored mod P
        m = np.arange(P)
        m = np.where(m < nt, m, m - P)
        idx = (m - self.offset) % M
        self.khat = fftn(ker[np.ix_(*([idx] * N))])

    def __call__(self, f: np.ndarray) -> np.ndarray:
        ns = self.source.points_per_axis
        pad = np.zeros((self.P,) * self.source.dim, complex)
        pad[(slice(0, ns),) * self.source.dim] = f
        out = ifftn(self.khat * fftn(pad))
        return out[(slice(0, self.target.points_per_axis),) * self.source.dim]


@lru_cache(maxsize=8)
def free_space_operator(source: GridSpec, eps: float = 0.0,
                        target: GridSpec | None = None) -> FreeSpaceResolvent:
    return FreeSpaceResolvent(source, eps, target)


# ---------------------------------------------------------------- operators

def resolvent_operator(grid: GridSpec, schedule: AbsorptionSchedule | None = None,
                       boundary: str = "free", target: GridSpec | None = None
                       ) -> Callable[[np.ndarray], np.ndarray]:
    """Array-level resolvent at energy 1 (complex output).

    ``boundary='periodic'`` combines torus multipliers over the schedule.
    ``boundary='free'`` combines truncated-kernel eps-resolvents over the
    schedule, or uses the eps = 0 truncated kernel when schedule is None.
    """
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}")
    if boundary == "periodic":
        if schedule is None:
            raise InvalidAbsorption("periodic resolvent needs an absorption schedule")
        if target is not None and target != grid:
            raise GridMismatch("periodic resolvent maps a grid to itself")
        sym = torus_symbol(grid, schedule)
        return lambda f: ifftn(sym * fftn(f))
    if schedule is None:
        op = free_space_operator(grid, 0.0, target)
        return op
    schedule.check(grid)
    eps, w = schedule.weights()
    ops = [(wj, free_space_operator(grid, e, target)) for wj, e in zip(w, eps)]
    return lambda f: sum(wj * op(f) for wj, op in ops)


def resolvent_apply(f: Field, schedule: AbsorptionSchedule | None,
                    boundary: str = "free", target: GridSpec | None = None) -> Field:
    """Richardson-extrapolated limit of the eps-resolvents in the schedule."""
    if schedule is not None:
        schedule.check(f.grid)
    op = resolvent_operator(f.grid, schedule, boundary, target)
    return Field(target or f.grid, op(f.values))


@lru_cache(maxsize=4)
def _sampled_kernel_hat(grid: GridSpec) -> np.ndarray:
    return fftn(sampled_phi(grid, 2)) * grid.cell_volume


def kernel_convolve(f: Field) -> Field:
    """Linear convolution with sampled Phi via zero padding to (2n)^N."""
    g = f.grid
    n = g.points_per_axis
    pad = np.zeros((2 * n,) * g.dim, complex)
    pad[(slice(0, n),) * g.dim] = f.values
    out = ifftn(_sampled_kernel_hat(g) * fftn(pad))
    return Field(g, out[(slice(0, n),) * g.dim])


def real_resolvent_apply(f: Field, method: str = "multiplier",
                         schedule: AbsorptionSchedule | None = None,
                         boundary: str = "free") -> Field:
    """Real part of the resolvent; expects a real input."""
    require_real(f)
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    src = Field(f.grid, f.values.real)
    if method == "kernel_convolution":
        out = kernel_convolve(src)
    else:
        out = resolvent_apply(src, schedule, boundary)
    return Field(f.grid, out.values.real, True)


def richardson(values: Sequence[np.ndarray], eps: Sequence[float]) -> np.ndarray:
    """Polynomial extrapolation to eps = 0 of samples at the given eps."""
    w = [math.prod(e / (e - ej) for e in eps if e != ej) for ej in eps]
    return sum(wj * v for wj, v in zip(w, values))
