"""Empirical checks: norm-bound ratios, truncated-kernel decay, concentration,
nonvanishing surrogate and PDE residuals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadSpectrum, BadWindow, EmptyFamily, InvalidExponent, ZeroInput
from .farfield import SlopeFit, embed, fit_power_law, plateau_window
from .grid import Field, GridSpec, _lp, ball_integral, fftn, ifftn, lp_norm
from .kernel import KernelSplit, kernel_split
from .resolvent import AbsorptionSchedule, resolvent_apply, spectral_helmholtz


@dataclass
class RatioReport:
    family_id: str
    ratios: np.ndarray
    median: float = field(init=False)
    max: float = field(init=False)

    def __post_init__(self):
        self.ratios = np.asarray(self.ratios, float)
        self.median = float(np.median(self.ratios))
        self.max = float(self.ratios.max())

    @property
    def spread(self) -> float:
        return self.max / self.median


# ---------------------------------------------------------------- concentration

def _ball_offsets(grid: GridSpec, rho: float) -> np.ndarray:
    k = int(math.floor(rho / grid.spacing))
    ax = np.arange(-k, k + 1)
    offs = np.stack(np.meshgrid(*([ax] * grid.dim), indexing="ij"), -1).reshape(-1, grid.dim)
    return offs[np.sum((offs * grid.spacing) ** 2, 1) <= rho * rho]


def ball_sums(v: Field, rho: float, power: float) -> np.ndarray:
    """h^N sum of |v|^power over the torus ball around every node.

    Accumulated over a fixed offset order, so lattice translates of v give
    exactly translated sums.
    """
    if rho > v.grid.half_width:
        from .errors import RadiusExceedsBox
        raise RadiusExceedsBox("rho exceeds L")
    a = np.abs(v.values) ** power
    acc = np.zeros_like(a)
    for off in _ball_offsets(v.grid, rho):
        acc += np.roll(a, tuple(-off), axis=tuple(range(v.grid.dim)))
    return acc * v.grid.cell_volume


def concentration(v: Field, rho: float, power: float) -> float:
    """sup_y of the |v|^power mass in B_rho(y), y over grid nodes."""
    if rho > v.grid.half_width / 2:
        from .errors import RadiusExceedsBox
        raise RadiusExceedsBox("rho must not exceed L/2")
    return float(ball_sums(v, rho, power).max())


def nonvanishing_probe(prob, family, rhos=(1.0, 2.0, 4.0), probe_rho: float = 2.0) -> dict:
    """Pairing |<v, Re R v>| and concentration for each unit member.

    Check: members whose pairing is at least the family's 75th percentile
    all have concentration at probe_rho above the family's 10th percentile.
    """
    family = list(family)
    if not family:
        raise EmptyFamily("family is empty")
    pp = prob.p_prime
    pair, conc = [], []
    for v in family:
        a = v.values.real
        pair.append(abs(prob.pair(a, prob.resolvent_real(a))))
        conc.append([concentration(v, r, pp) for r in rhos])
    pair, conc = np.array(pair), np.array(conc)
    j = list(rhos).index(probe_rho)
    top = pair >= np.percentile(pair, 75)
    floor = float(np.percentile(conc[:, j], 10))
    ok = bool(np.min(conc[top, j]) > floor) if top.any() else False
    return {"pairing": pair, "concentration": conc, "rhos": tuple(rhos),
            "top_min_concentration": float(np.min(conc[top, j])),
            "concentration_p10": floor, "passed": ok}


# ---------------------------------------------------------------- truncated kernel

def annulus_energy_fraction(f: Field, half_width: float = 0.5) -> float:
    """Share of spectral L2 energy outside ||xi| - 1| <= half_width."""
    F = np.abs(fftn(f.values)) ** 2
    s = np.sqrt(f.grid.freq_sq())
    out = float(F[np.abs(s - 1) > half_width].sum())
    tot = float(F.sum())
    return out / tot if tot > 0 else 0.0


def band_limited_field(grid: GridSpec, seed: int = 0, envelope: float | None = None,
                       inner: float = 0.6, outer: float = 1.4) -> Field:
    """White noise times a Gaussian envelope, filtered to a smooth annulus in |xi|."""
    from .kernel import _smooth_step
    rng = np.random.default_rng(seed)
    env = envelope or grid.half_width / 16
    w = rng.standard_normal(grid.shape) * np.exp(-grid.radius() ** 2 / (2 * env * env))
    s = np.sqrt(grid.freq_sq())
    t = np.abs(s - 1.0)
    a, b = (outer - inner) / 4, (outer - inner) / 2      # flat to a, zero from b
    mask = 1.0 - _smooth_step((t - a) / (b - a))
    f = ifftn(mask * fftn(w)).real
    return Field(grid, f / lp_norm(Field(grid, f), 2), True)


def truncated_kernel_slope(p: float, R_ladder, f: Field, split: KernelSplit | None = None,
                           spectrum_tol: float = 1e-10) -> SlopeFit:
    """Fit log ||(1_{|x|>=R} Phi_1) * f||_p against log R."""
    g = f.grid
    N = g.dim
    if not p > 2 * (N + 1) / (N - 1):
        raise InvalidExponent(f"need p > {2 * (N + 1) / (N - 1)}, got {p}")
    R = np.asarray(R_ladder, float)
    if R.min() < 2 or R.max() > g.half_width / 4 + 1e-12:
        raise BadWindow(f"ladder must lie in [2, L/4 = {g.half_width / 4}]")
    if annulus_energy_fraction(f) > spectrum_tol:
        raise BadSpectrum("f is not band-limited to ||xi| - 1| <= 1/2")
    split = split or kernel_split(g)
    n = g.points_per_axis
    P = 2 * n
    pad = np.zeros((P,) * N, complex)
    pad[(slice(0, n),) * N] = f.values
    F = fftn(pad)
    del pad
    r = g.radius()
    d = (np.arange(n) - n // 2) % P
    norms = []
    for Rk in R:
        K = np.zeros((P,) * N, complex)
        K[np.ix_(*([d] * N))] = np.where(r >= Rk, split.phi1.values, 0)
        out = ifftn(fftn(K) * F)[(slice(0, n),) * N] * g.cell_volume
        del K
        norms.append(_lp(out, p, g.cell_volume))
    return fit_power_law(R, np.array(norms), (float(R.min()), float(R.max())), min_points=3)


# ---------------------------------------------------------------- ratios

def resolvent_ratio(f: Field, p: float, schedule: AbsorptionSchedule | None = None,
                    boundary: str = "free") -> float:
    """||R f||_p / ||f||_{p'}."""
    nf = lp_norm(f, p / (p - 1))
    if nf == 0:
        raise ZeroInput("f = 0")
    return lp_norm(resolvent_apply(f, schedule, boundary), p) / nf


def bigR_ratio(f: Field, R_ladder, p: float, schedule: AbsorptionSchedule | None = None,
               boundary: str = "free") -> float:
    """max over R of (1/R) int_{B_R} |R f|^2 divided by ||f||_{p'}^2."""
    nf = lp_norm(f, p / (p - 1))
    if nf == 0:
        raise ZeroInput("f = 0")
    R = np.asarray(R_ladder, float)
    if R.min() < 1 or R.max() > f.grid.half_width / 2 + 1e-12:
        raise BadWindow("ladder must lie in [1, L/2]")
    u = resolvent_apply(f, schedule, boundary)
    vals = [ball_integral(u, [0.0] * f.grid.dim, Rk, 2) / Rk for Rk in R]
    return max(vals) / nf ** 2


def ratio_family(fields, fn, family_id: str = "family") -> RatioReport:
    return RatioReport(family_id, [fn(f) for f in fields])


# ---------------------------------------------------------------- residuals

def helmholtz_residual(u: Field, f: Field) -> Field:
    """(-Delta_spectral - 1) u - f on the torus."""
    return Field(u.grid, spectral_helmholtz(u.values, u.grid) - f.values)


def pde_residual(prob, u: Field, plateau: float | None = None) -> tuple[float, float]:
    """Relative L2 and max residual of -Delta u - u = Q|u|^{p-2}u.

    Periodic problems use the torus Laplacian directly.  For free-space
    problems u is not periodic, so it is multiplied by a smooth window that
    equals 1 on the cube of half width ``plateau`` and the residual is
    measured there; u may live on a concentric enlargement of the problem
    grid (Q is extended by zero).  The default plateau is L/3 on the problem
    grid and min(L_problem, L/2) on an enlargement.
    """
    g = u.grid
    uu = u.values.real
    Q = embed(prob.Q.values.real, prob.grid, g)
    rhs = Q * np.abs(uu) ** (prob.p - 2) * uu
    if prob.boundary == "periodic":
        r = spectral_helmholtz(uu, g).real - rhs
        mask = np.ones(g.shape, bool)
    else:
        if plateau is None:
            plateau = (g.half_width / 3 if g == prob.grid
                       else min(prob.grid.half_width, g.half_width / 2))
        a = plateau
        r = spectral_helmholtz(uu * plateau_window(g, a), g).real - rhs
        mask = np.ones(g.shape, bool)
        for ax, c in enumerate(g.coords()):
            mask = mask & (np.abs(c) <= a)
    den2 = float(np.linalg.norm(rhs[mask]))
    denm = float(np.abs(rhs[mask]).max())
    if den2 == 0:
        return 0.0, 0.0
    return float(np.linalg.norm(r[mask])) / den2, float(np.abs(r[mask]).max()) / denm
