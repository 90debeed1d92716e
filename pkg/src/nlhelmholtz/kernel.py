"""Helmholtz fundamental solution, its real part and the near-shell split."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ShellUnresolved, SingularPoint
from .grid import Field, GridSpec, ifftn

EULER_GAMMA = 0.5772156649015329

# switchover between ascending series and large-argument expansion
_ASYMPTOTIC_FROM = 12.0

CUTOFF_INNER = 1.0 / 6.0
CUTOFF_OUTER = 1.0 / 4.0


# ---------------------------------------------------------------- Hankel H^(1)

def _hankel_half(l: int, x):
    """H^(1)_{l+1/2}(x) from the terminating spherical Hankel series."""
    x = np.asarray(x, dtype=complex)
    acc = np.zeros_like(x)
    for k in range(l + 1):
        c = math.factorial(l + k) / (math.factorial(k) * math.factorial(l - k))
        acc = acc + c * (1j ** k) / (2 * x) ** k
    h = (-1j) ** (l + 1) * np.exp(1j * x) / x * acc
    return np.sqrt(2 * x / np.pi) * h


def _jy_series(n: int, x):
    """J_n and Y_n for integer n >= 0 by the ascending series."""
    x = np.asarray(x, float)
    half = x / 2
    q = -half * half
    j = np.zeros_like(x)
    ysum = np.zeros_like(x)
    term = half ** n / math.factorial(n)
    hk, hnk = 0.0, sum(1.0 / i for i in range(1, n + 1))
    for k in range(60):
        j = j + term
        ysum = ysum + (2 * EULER_GAMMA - hk - hnk) * term
        term = term * q / ((k + 1) * (n + k + 1))
        hk += 1.0 / (k + 1)
        hnk += 1.0 / (n + k + 1)
    y = (2 / np.pi) * np.log(half) * j + ysum / np.pi
    if n:
        fin = np.zeros_like(x)
        for k in range(n):
            fin = fin + math.factorial(n - k - 1) / math.factorial(k) * half ** (2 * k - n)
        y = y - fin / np.pi
    return j, y


def _hankel_asymptotic(nu: float, x, terms: int = 24):
    """Large-argument expansion sqrt(2/(pi x)) e^{i(x - nu pi/2 - pi/4)} sum a_k (i/2x)^k."""
    x = np.asarray(x, float)
    mu = 4.0 * nu * nu
    s = np.ones_like(x, dtype=complex)
    a = 1.0
    z = 1j / (2 * x)
    zk = np.ones_like(s)
    for k in range(1, terms + 1):
        a = a * (mu - (2 * k - 1) ** 2) / (4.0 * k)
        zk = zk * z
        s = s + a * zk
    return np.sqrt(2 / (np.pi * x)) * np.exp(1j * (x - nu * np.pi / 2 - np.pi / 4)) * s


def hankel1(nu: float, x):
    """Hankel function of the first kind for integer or half-integer order.

    Half-integer orders accept complex arguments (closed form); integer
    orders require real positive arguments.
    """
    two_nu = round(2 * nu)
    if abs(2 * nu - two_nu) > 1e-12 or nu < 0:
        raise ValueError("order must be a nonnegative integer or half-integer")
    if two_nu % 2:
        return _hankel_half((two_nu - 1) // 2, x)
    x = np.asarray(x, float)
    if np.any(x <= 0):
        raise SingularPoint("integer-order Hankel needs x > 0")
    n = two_nu // 2
    out = np.empty(x.shape, complex)
    small = x < _ASYMPTOTIC_FROM
    if np.any(small):
        j, y = _jy_series(n, x[small])
        out[small] = j + 1j * y
    if np.any(~small):
        out[~small] = _hankel_asymptotic(n, x[~small])
    return out


# ---------------------------------------------------------------- Phi, Psi

def _order(N: int) -> float:
    return (N - 2) / 2.0


def phi_radial(r, N: int = 3, kappa: complex = 1.0):
    """Outgoing fundamental solution of -Delta - kappa^2 as a function of r > 0."""
    r = np.asarray(r)
    if np.any(r == 0):
        raise SingularPoint("fundamental solution is singular at the origin")
    if N == 3:
        return np.exp(1j * kappa * r) / (4 * np.pi * r)
    nu = _order(N)
    if kappa == 1.0:
        return 0.25j * (2 * np.pi * r) ** (-nu) * hankel1(nu, r)
    return 0.25j * (kappa / (2 * np.pi * r)) ** nu * hankel1(nu, kappa * r)


def phi_radial_generic(r, N: int = 3):
    """Hankel-function path, also for N = 3 (used to cross-check the closed form)."""
    nu = _order(N)
    r = np.asarray(r, float)
    return 0.25j * (2 * np.pi * r) ** (-nu) * hankel1(nu, r)


def phi_radial_derivative(r, N: int = 3, kappa: complex = 1.0):
    """d/dr of phi_radial, via d/dr[r^-nu H_nu] = -r^-nu H_{nu+1}."""
    r = np.asarray(r)
    if N == 3:
        return np.exp(1j * kappa * r) * (1j * kappa * r - 1) / (4 * np.pi * r * r)
    nu = _order(N)
    return -0.25j * kappa * (kappa / (2 * np.pi * r)) ** nu * hankel1(nu + 1, kappa * r)


def _norm(x) -> float:
    x = np.atleast_1d(np.asarray(x, float))
    return float(np.sqrt(np.sum(x * x)))


def phi_eval(x, N: int | None = None) -> complex:
    """Phi(x) = (i/4)(2 pi |x|)^{(2-N)/2} H^(1)_{(N-2)/2}(|x|)."""
    x = np.atleast_1d(np.asarray(x, float))
    N = len(x) if N is None else N
    r = _norm(x)
    if r == 0:
        raise SingularPoint("x = 0")
    return complex(phi_radial(np.array([r]), N)[0])


def psi_eval(x, N: int | None = None) -> float:
    """Real part of phi_eval."""
    return phi_eval(x, N).real


def singular_coefficient(N: int) -> float:
    """c_N with Phi(x) ~ c_N |x|^{2-N} as x -> 0."""
    return math.gamma(N / 2 - 1) / (4 * math.pi ** (N / 2))


def origin_cell_value(grid: GridSpec) -> float:
    """Mean of c_N|x|^{2-N} over the ball with the volume of one cell."""
    N, h = grid.dim, grid.spacing
    a = (h ** N * math.gamma(N / 2 + 1) / math.pi ** (N / 2)) ** (1.0 / N)
    return singular_coefficient(N) * N * a ** (2 - N) / 2.0


@lru_cache(maxsize=None)
def bound_constant(N: int) -> float:
    """Published C0: sampled max of |Phi| / max(r^{2-N}, r^{(1-N)/2}) times 1.05."""
    r = np.logspace(-6, 6, 24001)
    ratio = np.abs(phi_radial(r, N)) / np.maximum(r ** (2.0 - N), r ** ((1.0 - N) / 2))
    return 1.05 * float(ratio.max())


def sampled_phi(grid: GridSpec, shape_factor: int = 1) -> np.ndarray:
    """Phi on the grid nodes (origin node replaced by the equivalent-ball mean).

    ``shape_factor`` 2 samples the doubled box used for linear convolution,
    in FFT wrap order (index 0 is the origin).
    """
    n = grid.points_per_axis * shape_factor
    h = grid.spacing
    if shape_factor == 1:
        ax = grid.axis()
    else:
        ax = h * np.fft.fftfreq(n, 1.0 / n)
    xs = np.meshgrid(*([ax] * grid.dim), indexing="ij", sparse=True)
    r = np.sqrt(sum(c * c for c in xs))
    zero = r == 0
    out = phi_radial(np.where(zero, 1.0, r), grid.dim)
    out[zero] = origin_cell_value(grid)
    return out


# ---------------------------------------------------------------- split

def _smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.clip(np.asarray(u, float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


def psi_hat(xi_abs):
    """Radial cutoff equal to 1 within 1/6 of the unit shell and 0 beyond 1/4."""
    t = np.abs(np.asarray(xi_abs, float) - 1.0)
    return 1.0 - _smooth_step((t - CUTOFF_INNER) / (CUTOFF_OUTER - CUTOFF_INNER))


def phi2_symbol(xi_abs):
    """(1 - psi_hat)/(|xi|^2 - 1); identically zero near the shell."""
    s = np.asarray(xi_abs, float)
    w = 1.0 - psi_hat(s)
    den = s * s - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(w > 0, w / np.where(w > 0, den, 1.0), 0.0)
    return out


@dataclass
class KernelSplit:
    grid: GridSpec
    phi1: Field
    phi2: Field
    cutoff_inner: float = CUTOFF_INNER
    cutoff_outer: float = CUTOFF_OUTER

    def psi_hat(self, xi_abs):
        return psi_hat(xi_abs)

    def phi1_decay_constant(self) -> float:
        """max |Phi_1| (1+|x|)^{(N-1)/2} over the grid."""
        r = self.grid.radius()
        return float(np.max(np.abs(self.phi1.values) * (1 + r) ** ((self.grid.dim - 1) / 2)))

    def phi2_decay_constant(self, r_min: float = 2.0) -> float:
        """max |Phi_2| |x|^N over r_min <= |x| <= L/2."""
        r = self.grid.radius()
        m = (r >= r_min) & (r <= self.grid.half_width / 2)
        return float(np.max(np.abs(self.phi2.values[m]) * r[m] ** self.grid.dim))

    def descriptor(self) -> dict:
        return {"profile": "exp(-1/u) smooth step in ||xi|-1|",
                "cutoff_inner": self.cutoff_inner, "cutoff_outer": self.cutoff_outer,
                "grid": self.grid.to_dict()}


def kernel_split(grid: GridSpec) -> KernelSplit:
    """Phi_2 from its regular symbol on the torus, Phi_1 = sampled Phi - Phi_2."""
    if grid.freq_spacing > 1.0 / 12.0:
        raise ShellUnresolved(
            f"frequency spacing {grid.freq_spacing:.4g} > 1/12; need L >= 12 pi")
    s = np.sqrt(grid.freq_sq())
    m = phi2_symbol(s)
    phi2 = np.fft.fftshift(ifftn(m)) / grid.cell_volume
    phi = sampled_phi(grid)
    return KernelSplit(grid, Field(grid, phi - phi2), Field(grid, phi2))
