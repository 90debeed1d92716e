"""Far-field coefficients, the averaged far-field relation, radiation and decay fits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import BadWindow, ExpectedRealField, RadiusExceedsBox, WindowTooNarrow
from .grid import Field, GridSpec, SphereMesh, fftn, ifftn
from .kernel import phi_radial
from .resolvent import kernel_convolve


@dataclass
class FarFieldPattern:
    mesh: SphereMesh
    g: np.ndarray

    def reality_defect(self) -> float:
        """max |g(-xi) + conj g(xi)| relative to max |g|."""
        d = np.abs(self.g[self.mesh.antipode] + np.conj(self.g))
        scale = max(float(np.abs(self.g).max()), 1e-300)
        return float(d.max()) / scale

    def at(self, directions) -> np.ndarray:
        return self.mesh.interpolate(self.g, directions)

    def to_csv(self, path) -> None:
        N = self.mesh.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"xi{k + 1}" for k in range(N)] + ["re_g", "im_g", "weight"])
            for d, gv, wt in zip(self.mesh.directions, self.g, self.mesh.weights):
                w.writerow([repr(float(c)) for c in d]
                           + [repr(float(gv.real)), repr(float(gv.imag)), repr(float(wt))])


@dataclass
class SlopeFit:
    exponent: float
    amplitude: float
    r_window: tuple
    goodness: float
    radii: np.ndarray | None = None
    values: np.ndarray | None = None


def fourier_sum(f: np.ndarray, grid: GridSpec, xi: np.ndarray) -> np.ndarray:
    """(2 pi)^{-N/2} h^N sum_x f(x) e^{-i x.xi} at arbitrary frequencies xi (M, N)."""
    N = grid.dim
    ax = grid.axis()
    xi = np.atleast_2d(xi)
    out = np.empty(len(xi), complex)
    nz = np.nonzero(np.abs(f) > 0)
    if len(nz[0]) < f.size // 8:
        # sparse source: sum over its support only
        vals = f[nz]
        X = np.stack([ax[i] for i in nz], 1)
        for a in range(0, len(xi), 256):
            out[a:a + 256] = np.exp(-1j * xi[a:a + 256] @ X.T) @ vals
    else:
        for a in range(0, len(xi), 64):
            blk = xi[a:a + 64]
            acc = f
            # contract the last axis first, keeping the direction index in front
            E = np.exp(-1j * blk[:, N - 1, None] * ax[None, :])
            acc = np.tensordot(acc, E, axes=([N - 1], [1]))          # (..., m)
            acc = np.moveaxis(acc, -1, 0)                                 # (m, ...)
            for k in range(N - 2, -1, -1):
                E = np.exp(-1j * blk[:, k, None] * ax[None, :])
                acc = np.einsum("m...i,mi->m...", acc, E)
            out[a:a + 64] = acc
    return (2 * math.pi) ** (-N / 2) * grid.cell_volume * out


def farfield_constant(N: int) -> complex:
    return -0.25j * (2 * math.pi) ** ((2 - N) / 2)


def compute_farfield(prob, u: Field | None, mesh: SphereMesh, *,
                     source: Field | None = None) -> FarFieldPattern:
    """g(xi) = -(i/4)(2 pi)^{(2-N)/2} F(Q|u|^{p-2}u)(xi) by direct summation.

    ``source`` injects f directly (then prob and u may be None).
    """
    if source is not None:
        f, grid = source.values, source.grid
    else:
        if not u.is_real():
            raise ExpectedRealField("u must be real")
        grid = prob.grid
        uu = restrict(u, grid).values.real
        f = prob.Q.values.real * np.abs(uu) ** (prob.p - 2) * uu
    g = farfield_constant(grid.dim) * fourier_sum(f, grid, mesh.directions)
    return FarFieldPattern(mesh, g)


def restrict(u: Field, grid: GridSpec) -> Field:
    """Central sub-box of a concentric larger field with the same spacing."""
    if u.grid == grid:
        return u
    o = (u.grid.points_per_axis - grid.points_per_axis) // 2
    n = grid.points_per_axis
    return Field(grid, u.values[(slice(o, o + n),) * grid.dim], u.realness_tag)


def embed(a: np.ndarray, grid: GridSpec, target: GridSpec) -> np.ndarray:
    """Zero-pad a central array to a concentric larger grid."""
    if grid == target:
        return a
    o = (target.points_per_axis - grid.points_per_axis) // 2
    n = grid.points_per_axis
    out = np.zeros(target.shape, dtype=a.dtype)
    out[(slice(o, o + n),) * grid.dim] = a
    return out


def _check_radii(grid: GridSpec, radii):
    radii = np.asarray(radii, float)
    if np.any(radii > grid.half_width / 2 + 1e-12):
        raise RadiusExceedsBox(f"radii must not exceed L/2 = {grid.half_width / 2}")
    return radii


def _ball_cumulative(grid: GridSpec, dens: np.ndarray, r: np.ndarray, radii) -> np.ndarray:
    out = []
    for R in radii:
        m = r <= R
        out.append(grid.cell_volume * float(np.sum(dens[m])) / R)
    return np.array(out)


def farfield_relation_error(u: Field, pattern: FarFieldPattern, radii) -> np.ndarray:
    """(1/R) int_{B_R} |u + 2(2pi/|x|)^{(N-1)/2} Re[e^{i|x| - i(N-1)pi/4} g(x^)]|^2 dx.

    The origin node is left out (the model term is singular there).
    """
    g = u.grid
    radii = _check_radii(g, radii)
    N = g.dim
    r = g.radius()
    sel = (r <= radii.max()) & (r > 0)
    xs = [np.broadcast_to(c, g.shape)[sel] for c in g.coords()]
    rs = r[sel]
    xhat = np.stack(xs, 1) / rs[:, None]
    gx = pattern.at(xhat)
    model = 2 * (2 * math.pi / rs) ** ((N - 1) / 2) * np.real(
        np.exp(1j * rs - 1j * (N - 1) * math.pi / 4) * gx)
    dens = np.abs(u.values[sel].real + model) ** 2
    return _ball_cumulative(g, dens, rs, radii)


def plateau_window(grid: GridSpec, inner: float, outer: float | None = None) -> np.ndarray:
    """Tensor-product erf window: 1 - O(1e-8) for |x_k| <= inner, O(1e-8) beyond outer.

    An erf profile has a Gaussian spectrum, so windowed samples stay
    spectrally resolved.
    """
    outer = grid.half_width if outer is None else outer
    if not outer > inner:
        raise ValueError("window needs outer > inner")
    c, s = (inner + outer) / 2, (outer - inner) / 8
    x = grid.axis()
    w1 = 0.5 * (erf((x + c) / s) - erf((x - c) / s))
    out = w1
    for _ in range(grid.dim - 1):
        out = np.multiply.outer(out, w1)
    return out


def spectral_gradient(a: np.ndarray, grid: GridSpec) -> list:
    k = grid.freq_axis().copy()
    k[grid.points_per_axis // 2] = 0.0          # drop the unpaired Nyquist mode
    A = fftn(a)
    out = []
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = -1
        out.append(ifftn(1j * k.reshape(shape) * A))
    return out


def radiation_error(u_tilde: Field, radii, periodic: bool = False) -> np.ndarray:
    """(1/R) int_{B_R} |grad u - i u x^|^2 dx with a spectral gradient.

    Non-periodic data are multiplied by a smooth window equal to 1 on the
    cube of half width L/2 (which contains every admissible ball) before
    differentiating; ``periodic=True`` differentiates the raw samples.
    """
    g = u_tilde.grid
    radii = _check_radii(g, radii)
    a = u_tilde.values
    if not periodic:
        a = a * plateau_window(g, g.half_width / 2)
    grads = spectral_gradient(a, g)
    r = g.radius()
    sel = (r <= radii.max()) & (r > 0)
    rs = r[sel]
    dens = np.zeros(rs.shape)
    for c, d in zip(g.coords(), grads):
        xh = np.broadcast_to(c, g.shape)[sel] / rs
        dens += np.abs(d[sel] - 1j * a[sel] * xh) ** 2
    return _ball_cumulative(g, dens, rs, radii)


def _shell_envelope(r: np.ndarray, vals: np.ndarray, r_window, step: float, width: float):
    """Maximum of vals over overlapping shells; returns radius of the max and the max."""
    lo, hi = r_window
    order = np.argsort(r)
    rs, vs = r[order], vals[order]
    centers = np.arange(lo + width / 2, hi - width / 2 + 1e-12, step)
    rad, mx = [], []
    for c in centers:
        a, b = np.searchsorted(rs, [c - width / 2, c + width / 2])
        if b <= a:
            continue
        k = a + int(np.argmax(vs[a:b]))
        rad.append(rs[k])
        mx.append(vs[k])
    rad, mx = np.array(rad), np.array(mx)
    # overlapping shells can share a maximizer
    _, keep = np.unique(rad, return_index=True)
    return rad[np.sort(keep)], mx[np.sort(keep)]


def fit_power_law(rad: np.ndarray, vals: np.ndarray, r_window, min_points: int = 5) -> SlopeFit:
    """Least-squares line through (log rad, log vals)."""
    ok = vals > 0
    rad, vals = rad[ok], vals[ok]
    if len(rad) < min_points:
        raise WindowTooNarrow(f"only {len(rad)} points in window {tuple(r_window)}")
    X, Y = np.log(rad), np.log(vals)
    slope, icpt = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icpt)
    ss = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return SlopeFit(float(slope), float(math.exp(icpt)), tuple(r_window),
                    float(min(max(r2, 0.0), 1.0)), rad, vals)


def decay_exponent_fit(u: Field, r_window, shell_width: float | None = None) -> SlopeFit:
    """Fit log of the shell-wise max of |u| against log r.

    Shells have width max(pi, 2h) so each one spans half an oscillation
    period, are stepped by h, and the regression uses the radius at which
    each maximum is attained.
    """
    lo, hi = r_window
    g = u.grid
    if lo < 1 or hi > g.half_width / 2 + 1e-12 or not hi > lo:
        raise BadWindow(f"window {r_window} must lie inside [1, L/2]")
    width = shell_width or max(math.pi, 2 * g.spacing)
    r = g.radius()
    m = (r >= lo) & (r <= hi)
    rad, mx = _shell_envelope(r[m], np.abs(u.values[m]), r_window, g.spacing, width)
    return fit_power_law(rad, mx, r_window)


def linear_farfield_check(f: Field, r_window, support_tol: float = 0.0,
                          shell_width: float | None = None, direct_limit: int = 4096) -> SlopeFit:
    """Fit the decay of R f minus its leading spherical-wave term.

    R f is the sampled-kernel convolution (a direct sum over the support when
    it has at most ``direct_limit`` nodes, zero-padded FFT otherwise) and f^
    the direct Fourier sum of the same samples, so the remainder contains no
    discretization mismatch.
    """
    g = f.grid
    N = g.dim
    lo, hi = r_window
    r = g.radius()
    a = np.abs(f.values)
    supp = a > support_tol * (a.max() if a.size else 0)
    if supp.any() and r[supp].max() >= lo:
        raise BadWindow("window intersects the support of f")
    if hi > g.half_width + 1e-12:
        raise BadWindow("window leaves the box")
    m = (r >= lo) & (r <= hi)
    rs = r[m]
    xs = np.stack([np.broadcast_to(c, g.shape)[m] for c in g.coords()], 1)
    src = np.where(supp, f.values, 0)
    if np.count_nonzero(supp) <= direct_limit:
        ax = g.axis()
        nz = np.nonzero(supp)
        Y = np.stack([ax[i] for i in nz], 1)
        Rf = np.zeros(len(rs), complex)
        for y, c in zip(Y, f.values[nz]):
            Rf += c * phi_radial(np.sqrt(np.sum((xs - y) ** 2, 1)), N)
        Rf *= g.cell_volume
    else:
        Rf = kernel_convolve(f).values[m]
    fhat = fourier_sum(src, g, xs / rs[:, None])
    lead = (math.sqrt(math.pi / 2) * np.exp(1j * rs - 1j * (N - 3) * math.pi / 4)
            * rs ** (-(N - 1) / 2) * fhat)
    rem = np.abs(Rf - lead)
    width = shell_width or max(1.0, 2 * g.spacing)
    rad, mx = _shell_envelope(rs, rem, r_window, g.spacing, width)
    return fit_power_law(rad, mx, r_window)


def compact_bump(grid: GridSpec, radius: float = 1.0) -> np.ndarray:
    """exp(-1/(1-|x|^2/radius^2)) (1 + x_1/radius), supported in the open ball."""
    r = grid.radius() / radius
    t = np.minimum(r, 1.0)
    x1 = grid.coords()[0] / radius
    return np.where(r < 1, np.exp(-1.0 / np.where(r < 1, 1 - t * t, 1.0)), 0.0) * (1 + x1)


def write_report(path, radii, errors) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["R", "error"])
        for R, e in zip(radii, errors):
            w.writerow([repr(float(R)), repr(float(e))])
