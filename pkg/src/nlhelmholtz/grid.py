"""Uniform periodic grids, complex fields, scaled FFTs and discrete norms."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.special import gamma

from .errors import (ExpectedRealField, GridMismatch, InvalidExponent,
                     InvalidGrid, RadiusExceedsBox)

REAL_TOL = 1e-12

# worker count used by every FFT in the package; set by the CLI --threads flag
_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def fftn(a):
    return sfft.fftn(a, workers=_FFT_WORKERS)


def ifftn(a):
    return sfft.ifftn(a, workers=_FFT_WORKERS)


@dataclass(frozen=True)
class GridSpec:
    """Box [-L, L)^N sampled with n points per axis."""

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 3:
            raise InvalidGrid(f"dim must be an integer >= 3, got {self.dim}")
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise InvalidGrid("half_width must be positive")
        n = self.points_per_axis
        if int(n) != n or n < 8 or n % 2:
            raise InvalidGrid(f"points_per_axis must be an even integer >= 8, got {n}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "points_per_axis", int(n))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def freq_spacing(self) -> float:
        return math.pi / self.half_width

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def shape(self):
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def origin_index(self):
        return (self.points_per_axis // 2,) * self.dim

    def axis(self):
        return -self.half_width + self.spacing * np.arange(self.points_per_axis)

    def coords(self):
        """Sparse open mesh of node coordinates (broadcastable)."""
        x = self.axis()
        return np.meshgrid(*([x] * self.dim), indexing="ij", sparse=True)

    def radius(self):
        return np.sqrt(sum(c * c for c in self.coords()))

    def freq_axis(self):
        """Angular frequencies per axis in FFT storage order."""
        n = self.points_per_axis
        return self.freq_spacing * np.fft.fftfreq(n, 1.0 / n)

    def freq_sq(self):
        """|xi|^2 on the frequency lattice in FFT storage order."""
        k = self.freq_axis()
        ks = np.meshgrid(*([k] * self.dim), indexing="ij", sparse=True)
        return sum(c * c for c in ks)

    def dual(self) -> "GridSpec":
        """Grid whose nodes are the frequency lattice (centered order)."""
        n = self.points_per_axis
        return GridSpec(self.dim, n * math.pi / (2.0 * self.half_width), n)

    def with_points(self, half_width: float) -> "GridSpec":
        """Same spacing, different box; half_width must be a multiple of h/2 giving even n."""
        n = int(round(2 * half_width / self.spacing))
        return GridSpec(self.dim, n * self.spacing / 2.0, n)

    def to_dict(self):
        return {"dim": self.dim, "half_width": self.half_width,
                "points_per_axis": self.points_per_axis}


@dataclass
class Field:
    """Complex samples on a grid, C order (last axis fastest)."""

    grid: GridSpec
    values: np.ndarray
    realness_tag: bool = False

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.size != self.grid.size:
            raise GridMismatch(f"value count {v.size} != n^N = {self.grid.size}")
        self.values = np.ascontiguousarray(v.reshape(self.grid.shape), dtype=np.complex128)
        if self.realness_tag and not _is_real(self.values):
            raise ExpectedRealField("realness_tag set but imaginary part is not negligible")

    @classmethod
    def real(cls, grid: GridSpec, values) -> "Field":
        return cls(grid, np.asarray(values), True)

    @classmethod
    def zeros(cls, grid: GridSpec, real: bool = True) -> "Field":
        return cls(grid, np.zeros(grid.shape), real)

    @property
    def re(self) -> np.ndarray:
        return self.values.real

    def is_real(self) -> bool:
        return self.realness_tag or _is_real(self.values)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), self.realness_tag)

    def __add__(self, other):
        _same_grid(self, other)
        return Field(self.grid, self.values + other.values,
                     self.realness_tag and other.realness_tag)

    def __sub__(self, other):
        _same_grid(self, other)
        return Field(self.grid, self.values - other.values,
                     self.realness_tag and other.realness_tag)

    def __mul__(self, a):
        if isinstance(a, Field):
            _same_grid(self, a)
            return Field(self.grid, self.values * a.values,
                         self.realness_tag and a.realness_tag)
        return Field(self.grid, self.values * a,
                     self.realness_tag and np.isrealobj(a))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values, self.realness_tag)


def _is_real(v: np.ndarray) -> bool:
    if np.isrealobj(v) or v.size == 0:
        return True
    return float(np.max(np.abs(v.imag))) <= REAL_TOL * (1.0 + float(np.max(np.abs(v.real))))


def _same_grid(f: Field, g: Field) -> None:
    if f.grid != g.grid:
        raise GridMismatch(f"{f.grid} vs {g.grid}")


def require_real(f: Field) -> np.ndarray:
    if not f.is_real():
        raise ExpectedRealField("operation expects a real field")
    return f.values.real


@dataclass
class SphereMesh:
    """Quadrature nodes on the unit sphere with positive weights."""

    directions: np.ndarray
    weights: np.ndarray
    faces: np.ndarray | None = None
    order: int = 0
    _tree: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        d = np.asarray(self.directions, float)
        w = np.asarray(self.weights, float)
        if d.ndim != 2 or w.shape != (d.shape[0],):
            raise ValueError("directions must be (M, N) with one weight per direction")
        if np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) > 1e-12:
            raise ValueError("directions must be unit vectors")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        area = sphere_area(d.shape[1])
        if abs(w.sum() - area) > 1e-6 * area:
            raise ValueError("weights must sum to the sphere area")
        self.directions, self.weights = d, w

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def __len__(self):
        return self.directions.shape[0]

    @cached_property
    def antipode(self) -> np.ndarray:
        """Index of -xi for every node (mesh must be antipodally symmetric)."""
        idx, err = self.nearest(-self.directions)
        if np.max(err) > 1e-10:
            raise ValueError("mesh is not antipodally symmetric")
        return idx

    def nearest(self, q):
        from scipy.spatial import cKDTree
        if self._tree is None:
            self._tree = cKDTree(self.directions)
        dist, idx = self._tree.query(np.asarray(q, float))
        return idx, dist

    @cached_property
    def _vertex_faces(self):
        vf = [[] for _ in range(len(self))]
        for k, tri in enumerate(self.faces):
            for v in tri:
                vf[v].append(k)
        width = max(len(a) for a in vf)
        out = np.full((len(self), width), -1, dtype=np.int64)
        for v, a in enumerate(vf):
            out[v, :len(a)] = a
        return out

    def interpolate(self, values, q):
        """Evaluate a nodal function at unit vectors q.

        Nearest node below order 3, spherical-barycentric on the mesh
        triangles from order 3 on.
        """
        values = np.asarray(values)
        q = np.atleast_2d(np.asarray(q, float))
        idx, _ = self.nearest(q)
        if self.faces is None or self.order < 3:
            return values[idx]
        out = values[idx].copy()
        done = np.zeros(len(q), bool)
        cand = self._vertex_faces[idx]
        for j in range(cand.shape[1]):
            fk = cand[:, j]
            ok = (fk >= 0) & ~done
            if not ok.any():
                continue
            tri = self.directions[self.faces[fk[ok]]]          # (m, 3, 3)
            lam = np.linalg.solve(np.transpose(tri, (0, 2, 1)), q[ok][..., None])[..., 0]
            inside = np.all(lam >= -1e-12, axis=1)
            lam = lam[inside] / lam[inside].sum(axis=1, keepdims=True)
            sel = np.flatnonzero(ok)[inside]
            out[sel] = np.einsum("mk,mk->m", lam, values[self.faces[fk[sel]]])
            done[sel] = True
        return out


def sphere_area(dim: int) -> float:
    return 2.0 * math.pi ** (dim / 2) / gamma(dim / 2)


def icosphere(order: int = 3) -> SphereMesh:
    """Refined icosahedron on S^2 with spherical Voronoi cell areas as weights."""
    from scipy.spatial import SphericalVoronoi
    t = (1 + 5 ** 0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9),
             (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2),
             (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10),
             (8, 6, 7), (9, 8, 1)]
    v = [np.array(p, float) / np.linalg.norm(p) for p in verts]
    for _ in range(order):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = v[a] + v[b]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    d = np.array(v)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    sv = SphericalVoronoi(d, radius=1.0, threshold=1e-10)
    w = sv.calculate_areas()
    w *= 4 * math.pi / w.sum()
    return SphereMesh(d, w, np.array(faces, dtype=np.int64), order)


def sphere_mesh(dim: int, order: int = 3, seed: int = 0) -> SphereMesh:
    """Icosahedral mesh for N = 3; antipodal pairs of random directions otherwise."""
    if dim == 3:
        return icosphere(order)
    m = 10 * 4 ** order
    g = np.random.default_rng(seed).standard_normal((m, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    d = np.concatenate([g, -g])
    return SphereMesh(d, np.full(2 * m, sphere_area(dim) / (2 * m)), None, order)


# ---------------------------------------------------------------- norms etc.

def _lp(arr: np.ndarray, s: float, dv: float) -> float:
    a = np.abs(arr)
    scale = float(a.max()) if a.size else 0.0
    if scale == 0.0:
        return 0.0
    return scale * (dv * float(np.sum((a / scale) ** s))) ** (1.0 / s)


def lp_norm(f: Field, s: float) -> float:
    """(h^N sum |f|^s)^(1/s)."""
    if not (s > 1 and math.isfinite(s)):
        raise InvalidExponent(f"exponent must lie in (1, inf), got {s}")
    return _lp(f.values, s, f.grid.cell_volume)


def pairing(f: Field, g: Field) -> float:
    """Real pairing h^N sum Re f Re g."""
    _same_grid(f, g)
    return f.grid.cell_volume * float(np.vdot(f.values.real.ravel(), g.values.real.ravel()))


def _sign_pattern(grid: GridSpec) -> np.ndarray:
    n = grid.points_per_axis
    s = (-1.0) ** np.arange(n)
    out = s
    for _ in range(grid.dim - 1):
        out = np.multiply.outer(out, s)
    return out


def spectral_transform(f: Field, direction: str = "forward") -> Field:
    """Scaled DFT approximating (2 pi)^(-N/2) int f e^{-i x.xi} dx.

    The forward image lives on ``grid.dual()``, whose nodes are the
    frequencies m*pi/L in centered order; ``inverse`` undoes it.
    """
    g = f.grid
    N, n = g.dim, g.points_per_axis
    sign = _sign_pattern(g)
    if direction == "forward":
        c = (2 * math.pi) ** (-N / 2) * g.cell_volume
        out = c * np.fft.fftshift(fftn(f.values)) * sign
    elif direction == "inverse":
        c = (2 * math.pi) ** (-N / 2) * g.cell_volume * n ** N
        out = c * ifftn(np.fft.ifftshift(f.values * sign))
    else:
        raise ValueError("direction must be 'forward' or 'inverse'")
    return Field(g.dual(), out)


def torus_displacement(grid: GridSpec, center) -> list:
    """Minimal-image displacement x - center per axis (sparse, broadcastable)."""
    period = 2 * grid.half_width
    out = []
    for c, x in zip(center, grid.coords()):
        d = x - c
        out.append(d - period * np.round(d / period))
    return out


def ball_integral(f: Field, center, radius: float, power: float) -> float:
    """h^N sum of |f|^power over nodes within the torus ball."""
    if radius > f.grid.half_width:
        raise RadiusExceedsBox(f"radius {radius} exceeds half width {f.grid.half_width}")
    d = torus_displacement(f.grid, center)
    mask = sum(c * c for c in d) <= radius * radius
    return f.grid.cell_volume * float(np.sum(np.abs(f.values[mask]) ** power))


# ---------------------------------------------------------------- field dumps

def save_field(f: Field, path) -> Path:
    """Write a JSON sidecar plus raw little-endian (re, im) float64 payload."""
    path = Path(path)
    payload = path.with_suffix(".bin")
    meta = dict(f.grid.to_dict(), realness_tag=bool(f.realness_tag),
                payload_file=payload.name)
    raw = np.empty(f.values.size * 2, dtype="<f8")
    raw[0::2] = f.values.real.ravel()
    raw[1::2] = f.values.imag.ravel()
    _atomic_write(payload, raw.tobytes())
    _atomic_write(path.with_suffix(".json"), json.dumps(meta).encode())
    return path.with_suffix(".json")


def load_field(path) -> Field:
    path = Path(path).with_suffix(".json")
    meta = json.loads(path.read_text())
    grid = GridSpec(meta["dim"], meta["half_width"], meta["points_per_axis"])
    raw = np.fromfile(path.parent / meta["payload_file"], dtype="<f8")
    if raw.size != 2 * grid.size:
        from .errors import ChecksumMismatch
        raise ChecksumMismatch(f"payload has {raw.size} values, expected {2 * grid.size}")
    return Field(grid, raw[0::2] + 1j * raw[1::2], bool(meta["realness_tag"]))


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
