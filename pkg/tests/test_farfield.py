import math

import numpy as np
import pytest

from nlhelmholtz.errors import BadWindow, RadiusExceedsBox, WindowTooNarrow
from nlhelmholtz.farfield import (compact_bump, compute_farfield, decay_exponent_fit,
                                  farfield_constant, farfield_relation_error, fit_power_law,
                                  fourier_sum, linear_farfield_check, radiation_error)
from nlhelmholtz.grid import Field, GridSpec, icosphere
from nlhelmholtz.resolvent import FreeSpaceResolvent

LADDER = [4.0, 6.0, 9.0, 13.5]
MESH = icosphere(3)


def _delta(g):
    a = np.zeros(g.shape)
    a[g.origin_index] = 1 / g.cell_volume
    return Field(g, a)


def _decreasing(e, slack=0.1):
    return all(b <= a * (1 + slack) for a, b in zip(e, e[1:]))


def test_farfield_constant():
    assert farfield_constant(3) == pytest.approx(-0.25j / math.sqrt(2 * math.pi), rel=1e-15)


def test_delta_source_constant():
    pat = compute_farfield(None, None, MESH, source=_delta(GridSpec(3, 2.0, 8)))
    np.testing.assert_allclose(pat.g, -1j / (16 * math.pi ** 2), atol=1e-10)


def test_reality_symmetry(rng):
    g = GridSpec(3, 2.0, 8)
    pat = compute_farfield(None, None, MESH, source=Field(g, rng.standard_normal(g.shape)))
    assert pat.reality_defect() <= 1e-10


def test_fourier_sum_matches_explicit_sum(rng):
    g = GridSpec(3, 2.0, 8)
    dense = rng.standard_normal(g.shape)
    sparse = np.where(rng.random(g.shape) < 0.05, dense, 0.0)
    xi = MESH.directions[:40] * 1.3
    ax = g.axis()
    X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    E = (2 * math.pi) ** -1.5 * g.cell_volume * np.exp(-1j * xi @ X.T)
    for f in (dense, sparse):
        np.testing.assert_allclose(fourier_sum(f, g, xi), E @ f.ravel(), atol=1e-12)


def test_farfield_linear(rng):
    g = GridSpec(3, 2.0, 8)
    f1, f2 = rng.standard_normal((2,) + g.shape)
    p = lambda f: compute_farfield(None, None, MESH, source=Field(g, f)).g
    np.testing.assert_allclose(p(2 * f1 - 3 * f2), 2 * p(f1) - 3 * p(f2), atol=1e-12)


@pytest.fixture(scope="module")
def big():
    return GridSpec(3, 28.0, 112)


@pytest.mark.parametrize("profile,expo", [(lambda r: np.cos(r) / r, -1.0),
                                          (lambda r: r ** -2.0, -2.0)])
def test_decay_fit_synthetic(big, profile, expo):
    r = big.radius()
    u = Field.real(big, profile(np.where(r > 0, r, 1.0)))
    fit = decay_exponent_fit(u, (2, 13))
    assert fit.exponent == pytest.approx(expo, abs=0.05)
    assert fit.goodness > 0.85


def test_decay_fit_bad_windows(big):
    u = Field.real(big, np.ones(big.shape))
    for w in [(0.5, 10), (2, 15), (5, 4)]:
        with pytest.raises(BadWindow):
            decay_exponent_fit(u, w)


def test_fit_power_law_too_narrow():
    with pytest.raises(WindowTooNarrow):
        fit_power_law(np.array([2.0, 3.0]), np.array([1.0, 0.5]), (2, 3))
    fit = fit_power_law(np.array([2.0, 4.0, 8.0]), np.array([1.0, 0.5, 0.25]), (2, 8),
                        min_points=3)
    assert fit.exponent == pytest.approx(-1.0, abs=1e-12)


@pytest.fixture(scope="module")
def bump_solution(big):
    src = GridSpec(3, 2.0, 8)
    f = compact_bump(src, 1.5)
    u = FreeSpaceResolvent(src, target=big)(f)
    return src, f, u


def test_linear_farfield_relation_decreasing(big, bump_solution):
    src, f, u = bump_solution
    pat = compute_farfield(None, None, MESH, source=Field(src, f))
    assert pat.reality_defect() <= 1e-10
    err = farfield_relation_error(Field.real(big, u.real), pat, LADDER)
    assert _decreasing(err)
    assert err[-1] < 0.5 * err[0]
    # a doubled field violates the relation at every radius
    bad = farfield_relation_error(Field.real(big, 2 * u.real), pat, LADDER)
    assert np.all(bad > 10 * err)
    assert not _decreasing(bad, 0.0) or bad[-1] > bad[0] * 0.5


def test_radiation_outgoing_decreasing(big, bump_solution):
    _, _, u = bump_solution
    err = radiation_error(Field(big, u), LADDER)
    assert _decreasing(err)
    assert err[-1] < 0.5 * err[0]
    # the incoming wave fails
    inc = radiation_error(Field(big, np.conj(u)), LADDER)
    assert np.all(inc > 10 * err)


def test_radiation_plane_wave_periodic():
    g = GridSpec(3, 2 * math.pi, 32)
    u = Field(g, np.broadcast_to(np.exp(1j * g.coords()[0]), g.shape).copy())
    radii = [2.0, 3.0]
    err = radiation_error(u, radii, periodic=True)
    np.testing.assert_allclose(err, [8 * math.pi / 3 * R * R for R in radii], rtol=0.08)


def test_relation_radius_guard(big, bump_solution):
    src, f, u = bump_solution
    pat = compute_farfield(None, None, MESH, source=Field(src, f))
    with pytest.raises(RadiusExceedsBox):
        farfield_relation_error(Field.real(big, u.real), pat, [15.0])


def test_linear_remainder_slope():
    g = GridSpec(3, 48.0, 192)
    fit = linear_farfield_check(Field.real(g, compact_bump(g)), (5, 20))
    assert fit.exponent == pytest.approx(-2.0, abs=0.3)


def test_linear_check_window_guard():
    g = GridSpec(3, 8.0, 32)
    with pytest.raises(BadWindow):
        linear_farfield_check(Field.real(g, compact_bump(g, 3.0)), (2, 6))
