import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import cos_mode
from nlhelmholtz.errors import (ChecksumMismatch, ExpectedRealField, GridMismatch, InvalidExponent,
                                InvalidGrid, RadiusExceedsBox)
from nlhelmholtz.grid import (Field, GridSpec, ball_integral, icosphere, load_field, lp_norm,
                              pairing, save_field, sphere_area, sphere_mesh, spectral_transform)

G8 = GridSpec(3, 1.0, 8)
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_gridspec_derived_quantities():
    g = GridSpec(3, 12.0, 48)
    assert g.spacing * g.points_per_axis == 2 * g.half_width
    assert g.freq_spacing == math.pi / 12
    k = np.sort(g.freq_axis()) / g.freq_spacing
    np.testing.assert_array_equal(k, np.arange(-24, 24))
    assert g.axis()[g.origin_index[0]] == 0.0


@pytest.mark.parametrize("args", [(2, 1.0, 8), (3, 0.0, 8), (3, 1.0, 6), (3, 1.0, 9),
                                  (3, float("inf"), 8)])
def test_gridspec_rejects(args):
    with pytest.raises(InvalidGrid):
        GridSpec(*args)


def test_field_checks():
    with pytest.raises(GridMismatch):
        Field(G8, np.zeros(10))
    with pytest.raises(ExpectedRealField):
        Field(G8, np.full(G8.shape, 1j), True)
    f = Field(G8, np.ones(G8.shape) + 1e-14j, True)
    assert f.is_real()


def test_lp_norm_examples(torus_pi):
    assert lp_norm(Field.zeros(G8), 2) == 0
    assert lp_norm(Field.real(G8, np.ones(G8.shape)), 1.25) == pytest.approx(8 ** 0.8, rel=1e-12)
    assert lp_norm(cos_mode(torus_pi), 2) == pytest.approx(math.sqrt((2 * math.pi) ** 3 / 2), rel=1e-12)
    with pytest.raises(InvalidExponent):
        lp_norm(Field.zeros(G8), 1.0)


def test_pairing_examples(torus_pi):
    c2 = cos_mode(torus_pi, 2)
    assert pairing(c2, Field.zeros(torus_pi)) == 0
    assert pairing(c2, c2) == pytest.approx((2 * math.pi) ** 3 / 2, rel=1e-12)
    assert abs(pairing(c2, cos_mode(torus_pi, 4))) < 1e-10
    with pytest.raises(GridMismatch):
        pairing(c2, Field.zeros(G8))


@given(arrays(float, G8.shape, elements=finite), st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3),
       st.sampled_from([1.25, 2.0, 5.0]))
def test_lp_norm_homogeneous(a, alpha, s):
    f = Field.real(G8, a)
    assert lp_norm(f * alpha, s) == pytest.approx(abs(alpha) * lp_norm(f, s), rel=1e-12, abs=1e-300)


@given(arrays(float, G8.shape, elements=finite), arrays(float, G8.shape, elements=finite),
       arrays(float, G8.shape, elements=finite), finite)
def test_pairing_symmetric_bilinear(a, b, c, t):
    A, B, C = (Field.real(G8, x) for x in (a, b, c))
    scale = 1 + abs(pairing(A, C)) + abs(t * pairing(B, C))
    assert pairing(A, B) == pytest.approx(pairing(B, A), rel=1e-12, abs=1e-9)
    assert abs(pairing(A + B * t, C) - pairing(A, C) - t * pairing(B, C)) <= 1e-12 * scale * 10


def test_spectral_transform_delta():
    g = GridSpec(3, 2.0, 16)
    a = np.zeros(g.shape)
    a[g.origin_index] = 1 / g.cell_volume
    F = spectral_transform(Field(g, a))
    np.testing.assert_allclose(F.values, (2 * math.pi) ** -1.5, atol=1e-10)
    assert spectral_transform(Field.zeros(g)).values.max() == 0


def test_spectral_transform_gaussian_oracle():
    # the transform of exp(-|x|^2/2) is exp(-|xi|^2/2) under the unitary convention
    g = GridSpec(3, 10.0, 48)
    F = spectral_transform(Field.real(g, np.exp(-g.radius() ** 2 / 2)))
    d = F.grid
    np.testing.assert_allclose(F.values, np.exp(-d.radius() ** 2 / 2), atol=1e-12)


@given(arrays(float, G8.shape, elements=finite), arrays(float, G8.shape, elements=finite))
def test_spectral_transform_roundtrip_parseval(re, im):
    f = Field(G8, re + 1j * im)
    F = spectral_transform(f)
    back = spectral_transform(F, "inverse")
    n = np.linalg.norm(f.values)
    assert np.linalg.norm(back.values - f.values) <= 1e-12 * max(n, 1e-300)
    assert lp_norm(F, 2) == pytest.approx(lp_norm(f, 2), rel=1e-12, abs=1e-300)


def test_ball_integral_examples():
    g = GridSpec(3, 4.0, 64)
    one = Field.real(g, np.ones(g.shape))
    assert ball_integral(one, [0, 0, 0], 1.0, 1) == pytest.approx(4 * math.pi / 3, rel=0.05)
    r = np.sqrt(sum((c - 1.0) ** 2 for c in g.coords()))
    ind = Field.real(g, (r <= 1.5).astype(float))
    assert ball_integral(ind, [1.0, 1.0, 1.0], 1.5, 2) == pytest.approx(4 * math.pi / 3 * 1.5 ** 3, rel=0.05)
    outside = Field.real(g, (g.radius() > 2).astype(float))
    assert ball_integral(outside, [0, 0, 0], 2.0, 1) == 0
    with pytest.raises(RadiusExceedsBox):
        ball_integral(one, [0, 0, 0], 4.5, 1)


def test_ball_integral_monotone_in_radius(rng):
    g = GridSpec(3, 4.0, 16)
    f = Field.real(g, rng.standard_normal(g.shape))
    vals = [ball_integral(f, [0.3, -1, 2], r, 1.25) for r in np.linspace(0.1, 4, 12)]
    assert np.all(np.diff(vals) >= 0)


def test_ball_integral_uses_torus_metric():
    g = GridSpec(3, 4.0, 16)
    a = np.zeros(g.shape)
    a[0, 8, 8] = 1.0       # node at x1 = -4, distance 0.5 from x1 = 3.5 across the wrap
    assert ball_integral(Field.real(g, a), [3.5, 0, 0], 0.6, 1) == pytest.approx(g.cell_volume)


@pytest.mark.parametrize("order", [0, 2, 3])
def test_icosphere_weights_and_symmetry(order):
    m = icosphere(order)
    assert np.allclose(np.linalg.norm(m.directions, axis=1), 1, atol=1e-12)
    assert np.all(m.weights > 0)
    assert m.weights.sum() == pytest.approx(4 * math.pi, rel=1e-6)
    np.testing.assert_allclose(m.directions[m.antipode], -m.directions, atol=1e-12)


def test_sphere_mesh_interpolation_close_on_linear():
    m = sphere_mesh(3, 3)
    vals = m.directions @ np.array([0.3, -0.2, 0.5])
    q = np.random.default_rng(0).standard_normal((200, 3))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    got = m.interpolate(vals, q)
    # barycentric interpolation of a linear function on flat triangles, then normalized
    assert np.max(np.abs(got - q @ np.array([0.3, -0.2, 0.5]))) < 0.02


def test_sphere_mesh_higher_dim():
    m = sphere_mesh(4, 1)
    assert m.weights.sum() == pytest.approx(sphere_area(4))
    np.testing.assert_allclose(m.directions[m.antipode], -m.directions, atol=1e-12)


def test_field_dump_roundtrip(tmp_path, rng):
    g = GridSpec(3, 2.0, 8)
    f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    p = save_field(f, tmp_path / "f")
    back = load_field(p)
    assert back.grid == g and back.realness_tag == f.realness_tag
    np.testing.assert_array_equal(back.values, f.values)
    raw = (tmp_path / "f.bin").read_bytes()
    assert len(raw) == 16 * g.size
    assert np.frombuffer(raw[:8], "<f8")[0] == f.values.ravel()[0].real


def test_field_dump_truncated(tmp_path):
    g = GridSpec(3, 2.0, 8)
    save_field(Field.zeros(g), tmp_path / "f")
    b = tmp_path / "f.bin"
    b.write_bytes(b.read_bytes()[:100])
    with pytest.raises(ChecksumMismatch):
        load_field(tmp_path / "f.json")
