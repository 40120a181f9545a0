import math

import numpy as np
import pytest

from gfpc.spectral import (
    Field,
    FourierMultiplier,
    Grid,
    GridMismatchError,
    apply_multiplier,
    gradient_energy,
    inner,
    l2_norm,
    project_interpolate,
    resample,
    rfft,
    transform_forward,
    transform_inverse,
)

TWO_PI = 2 * math.pi


def naive_dft(values, grid):
    """O(N^2) DFT with the 1/N normalization, straight from the definition."""
    coords = [grid.lattice(a) for a in range(grid.dim)]
    idx = np.stack(np.meshgrid(*[np.arange(m) for m in grid.points], indexing="ij"), -1)
    idx = idx.reshape(-1, grid.dim)
    flat = values.reshape(-1)
    out = np.zeros(grid.shape, dtype=complex)
    for kidx in np.ndindex(*grid.shape):
        k = np.array([coords[a][kidx[a]] for a in range(grid.dim)])
        phase = np.exp(-2j * np.pi * (idx * (k / np.array(grid.points))).sum(1))
        out[kidx] = (flat * phase).sum() / grid.size
    return out


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid.uniform(2, 7)
    with pytest.raises(ValueError):
        Grid.uniform(4, 8)
    with pytest.raises(ValueError):
        Grid((8,), (1.0,), (0.0,))
    g = Grid.uniform(3, 8, -math.pi, math.pi)
    assert g.shape == (8, 8, 8)
    assert g.cell_volume == pytest.approx((TWO_PI / 8) ** 3, rel=1e-15)
    assert g.axis_coordinates(0)[0] == -math.pi


def test_transform_matches_naive_dft(rng):
    grid = Grid((6, 4), (0.0, 0.0), (TWO_PI, 3.0))
    u = Field(grid, rng.normal(size=grid.shape))
    np.testing.assert_allclose(transform_forward(u), naive_dft(u.values, grid), atol=1e-14)
    back = transform_inverse(transform_forward(u), grid)
    np.testing.assert_allclose(back.values, u.values, atol=1e-14)


def test_transform_rejects_non_finite():
    grid = Grid.uniform(1, 8)
    vals = np.zeros(8)
    vals[3] = np.nan
    with pytest.raises(ValueError):
        transform_forward(Field(grid, vals))


def test_field_is_frozen_copy(rng):
    grid = Grid.uniform(2, 8)
    raw = rng.normal(size=grid.shape)
    f = Field(grid, raw)
    raw[0, 0] = 99.0
    assert f.values[0, 0] != 99.0
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    with pytest.raises(ValueError):
        Field(grid, np.zeros(10))


def test_field_arithmetic_checks_grid():
    a = Field(Grid.uniform(1, 8), np.ones(8))
    b = Field(Grid.uniform(1, 10), np.ones(10))
    with pytest.raises(GridMismatchError):
        a + b
    assert (a * 2.0).values.sum() == 16.0
    assert (a - a).max_abs() == 0.0


def test_laplacian_exact_on_trig_polynomial():
    grid = Grid.uniform(2, 16)
    x, y = grid.coordinates()
    u = Field(grid, np.sin(2 * x) * np.cos(3 * y))
    lap = apply_multiplier(FourierMultiplier.laplacian(grid), u)
    np.testing.assert_allclose(lap.values, -13 * u.values, atol=1e-12)


def test_laplacian_non_square_domain():
    grid = Grid((16, 8), (0.0, -1.0), (4.0, 1.0))
    x, y = grid.coordinates()
    u = Field(grid, np.cos(2 * np.pi * x / 4.0) + np.sin(2 * np.pi * 2 * y / 2.0))
    lap = apply_multiplier(FourierMultiplier.laplacian(grid), u)
    expect = -(np.pi / 2) ** 2 * np.cos(np.pi * x / 2) - (2 * np.pi) ** 2 * np.sin(2 * np.pi * y)
    np.testing.assert_allclose(lap.values, expect, atol=1e-11)


def test_multiplier_composition_and_resolvent(rng):
    grid = Grid.uniform(2, 16)
    eta = 0.37
    forward = FourierMultiplier.from_symbol(grid, lambda k2: 1 + eta * k2)
    comp = forward * FourierMultiplier.resolvent(grid, eta)
    np.testing.assert_allclose(comp.array, 1.0, rtol=1e-15)
    u = Field(grid, rng.normal(size=grid.shape))
    np.testing.assert_allclose(apply_multiplier(comp, u).values, u.values, atol=1e-13)
    with pytest.raises(GridMismatchError):
        apply_multiplier(comp, Field(Grid.uniform(2, 8), np.zeros((8, 8))))
    with pytest.raises(ValueError):
        FourierMultiplier(grid, np.full(grid.k2_half.shape, np.inf))


def test_full_symbol_layout():
    grid = Grid.uniform(2, 8)
    full = FourierMultiplier.neg_laplacian(grid).full()
    np.testing.assert_allclose(full, grid.wavenumber_squared(), rtol=0, atol=0)


def test_gradient_energy_against_quadrature():
    # exact gradient of a real trig polynomial integrated on a much finer grid;
    # cos(8y) is the Nyquist mode of the 16-point axis
    grid = Grid.uniform(2, 16)
    fine = Grid.uniform(2, 64)

    def u(x, y):
        return np.sin(2 * x) + 0.3 * np.cos(x + 3 * y) - 0.2 * np.cos(8 * y)

    def grad_sq(x, y):
        ux = 2 * np.cos(2 * x) - 0.3 * np.sin(x + 3 * y)
        uy = -0.9 * np.sin(x + 3 * y) + 1.6 * np.sin(8 * y)
        return ux**2 + uy**2

    x, y = grid.coordinates()
    X, Y = fine.coordinates()
    oracle = 0.5 * fine.cell_volume * grad_sq(X, Y).sum()
    coeffs = rfft(u(x, y))
    assert gradient_energy(grid, coeffs, real_nyquist=True) == pytest.approx(oracle, rel=1e-13)
    # the one-sided lattice counts the Nyquist cosine twice as heavily
    nyquist = 0.5 * fine.cell_volume * np.sum((1.6 * np.sin(8 * Y)) ** 2)
    assert gradient_energy(grid, coeffs) == pytest.approx(oracle + nyquist, rel=1e-13)
    # ... which is 0.5 <-Delta_h u, u>_h
    lap = apply_multiplier(FourierMultiplier.laplacian(grid), Field(grid, u(x, y))).values
    assert gradient_energy(grid, coeffs) == pytest.approx(-0.5 * inner(grid, lap, u(x, y)), rel=1e-13)


def test_resample_round_trip_and_interpolation(rng):
    grid = Grid((8, 6), (0.0, 0.0), (TWO_PI, TWO_PI))
    fine = Grid((32, 18), grid.domain_min, grid.domain_max)
    u = Field(grid, rng.normal(size=grid.shape))
    np.testing.assert_allclose(resample(resample(u, fine), grid).values, u.values, atol=1e-14)
    # band-limited data: the interpolant reproduces the function off the grid
    x, y = grid.coordinates()
    X, Y = fine.coordinates()
    v = Field(grid, np.cos(x) * np.sin(2 * y) + np.cos(4 * x))
    np.testing.assert_allclose(resample(v, fine).values,
                               np.cos(X) * np.sin(2 * Y) + np.cos(4 * X), atol=1e-13)
    with pytest.raises(GridMismatchError):
        resample(u, Grid.uniform(2, 16, 0.0, 1.0))


def _projection_oracle(w_fine, fine, m):
    """Coefficients of the L2 projection onto modes |k| < m/2 plus cos(m x / 2),
    by quadrature (exact for trig polynomials of degree below the fine size)."""
    x = fine.coordinates()[0]
    xs = Grid.uniform(1, m).coordinates()[0]
    out = np.zeros(m)
    for k in range(-m // 2 + 1, m // 2):
        ck = (w_fine * np.exp(-1j * k * x)).mean()
        out += (ck * np.exp(1j * k * xs)).real
    cn = 2 * (w_fine * np.cos(m // 2 * x)).mean()
    return out + cn * np.cos(m // 2 * xs)


@pytest.mark.parametrize("m", [8, 12])
def test_projection_of_polynomial_map(rng, m):
    grid = Grid.uniform(1, m)
    u = Field(grid, rng.uniform(-1, 1, m))
    fine = Grid.uniform(1, 16 * m)
    w_fine = resample(u, fine).values ** 3
    got = project_interpolate(u, "P_h", pointwise=lambda v: v**3)
    np.testing.assert_allclose(got.values, _projection_oracle(w_fine, fine, m), atol=1e-13)
    # I_h just samples the map
    np.testing.assert_allclose(project_interpolate(u, "I_h", pointwise=np.tanh).values,
                               np.tanh(u.values), rtol=0, atol=0)
    with pytest.raises(ValueError):
        project_interpolate(u, "Q_h")


def test_norm_and_inner():
    grid = Grid.uniform(2, 16)
    x, y = grid.coordinates()
    u = np.sin(x) * np.sin(y)
    assert l2_norm(grid, u) == pytest.approx(math.pi, rel=1e-14)
    assert inner(grid, u, np.cos(x)) == pytest.approx(0.0, abs=1e-13)


def test_gradient_energy_nyquist_on_leading_axis():
    # cos(4x) is the Nyquist mode of an 8-point axis
    grid = Grid.uniform(3, 8)
    x, y, z = grid.coordinates()
    u = np.cos(4 * x) * np.cos(3 * z)
    assert gradient_energy(grid, rfft(u), real_nyquist=True) == pytest.approx(25 * math.pi**3, rel=1e-13)
    assert gradient_energy(grid, rfft(u)) == pytest.approx(50 * math.pi**3, rel=1e-13)
