import math

import mpmath as mp
import numpy as np
import pytest

from gfpc.models import (
    EnergyForm,
    FlowSpec,
    PotentialModel,
    UnsupportedEnergyForm,
    discrete_gradient,
    energy,
    fd_laplacian,
    variational_derivative,
)
from gfpc.spectral import Field, Grid

from conftest import allen_cahn_flow, cahn_hilliard_flow


def fh_exact(phi, order, eps=0.1, theta=3.0, beta=1.0):
    """Flory-Huggins density and derivatives in extended precision."""
    mp.mp.dps = 40

    def F(p):
        return ((beta + p) * mp.log(beta + p) + (beta - p) * mp.log(beta - p)
                - theta * p**2 / 2) / eps**2

    return float(mp.diff(F, mp.mpf(phi), order))


@pytest.mark.parametrize("phi", [-0.98, -0.5, 0.0, 0.3, 0.9, 0.994])
def test_flory_huggins_matches_mpmath(phi):
    pot = PotentialModel.flory_huggins(0.1)
    assert float(pot.F(phi)) == pytest.approx(fh_exact(phi, 0), rel=1e-12, abs=1e-12)
    assert float(pot.f(phi)) == pytest.approx(fh_exact(phi, 1), rel=1e-11, abs=1e-10)
    assert float(pot.fprime(phi)) == pytest.approx(fh_exact(phi, 2), rel=1e-10)


def test_flory_huggins_extension_is_c2_at_junction():
    # just past the junction the Taylor extension tracks the exact function
    # with errors O(d^4), O(d^3), O(d^2) for F, f, f'
    pot = PotentialModel.flory_huggins(0.1)
    j = pot.beta - pot.extension_margin
    d = 1e-4
    # remainder bounds from the fourth derivative over [j, j + d]
    f4 = abs(fh_exact(j + d, 4))
    for side in (1.0, -1.0):
        p = side * (j + d)
        assert abs(float(pot.F(p)) - fh_exact(p, 0)) <= f4 * d**4 / 24 + 1e-12
        assert abs(float(pot.f(p)) - fh_exact(p, 1)) <= f4 * d**3 / 6 + 1e-10
        assert abs(float(pot.fprime(p)) - fh_exact(p, 2)) <= f4 * d**2 / 2 + 1e-8
        # and the error is not identically zero, so the extension is active
        assert float(pot.fprime(p)) != pytest.approx(fh_exact(p, 2), rel=1e-9)
    # beyond the singularity the extension stays finite and monotone in f
    far = np.array([1.0, 1.2, 3.0, 159.0])
    assert np.all(np.isfinite(pot.F(far)))
    assert np.all(np.diff(pot.f(far)) > 0)
    assert np.all(pot.f(-far) == -pot.f(far))


def test_double_well_closed_forms():
    pot = PotentialModel.double_well(0.1)
    z = np.linspace(-2, 2, 41)
    np.testing.assert_allclose(pot.F(z), (z**2 - 1) ** 2 / 0.04, rtol=1e-14)
    # f and f' against centered differences of F and f
    h = 1e-6
    np.testing.assert_allclose(pot.f(z), (pot.F(z + h) - pot.F(z - h)) / (2 * h), rtol=1e-6, atol=1e-5)
    np.testing.assert_allclose(pot.fprime(z), (pot.f(z + h) - pot.f(z - h)) / (2 * h), rtol=1e-6, atol=1e-5)
    assert pot.max_abs_fprime() == pytest.approx(200.0, rel=1e-12)
    assert pot.stabilizer == pytest.approx(100.0)
    np.testing.assert_allclose(pot.g(z), -pot.f(z) + 100.0 * z, rtol=1e-14, atol=1e-12)


def test_bounds_and_sign_condition():
    assert PotentialModel.double_well(0.1, beta=2.0).bound == 2.0
    assert PotentialModel.flory_huggins(0.1).bound == pytest.approx(0.99)
    # theta0 large enough that f(beta - delta) < 0 breaks the sign condition
    with pytest.raises(ValueError):
        PotentialModel.flory_huggins(0.1, theta0=6.0)
    with pytest.raises(ValueError):
        PotentialModel.double_well(-0.1)
    with pytest.raises(ValueError):
        PotentialModel.double_well(0.1, stabilizer=-1.0)
    with pytest.raises(ValueError):
        PotentialModel.flory_huggins(0.1, delta=1.5)
    z = PotentialModel.zero()
    assert float(z.f(0.7)) == 0.0 and float(z.F(0.7)) == 0.0


def test_flow_multipliers():
    ch = cahn_hilliard_flow(points=8)
    np.testing.assert_allclose(ch.mobility_multiplier().array, ch.grid.k2_half)
    np.testing.assert_allclose(ch.linear_multiplier().array, ch.grid.k2_half + 100.0)
    ac = allen_cahn_flow(points=8)
    np.testing.assert_allclose(ac.mobility_multiplier().array, 1.0)


def test_energy_of_disk_against_analytic_quadrature():
    # |grad tanh(s)|^2 = (1 - tanh^2)^2 / (2 eps^2) for s = (1-r)/(sqrt2 eps)
    eps = 0.1

    def sampled(m):
        g = Grid.uniform(2, m)
        x, y = g.coordinates()
        u = np.tanh((1 - np.hypot(x - np.pi, y - np.pi)) / (math.sqrt(2) * eps))
        return g, u

    g_ref, u_ref = sampled(1024)
    oracle = g_ref.cell_volume * np.sum(0.5 * (1 - u_ref**2) ** 2 / (2 * eps**2)
                                        + (u_ref**2 - 1) ** 2 / (4 * eps**2))
    g, u = sampled(128)
    flow = FlowSpec("allen-cahn", PotentialModel.double_well(eps), g)
    assert energy("interpolation", flow, u) == pytest.approx(oracle, rel=1e-9)
    # the two spectral forms differ only through Nyquist modes, negligible here
    assert energy("projection", flow, u) == pytest.approx(energy("interpolation", flow, u), rel=1e-10)
    # the forward-difference energy is only first-order accurate in h^2
    assert energy("finite-difference", flow, u) == pytest.approx(oracle, rel=5e-3)


def test_finite_difference_energy_formula(rng):
    flow = allen_cahn_flow(points=8)
    u = rng.uniform(-1, 1, flow.grid.shape)
    h = flow.grid.mesh_size[0]
    grad = sum(np.sum(((np.roll(u, -1, a) - u) / h) ** 2) for a in range(2))
    expect = 0.5 * h * h * grad + h * h * np.sum((u**2 - 1) ** 2 / 0.04)
    assert energy(EnergyForm.FINITE_DIFFERENCE, flow, u) == pytest.approx(expect, rel=1e-14)
    flow3 = allen_cahn_flow(dim=3, points=8)
    with pytest.raises(UnsupportedEnergyForm):
        energy("finite-difference", flow3, np.zeros(flow3.grid.shape))
    with pytest.raises(UnsupportedEnergyForm):
        discrete_gradient("finite-difference", flow3, np.zeros(flow3.grid.shape))


def test_fd_laplacian_stencil():
    grid = Grid.uniform(1, 16)
    x = grid.coordinates()[0]
    h = grid.mesh_size[0]
    u = np.sin(3 * x)
    # eigenvalue of the 3-point stencil
    lam = -4 / h**2 * math.sin(3 * h / 2) ** 2
    np.testing.assert_allclose(fd_laplacian(grid, u), lam * u, atol=1e-12)


@pytest.mark.parametrize("form", ["interpolation", "projection", "finite-difference"])
def test_discrete_gradient_is_energy_derivative(rng, form):
    flow = cahn_hilliard_flow(points=16)
    u = 0.3 + 0.2 * rng.uniform(-1, 1, flow.grid.shape)
    v = rng.normal(size=flow.grid.shape)
    h = 1e-6
    fd = (energy(form, flow, u + h * v) - energy(form, flow, u - h * v)) / (2 * h)
    mu = discrete_gradient(form, flow, u)
    assert flow.grid.cell_volume * np.sum(mu * v) == pytest.approx(fd, rel=1e-7)


def test_variational_derivative_converges_with_grid():
    # smooth periodic data: mu on 64^2 and 128^2 agree at shared nodes
    def mu(m):
        g = Grid.uniform(2, m)
        x, y = g.coordinates()
        u = 0.8 * np.tanh(2 * np.sin(x) * np.cos(y))
        flow = FlowSpec("allen-cahn", PotentialModel.double_well(0.1), g)
        return variational_derivative(flow, Field(g, u)).values

    coarse, fine = mu(64), mu(128)[::2, ::2]
    assert np.max(np.abs(coarse - fine)) <= 1e-6 * np.max(np.abs(fine))


def test_projection_and_interpolation_forms_differ_at_nyquist():
    flow = allen_cahn_flow(dim=1, points=8)
    u = 0.5 * np.cos(4 * flow.grid.coordinates()[0])
    e_i = energy("interpolation", flow, u)
    e_p = energy("projection", flow, u)
    bulk = flow.grid.cell_volume * np.sum(flow.potential.F(u))
    assert e_i - bulk == pytest.approx(2 * (e_p - bulk), rel=1e-13)
