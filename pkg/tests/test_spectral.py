"""Tests for the Fourier-side operators."""

import numpy as np
import pytest

from muskat.spectral import (
    Grid,
    GridFunction,
    MultiplierSpec,
    DyadicBand,
    admissible_bands,
    apply_multiplier,
    derivative,
    evaluate_offgrid,
    lp_project,
    phi_0,
    phi_band,
    phi_low,
    phi_tilde,
    poisson_semigroup,
    smooth_transition,
)


def make(n=256, L=16.0, f=None):
    g = Grid(n, L)
    vals = f(g.x) if f is not None else np.zeros(n)
    return GridFunction(g, vals)


# --- containers ------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(15)
    with pytest.raises(ValueError):
        Grid(24)
    with pytest.raises(ValueError):
        Grid(64, -1.0)
    g = Grid(64, 16.0)
    assert g.spacing == 0.25


def test_gridfunction_validation():
    g = Grid(16)
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros(8))
    with pytest.raises(ValueError):
        GridFunction(g, np.full(16, np.nan))


# --- cutoffs ---------------------------------------------------------------

def test_transition_plateaus():
    r = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
    chi = smooth_transition(r)
    assert np.all(chi[:3] == 1.0)
    assert np.all(chi[3:] == 0.0)
    mid = smooth_transition(np.linspace(1.05, 1.95, 50))
    assert np.all(np.diff(mid) < 0)


def test_phi0_support_and_center():
    assert phi_0(1.0) == 1.0
    assert phi_0(0.5) == 0.0
    assert phi_0(2.0) == 0.0
    assert phi_0(-1.0) == 1.0


def test_dyadic_partition_telescopes():
    xi = np.concatenate([np.geomspace(1e-3, 1e3, 400), -np.geomspace(1e-3, 1e3, 7)])
    total = sum(phi_band(k, xi) for k in range(-20, 20))
    assert np.allclose(total, 1.0, atol=1e-14)
    # phi_low is the cumulative sum of bands
    acc = sum(phi_band(k, xi) for k in range(-30, 4))
    assert np.allclose(acc, phi_low(3, xi), atol=1e-14)


def test_phi_tilde_covers_band():
    xi = np.geomspace(0.01, 100, 500)
    for k in (-2, 0, 3):
        on_band = phi_band(k, xi) > 0
        assert np.all(phi_tilde(k, xi)[on_band] == pytest.approx(1.0, abs=1e-14))


# --- apply_multiplier examples ----------------------------------------------

def test_identity_multiplier():
    rng = np.random.default_rng(7)
    f = make(128, f=lambda x: 0.0 * x)
    f.values[:] = rng.standard_normal(128)
    out = apply_multiplier(f, MultiplierSpec(lambda xi: np.ones_like(xi)))
    assert np.allclose(out.values, f.values, atol=1e-14)


def test_derivative_of_cosine():
    L = 16.0
    k0 = 2 * np.pi / L
    f = make(256, L, lambda x: np.cos(k0 * x))
    out = derivative(f)
    assert np.allclose(out.values, -k0 * np.sin(k0 * f.grid.x), atol=1e-12)


def test_semigroup_eigenmode():
    L = 16.0
    k0 = 2 * np.pi / L
    f = make(256, L, lambda x: np.cos(k0 * x))
    out = poisson_semigroup(f, 1.0)
    assert np.allclose(out.values, np.exp(-k0) * np.cos(k0 * f.grid.x), rtol=1e-12)


def test_symmetry_violation_detected():
    f = make(64, 16.0, lambda x: np.cos(2 * np.pi * 32 * x / 16.0))  # Nyquist mode
    with pytest.raises(ValueError):
        apply_multiplier(f, MultiplierSpec(lambda xi: 1j * np.ones_like(xi)))


# --- lp_project examples -----------------------------------------------------

def test_project_constant_is_zero():
    f = make(128, f=lambda x: np.ones_like(x) * 3.0)
    for band in admissible_bands(f.grid):
        assert lp_project(f, band).sup() < 1e-14


def test_project_band_center_mode():
    # |xi| = 2^k exactly: cutoff equals 1 there
    L = 2 * np.pi
    f = make(64, L, lambda x: np.sin(4.0 * x))  # xi = 4 = 2^2
    out = lp_project(f, DyadicBand(2))
    assert np.allclose(out.values, f.values, atol=1e-12)


def test_disjoint_band_supports():
    rng = np.random.default_rng(3)
    f = make(256, f=lambda x: 0.0 * x)
    f.values[:] = rng.standard_normal(256)
    p1 = lp_project(f, DyadicBand(0))
    p2 = lp_project(p1, DyadicBand(2))
    assert p2.sup() < 1e-13 * max(f.sup(), 1.0)


def test_inadmissible_band_rejected():
    f = make(64)
    with pytest.raises(ValueError):
        lp_project(f, DyadicBand(30))


# --- poisson_semigroup -------------------------------------------------------

def test_semigroup_t0_identity_and_negative():
    f = make(64, f=lambda x: np.sin(2 * np.pi * x / 16.0))
    assert np.array_equal(poisson_semigroup(f, 0.0).values, f.values)
    with pytest.raises(ValueError):
        poisson_semigroup(f, -0.1)


def test_semigroup_property():
    rng = np.random.default_rng(11)
    f = make(256, f=lambda x: 0.0 * x)
    f.values[:] = rng.standard_normal(256)
    a = poisson_semigroup(poisson_semigroup(f, 0.3), 0.45)
    b = poisson_semigroup(f, 0.75)
    assert np.allclose(a.values, b.values, rtol=1e-12, atol=1e-12)


def poisson_kernel_periodized(x, t, L):
    r"""Closed form of the periodized Poisson kernel on a torus of length L:
    (1/L) sinh(2 pi t/L) / (cosh(2 pi t/L) - cos(2 pi x/L))."""
    u = 2 * np.pi / L
    return (1.0 / L) * np.sinh(u * t) / (np.cosh(u * t) - np.cos(u * x))


@pytest.mark.parametrize("t", [0.05, 0.1, 0.5])
def test_semigroup_matches_kernel_convolution(t):
    # sharp sign-corner slope at a = 0 on the torus, mean zero by the
    # antipodal return jump
    L = 16.0
    n = 1024
    g = Grid(n, L)
    x = g.x
    d = np.where(x > L / 2, x - L, x)  # wrapped signed distance to 0
    vals = np.sign(d)
    vals[0] = 0.0
    f = GridFunction(g, vals)
    out = poisson_semigroup(f, t)

    # oracle: resample by exact zero-padding, then trapezoid convolution with
    # the closed-form periodized kernel on a dense grid
    dense = 2 ** 17
    fhat = np.fft.rfft(f.values)
    pad = np.zeros(dense // 2 + 1, dtype=complex)
    pad[: len(fhat)] = fhat
    pad[len(fhat) - 1] *= 0.5  # split the Nyquist bin symmetrically
    f_dense = np.fft.irfft(pad, n=dense) * (dense / n)
    xd = np.arange(dense) * (L / dense)
    oracle = np.empty(n)
    for i in range(n):
        ker = poisson_kernel_periodized(x[i] - xd, t, L)
        oracle[i] = np.sum(ker * f_dense) * (L / dense)
    err = np.max(np.abs(out.values - oracle)) / np.max(np.abs(oracle))
    assert err < 1e-6


# --- admissible_bands ---------------------------------------------------------

def test_bands_n16_unit_circle():
    ks = [b.k for b in admissible_bands(Grid(16, 2 * np.pi))]
    assert ks == [0, 1, 2, 3]


def test_bands_doubling_rules():
    base = [b.k for b in admissible_bands(Grid(16, 2 * np.pi))]
    finer = [b.k for b in admissible_bands(Grid(32, 2 * np.pi))]
    assert finer == base + [max(base) + 1]
    longer = [b.k for b in admissible_bands(Grid(16, 4 * np.pi))]
    assert longer == [k - 1 for k in base]


# --- invariants ---------------------------------------------------------------

def test_parseval():
    rng = np.random.default_rng(5)
    g = Grid(512, 16.0)
    vals = rng.standard_normal(512)
    f = GridFunction(g, vals)
    phys = np.sum(vals ** 2) * g.spacing
    fhat = np.fft.rfft(vals)
    w = np.full(len(fhat), 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    spec = np.sum(w * np.abs(fhat) ** 2) * g.spacing / g.n_points
    assert phys == pytest.approx(spec, rel=1e-12)


def test_lp_resolution_of_identity():
    rng = np.random.default_rng(13)
    g = Grid(512, 16.0)
    f = GridFunction(g, rng.standard_normal(512))
    total = np.zeros(512)
    for band in admissible_bands(g):
        total += lp_project(f, band).values
    target = f.values - f.mean()
    assert np.max(np.abs(total - target)) <= 1e-10 * f.sup()


def test_semigroup_contraction():
    rng = np.random.default_rng(17)
    g = Grid(256, 16.0)
    f = GridFunction(g, rng.standard_normal(256))
    for t in (0.01, 0.1, 1.0, 10.0):
        assert poisson_semigroup(f, t).sup() <= f.sup() + 1e-13


def test_projection_commutes_with_semigroup():
    rng = np.random.default_rng(19)
    g = Grid(256, 16.0)
    f = GridFunction(g, rng.standard_normal(256))
    band = DyadicBand(1)
    a = poisson_semigroup(lp_project(f, band), 0.2)
    b = lp_project(poisson_semigroup(f, 0.2), band)
    assert np.allclose(a.values, b.values, rtol=1e-12, atol=1e-12)


def test_offgrid_evaluation_matches_grid():
    g = Grid(64, 16.0)
    f = GridFunction(g, np.cos(2 * np.pi * 3 * g.x / 16.0) + 0.3 * np.sin(2 * np.pi * g.x / 16.0))
    out = evaluate_offgrid(f, g.x)
    assert np.allclose(out, f.values, atol=1e-12)
    pts = np.array([0.123, 5.4321, 15.9])
    exact = np.cos(2 * np.pi * 3 * pts / 16.0) + 0.3 * np.sin(2 * np.pi * pts / 16.0)
    assert np.allclose(evaluate_offgrid(f, pts), exact, atol=1e-12)
