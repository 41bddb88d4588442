r"""Fourier-side operators on uniform periodic grids.

Everything downstream works with real slope functions sampled on a uniform
grid over a torus of circumference ``L``.  This module provides the grid
containers, generic Fourier multipliers, the smooth dyadic partition of unity
and the associated band projections

.. math::

    P_k f = \mathcal{F}^{-1}\left(\varphi_k(\xi)\hat f(\xi)\right),
    \qquad \varphi_k(\xi) = \varphi_0(2^{-k}\xi),

and the Poisson semigroup :math:`e^{-t|\nabla|}`.

The cutoff :math:`\varphi_0(\xi) = \chi(|\xi|) - \chi(2|\xi|)` is built from a
single smooth transition :math:`\chi` equal to 1 on [0, 1] and 0 on
[2, infinity), constructed with the standard exp(-1/s) mollifier.  The same
:math:`\chi` is reused for every smooth cutoff in the package.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Grid",
    "GridFunction",
    "MultiplierSpec",
    "DyadicBand",
    "smooth_transition",
    "phi_0",
    "phi_band",
    "phi_low",
    "phi_tilde",
    "apply_multiplier",
    "lp_project",
    "lp_low_project",
    "poisson_semigroup",
    "admissible_bands",
    "derivative",
    "halfwave",
    "mean_zero",
    "evaluate_offgrid",
]


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid: ``n_points`` samples on a torus of length ``period``."""

    n_points: int
    period: float = 16.0

    def __post_init__(self):
        n = self.n_points
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError("n_points must be a power of two, at least 16")
        if not (self.period > 0):
            raise ValueError("period must be positive")

    @property
    def spacing(self) -> float:
        return self.period / self.n_points

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_points) * self.spacing

    @property
    def frequencies(self) -> np.ndarray:
        """Nonnegative frequencies 2*pi*m/L of the real transform, m = 0..n/2."""
        return 2.0 * np.pi * np.arange(self.n_points // 2 + 1) / self.period

    @property
    def freq_min(self) -> float:
        return 2.0 * np.pi / self.period

    @property
    def freq_max(self) -> float:
        return np.pi * self.n_points / self.period


@dataclass
class GridFunction:
    """Real function sampled on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError("values length must equal grid.n_points")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite values")

    # small arithmetic conveniences; all return fresh GridFunctions
    def __add__(self, other):
        return GridFunction(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2(self) -> float:
        """Continuum L2 norm: sqrt(dx * sum f^2)."""
        return float(np.sqrt(self.grid.spacing * np.sum(self.values ** 2)))

    def hat(self) -> np.ndarray:
        return np.fft.rfft(self.values)


def _vals(other):
    return other.values if isinstance(other, GridFunction) else other


@dataclass(frozen=True)
class MultiplierSpec:
    """Fourier multiplier: a symbol ``m(xi)`` plus its reality symmetry.

    ``symmetry`` is one of ``"real_even"``, ``"imag_odd"``, ``"general"``;
    the first two guarantee a real output for real input.
    """

    symbol: Callable[[np.ndarray], np.ndarray]
    symmetry: str = "real_even"


@dataclass(frozen=True)
class DyadicBand:
    """Dyadic frequency band: cutoff supported in 2^{k-1} <= |xi| <= 2^{k+1}."""

    k: int

    @property
    def support(self) -> tuple:
        return (2.0 ** (self.k - 1), 2.0 ** (self.k + 1))


# ---------------------------------------------------------------------------
# smooth cutoffs
# ---------------------------------------------------------------------------

def _bump(u):
    """exp(-1/u) extended by zero for u <= 0; the mollifier primitive."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 1e-300
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def smooth_transition(r):
    r"""Smooth :math:`\chi(r)`: 1 for r <= 1, 0 for r >= 2, strictly monotone between."""
    r = np.abs(np.asarray(r, dtype=float))
    a = _bump(2.0 - r)
    b = _bump(r - 1.0)
    return a / (a + b + 1e-300) * (r < 2.0)


def phi_0(xi):
    r""":math:`\varphi_0(\xi)=\chi(|\xi|)-\chi(2|\xi|)`, supported in 1/2 <= |xi| <= 2."""
    axi = np.abs(np.asarray(xi, dtype=float))
    return smooth_transition(axi) - smooth_transition(2.0 * axi)


def phi_band(k: int, xi):
    r""":math:`\varphi_k(\xi)=\varphi_0(2^{-k}\xi)`."""
    return phi_0(np.asarray(xi, dtype=float) * 2.0 ** (-k))


def phi_low(k: int, xi):
    r""":math:`\varphi_{\leq k}(\xi)=\chi(2^{-k}|\xi|)=\sum_{k'\leq k}\varphi_{k'}(\xi)`."""
    return smooth_transition(np.abs(np.asarray(xi, dtype=float)) * 2.0 ** (-k))


def phi_tilde(k: int, xi):
    r"""Fattened cutoff :math:`\widetilde\varphi_k=\sum_{|a|\leq 2}\varphi_{k+a}`.

    Equals 1 on the support of :math:`\varphi_k`; telescopes to
    :math:`\varphi_{\leq k+2}-\varphi_{\leq k-3}`.
    """
    return phi_low(k + 2, xi) - phi_low(k - 3, xi)


# ---------------------------------------------------------------------------
# multiplier application
# ---------------------------------------------------------------------------

def apply_multiplier(f: GridFunction, m: MultiplierSpec) -> GridFunction:
    """Apply a Fourier multiplier through the real transform.

    The real-transform path enforces reality automatically except at the
    zero and Nyquist bins, where the symbol must be real; an imaginary
    residue above 1e-10 * sup|f| there signals a symmetry violation.
    """
    if not np.all(np.isfinite(f.values)):
        raise ValueError("non-finite input values")
    fhat = np.fft.rfft(f.values)
    xi = f.grid.frequencies
    sym = np.asarray(m.symbol(xi), dtype=complex)
    ghat = sym * fhat
    tol = 1e-10 * max(f.sup(), 1e-300)
    for idx in (0, len(xi) - 1):
        if abs(ghat[idx].imag) > tol:
            raise ValueError("multiplier symmetry violation at a self-conjugate bin")
        ghat[idx] = ghat[idx].real
    return GridFunction(f.grid, np.fft.irfft(ghat, n=f.grid.n_points))


def lp_project(f: GridFunction, band: DyadicBand) -> GridFunction:
    """Littlewood-Paley projection P_k f onto the dyadic band ``band``."""
    if not _band_admissible(band.k, f.grid):
        raise ValueError(f"band k={band.k} outside the resolved frequency range")
    return apply_multiplier(f, MultiplierSpec(lambda xi: phi_band(band.k, xi)))


def lp_low_project(f: GridFunction, k: int) -> GridFunction:
    r"""Low-frequency projection :math:`P_{\leq k}f` with cutoff :math:`\varphi_{\leq k}`."""
    return apply_multiplier(f, MultiplierSpec(lambda xi: phi_low(k, xi)))


def poisson_semigroup(f: GridFunction, t: float) -> GridFunction:
    r"""Poisson semigroup :math:`e^{-t|\nabla|}f`."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return GridFunction(f.grid, f.values.copy())
    return apply_multiplier(f, MultiplierSpec(lambda xi: np.exp(-t * np.abs(xi))))


def derivative(f: GridFunction) -> GridFunction:
    """Spectral derivative d/dx.

    The self-conjugate Nyquist mode (pure cosine on an even grid) has no
    well-defined real derivative; the odd symbol annihilates it, the usual
    convention for spectral differentiation.
    """
    cut = f.grid.freq_max * (1.0 - 1e-12)
    return apply_multiplier(
        f, MultiplierSpec(lambda xi: 1j * xi * (np.abs(xi) < cut), "imag_odd")
    )


def halfwave(f: GridFunction) -> GridFunction:
    r"""The operator :math:`|\nabla|` (Fourier symbol :math:`|\xi|`)."""
    return apply_multiplier(f, MultiplierSpec(lambda xi: np.abs(xi)))


def mean_zero(f: GridFunction) -> GridFunction:
    return GridFunction(f.grid, f.values - f.mean())


def _band_admissible(k: int, g: Grid) -> bool:
    lo, hi = 2.0 ** (k - 1), 2.0 ** (k + 1)
    return lo < g.freq_max * (1.0 - 1e-12) and hi > g.freq_min * (1.0 + 1e-12)


def admissible_bands(g: Grid) -> list:
    """All dyadic bands whose cutoff support meets the resolved range of ``g``."""
    return [DyadicBand(k) for k in range(-64, 65) if _band_admissible(k, g)]


def evaluate_offgrid(f: GridFunction, points: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``f`` at arbitrary points.

    Exact for band-limited data; cost O(n * len(points)) via direct synthesis,
    so keep ``points`` modest or use the FFT-upsampling path in callers.
    """
    fhat = np.fft.rfft(f.values) / f.grid.n_points
    xi = f.grid.frequencies
    pts = np.asarray(points, dtype=float)
    # Nyquist bin represents cos only; halve to split symmetrically.
    coeff = 2.0 * fhat
    coeff[0] *= 0.5
    if f.grid.n_points % 2 == 0:
        coeff[-1] *= 0.5
    phases = np.exp(1j * np.outer(pts, xi))
    return (phases @ coeff).real
