r"""Corner-type slope initial data and hypothesis measurements.

A corner at ``a`` is a jump of the slope: right limit ``amplitude_right``,
left limit ``-amplitude_left``.  On the torus every corner profile is a
two-level function of the wrapped signed distance ``d`` to ``a``,

.. math::

    h_0(a + d) = c_- + c_+\,\sigma(d),\qquad
    c_+ = \tfrac{a_r + a_l}{2},\quad c_- = \tfrac{a_r - a_l}{2},

which implicitly carries the return jump at the antipode ``a + L/2``.  The
shape function ``sigma`` is the sharp sign, a tanh mollification, or the
log-oscillating seed sign(d) sin(log|d| / scale) of discretely self-similar
solutions.

Asymmetric corners have nonzero mean ``c_-``; a single smooth bump (the same
exp(-1/s) mollifier as the frequency cutoffs) centered at the point farthest
from all corners restores the zero-mean constraint of the periodic problem.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectral import Grid, GridFunction

__all__ = [
    "CornerSpec",
    "DataReport",
    "build_corner",
    "superpose",
    "corner_profile",
    "measure_hypotheses",
]

MIN_SEPARATION_FRACTION = 2.0 ** -6

_PROFILES = ("sharp_sign", "mollified_sign", "log_oscillating")


@dataclass(frozen=True)
class CornerSpec:
    """One corner of the initial slope."""

    location: float
    amplitude_left: float
    amplitude_right: float
    profile: str = "sharp_sign"
    width: Optional[float] = None
    scale: float = 1.0
    evenness_exponent: float = 2.0

    def __post_init__(self):
        if abs(self.amplitude_left) + abs(self.amplitude_right) == 0:
            raise ValueError("corner amplitudes cannot both vanish")
        if self.profile not in _PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.profile == "mollified_sign" and not (self.width and self.width > 0):
            raise ValueError("mollified_sign requires a positive width")
        if self.profile == "log_oscillating" and not self.scale > 0:
            raise ValueError("log_oscillating requires a positive scale")
        if not 1.0 <= self.evenness_exponent < np.inf:
            raise ValueError("evenness_exponent must lie in [1, inf)")


@dataclass(frozen=True)
class DataReport:
    """Hypothesis quantities of the initial data."""

    epsilon: float
    evenness_lp: float

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and np.isfinite(self.evenness_lp)):
            raise ValueError("report entries must be finite")
        if self.epsilon < 0 or self.evenness_lp < 0:
            raise ValueError("report entries must be nonnegative")


def _wrapped_distance(x, a, L):
    """Signed distance from a to x along the torus, in (-L/2, L/2]."""
    d = np.mod(x - a + L / 2, L) - L / 2
    return np.where(d == -L / 2, L / 2, d)


def _sigma(spec: CornerSpec, d: np.ndarray, g: Grid) -> np.ndarray:
    L = g.period
    if spec.profile == "sharp_sign":
        out = np.sign(d)
    elif spec.profile == "mollified_sign":
        if spec.width < 2 * g.spacing:
            raise ValueError("mollification width under-resolved (need >= 2 spacings)")
        out = np.tanh(d / spec.width)
    else:  # log_oscillating
        out = np.zeros_like(d)
        nz = d != 0
        out[nz] = np.sign(d[nz]) * np.sin(np.log(np.abs(d[nz])) / spec.scale)
    # midpoint convention at both jumps: the sample at the corner and at the
    # antipodal return jump sit halfway between the one-sided limits
    out = np.where(np.abs(np.abs(d) - L / 2) < 1e-12 * L, 0.0, out)
    return out


def corner_profile(spec: CornerSpec, g: Grid) -> np.ndarray:
    """Raw two-level corner profile (no mean correction)."""
    d = _wrapped_distance(g.x, spec.location, g.period)
    c_plus = 0.5 * (spec.amplitude_right + spec.amplitude_left)
    c_minus = 0.5 * (spec.amplitude_right - spec.amplitude_left)
    return c_minus + c_plus * _sigma(spec, d, g)


def _unit_bump(g: Grid, center: float, width: float) -> np.ndarray:
    u = _wrapped_distance(g.x, center, g.period) / width
    vals = np.zeros(g.n_points)
    inside = np.abs(u) < 1.0
    vals[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return vals


def _check_separation(corners, L):
    locs = [c.location for c in corners]
    for i in range(len(locs)):
        for j in range(i + 1, len(locs)):
            d = abs(_wrapped_distance(np.array([locs[i]]), locs[j], L)[0])
            if d < MIN_SEPARATION_FRACTION * L:
                raise ValueError(
                    f"corners at {locs[i]} and {locs[j]} closer than {MIN_SEPARATION_FRACTION}*L"
                )


def _ramp(corners, g: Grid, total_mean: float) -> np.ndarray:
    """Smooth bump cancelling the mean, centered far from every corner."""
    if total_mean == 0.0:
        return np.zeros(g.n_points)
    L = g.period
    # farthest grid point from all corners and their antipodal return jumps
    jumps = []
    for c in corners:
        jumps.append(c.location)
        jumps.append(np.mod(c.location + L / 2, L))
    dist = np.min(
        np.abs(np.stack([_wrapped_distance(g.x, a, L) for a in jumps])), axis=0
    )
    i_far = int(np.argmax(dist))
    width = 0.9 * dist[i_far]
    bump = _unit_bump(g, g.x[i_far], width)
    return -(total_mean / np.mean(bump)) * bump


def superpose(corners, g: Grid) -> GridFunction:
    """Sum of corner profiles plus one shared mean-zero ramp."""
    if len(corners) == 0:
        return GridFunction(g, np.zeros(g.n_points))
    _check_separation(corners, g.period)
    total = np.zeros(g.n_points)
    for spec in corners:
        total += corner_profile(spec, g)
    total += _ramp(corners, g, float(np.mean(total)))
    return GridFunction(g, total)


def build_corner(spec: CornerSpec, g: Grid) -> GridFunction:
    """Single-corner slope, mean-adjusted to zero."""
    return superpose([spec], g)


def _component_derivative_sup(vals: np.ndarray, a: float, g: Grid) -> float:
    """sup |(x-a) h'(x)| by one-sided differences, excluding jump cells."""
    L = g.period
    dx = g.spacing
    d = _wrapped_distance(g.x, a, L)
    # forward difference lives on the cell [x_i, x_{i+1}]
    diff = (np.roll(vals, -1) - vals) / dx
    cell_mid = d + 0.5 * dx
    near_jump = (np.abs(cell_mid) < 1.5 * dx) | (np.abs(np.abs(cell_mid) - L / 2) < 1.5 * dx)
    weight = np.abs(cell_mid)
    return float(np.max(np.where(near_jump, 0.0, weight * np.abs(diff))))


def measure_hypotheses(h0: GridFunction, corners) -> DataReport:
    r"""Measure the smallness and evenness hypothesis quantities.

    epsilon = sum_j ||h_{j,0}||_inf + ||(x - a_j) h_{j,0}'||_inf over the
    per-corner components (each carrying an equal share of the mean ramp);
    evenness_lp = sum_j ||h_0(a_j + x) + h_0(a_j - x)||_{L^p(0, L/2)}.
    """
    g = h0.grid
    if len(corners) == 0:
        return DataReport(0.0, 0.0)
    _check_separation(corners, g.period)
    profiles = [corner_profile(spec, g) for spec in corners]
    ramp = h0.values - sum(profiles)
    eps = 0.0
    for spec, prof in zip(corners, profiles):
        comp = prof + ramp / len(corners)
        eps += float(np.max(np.abs(comp)))
        eps += _component_derivative_sup(comp, spec.location, g)
    evenness = 0.0
    n = g.n_points
    for spec in corners:
        i0 = int(round(spec.location / g.spacing)) % n
        m = np.arange(1, n // 2)
        sym = h0.values[(i0 + m) % n] + h0.values[(i0 - m) % n]
        p = spec.evenness_exponent
        evenness += float(np.sum(np.abs(sym) ** p) * g.spacing) ** (1.0 / p)
    return DataReport(eps, evenness)
