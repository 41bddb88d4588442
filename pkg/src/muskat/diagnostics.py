r"""Discrete norms and physical observables of computed trajectories.

Trajectories are sequences of ``(t, GridFunction)`` snapshots.  Three
band-weighted norms quantify smoothing and perturbation size:

.. math::

    \|F\|_{\mathrm{fe}} &= \sup_t\Big\{\|F\|_\infty
        + \sup_k (2^k t)^{1/10}\|P_k F\|_\infty
        + \|(x-a)\partial_x F\|_\infty
        + \sup_k (2^k t)^{1/10}\|P_k((x-a)\partial_x F)\|_\infty\Big\},\\
    \|F\|_{\mathrm{pert}} &= \sup_{t,k} 2^{k/2}
        \max\{2^k t, (2^k t)^{-1}\}^{1/10}\|P_k F\|_{L^2},\\
    \|F\|_{\mathrm{rhs}} &= \sup_{t,k} 2^{k/2}(2^k t)^{-1/10}\|P_k F\|_{L^2}.

The first ("z1") is finite on free-evolution-like parts, the second ("z2")
on the perturbation part only, the third ("n") measures forcing terms.
Physical observables: sub-grid corner tracking from the extremum of
:math:`\partial_x h`, the displacement law :math:`\delta(t) = c\,t\log(2/t)`,
and self-similar collapse of rescaled profiles :math:`h(t, a + t y)`.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .spectral import (
    Grid,
    GridFunction,
    admissible_bands,
    derivative,
    lp_project,
)

__all__ = [
    "NormReport",
    "CornerTrack",
    "z1_norm",
    "z2_norm",
    "n_norm",
    "decay_fit",
    "corner_location",
    "track_corners",
    "self_similar_collapse",
]

_WRAP = lambda d, L: -((L / 2.0 - d) % L) + L / 2.0


# ---------------------------------------------------------------------------
# norm reports
# ---------------------------------------------------------------------------

@dataclass
class NormReport:
    """Band-resolved norm table for one trajectory.

    ``l2_entries[i, b]`` is ``2^{k/2} * weight * ||P_k F(t_i)||_L2`` and
    ``sup_entries[i, b]`` is ``weight * ||P_k F(t_i)||_inf`` with the weight
    of the requested ``kind``; ``raw_sup``/``raw_l2`` keep the unweighted
    band norms for decay fitting.  For kind "z1" the per-time columns
    ``plain_sup`` (``||F||_inf``) and ``xdx_sup`` (the corner-weighted
    derivative) enter the supremum as well.
    """

    kind: str
    times: np.ndarray
    band_ks: np.ndarray
    l2_entries: np.ndarray
    sup_entries: np.ndarray
    raw_l2: np.ndarray
    raw_sup: np.ndarray
    plain_sup: np.ndarray
    xdx_sup: np.ndarray
    xdx_entries: np.ndarray
    supremum: float = field(init=False)

    def __post_init__(self):
        if self.kind not in ("z1", "z2", "n"):
            raise ValueError("kind must be 'z1', 'z2' or 'n'")
        for name in ("l2_entries", "sup_entries", "raw_l2", "raw_sup",
                     "plain_sup", "xdx_sup", "xdx_entries"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and nonnegative")
            setattr(self, name, arr)
        if self.kind == "z1":
            per_time = (
                self.plain_sup
                + _row_max(self.sup_entries)
                + self.xdx_sup
                + _row_max(self.xdx_entries)
            )
            self.supremum = float(np.max(per_time)) if per_time.size else 0.0
        else:
            self.supremum = (
                float(np.max(self.l2_entries)) if self.l2_entries.size else 0.0
            )

    def argmax_entry(self):
        """(t, k) at which the largest band entry sits; flags, e.g., an
        early-time divergence of the perturbation weights."""
        entries = self.sup_entries if self.kind == "z1" else self.l2_entries
        if entries.size == 0:
            return None
        i, b = np.unravel_index(np.argmax(entries), entries.shape)
        return float(self.times[i]), int(self.band_ks[b])


def _row_max(arr: np.ndarray) -> np.ndarray:
    if arr.size == 0:
        return np.zeros(arr.shape[0])
    return np.max(arr, axis=1)


def _weight(kind: str, kt: float) -> float:
    if kind == "z1":
        return kt**0.1
    if kind == "z2":
        return max(kt, 1.0 / kt) ** 0.1
    return kt**-0.1


def _xdx_values(f: GridFunction, a: float, t: float) -> np.ndarray:
    """(x - a) d/dx f by one-sided differences, on the corner's half-torus.

    One-sided differences keep a jump's derivative confined to its own cell
    (a spectral derivative would ring globally); the two cells straddling
    the corner are excluded at t = 0 only, where the sharp jump makes them a
    grid artifact.  The observable is restricted to |x - a| <= period / 4:
    the antipodal region carries the torus closure (return jump and mean
    ramp), which has no analogue for a single corner on the line.
    """
    grid = f.grid
    dx = grid.spacing
    d = _WRAP(grid.x + 0.5 * dx - a, grid.period)  # cell midpoints
    fd = (np.roll(f.values, -1) - f.values) / dx
    vals = d * fd
    if t == 0.0:
        vals[np.abs(d) <= dx] = 0.0
    vals[np.abs(d) > grid.period / 4.0] = 0.0
    return vals


def _report(snapshots, kind: str, a: float = None, bands=None) -> NormReport:
    snaps = [(float(t), f) for t, f in snapshots]
    if not snaps:
        raise ValueError("at least one snapshot required")
    grid = snaps[0][1].grid
    if bands is None:
        bands = admissible_bands(grid)
    ks = np.array([b.k for b in bands])
    nt, nb = len(snaps), len(bands)
    l2e = np.zeros((nt, nb))
    supe = np.zeros((nt, nb))
    rl2 = np.zeros((nt, nb))
    rsup = np.zeros((nt, nb))
    plain = np.zeros(nt)
    xsup = np.zeros(nt)
    xent = np.zeros((nt, nb))
    times = np.array([t for t, _ in snaps])
    for i, (t, f) in enumerate(snaps):
        if kind == "z1":
            plain[i] = f.sup()
            xdx = GridFunction(grid, _xdx_values(f, a, t))
            xsup[i] = xdx.sup()
        for b, band in enumerate(bands):
            pf = lp_project(f, band)
            rl2[i, b] = pf.l2()
            rsup[i, b] = pf.sup()
            if t <= 0:
                continue  # weighted entries need t > 0
            kt = 2.0**band.k * t
            w = _weight(kind, kt)
            l2e[i, b] = 2.0 ** (band.k / 2.0) * w * rl2[i, b]
            supe[i, b] = w * rsup[i, b]
            if kind == "z1":
                xent[i, b] = w * lp_project(xdx, band).sup()
    return NormReport(kind, times, ks, l2e, supe, rl2, rsup, plain, xsup, xent)


def z1_norm(snapshots, a: float, bands=None) -> NormReport:
    """Free-evolution-side report about the corner at ``a``."""
    return _report(snapshots, "z1", a, bands)


def z2_norm(snapshots, bands=None) -> NormReport:
    """Perturbation-side report (finite only on the forced part)."""
    return _report(snapshots, "z2", bands=bands)


def n_norm(snapshots, bands=None) -> NormReport:
    """Forcing-side report with the smoothing-loss weight."""
    return _report(snapshots, "n", bands=bands)


def decay_fit(report: NormReport, min_samples: int = 4, floor: float = 1e-14) -> dict:
    """Per-band least-squares slope of log ||P_k F(t)||_inf vs log(2^k t).

    Only the smoothing side 2^k t > 1 enters; bands with fewer than
    ``min_samples`` usable snapshots are skipped, and no usable band at all
    is an error (e.g. a constant trajectory has no band content).
    """
    slopes = {}
    for b, k in enumerate(report.band_ks):
        kt = 2.0**k * report.times
        y = report.raw_sup[:, b]
        mask = (kt > 1.0) & (y > floor)
        if np.count_nonzero(mask) < min_samples:
            continue
        slope = np.polyfit(np.log(kt[mask]), np.log(y[mask]), 1)[0]
        slopes[int(k)] = float(slope)
    if not slopes:
        raise ValueError(
            f"insufficient samples: no band has {min_samples} usable snapshots"
        )
    return slopes


# ---------------------------------------------------------------------------
# corner tracking
# ---------------------------------------------------------------------------

def corner_location(h: GridFunction, a: float, window: float = 1.0) -> float:
    """Sub-grid corner position: extremum of d/dx h near ``a``.

    The slope profile of a desingularized corner peaks at the corner; the
    discrete maximizer of |dh/dx| inside the window is refined by a
    quadratic fit through its two neighbors.  A peak that fails to stand
    out from the window median signals a fully dissipated corner.
    """
    grid = h.grid
    dh = derivative(h).values
    d = _WRAP(grid.x - a, grid.period)
    idx = np.flatnonzero(np.abs(d) <= window)
    if idx.size < 5:
        raise ValueError("window too small for the grid")
    mags = np.abs(dh[idx])
    peak_pos = int(np.argmax(mags))
    peak = mags[peak_pos]
    background = float(np.median(mags))
    if not peak > 2.0 * background:
        raise ValueError("no clear extremum: corner fully dissipated")
    i = idx[peak_pos]
    n = grid.n_points
    s = math.copysign(1.0, dh[i])
    ym, y0, yp = s * dh[(i - 1) % n], s * dh[i], s * dh[(i + 1) % n]
    denom = ym - 2.0 * y0 + yp
    shift = 0.0 if denom == 0.0 else 0.5 * (ym - yp) / denom
    shift = float(np.clip(shift, -0.5, 0.5))
    pos = grid.x[i] + shift * grid.spacing
    return float(a + _WRAP(pos - a, grid.period))


@dataclass
class CornerTrack:
    """Tracked corner positions over time and the fitted displacement law.

    ``positions[i, j]`` is corner j at ``times[i]``;
    ``displacements = positions - reference``; ``fit_coefficients[j]`` is the
    least-squares c in delta_j(t) = c t log(2/t).
    """

    times: np.ndarray
    reference: np.ndarray
    positions: np.ndarray
    displacements: np.ndarray = field(init=False)
    fit_coefficients: np.ndarray = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.reference = np.asarray(self.reference, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.shape != (len(self.times), len(self.reference)):
            raise ValueError("positions must be (n_times, n_corners)")
        self.displacements = self.positions - self.reference[None, :]
        early = self.times <= 0.5
        if np.any(np.abs(self.displacements[early]) > 1.0):
            raise ValueError("tracked corner left its initial neighborhood")
        phi = self.times * np.log(2.0 / np.maximum(self.times, 1e-300))
        denom = float(np.dot(phi, phi))
        if denom == 0.0:
            self.fit_coefficients = np.zeros(len(self.reference))
        else:
            self.fit_coefficients = self.displacements.T @ phi / denom


def track_corners(snapshots, a_list, window: float = 1.0) -> CornerTrack:
    """Locate every corner in every snapshot (snapshots need t > 0)."""
    times, rows = [], []
    for t, f in snapshots:
        if t <= 0:
            raise ValueError("corner tracking requires t > 0 snapshots")
        times.append(float(t))
        rows.append([corner_location(f, a, window) for a in a_list])
    return CornerTrack(np.array(times), np.asarray(a_list, float), np.array(rows))


# ---------------------------------------------------------------------------
# self-similar collapse
# ---------------------------------------------------------------------------

def _spline_sample(f: GridFunction, points: np.ndarray) -> np.ndarray:
    """Periodic cubic-spline sampling (local, so a far-away seam or second
    corner cannot ring into the sampling window)."""
    grid = f.grid
    xs = np.concatenate([grid.x, [grid.period]])
    ys = np.concatenate([f.values, [f.values[0]]])
    return CubicSpline(xs, ys, bc_type="periodic")(np.mod(points, grid.period))


def self_similar_collapse(
    snapshots, a: float, eps: float, y_max: float = 3.0, n_y: int = 201
) -> float:
    r"""Sup-mismatch of the rescaled profiles :math:`h(t, a + t y)` over the
    window :math:`|y| \leq y_{\max}`, normalized by ``eps``.

    An exactly self-similar family collapses to a single profile; the metric
    is the largest pairwise sup-distance over all snapshot pairs, divided by
    ``eps``.
    """
    snaps = [(float(t), f) for t, f in snapshots if float(t) > 0]
    if len(snaps) < 3:
        raise ValueError("need at least 3 snapshots at t > 0")
    y = np.linspace(-y_max, y_max, n_y)
    profiles = [_spline_sample(f, a + t * y) for t, f in snaps]
    worst = 0.0
    for i in range(len(profiles)):
        for j in range(i + 1, len(profiles)):
            worst = max(worst, float(np.max(np.abs(profiles[i] - profiles[j]))))
    return worst / eps
