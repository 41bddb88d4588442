r"""Two independent constructions of the small-slope solution.

The renormalized route builds each corner component :math:`g_j` by the mild
fixed-point iteration

.. math::

    g_j^{(m+1)}(t) = e^{-t|\nabla|} g_{0,j}
        + \int_0^t e^{-(t-s)|\nabla|} F_j^{(m)}(s)\,ds,

where the forcing collects the renormalized nonlinearity and the
change-of-variables error terms,

.. math::

    F_j(t, x + a_j) = \partial_x h_j(t, \tilde Q)\,\partial_t\tilde q
        + \mathcal{N}_{h_j}(t, \tilde Q)
        - |\nabla| g_j(t, x)\,\partial_x q(t, \tilde Q)
        - E_j(t, \tilde Q),

with :math:`\tilde Q = \tilde Q(t, x + a_j)` and the remainder computed as
the defining difference

.. math::

    E_j(t, x) = (|\nabla| h_j)(t, x)
        - (|\nabla| g_j)\big(t, x - a_j + q(t, x)\big)\,(1 + \partial_x q(t, x)).

The physical route advances :math:`\partial_t h = -|\nabla|h + N(h)` directly
with a second-order exponential (predictor--corrector) integrator.  The two
routes share no time discretization and cross-validate each other.

The Duhamel s-quadrature uses exact per-mode semigroup weights with the
forcing treated piecewise-linear in s: the kernel :math:`e^{-(t-s)|\xi|}` is
stiff at high frequencies and generic quadrature would dominate the error.
"""

import math
from dataclasses import dataclass

import numpy as np

from .corner_dynamics import CorrectionTable, renormalize_compose
from .rhs import AlphaQuadrature, build_alpha_quadrature, nonlinearity_per_corner
from .spectral import (
    Grid,
    GridFunction,
    admissible_bands,
    derivative,
    evaluate_offgrid,
    halfwave,
    lp_project,
    poisson_semigroup,
)

__all__ = [
    "SolverState",
    "IterationTrace",
    "assemble_state",
    "free_evolution_init",
    "change_of_variables_error",
    "forcing_F_j",
    "duhamel_update",
    "duhamel_iterate",
    "solve_duhamel",
    "imex_step",
    "solve_imex",
    "time_grid",
    "discrete_z2_distance",
    "run",
    "RunResult",
]


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------

@dataclass
class SolverState:
    """Snapshot of the renormalized system at one time.

    ``g_components[j]`` is the centered profile of corner j; ``h_total`` is
    the assembled physical slope ``sum_j g_j(x - a_j + q(t, x))``.
    """

    t: float
    g_components: list
    corner_locations: list
    h_total: GridFunction
    qtab: CorrectionTable
    iterate_index: int = 0

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if len(self.g_components) != len(self.corner_locations):
            raise ValueError("one location per component required")

    def verify(self, tol: float = 1e-10):
        """Check the assembly and mean-zero invariants; raise on violation."""
        assembled = _assemble_total(
            self.g_components, self.corner_locations, self.qtab, self.t
        )
        err = (self.h_total - assembled).sup()
        scale = max(self.h_total.sup(), 1.0)
        if err > tol * scale:
            raise ValueError(f"h_total deviates from its assembly by {err:.3g}")
        if abs(self.h_total.mean()) > tol:
            raise ValueError("mean(h_total) must vanish")


@dataclass
class IterationTrace:
    """Per-iterate contraction record of the fixed-point sweep."""

    distances: np.ndarray

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=float)
        if self.distances.size and not np.all(
            np.isfinite(self.distances) & (self.distances >= 0)
        ):
            raise ValueError("iterate distances must be finite and nonnegative")

    @property
    def ratios(self) -> np.ndarray:
        d = self.distances
        if len(d) < 2:
            return np.zeros(0)
        return d[1:] / np.maximum(d[:-1], 1e-300)


def _assemble_total(g_components, a_list, qtab, t: float) -> GridFunction:
    grid = g_components[0].grid
    total = GridFunction(grid, np.zeros(grid.n_points))
    for g_j, a in zip(g_components, a_list):
        total = total + renormalize_compose(g_j, a, qtab, t)
    return total


def assemble_state(
    t: float, g_components, a_list, qtab, iterate_index: int = 0
) -> SolverState:
    """Build a :class:`SolverState` with ``h_total`` computed from the parts."""
    h_total = _assemble_total(g_components, a_list, qtab, t)
    return SolverState(
        t, list(g_components), list(a_list), h_total, qtab, iterate_index
    )


# ---------------------------------------------------------------------------
# free evolution and forcing
# ---------------------------------------------------------------------------

def free_evolution_init(g0_components, a_list, qtab, times) -> list:
    r"""Zeroth iterate: :math:`g_j^{(0)}(t) = e^{-t|\nabla|} g_{0,j}` at all times.

    ``g0_components`` are the centered initial profiles
    :math:`g_{0,j}(x) = h_{j,0}(x + a_j)`.
    """
    states = []
    for t in np.asarray(times, dtype=float):
        comps = [poisson_semigroup(g0, t) for g0 in g0_components]
        states.append(assemble_state(float(t), comps, a_list, qtab, 0))
    return states


def _table_rows(qtab: CorrectionTable, t: float):
    """Interpolated (q, qtilde, dq_dt) rows of the table at time t."""
    return (
        qtab.q_slice(t),
        qtab.qtilde_slice(t),
        qtab._slice(qtab.dq_dt, t),
    )


def change_of_variables_error(
    g_j: GridFunction, a: float, qtab: CorrectionTable, t: float
) -> GridFunction:
    r"""The remainder of the chain rule for :math:`|\nabla|` under the warp,

    .. math:: E_j(t, x) = (|\nabla| h_j)(t, x)
        - (|\nabla| g_j)\big(t, x - a + q(t, x)\big)\,(1 + \partial_x q(t, x)),

    on the physical grid.  Vanishes identically when q = 0.
    """
    grid = g_j.grid
    h_j = renormalize_compose(g_j, a, qtab, t)
    if qtab is None:
        q_row = np.zeros(grid.n_points)
        dq_row = np.zeros(grid.n_points)
    else:
        q_row = qtab.q_slice(t)
        dq_row = derivative(GridFunction(grid, q_row)).values
    nabla_gj_at = evaluate_offgrid(halfwave(g_j), grid.x - a + q_row)
    return GridFunction(
        grid, halfwave(h_j).values - nabla_gj_at * (1.0 + dq_row)
    )


def forcing_F_j(
    state: SolverState, quad: AlphaQuadrature, j: int, n_max: int = 2
) -> GridFunction:
    r"""The four-term forcing of component j, on the centered grid.

    With ``qtab`` absent or identically zero the change of variables is the
    identity, :math:`E_j = 0` exactly, and the forcing reduces to the
    per-corner nonlinearity :math:`\mathcal{N}_{h_j}` read off at
    :math:`x + a_j`.
    """
    grid = state.h_total.grid
    t = state.t
    a = state.corner_locations[j]
    g_j = state.g_components[j]
    qtab = state.qtab

    h_j = renormalize_compose(g_j, a, qtab, t)
    n_hj = nonlinearity_per_corner(h_j, state.h_total, quad, n_max)
    z_shift = grid.x + a

    trivial = qtab is None or (
        np.max(np.abs(qtab.q_values)) == 0.0
        and np.max(np.abs(qtab.qtilde_values)) == 0.0
        and np.max(np.abs(qtab.dq_dt)) == 0.0
    )
    if trivial:
        return GridFunction(grid, evaluate_offgrid(n_hj, z_shift))

    q_row, qt_row, dqt_row = _table_rows(qtab, t)
    q_fun = GridFunction(grid, q_row)
    dq_fun = derivative(q_fun)
    if dq_fun.sup() >= 0.5 or derivative(GridFunction(grid, qt_row)).sup() >= 0.5:
        raise ValueError("composition out of monotone range: correction slope >= 1/2")

    # warped physical positions Q-tilde(t, x + a_j)
    qt_at = evaluate_offgrid(GridFunction(grid, qt_row), z_shift)
    warped = z_shift + qt_at
    dqt_at = evaluate_offgrid(GridFunction(grid, dqt_row), z_shift)

    term1 = evaluate_offgrid(derivative(h_j), warped) * dqt_at
    term2 = evaluate_offgrid(n_hj, warped)
    term3 = halfwave(g_j).values * evaluate_offgrid(dq_fun, warped)
    term4 = evaluate_offgrid(
        change_of_variables_error(g_j, a, qtab, t), warped
    )

    return GridFunction(grid, term1 + term2 - term3 - term4)


# ---------------------------------------------------------------------------
# Duhamel sweep
# ---------------------------------------------------------------------------

def _segment_weights(lam: np.ndarray, dt: float):
    r"""Exact semigroup weights for piecewise-linear forcing on one segment.

    Returns (decay, w0, w1) with decay = :math:`e^{-\lambda\,dt}` and

    .. math::

        \int_0^{dt} e^{-(dt-u)\lambda}\Big(F_0\big(1-\tfrac{u}{dt}\big)
            + F_1\tfrac{u}{dt}\Big)du = w_0 F_0 + w_1 F_1 .

    Small :math:`\lambda\,dt` uses the series to avoid cancellation.
    """
    theta = lam * dt
    decay = np.exp(-theta)
    small = theta < 1e-5
    ts = np.where(small, 1.0, theta)  # safe divisor
    i0 = np.where(
        small,
        dt * (1.0 - theta / 2.0 + theta**2 / 6.0),
        dt * (-np.expm1(-ts)) / ts,
    )
    i1 = np.where(
        small,
        dt * (0.5 - theta / 6.0 + theta**2 / 24.0),
        dt * (ts + np.expm1(-ts)) / ts**2,
    )
    return decay, i0 - i1, i1


def _duhamel_values(g0_hat, lam, times, forcing_hat):
    """Mode-wise Duhamel integral with recursive segment propagation."""
    nt = len(times)
    out = np.empty((nt, len(lam)), dtype=complex)
    accum = np.zeros(len(lam), dtype=complex)
    out[0] = g0_hat
    for i in range(nt - 1):
        dt = times[i + 1] - times[i]
        decay, w0, w1 = _segment_weights(lam, dt)
        accum = decay * accum + w0 * forcing_hat[i] + w1 * forcing_hat[i + 1]
        out[i + 1] = np.exp(-lam * times[i + 1]) * g0_hat + accum
    return out


def duhamel_update(
    g0: GridFunction, times, forcing_values, coarse_tol: float = None
) -> np.ndarray:
    r"""One mild-solution sweep: :math:`e^{-t|\nabla|}g_0 + \int_0^t
    e^{-(t-s)|\nabla|}F(s)\,ds` at every output time.

    ``forcing_values`` holds F on the grid at each time, shape (nt, n).
    Per Fourier mode the integral is exact for piecewise-linear F.  With
    ``coarse_tol`` set, the final slice recomputed on every other time node
    must agree to ``coarse_tol`` relative, otherwise the time grid is
    rejected as too coarse.
    """
    times = np.asarray(times, dtype=float)
    forcing_values = np.asarray(forcing_values, dtype=float)
    if forcing_values.shape != (len(times), g0.grid.n_points):
        raise ValueError("forcing_values must have shape (len(times), n_points)")
    if len(times) < 1 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be nonnegative and strictly increasing")
    lam = np.abs(g0.grid.frequencies)
    f_hat = np.fft.rfft(forcing_values, axis=1)
    vals = _duhamel_values(g0.hat(), lam, times, f_hat)
    out = np.fft.irfft(vals, n=g0.grid.n_points, axis=1)
    if coarse_tol is not None and len(times) > 2:
        keep = np.unique(np.r_[np.arange(0, len(times), 2), len(times) - 1])
        coarse = _duhamel_values(g0.hat(), lam, times[keep], f_hat[keep])
        final = np.fft.irfft(coarse[-1], n=g0.grid.n_points)
        scale = max(np.max(np.abs(out[-1])), 1e-300)
        if np.max(np.abs(final - out[-1])) > coarse_tol * scale:
            raise ValueError("time grid too coarse: coarsened sweep disagrees")
    return out


def duhamel_iterate(
    states, quad: AlphaQuadrature, n_max: int = 2, coarse_tol: float = None
) -> list:
    """Advance the fixed-point iteration by one full sweep over the time grid."""
    times = np.array([s.t for s in states])
    if times[0] != 0.0:
        raise ValueError("states must start at t = 0")
    a_list = states[0].corner_locations
    qtab = states[0].qtab
    n_corners = len(a_list)
    grid = states[0].h_total.grid
    new_values = []
    for j in range(n_corners):
        f_rows = np.stack(
            [forcing_F_j(s, quad, j, n_max).values for s in states]
        )
        new_values.append(
            duhamel_update(states[0].g_components[j], times, f_rows, coarse_tol)
        )
    m = states[0].iterate_index + 1
    out = []
    for i, t in enumerate(times):
        comps = [GridFunction(grid, new_values[j][i]) for j in range(n_corners)]
        out.append(assemble_state(float(t), comps, a_list, qtab, m))
    return out


def discrete_z2_distance(states_a, states_b) -> float:
    r"""Discrete perturbation-space distance between two iterates.

    .. math:: \sup_{t > 0,\,k} 2^{k/2}
        \max\{2^k t, (2^k t)^{-1}\}^{1/10} \|P_k (g_a - g_b)\|_{L^2},

    maximized over corner components and stored snapshot times.
    """
    grid = states_a[0].h_total.grid
    bands = admissible_bands(grid)
    best = 0.0
    for sa, sb in zip(states_a, states_b):
        if sa.t <= 0:
            continue
        for ga, gb in zip(sa.g_components, sb.g_components):
            diff = ga - gb
            if diff.sup() == 0.0:
                continue
            for band in bands:
                kt = 2.0**band.k * sa.t
                w = 2.0 ** (band.k / 2.0) * max(kt, 1.0 / kt) ** 0.1
                best = max(best, w * lp_project(diff, band).l2())
    return best


def time_grid(T: float, n_uniform: int = 16, t_merge: float = 0.1,
              nodes_per_decade: int = 6, t_floor: float = 1e-4) -> np.ndarray:
    """Log-graded time grid near 0 merging into uniform steps by ``t_merge``.

    The solution is only Hölder at t = 0 and the corner moves like
    t log(2/t), so early times need geometric refinement; past ``t_merge``
    the profile is smooth and uniform steps suffice.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    merge = min(t_merge, T)
    decades = math.log10(merge / t_floor)
    n_log = max(int(round(decades * nodes_per_decade)), 4)
    log_part = np.geomspace(t_floor, merge, n_log)
    if T > merge:
        n_uni = max(int(round((T - merge) / (T / n_uniform))), 2)
        uni = np.linspace(merge, T, n_uni + 1)[1:]
        grid = np.concatenate([[0.0], log_part, uni])
    else:
        grid = np.concatenate([[0.0], log_part])
    return np.unique(grid)


def solve_duhamel(
    g0_components,
    a_list,
    qtab,
    times,
    quad: AlphaQuadrature,
    n_max: int = 2,
    eps: float = 0.05,
    max_iter: int = 8,
    tol_factor: float = 1e-4,
    coarse_tol: float = None,
):
    """Iterate to the fixed point; returns (states, IterationTrace).

    Stops when the discrete perturbation-space distance between consecutive
    iterates drops below ``tol_factor * eps`` or after ``max_iter`` sweeps.
    """
    states = free_evolution_init(g0_components, a_list, qtab, times)
    distances = []
    for _ in range(max_iter):
        nxt = duhamel_iterate(states, quad, n_max, coarse_tol)
        d = discrete_z2_distance(nxt, states)
        distances.append(d)
        states = nxt
        if d <= tol_factor * eps:
            break
    return states, IterationTrace(np.array(distances))


# ---------------------------------------------------------------------------
# exponential-integrator stepper on the physical equation
# ---------------------------------------------------------------------------

def imex_step(
    h: GridFunction, dt: float, quad: AlphaQuadrature, n_max: int = 2
) -> GridFunction:
    r"""One predictor--corrector step under the exact semigroup.

    Predictor: :math:`\tilde h = e^{-dt|\nabla|}\big(h + dt\,N(h)\big)`;
    corrector: :math:`h_{+} = e^{-dt|\nabla|}h + \tfrac{dt}{2}\big(
    e^{-dt|\nabla|}N(h) + N(\tilde h)\big)` (second order, exact on the
    linear part).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > 0.5 * h.grid.spacing:
        raise ValueError("dt exceeds the stability budget 0.5 * spacing")
    n_h = nonlinearity_per_corner(h, h, quad, n_max)
    pred = poisson_semigroup(h + dt * n_h, dt)
    n_pred = nonlinearity_per_corner(pred, pred, quad, n_max)
    out = poisson_semigroup(h + (0.5 * dt) * n_h, dt) + (0.5 * dt) * n_pred
    if not np.all(np.isfinite(out.values)) or out.sup() > 10.0 * max(h.sup(), 1.0):
        raise ValueError("blow-up detected in time step")
    return out


def solve_imex(
    h0: GridFunction,
    snapshot_times,
    quad: AlphaQuadrature,
    n_max: int = 2,
    dt: float = None,
):
    """March the physical equation; returns snapshots at the requested times."""
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    if np.any(np.diff(snapshot_times) <= 0) or snapshot_times[0] < 0:
        raise ValueError("snapshot times must be nonnegative, strictly increasing")
    if dt is None:
        dt = 0.25 * h0.grid.spacing
    snaps = []
    h = h0
    t = 0.0
    if snapshot_times[0] == 0.0:
        snaps.append(GridFunction(h0.grid, h0.values.copy()))
        remaining = snapshot_times[1:]
    else:
        remaining = snapshot_times
    for target in remaining:
        while t < target - 1e-14:
            step = min(dt, target - t)
            h = imex_step(h, step, quad, n_max)
            t += step
        snaps.append(GridFunction(h.grid, h.values.copy()))
    return snaps


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    """Everything a run produces: snapshots, components, and the trace."""

    times: np.ndarray
    states: list
    trace: IterationTrace
    qtab: CorrectionTable
    corner_locations: list


def run(
    g0_components,
    a_list,
    grid: Grid,
    T: float = 0.25,
    qtab: CorrectionTable = None,
    n_max: int = 2,
    eps: float = 0.05,
    max_iter: int = 8,
    quad: AlphaQuadrature = None,
    times=None,
) -> RunResult:
    """End-to-end renormalized solve on [0, T]; zero data yields zero output."""
    if quad is None:
        quad = build_alpha_quadrature(grid)
    if times is None:
        times = time_grid(T)
    if all(g.sup() == 0.0 for g in g0_components):
        states = free_evolution_init(g0_components, a_list, qtab, times)
        return RunResult(np.asarray(times), states, IterationTrace(np.zeros(0)),
                         qtab, list(a_list))
    states, trace = solve_duhamel(
        g0_components, a_list, qtab, times, quad,
        n_max=n_max, eps=eps, max_iter=max_iter,
    )
    return RunResult(np.asarray(times), states, trace, qtab, list(a_list))
