r"""Singular quadrature of the slope-equation nonlinearity.

The evolution is

.. math::

    \partial_t h = \frac{1}{\pi}\frac{d}{dx}\int_{\mathbb{R}}
        \frac{\partial_x h^*}{1+(h^*)^2}\,d\alpha,
    \qquad
    h^*(x,\alpha) = \frac{1}{\alpha}\int_{x-\alpha}^x h\,dy,
    \quad
    \partial_x h^* = \frac{h(x)-h(x-\alpha)}{\alpha},

with the Taylor terms

.. math::

    N_n[h_1, h, \dots, h]
    = \frac{(-1)^n}{\pi}\frac{d}{dx}\int \partial_x h_1^*\,(h^*)^{2n}\,d\alpha .

The n = 0 term is the half-wave operator: over the full line it equals
:math:`-|\nabla| h`.  Convention used throughout the package: the linear
part is always represented spectrally (exactly :math:`-|\nabla|h`), and the
alpha-quadrature handles only the genuinely nonlinear integrand

.. math::

    \partial_x h^*\left(\frac{1}{1+(h^*)^2} - 1\right)
    = -\,\partial_x h^*\,\frac{(h^*)^2}{1+(h^*)^2},

which decays quadratically faster in alpha, so truncating at the outer
cutoff A = outer_periods * L leaves only a small nonlinear tail.  The
quadrature version of the n = 0 term remains available as ``linear_term``
(with the analytic tail completion
:math:`m_{\text{tail}}(\xi) = -|\xi|(1 - \tfrac{2}{\pi}\mathrm{Si}(A|\xi|))`)
as a convergence diagnostic.

Quadrature layout: symmetric pairs +-alpha on grid-aligned uniform nodes all
the way to the outer cutoff.  The integrand oscillates in alpha with period L
for every alpha (the antiderivative of a mean-zero h is periodic), so the
node spacing must stay at the grid scale throughout; coarsening the tail
would alias that oscillation.  The inner segment |alpha| < cutoff_inner is
replaced by its alpha -> 0 limit value.  Products are formed on a 2x
zero-padded grid to suppress aliasing.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import sici

from .spectral import Grid, GridFunction, MultiplierSpec, apply_multiplier, halfwave

__all__ = [
    "AlphaQuadrature",
    "SlopeAverages",
    "build_alpha_quadrature",
    "slope_average",
    "linear_term",
    "full_nonlinearity",
    "taylor_term",
    "nonlinearity_per_corner",
]


@dataclass(frozen=True)
class AlphaQuadrature:
    """Symmetric composite rule for the alpha-integral on [-A, A].

    ``pos_nodes`` holds the positive half; every node is paired with its
    negative mirror during evaluation.  ``fine_indices`` locates each node on
    the 2x-refined working grid used for dealiased products.
    """

    grid: Grid
    pos_nodes: np.ndarray
    weights: np.ndarray
    cutoff_inner: float
    cutoff_outer: float
    fine_factor: int
    fine_indices: np.ndarray

    def __post_init__(self):
        if len(self.pos_nodes) != len(self.weights):
            raise ValueError("nodes and weights must align")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if np.any(np.diff(self.pos_nodes) <= 0):
            raise ValueError("nodes must increase")
        if not self.cutoff_inner <= self.cutoff_outer:
            raise ValueError("cutoff_inner must not exceed cutoff_outer")


@dataclass
class SlopeAverages:
    """Windowed averages h*(x, alpha) on the grid x and signed alpha nodes."""

    grid: Grid
    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.n_points, len(self.nodes)):
            raise ValueError("values must be (n_points, n_nodes)")


def build_alpha_quadrature(
    g: Grid,
    outer_periods: float = 4.0,
    refine: int = 1,
    grading: str = "uniform",
) -> AlphaQuadrature:
    """Grid-aligned rule on [spacing/refine, outer_periods * L].

    ``grading = "uniform"`` places a node every ``step``; ``"graded"`` keeps
    that density up to a quarter period and then doubles the stride block by
    block, exploiting the smooth 1/alpha decay of the windowed averages at
    large alpha.  The graded rule costs O(n log n) per sweep instead of
    O(n^2) and agrees with the uniform rule to a few parts in 1e4
    (dual-route check in the tests).
    """
    if outer_periods <= 0 or refine < 1:
        raise ValueError("outer_periods must be positive, refine >= 1")
    if grading not in ("uniform", "graded"):
        raise ValueError("grading must be 'uniform' or 'graded'")
    step = g.spacing / refine
    n_total = int(round(outer_periods * g.period / step))
    if grading == "uniform":
        idx = np.arange(1, n_total + 1)
        nodes = step * idx
        weights = np.full(n_total, step)
        weights[-1] = step / 2
    else:
        m = max(int(round((g.period / 4.0) / step)), 32)
        js = list(range(1, min(m, n_total) + 1))
        stride, cur = 2, js[-1]
        while cur < n_total:
            for _ in range(m):
                cur += stride
                if cur >= n_total:
                    break
                js.append(cur)
            stride *= 2
        if js[-1] != n_total:
            js.append(n_total)
        idx = np.array(js)
        nodes = step * idx
        # midpoint-style panels: node i covers half the gap to each neighbor;
        # the [0, step/2] head is handled by the inner limit term.
        edges_left = np.empty(len(nodes))
        edges_right = np.empty(len(nodes))
        edges_left[0] = step / 2
        edges_left[1:] = 0.5 * (nodes[:-1] + nodes[1:])
        edges_right[:-1] = edges_left[1:]
        edges_right[-1] = nodes[-1]
        weights = edges_right - edges_left
    fine_factor = 2 * refine
    fine_indices = idx * (fine_factor // refine)
    return AlphaQuadrature(
        grid=g,
        pos_nodes=nodes,
        weights=weights,
        cutoff_inner=step / 2,
        cutoff_outer=float(nodes[-1]),
        fine_factor=fine_factor,
        fine_indices=fine_indices,
    )


# ---------------------------------------------------------------------------
# spectral helpers
# ---------------------------------------------------------------------------

def spectral_resample(vals: np.ndarray, n_to: int) -> np.ndarray:
    """Resample by Fourier zero-padding / truncation (exact for band-limited)."""
    n = len(vals)
    fh = np.fft.rfft(vals)
    if n_to >= n:
        out = np.zeros(n_to // 2 + 1, dtype=complex)
        out[: len(fh)] = fh
        if n % 2 == 0 and n_to > n:
            out[n // 2] *= 0.5  # split the old Nyquist bin symmetrically
    else:
        out = fh[: n_to // 2 + 1].copy()
        out[-1] = out[-1].real
    return np.fft.irfft(out, n=n_to) * (n_to / n)


def _antiderivative_hat(fh: np.ndarray, g_period: float, n: int) -> np.ndarray:
    xi = 2.0 * np.pi * np.arange(len(fh)) / g_period
    out = np.zeros_like(fh)
    out[1:] = fh[1:] / (1j * xi[1:])
    return out


def _derivative_vals(vals: np.ndarray, period: float) -> np.ndarray:
    fh = np.fft.rfft(vals)
    xi = 2.0 * np.pi * np.arange(len(fh)) / period
    fh *= 1j * xi
    fh[-1] = 0.0
    return np.fft.irfft(fh, n=len(vals))


def _tail_multiplier(A: float):
    def sym(xi):
        axi = np.abs(xi)
        si, _ = sici(A * axi)
        return -axi * (1.0 - (2.0 / np.pi) * si)

    return MultiplierSpec(sym)


# ---------------------------------------------------------------------------
# core quadrature sweep
# ---------------------------------------------------------------------------

def _quadrature_sweep(q: AlphaQuadrature, h1: GridFunction, h: GridFunction, kind: str, n: int = 0):
    """Accumulate sum_i w_i [G(x, a_i) + G(x, -a_i)] on the fine grid.

    G is the alpha-integrand of the requested ``kind``:
    ``full_nl`` -> -dxh1* (h*)^2 / (1 + (h*)^2)
    ``taylor``  -> dxh1* (h*)^{2n}
    ``linear``  -> dxh1*
    Returns (accumulated fine values, fine h1, fine h).
    """
    g = q.grid
    nf = g.n_points * q.fine_factor
    h1f = spectral_resample(h1.values, nf)
    hf = spectral_resample(h.values, nf)
    mh = float(np.mean(hf))
    Hf = np.fft.irfft(
        _antiderivative_hat(np.fft.rfft(hf - mh), g.period, nf), n=nf
    )
    alphas = q.pos_nodes
    out = np.zeros(nf)
    base = np.arange(nf)
    block = 256
    for s in range(0, len(alphas), block):
        j = q.fine_indices[s : s + block]
        a = alphas[s : s + block, None]
        w = q.weights[s : s + block]
        idxm = (base[None, :] - j[:, None]) % nf
        idxp = (base[None, :] + j[:, None]) % nf
        dm = (h1f[None, :] - h1f[idxm]) / a
        dp = (h1f[idxp] - h1f[None, :]) / a
        if kind == "linear":
            G = dm + dp
        else:
            sm = (Hf[None, :] - Hf[idxm]) / a + mh
            sp = (Hf[idxp] - Hf[None, :]) / a + mh
            if kind == "full_nl":
                G = -(dm * sm**2 / (1.0 + sm**2) + dp * sp**2 / (1.0 + sp**2))
            else:
                G = dm * sm ** (2 * n) + dp * sp ** (2 * n)
        out += w @ G
    return out, h1f, hf


def _assemble(q: AlphaQuadrature, acc: np.ndarray, limit_f: np.ndarray, sign: float) -> GridFunction:
    """Add the inner limit segment, apply (1/pi) d/dx, return on the coarse grid."""
    g = q.grid
    nf = len(acc)
    total = acc + 2.0 * q.cutoff_inner * limit_f
    total = _derivative_vals(total, g.period) * (sign / np.pi)
    return GridFunction(g, spectral_resample(total, g.n_points))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def slope_average(h: GridFunction, q: AlphaQuadrature) -> SlopeAverages:
    """All windowed averages h*(x, alpha) over the signed node set."""
    g = h.grid
    if q.pos_nodes[0] < 0.5 * g.spacing * (1 - 1e-12):
        raise ValueError("alpha node below half a grid spacing")
    nf = g.n_points * q.fine_factor
    hf = spectral_resample(h.values, nf)
    mh = float(np.mean(hf))
    Hf = np.fft.irfft(_antiderivative_hat(np.fft.rfft(hf - mh), g.period, nf), n=nf)
    stride = q.fine_factor
    coarse = np.arange(g.n_points) * stride
    npos = len(q.pos_nodes)
    vals = np.empty((g.n_points, 2 * npos))
    Hc = Hf[coarse]
    for i, (a, j) in enumerate(zip(q.pos_nodes, q.fine_indices)):
        Hm = Hf[(coarse - j) % nf]
        Hp = Hf[(coarse + j) % nf]
        vals[:, npos + i] = (Hc - Hm) / a + mh
        vals[:, npos - 1 - i] = (Hp - Hc) / a + mh
    nodes = np.concatenate([-q.pos_nodes[::-1], q.pos_nodes])
    return SlopeAverages(g, nodes, vals)


def _check_resolved(h: GridFunction):
    fh = np.fft.rfft(h.values)
    e = np.abs(fh) ** 2
    e[1:-1] *= 2.0
    total = float(np.sum(e[1:]))
    if total == 0.0:
        return
    half = len(e) // 2
    if float(np.sum(e[half:])) > 0.10 * total:
        raise ValueError("input under-resolved: > 10% energy in the top frequency band")


def full_nonlinearity(h: GridFunction, q: AlphaQuadrature) -> GridFunction:
    r"""Right-hand side :math:`N(h)` including its linear part.

    Exact spectral :math:`-|\nabla|h` plus the symmetrized quadrature of the
    nonlinear integrand :math:`-\partial_x h^*(h^*)^2/(1+(h^*)^2)`.
    """
    if h.sup() >= 1.0:
        raise ValueError("requires sup |h| < 1")
    _check_resolved(h)
    acc, hf, _ = _quadrature_sweep(q, h, h, "full_nl")
    limit = -_derivative_vals(hf, h.grid.period) * hf**2 / (1.0 + hf**2)
    out = _assemble(q, acc, limit, 1.0)
    return out - halfwave(h)


def linear_term(h: GridFunction, q: AlphaQuadrature) -> GridFunction:
    r"""The n = 0 term on the same quadrature: converges to :math:`-|\nabla|h`."""
    acc, hf, _ = _quadrature_sweep(q, h, h, "linear")
    limit = _derivative_vals(hf, h.grid.period)
    out = _assemble(q, acc, limit, 1.0)
    return out + apply_multiplier(h, _tail_multiplier(q.cutoff_outer))


def taylor_term(h1: GridFunction, h: GridFunction, n: int, q: AlphaQuadrature) -> GridFunction:
    r"""Multilinear term :math:`N_n[h_1, h, \dots, h]`, n in {1, 2, 3}."""
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    acc, h1f, hf = _quadrature_sweep(q, h1, h, "taylor", n)
    limit = _derivative_vals(h1f, h1.grid.period) * hf ** (2 * n)
    return _assemble(q, acc, limit, (-1.0) ** n)


def nonlinearity_per_corner(h_j: GridFunction, h: GridFunction, q: AlphaQuadrature, n_max: int) -> GridFunction:
    r"""Partial sum :math:`\sum_{n\leq n_{max}} N_n[h_j, h, \dots, h]`."""
    if n_max not in (1, 2, 3):
        raise ValueError("n_max must be 1, 2 or 3")
    out = taylor_term(h_j, h, 1, q)
    for n in range(2, n_max + 1):
        out = out + taylor_term(h_j, h, n, q)
    return out
