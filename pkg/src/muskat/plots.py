r"""Figure rendering for run reports.

Every function takes already-computed data, renders one figure with the
non-interactive Agg backend, writes it to a file, and returns the path.
The delimited reports remain the data contract; figures are a convenience
rendered alongside them.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "plot_snapshots",
    "plot_corner_track",
    "plot_norm_report",
    "plot_iteration_trace",
    "plot_collapse",
    "plot_kernel_ratios",
    "plot_velocity_profile",
]

_DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return str(path)


def plot_snapshots(snapshots, path, corner_locations=()):
    """Overlay the slope profiles h(t, x); dotted verticals mark corners."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for t, f in snapshots:
        ax.plot(f.grid.x, f.values, lw=1.0, label=f"t = {t:g}")
    for a in corner_locations:
        ax.axvline(a, color="k", ls=":", lw=0.7)
    ax.set_xlabel("x")
    ax.set_ylabel("h(t, x)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_corner_track(track, path, predicted=None):
    """Displacement vs t on a log axis, optionally with the predicted curve."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for j, a in enumerate(track.reference):
        ax.plot(track.times, track.displacements[:, j], "o-", ms=4,
                label=f"tracked, corner at {a:g}")
    if predicted is not None:
        ax.plot(track.times, predicted, "s--", ms=4, color="gray",
                label="integrated-velocity prediction")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("corner displacement")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_norm_report(report, path):
    """Heat map of the weighted band entries over (t, k)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    entries = np.where(report.l2_entries > 0, report.l2_entries, np.nan)
    mesh = ax.pcolormesh(
        report.band_ks,
        np.arange(len(report.times)),
        entries,
        shading="nearest",
    )
    ax.set_yticks(np.arange(len(report.times)))
    ax.set_yticklabels([f"{t:g}" for t in report.times], fontsize=7)
    ax.set_xlabel("band k")
    ax.set_ylabel("t")
    ax.set_title(f"{report.kind} weighted band entries "
                 f"(sup = {report.supremum:.3g})", fontsize=9)
    fig.colorbar(mesh, ax=ax)
    return _save(fig, path)


def plot_iteration_trace(trace, path):
    """Iterate distances on a log scale; geometric decay shows as a line."""
    fig, ax = plt.subplots(figsize=(5, 4))
    d = np.asarray(trace.distances)
    ax.semilogy(np.arange(len(d)), np.maximum(d, 1e-300), "o-")
    ax.set_xlabel("sweep m")
    ax.set_ylabel("iterate distance d_m")
    return _save(fig, path)


def plot_collapse(snapshots, a, path, y_max=3.0, n_y=201):
    """Rescaled profiles h(t, a + t y) against y; collapse means overlap."""
    from .spectral import evaluate_offgrid

    fig, ax = plt.subplots(figsize=(6, 4))
    y = np.linspace(-y_max, y_max, n_y)
    for t, f in snapshots:
        pts = np.mod(a + t * y, f.grid.period)
        ax.plot(y, evaluate_offgrid(f, pts), lw=1.0, label=f"t = {t:g}")
    ax.set_xlabel("y = (x - a) / t")
    ax.set_ylabel("h(t, a + t y)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_kernel_ratios(rows, path):
    """Measured/bound ratios per lemma against the dyadic scale 2^k alpha."""
    fig, ax = plt.subplots(figsize=(6, 4))
    lemmas = sorted({r["lemma_id"] for r in rows})
    for lemma in lemmas:
        pts = [(r["alpha_scale"], r["ratio"]) for r in rows
               if r["lemma_id"] == lemma and r["alpha_scale"] is not None]
        if pts:
            xs, ys = zip(*sorted(pts))
            ax.loglog(xs, ys, "o", ms=3, label=lemma)
        else:
            ys = [r["ratio"] for r in rows if r["lemma_id"] == lemma]
            ax.axhline(max(ys), ls="--", lw=0.8,
                       label=f"{lemma} (max ratio)")
    ax.set_xlabel(r"$2^k |\alpha|$")
    ax.set_ylabel("measured / bound")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_velocity_profile(rows, path):
    """V, V1 and the remainder against t at a fixed observation point."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ts = [r["t"] for r in rows]
    for key in ("V", "V1", "V2"):
        ax.plot(ts, [r[key] for r in rows], "o-", ms=4, label=key)
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("velocity at the corner")
    ax.legend(fontsize=8)
    return _save(fig, path)
