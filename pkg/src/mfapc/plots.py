"""Static SVG plots and terminal sparklines for simulation traces.

matplotlib is imported lazily with the Agg backend so nothing here needs a
display; a fixed svg hashsalt keeps the output stable across invocations.
When matplotlib is unavailable the plot calls become no-ops (the CLI always
prints sparklines, so runs stay inspectable from a bare terminal).
"""

import numpy as np

_BLOCKS = "▁▂▃▄▅▆▇█"


def sparkline(values, width=64):
    """Down-sampled unicode sparkline of a series."""
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return ""
    if arr.size > width:
        edges = np.linspace(0, arr.size, width + 1).astype(int)
        arr = np.array([arr[a:b].mean() for a, b in zip(edges[:-1], edges[1:]) if b > a])
    lo, hi = arr.min(), arr.max()
    span = hi - lo
    if span == 0:
        return _BLOCKS[0] * arr.size
    idx = ((arr - lo) / span * (len(_BLOCKS) - 1)).round().astype(int)
    return "".join(_BLOCKS[i] for i in idx)


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        matplotlib.rcParams["svg.hashsalt"] = "mfapc"
        import matplotlib.pyplot as plt

        return plt
    except ImportError:
        return None


def tracking_plot(path, traces):
    """Overlay of y* and each run's output. ``traces`` maps label -> SimTrace."""
    plt = _pyplot()
    if plt is None:
        return False
    fig, ax = plt.subplots(figsize=(9, 4.5))
    first = next(iter(traces.values()))
    ax.step(first.ks, first.y_star, where="post", color="k", lw=1.0, label="reference")
    for label, tr in traces.items():
        ax.plot(tr.ks, tr.y, lw=1.2, label=label)
    ax.set_xlabel("step k")
    ax.set_ylabel("output y(k)")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True


def control_plot(path, traces):
    plt = _pyplot()
    if plt is None:
        return False
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for label, tr in traces.items():
        ax.plot(tr.ks, tr.u, lw=1.2, label=label)
    ax.set_xlabel("step k")
    ax.set_ylabel("control input u(k)")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True


def pg_plot(path, traces):
    """Per-component PG estimate trajectories for each run."""
    plt = _pyplot()
    if plt is None:
        return False
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for label, tr in traces.items():
        for j in range(tr.order):
            ax.plot(tr.ks, tr.phi[:, j], lw=1.0, label=f"{label} phi_{j + 1}")
    ax.set_xlabel("step k")
    ax.set_ylabel("PG estimate components")
    ax.legend(loc="best", fontsize=7, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True


def sweep_plot(path, param, values, metrics, metric_name="e_itae"):
    plt = _pyplot()
    if plt is None:
        return False
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(values, metrics, marker="o")
    if min(values) > 0 and max(values) / max(min(values), 1e-300) > 50:
        ax.set_xscale("log")
    ax.set_xlabel(param)
    ax.set_ylabel(metric_name)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True
