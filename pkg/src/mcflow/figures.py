"""Report figures: monitor time series and profile snapshots rendered to
files next to the delimited output (headless Agg backend, no display)."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .barriers import BarrierSet, global_excess  # noqa: E402
from .evolve import RunTrace  # noqa: E402


def plot_monitors(traces: list[RunTrace], path):
    """2x2 panel: sup|A| and sup|H|, Lambda, inner error, sandwich margins."""
    fig, axes = plt.subplots(2, 2, figsize=(10, 7.5))
    for i, tr in enumerate(traces):
        lbl = f"run {i}"
        axes[0, 0].loglog(tr.t, tr.supA, label=lbl)
        axes[0, 0].loglog(tr.t, tr.supH, ls="--")
        axes[0, 1].loglog(tr.t, tr.lam, label=lbl)
        axes[1, 0].semilogx(tr.t, tr.innerErr, label=lbl)
        axes[1, 1].semilogx(tr.t, tr.marginLo, label=lbl + " lo")
        axes[1, 1].semilogx(tr.t, tr.marginHi, ls="--", label=lbl + " hi")
    axes[0, 0].set_title("sup|A| (solid) and sup|H| (dashed)")
    axes[0, 1].set_title("weighted $u_t$ monitor $\\Lambda$")
    axes[1, 0].set_title("inner convergence error (Z window)")
    axes[1, 1].set_title("sandwich margins")
    for ax in axes.flat:
        ax.set_xlabel("t")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_profile(trace: RunTrace, bs: BarrierSet, path):
    """Final profile excess u - x against the global barrier envelopes."""
    st = trace.states[-1]
    x = st.mesh.x
    t = st.t
    scale = t ** (bs.c.k / 3.0)
    z = x / scale
    if st.ref is not None:
        ex = scale * bs.cap_excess(st.ref.K_label, z) + st.v
    else:
        ex = st.v - x
    up = global_excess(bs, x, t, +1)
    lo = global_excess(bs, x, t, -1)
    fig, ax = plt.subplots(figsize=(7, 5))
    pos = x > 0.0
    ax.loglog(x[pos], np.abs(ex[pos]) + 1e-300, label="|u - x|")
    ax.loglog(x[pos], np.abs(up[pos]) + 1e-300, ls="--", label="upper barrier excess")
    ax.loglog(x[pos], np.abs(lo[pos]) + 1e-300, ls=":", label="lower barrier excess")
    ax.axvline(bs.params.M * math.sqrt(t), color="k", lw=0.6, alpha=0.5)
    ax.set_xlabel("x")
    ax.set_ylabel("excess magnitude")
    ax.set_title(f"profile excess at t = {t:.3e}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_alencar(profile, path):
    """W, W' and the star function Phi = W - zW' over the shot window."""
    z = profile.z
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot(z, profile.W, label="W")
    ax.plot(z, profile.W1, label="W'")
    ax.plot(z, profile.W - z * profile.W1, label="$\\Phi = W - zW'$")
    ax.plot(z, z, ls=":", color="k", lw=0.7, label="cone")
    ax.set_xlabel("z")
    ax.set_xlim(0.0, 10.0)
    ax.set_ylim(0.0, 10.5)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("minimal profile and star function")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
