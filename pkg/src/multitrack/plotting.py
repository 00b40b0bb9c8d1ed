"""Static SVG charts from trajectory CSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .errors import SchemaError  # noqa: E402
from .trajectory import TrajectoryLog  # noqa: E402

KINDS = ("payoffs", "cost", "net-utility", "arrivals", "swarm-cost")


def _need(log, *names):
    for n in names:
        if n not in log.columns:
            raise SchemaError(f"missing column {n!r}; have {log.columns}")
    if not log.rows:
        raise SchemaError("CSV has no data rows")


def _dedupe(t, v):
    """First value per distinct time (long-format logs repeat t per row)."""
    seen = {}
    for tk, vk in zip(t, v):
        if tk not in seen:
            seen[tk] = vk
    ts = sorted(seen)
    return np.array(ts), np.array([seen[tk] for tk in ts])


def plot_csv(paths, kind, out_path):
    """Render one chart of the given kind from one or more CSV logs."""
    if kind not in KINDS:
        raise SchemaError(f"unknown plot kind {kind!r}; have {KINDS}")
    logs = [TrajectoryLog.from_csv(p) for p in paths]
    fig, ax = plt.subplots(figsize=(7, 4.5))

    if kind == "payoffs":
        log = logs[0]
        _need(log, "t", "j", "i", "F")
        t, j, i, F = (log.column(c) for c in ("t", "j", "i", "F"))
        for (jj, ii) in sorted({(a, b) for a, b in zip(j, i)}):
            sel = (j == jj) & (i == ii)
            ax.plot(t[sel], F[sel], label=f"F {jj}->{ii}")
        ax.set_ylabel("payoff")
    elif kind == "cost":
        log = logs[0]
        _need(log, "t", "C")
        t, c = _dedupe(log.column("t"), log.column("C"))
        ax.plot(t, c, label="system cost")
        ax.set_ylabel("cost")
    elif kind == "net-utility":
        log = logs[0]
        _need(log, "T", "net_utility")
        t, v = _dedupe(log.column("T"), log.column("net_utility"))
        ax.plot(t, v, label="net utility")
        ax.set_ylabel("net utility")
    elif kind == "arrivals":
        log = logs[0]
        _need(log, "T", "j", "x")
        t, j, x = (log.column(c) for c in ("T", "j", "x"))
        for jj in sorted(set(j)):
            sel = j == jj
            ax.plot(t[sel], x[sel], label=f"x {jj}")
        ax.set_ylabel("admitted rate")
    else:  # swarm-cost
        for log in logs:
            _need(log, "t", "cum_cost")
            label = log.meta.get("mode", "run")
            ax.plot(log.column("t"), log.column("cum_cost"), label=label)
        ax.set_ylabel("cumulative measured cost")

    ax.set_xlabel("time")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path
