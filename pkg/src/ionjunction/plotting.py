"""PNG renderings of the output tables.

Optional: only called when figures are requested.  Each function takes
plain arrays so it can also be fed from the written CSV files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLORS = {"up": "tab:blue", "down": "tab:red", "none": "0.4"}


def _save(fig, path: Path) -> Path:
    path = Path(path).with_suffix(".png")
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def spectrum(branches: dict[str, tuple], path: Path) -> Path:
    """``branches[label] = (q, level_index, energy)`` flat arrays."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, (q, idx, E) in branches.items():
        for k in sorted(set(idx)):
            sel = [i for i, j in enumerate(idx) if j == k]
            ax.plot([q[i] for i in sel], [E[i] for i in sel], color=COLORS.get(label, "k"),
                    lw=1, label=label if k == 0 else None)
    ax.set_xlabel("q / R*")
    ax.set_ylabel("E / E*")
    ax.legend(frameon=False)
    return _save(fig, path)


def coupling(phi, J_hz, path: Path, marks: dict[str, tuple[float, float]] | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(phi, J_hz, "o-", ms=3, color="k")
    for label, (p, j) in (marks or {}).items():
        ax.plot([p], [j], "s", color=COLORS.get(label, "k"), label=label)
    ax.set_xlabel("short-range phase (rad)")
    ax.set_ylabel("J / 2pi (Hz)")
    if marks:
        ax.legend(frameon=False)
    return _save(fig, path)


def sequence(branches: dict[str, dict], path: Path) -> Path:
    """``branches[label]`` holds arrays ``t_ms``, ``q``, ``P_R``."""
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(5, 5), sharex=True)
    first = next(iter(branches.values()))
    a1.plot(first["t_ms"], first["q"], color="k")
    a1.set_ylabel("q / R*")
    for label, d in branches.items():
        a2.plot(d["t_ms"], d["P_R"], color=COLORS.get(label, "k"), label=label)
    a2.set_xlabel("t (ms)")
    a2.set_ylabel("P(z > 0)")
    a2.set_ylim(-0.02, 1.02)
    a2.legend(frameon=False)
    return _save(fig, path)


def density_snapshots(z, times_ms, dens, path: Path, label: str = "") -> Path:
    """``dens[i]`` is the z column density at ``times_ms[i]``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    cmap = plt.get_cmap("viridis")
    n = max(len(times_ms) - 1, 1)
    for i, (t, d) in enumerate(zip(times_ms, dens)):
        ax.plot(z, d, color=cmap(i / n), lw=1, label=f"{t:.1f} ms")
    ax.set_xlabel("z / R*")
    ax.set_ylabel("density")
    ax.set_title(label)
    ax.legend(frameon=False, fontsize=7)
    return _save(fig, path)


def twomode(curves: dict[str, tuple], path: Path) -> Path:
    """``curves[label] = (t_ms, p_left)``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (t, p) in curves.items():
        ax.plot(t, p, color=COLORS.get(label.split()[0], None), label=label)
    ax.set_xlabel("t (ms)")
    ax.set_ylabel("N_L / N")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(frameon=False)
    return _save(fig, path)
