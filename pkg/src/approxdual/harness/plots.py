"""PNG figures rendered next to the CSV output."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..solvers import Trajectory  # noqa: E402

# fixed metadata keeps repeated renders comparable
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_objective(traj: Trajectory, path: Path, f_star: Optional[float] = None,
                   title: str = "") -> Path:
    k = np.arange(1, traj.K + 1)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(k, traj.f_avg, lw=1.2, label="f(z avg)")
    if f_star is not None:
        ax.axhline(f_star, color="k", ls="--", lw=0.8, label="f*")
        ok = ~np.isnan(traj.bound_lower)
        if ok.any():
            ax.fill_between(k[ok], f_star + traj.bound_lower[ok], f_star + traj.bound_upper[ok],
                            color="C1", alpha=0.15, step="post", label="window")
            lo = np.nanmin(traj.f_avg[len(k) // 10:]) if traj.K > 10 else np.nanmin(traj.f_avg)
            hi = np.nanmax(traj.f_avg[len(k) // 10:]) if traj.K > 10 else np.nanmax(traj.f_avg)
            pad = max(hi - lo, abs(f_star) * 0.05, 0.1)
            ax.set_ylim(min(lo, f_star) - pad, max(hi, f_star) + pad)
    ax.set_xlabel("k")
    ax.set_ylabel("objective")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_multipliers(traj: Trajectory, path: Path, lam_star=None, title: str = "") -> Path:
    k = np.arange(1, traj.K + 1)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for j in range(traj.lam.shape[1]):
        ax.plot(k, traj.lam[:, j], lw=1.0, color=f"C{j}", label=f"lambda{j + 1}")
        ax.plot(k, traj.mu[:, j], lw=0.8, color=f"C{j}", ls=":", label=f"mu{j + 1}")
        if lam_star is not None:
            ax.axhline(lam_star[j], color=f"C{j}", ls="--", lw=0.6)
    ax.set_xlabel("k")
    ax.set_ylabel("multiplier")
    ax.set_title(title)
    ax.legend(fontsize=8, ncol=2)
    return _save(fig, path)


def plot_table(table: dict, path: Path, ys: list[str], title: str = "",
               ylabel: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.6))
    k = table["k"]
    for i, name in enumerate(ys):
        ls = "--" if "bound" in name or "rhs" in name else "-"
        ax.plot(k, table[name], lw=1.0, ls=ls, label=name)
    ax.set_xlabel("k")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


FIG_SERIES = {
    "fig1": (["lambda", "mu", "gap"], "multiplier"),
    "fig2": (["deviation", "bound"], "|sum (z - x)|"),
    "fig5": (["sum_z", "sum_x"], "cumulative"),
}


def render(result, out_dir: Path, seed: int) -> list[Path]:
    """Render every table and trajectory of a scenario result."""
    out = []
    for name, traj in result.trajectories.items():
        f_star = result.summary.get("f_star")
        lam_star = result.summary.get("lam_star")
        out.append(plot_objective(traj, out_dir / f"{name}_objective.png", f_star,
                                  f"{name} (seed {seed})"))
        if traj.lam.shape[1]:
            out.append(plot_multipliers(traj, out_dir / f"{name}_multipliers.png", lam_star,
                                        f"{name} (seed {seed})"))
    for name, table in result.tables.items():
        ys, ylabel = FIG_SERIES.get(name, ([c for c in table if c != "k"], ""))
        out.append(plot_table(table, out_dir / f"{name}.png", ys, f"{name} (seed {seed})", ylabel))
    return out
