"""Static SVG figures: population time series, phase portrait, grouping."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import DomainError  # noqa: E402

KINDS = {
    "timeseries": ["t", "n_predators", "n_prey_group", "n_prey_solo", "group_proportion"],
    "phase": ["t", "n_predators", "n_prey_group", "n_prey_solo", "group_proportion"],
    "grouping": ["t", "group_proportion", "n_prey_group", "n_prey_solo"],
}

# drop timestamps and version stamps so equal inputs give equal bytes
_METADATA = {"png": {"Software": None}, "svg": {"Date": None, "Creator": None}}
_RC = {"svg.hashsalt": "swlv", "svg.fonttype": "path", "font.family": "DejaVu Sans"}


def _read(path, expected=None):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or (expected is not None and rows[0] != expected):
        raise DomainError(f"{path}: expected columns {','.join(expected or [])}")
    cols = {name: [] for name in rows[0]}
    for row in rows[1:]:
        for name, v in zip(rows[0], row):
            cols[name].append(v)
    return cols


def _floats(xs):
    return [float(x) for x in xs]


def plot(csv_path, kind, outfile, overlay=None, events=None):
    """Write ``outfile`` as PNG or SVG (by suffix, SVG when there is none).
    Identical inputs give byte-identical files."""
    if kind not in KINDS:
        raise DomainError(f"unknown plot kind {kind!r}; choose from {', '.join(KINDS)}")
    fmt = Path(outfile).suffix.lstrip(".").lower() or "svg"
    if fmt not in _METADATA:
        raise DomainError(f"unsupported plot format {fmt!r}; use .png or .svg")
    cols = _read(csv_path, KINDS[kind])
    t = _floats(cols["t"])
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 4))
        if kind == "timeseries":
            prey = [g + s for g, s in zip(_floats(cols["n_prey_group"]), _floats(cols["n_prey_solo"]))]
            ax.plot(t, _floats(cols["n_predators"]), label="predators", color="tab:blue")
            ax.plot(t, prey, label="preys", color="tab:green")
            ax.set_xlabel("time step")
            ax.set_ylabel("population")
        elif kind == "phase":
            prey = [g + s for g, s in zip(_floats(cols["n_prey_group"]), _floats(cols["n_prey_solo"]))]
            ax.plot(prey, _floats(cols["n_predators"]), label="simulation", color="tab:cyan", lw=0.8)
            if overlay is not None:
                ov = _read(overlay, ["t", "p", "q"])
                ax.plot(_floats(ov["p"]), _floats(ov["q"]), label="fitted LV", color="tab:orange", lw=1.5)
            ax.set_xlabel("preys")
            ax.set_ylabel("predators")
        else:
            ax.plot(t, _floats(cols["group_proportion"]), color="tab:purple", label="group proportion")
            ax.set_ylim(-0.02, 1.02)
            if events is not None and Path(events).exists():
                ev = _read(events, ["t", "species_fed", "amount"])
                for et, sp in zip(_floats(ev["t"]), ev["species_fed"]):
                    color = "tab:green" if sp == "sheep" else "tab:red"
                    ax.annotate("", xy=(et, 0.0), xytext=(et, -0.12), xycoords=("data", "axes fraction"),
                                arrowprops=dict(arrowstyle="->", color=color))
            ax.set_xlabel("time step")
            ax.set_ylabel("group proportion")
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(outfile, format=fmt, metadata=_METADATA[fmt])
        plt.close(fig)
    return Path(outfile)
