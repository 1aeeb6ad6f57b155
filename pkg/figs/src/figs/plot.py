"""Render ramimo CSV outputs as publication-style vector figures.

A curve spec (YAML or JSON) names the CSV files, the x axis (Ka | K | L),
the y axis (Eb_dB | Se), per-series labels, and the output image path.
Infeasible rows (non-finite y) become gaps.  When both an achievability and
a converse series are present, the maximum gap max_x(ach - conv) in dB is
annotated on the figure and printed to stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import yaml  # noqa: E402

#: frozen ramimo CSV schema (column order matters to nobody here, names do)
REQUIRED_COLUMNS = ("scenario", "n", "J", "K", "Ka_or_pa", "L",
                    "eps_or_targets", "seed", "n_samples", "P", "Eb_dB",
                    "bound_value", "argmin_params", "wall_time_s")

X_COLUMN = {"Ka": "Ka_or_pa", "K": "K", "L": "L", "n": "n"}
Y_CHOICES = ("Eb_dB", "Se")


@dataclass(frozen=True)
class Series:
    csv: str
    label: str
    role: str = ""  # "ach" | "conv" | "" (no gap bookkeeping)
    style: str = ""


@dataclass
class CurveSpec:
    series: list
    x_axis: str
    y_axis: str
    output: str
    title: str = ""

    def __post_init__(self):
        if self.x_axis not in X_COLUMN:
            raise ValueError(f"x_axis must be one of {sorted(X_COLUMN)}")
        if self.y_axis not in Y_CHOICES:
            raise ValueError(f"y_axis must be one of {Y_CHOICES}")
        if not self.series:
            raise ValueError("spec needs at least one series")
        self.series = [s if isinstance(s, Series) else Series(**s)
                       for s in self.series]

    @staticmethod
    def load(path: str) -> "CurveSpec":
        with open(path) as fh:
            raw = json.load(fh) if path.endswith(".json") else yaml.safe_load(fh)
        return CurveSpec(**raw)


def _spectral_efficiency(row: dict) -> float:
    # Se = Ka J / n recomputed from the columns; for noka rows Ka_or_pa is
    # p_a and the mean count p_a K stands in for Ka
    ka = float(row["Ka_or_pa"])
    if ka <= 1.0 and "." in row["Ka_or_pa"]:
        ka = ka * float(row["K"])
    return ka * float(row["J"]) / float(row["n"])


def load_curve(path: str, x_axis: str, y_axis: str):
    """(x, y) arrays from one CSV; raises on schema violations, keeps row order."""
    with open(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty CSV")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    xs, ys = [], []
    for row in rows:
        xs.append(float(row[X_COLUMN[x_axis]]))
        if y_axis == "Se":
            ys.append(_spectral_efficiency(row))
        else:
            ys.append(float(row[y_axis]))
    return xs, ys


def max_gap_db(ach_xy, conv_xy):
    """max over shared x of (ach - conv); None when nothing overlaps."""
    conv = {x: y for x, y in zip(*conv_xy) if math.isfinite(y)}
    gaps = [y - conv[x] for x, y in zip(*ach_xy)
            if math.isfinite(y) and x in conv]
    return max(gaps) if gaps else None


def plot_curves(spec: CurveSpec) -> str:
    """Render the figure; returns the output path.  No file on error."""
    loaded = []
    for s in spec.series:
        xs, ys = load_curve(s.csv, spec.x_axis, spec.y_axis)
        loaded.append((s, xs, ys))
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for s, xs, ys in loaded:
        style = s.style or ("o-" if s.role == "ach" else
                            "s--" if s.role == "conv" else "-")
        ax.plot(xs, ys, style, label=s.label, markersize=4)
    ax.set_xlabel({"Ka": "active users $K_a$", "K": "users $K$",
                   "L": "receive antennas $L$", "n": "blocklength $n$"}
                  [spec.x_axis])
    ax.set_ylabel("$E_b$ [dB]" if spec.y_axis == "Eb_dB"
                  else "spectral efficiency [bit/ch.use]")
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(True, alpha=0.4)
    ax.legend()
    gap = None
    achs = [(s, x, y) for s, x, y in loaded if s.role == "ach"]
    convs = [(s, x, y) for s, x, y in loaded if s.role == "conv"]
    if achs and convs and spec.y_axis == "Eb_dB":
        gap = max_gap_db((achs[0][1], achs[0][2]), (convs[0][1], convs[0][2]))
        if gap is not None:
            ax.annotate(f"max gap {gap:.2f} dB", xy=(0.02, 0.96),
                        xycoords="axes fraction", va="top", fontsize=9)
            print(f"max gap (ach - conv): {gap:.4f} dB")
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)
    return spec.output


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ramimo-figs", description="plot ramimo CSV results")
    parser.add_argument("spec", help="curve spec (YAML or JSON)")
    args = parser.parse_args(argv)
    try:
        spec = CurveSpec.load(args.spec)
        plot_curves(spec)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
