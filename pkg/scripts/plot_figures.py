#!/usr/bin/env python3
"""Render the figure CSVs written by `ec-attack-sim emit --figure all`.

    ec-attack-sim emit --figure all --out out
    python3 scripts/plot_figures.py out/figures --save out/plots

Needs matplotlib (pip install matplotlib).
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path: Path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def series(rows, key, x, y):
    out = defaultdict(lambda: ([], []))
    for r in rows:
        xs, ys = out[r[key]]
        xs.append(float(r[x]) / 60)
        ys.append(float(r[y]))
    return out


def plot_traces(rows, key, title, ax):
    for name, (xs, ys) in sorted(series(rows, key, "t_s", "joules").items()):
        ax.plot(xs, ys, label=name, lw=0.8)
    ax.set(title=title, xlabel="minutes", ylabel="J/s")
    ax.legend(fontsize=7)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("figures", type=Path, help="directory holding fig*.csv")
    ap.add_argument("--save", type=Path, default=Path("plots"))
    args = ap.parse_args()
    args.save.mkdir(parents=True, exist_ok=True)

    for fig, key, title in (("fig6", "attack", "Raspberry Pi under EC-DDoS"),
                            ("fig7", "attack", "Arduino under EC-DDoS"),
                            ("fig8", "device", "Fake-AP takeover")):
        path = args.figures / f"{fig}.csv"
        if path.exists():
            f, ax = plt.subplots(figsize=(7, 3.5))
            plot_traces(read(path), key, title, ax)
            f.tight_layout()
            f.savefig(args.save / f"{fig}.png", dpi=150)

    path = args.figures / "fig5.csv"
    if path.exists():
        rows = read(path)
        labels = [f"{r['device']}\n{r['attack']}" for r in rows]
        f, ax = plt.subplots(figsize=(7, 3.5))
        xs = range(len(rows))
        ax.bar([x - 0.2 for x in xs], [float(r["e1_j_per_s"]) for r in rows], 0.4, label="before")
        ax.bar([x + 0.2 for x in xs], [float(r["e2_j_per_s"]) for r in rows], 0.4, label="during")
        ax.set_xticks(list(xs), labels, fontsize=6)
        ax.set(ylabel="J/s", title="Mean energy before and during attacks")
        ax.legend()
        f.tight_layout()
        f.savefig(args.save / "fig5.png", dpi=150)

    path = args.figures / "fig9.csv"
    if path.exists():
        rows = read(path)
        f, ax = plt.subplots(figsize=(5, 3.5))
        names = [r["device"] for r in rows]
        ec = [float(r["ecddos_fraction"]) for r in rows]
        fap = [float(r["fap_fraction"]) for r in rows]
        ax.bar(names, ec, label="EC-DDoS")
        ax.bar(names, fap, bottom=ec, label="F-AP")
        ax.set(ylabel="share of above-baseline energy", title="Attribution")
        ax.legend()
        f.tight_layout()
        f.savefig(args.save / "fig9.png", dpi=150)
    print(f"plots written to {args.save}")


if __name__ == "__main__":
    main()
