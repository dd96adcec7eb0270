#!/usr/bin/env python3
"""Plot qclat outputs found in run directories.

    python scripts/plot.py OUT_DIR [OUT_DIR ...] [--save DIR]

Recognises orders.csv (compare-orders), toughness.csv (fracture sweep),
thickness.csv (through-thickness sweep) and histogram.csv (any run).
"""
import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def plot_orders(path, ax):
    by_order = {}
    for r in rows(path):
        by_order.setdefault(r["order"], []).append((float(r["rep_density"]), float(r["error"])))
    for order, pts in sorted(by_order.items()):
        pts.sort()
        x, y = zip(*pts)
        ax.plot(x, y, "o-", label=order)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("representative unit cell density")
    ax.set_ylabel("relative error in max $u_y$")
    ax.set_title(path.parent.name)
    ax.legend()


def plot_toughness(path, ax):
    r = rows(path)
    rho = np.array([float(x["relative_density"]) for x in r])
    k = np.array([float(x["k_ic_bar"]) for x in r])
    ax.loglog(rho, k, "o", label=path.parent.name)
    if len(rho) >= 2:
        d, log_d = np.polyfit(np.log(rho), np.log(k), 1)
        xs = np.geomspace(rho.min(), rho.max(), 50)
        ax.loglog(xs, np.exp(log_d) * xs**d, "--", label=f"D={np.exp(log_d):.3g}, d={d:.3f}")
    ax.set_xlabel(r"relative density $\bar\rho$")
    ax.set_ylabel(r"$K_{IC}/(\sigma_f\sqrt{l})$")
    ax.legend()


def plot_thickness(path, ax):
    r = rows(path)
    t = [int(x["thickness"]) for x in r]
    u = [float(x["critical_displacement"]) for x in r]
    ax.plot(t, u, "o-")
    ax.set_xlabel("thickness (unit cells)")
    ax.set_ylabel("critical displacement")
    ax.set_title(path.parent.name)


def plot_histogram(path, ax):
    r = rows(path)
    lo = np.array([float(x["lo"]) for x in r])
    hi = np.array([float(x["hi"]) for x in r])
    n = np.array([float(x["count"]) for x in r])
    ax.bar(lo, n, width=hi - lo, align="edge")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\sigma_t$")
    ax.set_ylabel("beams")
    ax.set_title(path.parent.name)


PLOTS = [
    ("orders.csv", plot_orders),
    ("toughness.csv", plot_toughness),
    ("thickness.csv", plot_thickness),
    ("histogram.csv", plot_histogram),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("dirs", nargs="+", type=Path)
    ap.add_argument("--save", type=Path, default=None, help="directory for PNGs (default: each run directory)")
    args = ap.parse_args(argv)
    made = 0
    for d in args.dirs:
        for name, fn in PLOTS:
            p = d / name
            if not p.is_file():
                continue
            fig, ax = plt.subplots(figsize=(5, 4))
            fn(p, ax)
            fig.tight_layout()
            out = (args.save or d) / f"{d.name}-{p.stem}.png"
            out.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out, dpi=150)
            plt.close(fig)
            print(out)
            made += 1
    if made == 0:
        print("no recognised CSV files found", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
