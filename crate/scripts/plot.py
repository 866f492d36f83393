#!/usr/bin/env python3
"""Plot rcpdyn CSV output.

    plot.py chart fig1-chart-a.csv [-o fig1.png]
    plot.py bifurcation fig2-nonswitched.csv [-o fig2.png]
    plot.py phase fig2-nonswitched.csv.phase-1.9.csv
    plot.py trajectory fig2-trajectory.csv

The kind of file is given explicitly; companion files (`.boundary.csv`,
`.phase-*.csv`) are picked up automatically where they exist.
"""

import argparse
import glob

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def chart(path, ax):
    df = pd.read_csv(path)
    second = df.columns[1]
    stable = df[df["stable"]]
    unstable = df[~df["stable"]]
    ax.scatter(stable["a"], stable[second], s=4, c="tab:green", label="stable")
    ax.scatter(unstable["a"], unstable[second], s=4, c="tab:red", label="unstable")
    try:
        b = pd.read_csv(path + ".boundary.csv")
        ax.plot(b["a"], b[second], "k-", lw=1.5, label="boundary")
    except FileNotFoundError:
        pass
    ax.set_xlabel("a")
    ax.set_ylabel(second)
    ax.legend(loc="upper right")


def bifurcation(path, ax):
    df = pd.read_csv(path)
    for cls, marker in [("converged", "o"), ("limit-cycle", "s"), ("diverged", "x")]:
        part = df[df["class"] == cls]
        if part.empty:
            continue
        ax.plot(part["a"], part["cycle_max"], marker, ms=3, label=f"{cls} max")
        ax.plot(part["a"], part["cycle_min"], marker, ms=3, mfc="none", label=f"{cls} min")
    ax.set_xlabel("a")
    ax.set_ylabel("rate")
    ax.legend(fontsize="small")


def phase(path, ax):
    df = pd.read_csv(path)
    ax.plot(df["x"], df["y"], lw=0.8)
    ax.set_xlabel("rate")
    ax.set_ylabel("queue or delayed rate")


def trajectory(path, ax):
    df = pd.read_csv(path)
    ax.plot(df["t"], df["rate"], lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("rate")


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("kind", choices=["chart", "bifurcation", "phase", "trajectory"])
    parser.add_argument("csv")
    parser.add_argument("-o", "--out", help="image path (default: <csv>.png)")
    args = parser.parse_args()

    if args.kind == "bifurcation":
        phases = sorted(glob.glob(glob.escape(args.csv) + ".phase-*.csv"))
        fig, axes = plt.subplots(1, 1 + bool(phases), figsize=(11 if phases else 6, 4.5), squeeze=False)
        bifurcation(args.csv, axes[0][0])
        for p in phases:
            axes[0][1].plot(*pd.read_csv(p)[["x", "y"]].values.T, lw=0.8, label=p.rsplit(".phase-", 1)[1][:-4])
        if phases:
            axes[0][1].legend(title="a", fontsize="small")
            axes[0][1].set_xlabel("rate")
    else:
        fig, ax = plt.subplots(figsize=(6, 4.5))
        {"chart": chart, "phase": phase, "trajectory": trajectory}[args.kind](args.csv, ax)
    fig.tight_layout()
    fig.savefig(args.out or args.csv + ".png", dpi=150)


if __name__ == "__main__":
    main()
