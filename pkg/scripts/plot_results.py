"""Plot one column of a result.csv against another.

    python scripts/plot_results.py results/eig-ball/result.csv --x m --y eigenvalue --by label

Needs the optional ``plot`` extra (matplotlib).
"""
#%%
import argparse
import os
import sys

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd


def build_parser():
    parser = argparse.ArgumentParser(description='Plot columns of a choquardlab result.csv.')
    parser.add_argument('csv', help='result.csv written by a run')
    parser.add_argument('--x', required=True, help='column for the horizontal axis')
    parser.add_argument('--y', required=True, nargs='+', help='one or more columns for the vertical axis')
    parser.add_argument('--by', default=None, help='draw one line per value of this column')
    parser.add_argument('--loglog', action='store_true', help='logarithmic axes')
    parser.add_argument('--output', default=None, help='image file, <csv folder>/<y>_vs_<x>.png by default')
    return parser


def plot(table, x, ys, by=None, loglog=False):
    """Line plot of ``ys`` against ``x``, one line per group of ``by``."""
    missing = [c for c in [x, *ys, *([by] if by else [])] if c not in table.columns]
    if missing:
        raise KeyError(f"columns {missing} not in the table (have {list(table.columns)})")
    figure, axes = plt.subplots(figsize=(6, 4))
    groups = table.groupby(by) if by else [(None, table)]
    for key, group in groups:
        group = group.sort_values(x)
        for y in ys:
            label = y if key is None else f"{y} [{by}={key}]"
            axes.plot(group[x], group[y].abs() if loglog else group[y], marker='o', label=label)
    if loglog:
        axes.set_xscale('log')
        axes.set_yscale('log')
    axes.set_xlabel(x)
    axes.set_ylabel(', '.join(ys))
    axes.grid(True, which='both', alpha=0.3)
    axes.legend()
    figure.tight_layout()
    return figure


def main(argv=None):
    args = build_parser().parse_args(argv)
    table = pd.read_csv(args.csv)
    figure = plot(table, args.x, args.y, args.by, args.loglog)
    output = args.output or os.path.join(os.path.dirname(args.csv), f"{'_'.join(args.y)}_vs_{args.x}.png")
    figure.savefig(output, dpi=150)
    print(f"wrote {output}")
    return 0


if __name__ == '__main__':
    sys.exit(main())
