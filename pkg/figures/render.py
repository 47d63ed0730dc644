"""Render the experiment CSVs produced by the maketake CLI into the ten
standard figure analogues (mean curves with 95% bands, spread-vs-inventory
curves, spread-difference-vs-volatility curve).

Pure post-processing: no numerical recomputation happens here, and the
output is deterministic (pinned fonts and size, metadata stripped), so
re-rendering identical CSVs gives byte-identical images.

Usage:
    python render.py FIGURE_ID INPUT.csv [INPUT2.csv] --out figure.png
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams.update({
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "maketake-figures",
})


class RenderError(ValueError):
    """Anything wrong with the inputs: missing file, column, or data."""


@dataclass(frozen=True)
class Csv:
    path: str
    meta: dict
    columns: dict  # name -> list of float-or-None

    def col(self, name):
        if name not in self.columns:
            raise RenderError(f"{self.path}: missing column {name!r}")
        return self.columns[name]

    def numeric(self, name):
        vals = [v for v in self.col(name) if v is not None]
        if not vals:
            raise RenderError(f"{self.path}: column {name!r} has no values")
        return vals

    def label(self, default=None):
        return self.meta.get("regime", default or Path(self.path).stem)


def read_csv(path) -> Csv:
    lines = Path(path).read_text().splitlines()
    meta = {}
    if lines and lines[0].startswith("#"):
        for token in lines.pop(0).lstrip("# ").split():
            if "=" in token:
                key, _, val = token.partition("=")
                meta[key] = val
    if not lines:
        raise RenderError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    rows = [line.split(",") for line in lines[1:] if line.strip()]
    if not rows:
        raise RenderError(f"{path}: no data rows")
    columns = {name: [] for name in header}
    for row in rows:
        if len(row) != len(header):
            raise RenderError(f"{path}: ragged row {row!r}")
        for name, cell in zip(header, row):
            cell = cell.strip()
            columns[name].append(float(cell) if cell else None)
    return Csv(path=str(path), meta=meta, columns=columns)


@dataclass(frozen=True)
class FigureSpec:
    figure_id: int
    inputs: tuple
    output: str


def _pairs(xs, *cols):
    # keep rows where every requested column is present
    out = [[] for _ in range(1 + len(cols))]
    for i, x in enumerate(xs):
        vals = [c[i] for c in cols]
        if x is None or any(v is None for v in vals):
            continue
        out[0].append(x)
        for j, v in enumerate(vals):
            out[j + 1].append(v)
    if not out[0]:
        raise RenderError("no complete rows to plot")
    return out


def _band_plot(ax, csvs, series, ylabel):
    for csv in csvs:
        t, mean, ci = _pairs(csv.col("t"), csv.col(f"{series}_mean"),
                             csv.col(f"{series}_ci95"))
        lo = [m - c for m, c in zip(mean, ci)]
        hi = [m + c for m, c in zip(mean, ci)]
        line, = ax.plot(t, mean, label=csv.label())
        ax.fill_between(t, lo, hi, alpha=0.25, color=line.get_color(), linewidth=0)
    ax.set_xlabel("time (s)")
    ax.set_ylabel(ylabel)
    ax.legend(loc="best")


def _inventory_plot(ax, csv, cols, ylabel):
    for name in cols:
        q, y = _pairs(csv.col("q"), csv.col(name))
        ax.plot(q, y, label=name.replace("_", " "))
    ax.set_xlabel("initial inventory")
    ax.set_ylabel(ylabel)
    ax.legend(loc="best")


def render(spec: FigureSpec) -> str:
    """Render one figure analogue; returns the output path."""
    csvs = [read_csv(p) for p in spec.inputs]
    fig, ax = plt.subplots()
    fid = spec.figure_id
    if fid == 1:
        _inventory_plot(ax, csvs[0], ("contracted_total", "benchmark_total"),
                        "initial total spread (ticks)")
        ax.set_title("Initial spreads with and without the contract")
    elif fid == 2:
        _band_plot(ax, csvs, "spread", "quoted total spread (ticks)")
        ax.set_title("Average spread, 95% band")
    elif fid == 3:
        _band_plot(ax, csvs, "flow", "cumulative market orders")
        ax.set_title("Average order flow, 95% band")
    elif fid == 4:
        _inventory_plot(ax, csvs[0],
                        ("contracted_ask", "contracted_bid",
                         "benchmark_ask", "benchmark_bid"),
                        "initial half-spread (ticks)")
        ax.set_title("Ask and bid quotes against inventory")
    elif fid == 5:
        sg, diff = _pairs(csvs[0].col("sigma"), csvs[0].col("difference"))
        ax.plot(sg, diff, marker="o")
        ax.set_xlabel("volatility (ticks / sqrt s)")
        ax.set_ylabel("benchmark minus contracted spread (ticks)")
        ax.set_title("Initial spread difference against volatility")
    elif fid == 6:
        _band_plot(ax, csvs, "mm_pnl", "market maker P&L (ticks)")
        ax.set_title("Market maker P&L, 95% band")
    elif fid == 7:
        _band_plot(ax, csvs, "exchange_pnl", "exchange P&L (ticks)")
        ax.set_title("Exchange P&L, 95% band")
    elif fid == 8:
        _band_plot(ax, csvs, "total_pnl", "aggregate P&L (ticks)")
        ax.set_title("Aggregate market maker plus exchange P&L, 95% band")
    elif fid == 9:
        _band_plot(ax, csvs, "ask_flow", "cumulative ask-side fills")
        ax.set_title("Matched average ask order flow, 95% band")
    elif fid == 10:
        _band_plot(ax, csvs, "trading_cost", "taker trading cost (ticks)")
        ax.set_title("Average trading cost, 95% band")
    else:
        plt.close(fig)
        raise RenderError(f"figure id must be 1..10, got {fid}")

    fig.tight_layout()
    fig.savefig(spec.output, format="png", metadata={"Software": None})
    plt.close(fig)
    return spec.output


EXPECTED_INPUTS = {
    1: ("spreads_initial.csv",),
    2: ("compare_contracted.csv", "compare_benchmark.csv"),
    3: ("compare_contracted.csv", "compare_benchmark.csv"),
    4: ("spreads_initial.csv",),
    5: ("spread_vs_sigma.csv",),
    6: ("compare_contracted.csv", "compare_benchmark.csv"),
    7: ("compare_contracted.csv", "compare_benchmark.csv"),
    8: ("compare_contracted.csv", "compare_benchmark.csv"),
    9: ("tradingcost_contracted.csv", "tradingcost_benchmark.csv"),
    10: ("tradingcost_contracted.csv", "tradingcost_benchmark.csv"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("figure_id", type=int, help="figure analogue, 1..10")
    parser.add_argument("inputs", nargs="+", help="input CSV path(s)")
    parser.add_argument("--out", required=True, help="output PNG path")
    args = parser.parse_args(argv)
    try:
        render(FigureSpec(figure_id=args.figure_id, inputs=tuple(args.inputs),
                          output=args.out))
    except (RenderError, OSError) as exc:
        print(f"render failed: {exc}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
