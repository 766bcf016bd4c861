"""Log-log convergence plots written as self-contained SVG files."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .truncation import fit_order  # noqa: E402

GUIDE_SLOPES = (1.5, 2.0)


class EmptyInputError(ValueError):
    pass


def read_convergence_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    return rows


def convergence_svg(taus: Sequence[float], values: Sequence[float], title: str, ylabel: str, guides=GUIDE_SLOPES) -> tuple[str, float]:
    """Render one log2-log2 plot; returns ``(svg_text, fitted_slope)``."""
    if len(taus) == 0:
        raise EmptyInputError("nothing to plot")
    taus = np.asarray(taus, float)
    values = np.asarray(values, float)
    order = np.argsort(taus)
    taus, values = taus[order], values[order]
    if len(taus) >= 4:
        slope = fit_order(taus, values).slope
    elif len(taus) >= 2:
        slope = float(np.polyfit(np.log2(taus), np.log2(values), 1)[0])
    else:
        slope = float("nan")

    # svg.fonttype "none" keeps labels as searchable <text> elements
    with plt.rc_context({"svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(np.log2(taus), np.log2(values), "o-", color="k", label=f"fitted slope {slope:.2f}")
        x0, y0 = np.log2(taus[-1]), np.log2(values[-1])
        xs = np.log2(taus)
        for s, style in zip(guides, ("--", ":")):
            ax.plot(xs, y0 + s * (xs - x0) - 0.5, style, color="gray", label=f"slope {s:g}")
        ax.set_xlabel(r"$\log_2 \tau$")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend(loc="lower right")
        ax.annotate(f"{slope:.2f}", (xs.mean(), np.log2(values).mean()), textcoords="offset points", xytext=(-30, 10))
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    text = buf.getvalue()

    table = "\n".join(f"{float(t)!r},{float(v)!r}" for t, v in zip(taus, values))
    comment = f"<!-- data: {title}\ntau,value\n{table}\nfitted_slope={slope:.6f}\n-->\n"
    head, sep, rest = text.partition("?>\n")
    return (head + sep + comment + rest if sep else comment + text), slope


def plot_convergence_csv(path, out_dir=None) -> list[Path]:
    """Error and bias plots for every norm found in a convergence CSV."""
    path = Path(path)
    rows = read_convergence_csv(path)
    out_dir = Path(out_dir) if out_dir is not None else path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for norm in sorted({r["norm_id"] for r in rows}):
        sel = [r for r in rows if r["norm_id"] == norm]
        taus = [float(r["tau"]) for r in sel]
        for stat, label in (("E_stat", "error"), ("B_stat", "bias")):
            vals = [float(r[stat]) for r in sel]
            svg, _ = convergence_svg(taus, vals, f"{path.stem} {label} {norm}", f"log2 {label}")
            target = out_dir / f"{path.stem}_{label}_{norm.replace(',', '-')}.svg"
            target.write_text(svg)
            written.append(target)
    return written
