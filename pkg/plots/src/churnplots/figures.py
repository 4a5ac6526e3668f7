"""Figure rendering. Strictly read-only over run directories; writes one
raster image per call."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import data  # noqa: E402

RATE_CURVE = "rate_curve"
MISSING_COMPARISON = "missing_comparison"
GRAPHENE_BARS = "graphene_bars"
KINDS = (RATE_CURVE, MISSING_COMPARISON, GRAPHENE_BARS)


@dataclass(slots=True)
class FigureSpec:
    kind: str
    run_dirs: list[Path]
    out_path: Path
    window: int = 36

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise data.DataError(f"unknown figure kind {self.kind!r}")
        want = 2 if self.kind == MISSING_COMPARISON else (1, 2)
        if self.kind == MISSING_COMPARISON:
            if len(self.run_dirs) != 2:
                raise data.DataError("missing_comparison needs two run dirs")
        elif not 1 <= len(self.run_dirs) <= 2:
            raise data.DataError(f"{self.kind} needs one or two run dirs")


def _label(run_dir: Path) -> str:
    return Path(run_dir).name


def _rate_curve(spec: FigureSpec, ax) -> None:
    for run_dir in spec.run_dirs:
        series = data.rate_series(data.load_rates(run_dir))
        for node, (times, rates) in sorted(series.items()):
            ax.plot(times, rates, label=f"{_label(run_dir)} node {node}")
    ax.set_xlabel("blocks observed")
    ax.set_ylabel(f"success rate (moving avg, {spec.window} blocks)")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=7)


def _missing_comparison(spec: FigureSpec, ax) -> None:
    for run_dir in spec.run_dirs:
        times, missing = data.missing_series(data.load_outcomes(run_dir))
        ax.plot(times, missing, label=_label(run_dir), alpha=0.8)
    ax.set_xlabel("block time")
    ax.set_ylabel("missing transactions per block")
    ax.legend()


def _graphene_bars(spec: FigureSpec, ax) -> None:
    labels = [_label(d) for d in spec.run_dirs]
    counts = [data.graphene_failures(data.load_outcomes(d))
              for d in spec.run_dirs]
    ax.bar(labels, counts, width=0.5)
    ax.set_ylabel("failed Graphene blocks")
    for i, c in enumerate(counts):
        ax.annotate(str(c), (i, c), ha="center", va="bottom")


_RENDERERS = {
    RATE_CURVE: _rate_curve,
    MISSING_COMPARISON: _missing_comparison,
    GRAPHENE_BARS: _graphene_bars,
}


def render(spec: FigureSpec) -> Path:
    spec.validate()
    fig, ax = plt.subplots(figsize=(7, 4.2), dpi=120)
    try:
        _RENDERERS[spec.kind](spec, ax)
        ax.set_title(spec.kind.replace("_", " "))
        fig.tight_layout()
        out = Path(spec.out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out)
    finally:
        plt.close(fig)
    return out
