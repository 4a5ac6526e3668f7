"""churnplots command line: render one figure from one or two run dirs."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from .data import DataError
from .figures import KINDS, FigureSpec, render


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="churnplots",
        description="Render figures from churnsim CSV artifacts.")
    p.add_argument("run_dirs", nargs="+", type=Path, metavar="run-dir",
                   help="one or two simulator output directories")
    p.add_argument("--kind", required=True, choices=sorted(KINDS))
    p.add_argument("--out", required=True, type=Path,
                   help="output image path")
    p.add_argument("--window", type=int, default=36,
                   help="moving-average window annotation")
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    spec = FigureSpec(args.kind, args.run_dirs, args.out, args.window)
    try:
        out = render(spec)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
