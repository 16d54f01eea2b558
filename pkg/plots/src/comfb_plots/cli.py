"""comfb-render: draw figures from comfb artifact directories."""

from __future__ import annotations

import argparse
import sys

from .artifacts import ArtifactError
from .render import KINDS, FigureJob, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="comfb-render",
        description="render a figure from a comfb run directory")
    p.add_argument("--manifest", required=True, help="path to manifest.json")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--measure", required=True,
                   help="measure/column name (e.g. E_N, G_ab, abs_alpha)")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--colormap", default="viridis")
    p.add_argument("--no-contour", action="store_true",
                   help="skip the zero-steering contour overlay")
    p.add_argument("--slices", default="",
                   help="comma-separated axis1 values for kind=slices")
    p.add_argument("--dpi", type=int, default=150)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    slice_values = tuple(float(v) for v in args.slices.split(",") if v)
    job = FigureJob(args.manifest, args.kind, args.measure, args.out,
                    colormap=args.colormap, contour=not args.no_contour,
                    slice_values=slice_values, dpi=args.dpi)
    try:
        info = render(job)
    except (ArtifactError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"rendered {info.out_path} (hatched cells: {info.n_hatched}, "
          f"contour lines: {info.n_contour_lines})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
