"""Command-line interface.

Subcommands:

* ``estimate``   - run the flash pipeline on one registered image pair.
* ``synthesize`` - build a multi-illuminant dataset (procedural or from a
                   directory of 10-direction stacks).
* ``bench``      - evaluate all estimator variants over a dataset manifest.
* ``correct``    - apply a saved illumination map to an image.

Every subcommand is deterministic given identical flags and inputs, and never
mutates its inputs. Exit codes: 0 success, 2 bad usage, 3 unreadable or
malformed files, 4 dimension mismatch, 5 estimation failure, 1 other errors.
The FLASHGP_OUTDIR environment variable supplies the default output
directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .evalbench import BenchConfig, format_table, run_benchmark, save_results
from .grayness import METHODS, GraynessConfig
from .imgcore import (
    DEFAULT_EPS,
    DEFAULT_FILTER_SIGMA,
    DimensionError,
    EstimationError,
    FlashGPError,
    ImageIOError,
    IlluminationMap,
    load_image,
    load_mask,
    normalize_chroma,
    read_pfm,
    save_chroma_png,
    write_pfm,
    write_png8,
    save_mask,
)
from .pipeline import EstimateConfig, FlashPair, apply_correction, estimate, estimate_stage_outputs
from .scenesynth import (
    build_dataset,
    load_directional_stacks,
    make_procedural_stacks,
)

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIMENSIONS = 4
EXIT_ESTIMATION = 5


def _default_outdir() -> str:
    return os.environ.get("FLASHGP_OUTDIR", ".")


def _add_estimator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS, default="gp", help="grayness estimator")
    p.add_argument("--fraction", type=float, default=0.1, help="share of pixels kept as gray candidates")
    p.add_argument("--sigma-spatial", type=float, default=None, help="cluster blending bandwidth in pixels (default: 0.15 of the image diagonal)")
    p.add_argument("--filter-sigma", type=float, default=DEFAULT_FILTER_SIGMA, help="center-surround filter scale")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="dark-pixel floor")
    p.add_argument("--seed", type=int, default=0, help="seed for all stochastic steps")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flashgp", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate spatial illumination from a flash pair")
    est.add_argument("--ambient", required=True, help="no-flash image (PFM or 16-bit PNG)")
    est.add_argument("--flash", required=True, help="flash image")
    est.add_argument("--mask", default=None, help="optional 8-bit PNG participation mask")
    _add_estimator_flags(est)
    est.add_argument("--m", "--clusters", dest="clusters", type=int, default=4, help="cluster count")
    est.add_argument("--out", default=None, help="output directory")
    est.add_argument("--debug", action="store_true", help="also write grayness, residual, and cluster artifacts")
    est.set_defaults(func=cmd_estimate)

    syn = sub.add_parser("synthesize", help="build a multi-illuminant flash/no-flash dataset")
    src = syn.add_mutually_exclusive_group(required=True)
    src.add_argument("--procedural", action="store_true", help="render procedural objects")
    src.add_argument("--stack-dir", default=None, help="directory of 10-direction object stacks")
    syn.add_argument("--out", default=None, help="output directory")
    syn.add_argument("--n-min", type=int, default=2, help="smallest ambient light count")
    syn.add_argument("--n-max", type=int, default=8, help="largest ambient light count")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--size", type=int, default=128, help="procedural render size in pixels")
    syn.add_argument("--objects", type=int, default=15, help="number of procedural objects")
    syn.add_argument("--noise", type=float, default=0.0, help="Gaussian noise level relative to full scale")
    syn.set_defaults(func=cmd_synthesize)

    ben = sub.add_parser("bench", help="run the benchmark over a dataset manifest")
    ben.add_argument("--manifest", required=True, help="manifest.jsonl produced by synthesize")
    ben.add_argument("--methods", default="gp,msgp,dgp", help="comma-separated estimator list")
    ben.add_argument("--fraction", type=float, default=0.1)
    ben.add_argument("--sigma-spatial", type=float, default=None)
    ben.add_argument("--filter-sigma", type=float, default=DEFAULT_FILTER_SIGMA)
    ben.add_argument("--eps", type=float, default=DEFAULT_EPS)
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--jobs", type=int, default=1, help="worker process cap")
    ben.add_argument("--no-noflash", action="store_true", help="skip the no-flash baselines")
    ben.add_argument("--no-global", action="store_true", help="skip the auxiliary global baselines")
    ben.add_argument("--out", default=None, help="output directory")
    ben.set_defaults(func=cmd_bench)

    cor = sub.add_parser("correct", help="apply a saved illumination map to an image")
    cor.add_argument("--image", required=True, help="image to correct (PFM or 16-bit PNG)")
    cor.add_argument("--map", required=True, help="illumination map PFM")
    cor.add_argument("--out", default=None, help="output PNG path (default: corrected.png in the output directory)")
    cor.set_defaults(func=cmd_correct)

    return parser


def _resolve_outdir(arg: str | None) -> Path:
    out = Path(arg) if arg else Path(_default_outdir())
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_estimate(args: argparse.Namespace) -> int:
    ambient = load_image(args.ambient)
    flash = load_image(args.flash)
    mask = load_mask(args.mask).data if args.mask else None
    pair = FlashPair(ambient, flash, mask)
    cfg = EstimateConfig(
        fraction=args.fraction,
        clusters=args.clusters,
        sigma_spatial=args.sigma_spatial,
        seed=args.seed,
        grayness=GraynessConfig(eps=args.eps, sigma=args.filter_sigma),
    )
    out = _resolve_outdir(args.out)
    if args.debug:
        stages = estimate_stage_outputs(pair, args.method, cfg)
        imap = stages["illumination"]
        write_pfm(out / "residual.pfm", stages["residual"].data)
        write_pfm(out / "grayness.pfm", stages["grayness"].data)
        stages["pixels"].to_csv(out / "gray_pixels.csv")
        model = stages["model"]
        (out / "clusters.json").write_text(
            json.dumps(
                {
                    "centroids": model.centroids.tolist(),
                    "chroma": model.chroma.tolist(),
                    "counts": model.counts.tolist(),
                    "sigma": model.sigma,
                },
                indent=2,
            )
            + "\n"
        )
    else:
        imap = estimate(pair, args.method, cfg)
    write_pfm(out / "illumination.pfm", imap.data)
    save_mask(out / "illumination_mask.png", imap.mask)
    save_chroma_png(out / "illumination.png", imap)
    write_png8(out / "corrected.png", apply_correction(ambient, imap).data)
    print(f"wrote illumination map and corrected image to {out}")
    return 0


def cmd_synthesize(args: argparse.Namespace) -> int:
    if args.n_min < 1 or args.n_max < args.n_min:
        raise ValueError("light count range must satisfy 1 <= n-min <= n-max")
    if args.procedural:
        stacks = make_procedural_stacks(args.objects, args.size, args.size, args.seed)
    else:
        stacks = load_directional_stacks(args.stack_dir)
    out = _resolve_outdir(args.out)
    n_values = range(args.n_min, args.n_max + 1)
    manifest = build_dataset(stacks, out, n_values, args.seed, args.noise)
    count = len(stacks) * len(n_values)
    print(f"wrote {count} triplets ({len(stacks)} objects x N in {list(n_values)}) to {manifest}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    methods = tuple(m.strip().lower() for m in args.methods.split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    if not methods:
        raise ValueError("no methods selected")
    cfg = BenchConfig(
        methods=methods,
        fraction=args.fraction,
        seed=args.seed,
        sigma_spatial=args.sigma_spatial,
        filter_sigma=args.filter_sigma,
        eps=args.eps,
        include_noflash=not args.no_noflash,
        include_global=not args.no_global,
        jobs=max(1, args.jobs),
    )
    result = run_benchmark(args.manifest, cfg)
    out = _resolve_outdir(args.out)
    paths = save_results(result, out)
    print(format_table(result), end="")
    print(f"results written to {paths['json'].parent}")
    return 0


def cmd_correct(args: argparse.Namespace) -> int:
    img = load_image(args.image)
    raw = read_pfm(args.map).astype(np.float64)
    if raw.ndim != 3:
        raise ImageIOError(f"illumination map must be 3-channel: {args.map}")
    norms = np.linalg.norm(raw, axis=2)
    mask = norms > 0.5
    data = normalize_chroma(raw)
    data[~mask] = 0.0
    imap = IlluminationMap(data, mask)
    corrected = apply_correction(img, imap)
    if args.out and Path(args.out).suffix:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
    else:
        out_path = _resolve_outdir(args.out) / "corrected.png"
    write_png8(out_path, corrected.data)
    print(f"wrote {out_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ImageIOError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except DimensionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIMENSIONS
    except EstimationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (FlashGPError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
