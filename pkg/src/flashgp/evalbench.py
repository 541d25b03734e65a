"""Angular-error metric and the dataset benchmark harness.

The benchmark runs every estimator variant over a dataset manifest and
aggregates per-image angular errors into a table keyed by method and light
count, plus a pooled "all" column. Three variants exist per method family:

* ``<m>+f``      flash pipeline on the flash/no-flash pair,
* ``<m>``        no-flash baseline (clusters + blending on the ambient frame),
* ``<m>-global`` auxiliary single-vector baseline (mean-shift mode of the
                 ambient gray pixels, evaluated against the spatial truth).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .grayness import (
    DEFAULT_MEANSHIFT_BANDWIDTH,
    GraynessConfig,
    compute_grayness,
    dominant_illuminant_meanshift,
    select_top_gray,
)
from .imgcore import (
    DEFAULT_EPS,
    DEFAULT_FILTER_SIGMA,
    DimensionError,
    EstimationError,
    FlashGPError,
    IlluminationMap,
    ScalarMap,
)
from .pipeline import EstimateConfig, FlashPair, estimate, estimate_no_flash
from .scenesynth import SampleTriplet, load_manifest, load_triplet


def angular_error(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between two chroma vectors in degrees, scale invariant."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("angular error is undefined for zero vectors")
    return float(np.degrees(np.arccos(np.clip(a @ b / (na * nb), -1.0, 1.0))))


def median_low(values: np.ndarray) -> float:
    """Deterministic median: the lower-middle element for even counts."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("median of empty sequence")
    return float(v[(v.size - 1) // 2])


def error_map(
    est: IlluminationMap, gt: IlluminationMap
) -> tuple[ScalarMap, float, float]:
    """Per-pixel angular error plus its (mean, median) over the valid
    intersection of both maps."""
    if (est.height, est.width) != (gt.height, gt.width):
        raise DimensionError("estimated and ground-truth map dimensions differ")
    both = est.mask & gt.mask
    if not both.any():
        raise EstimationError("no overlapping valid pixels to evaluate")
    dots = np.clip((est.data * gt.data).sum(axis=2), -1.0, 1.0)
    err = np.degrees(np.arccos(dots))
    err = np.where(both, err, np.nan)
    values = err[both]
    return ScalarMap(err, both), float(values.mean()), median_low(values)


# ---------------------------------------------------------------------------
# benchmark harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchConfig:
    """Benchmark settings; estimator defaults mirror the pipeline, and the
    cluster count is always set to the sample's light count."""

    methods: tuple[str, ...] = ("gp", "msgp", "dgp")
    fraction: float = 0.1
    seed: int = 0
    sigma_spatial: float | None = None
    filter_sigma: float = DEFAULT_FILTER_SIGMA
    eps: float = DEFAULT_EPS
    meanshift_bandwidth: float = DEFAULT_MEANSHIFT_BANDWIDTH
    include_noflash: bool = True
    include_global: bool = True
    jobs: int = 1


@dataclass
class ErrorStats:
    """Per-image error statistics over the valid evaluation region."""

    mean_deg: float
    median_deg: float
    valid_pixels: int


@dataclass
class ImageResult:
    object_id: str
    n: int
    method: str
    variant: str  # "flash" | "noflash" | "global"
    status: str  # "ok" | "failed"
    stats: ErrorStats | None = None
    error: str | None = None

    @property
    def label(self) -> str:
        if self.variant == "flash":
            return f"{self.method}+f"
        if self.variant == "global":
            return f"{self.method}-global"
        return self.method


@dataclass
class BenchmarkResult:
    config: dict
    per_image: list[ImageResult]
    table: dict
    improvements: dict
    failures: int


def _estimate_config(cfg: BenchConfig, n: int) -> EstimateConfig:
    return EstimateConfig(
        fraction=cfg.fraction,
        clusters=n,
        sigma_spatial=cfg.sigma_spatial,
        seed=cfg.seed,
        grayness=GraynessConfig(eps=cfg.eps, sigma=cfg.filter_sigma),
    )


def _global_estimate(
    triplet: SampleTriplet, method: str, cfg: BenchConfig
) -> IlluminationMap:
    gmap = compute_grayness(triplet.ambient, method, GraynessConfig(cfg.eps, cfg.filter_sigma))
    pixels = select_top_gray(gmap, triplet.ambient, cfg.fraction, triplet.mask)
    vec = dominant_illuminant_meanshift(pixels, cfg.meanshift_bandwidth)
    return IlluminationMap.constant(vec, triplet.ambient.height, triplet.ambient.width, triplet.mask)


def _score(est: IlluminationMap, triplet: SampleTriplet) -> ErrorStats:
    _, mean, median = error_map(est, triplet.gt)
    valid = int((est.mask & triplet.gt.mask).sum())
    return ErrorStats(mean, median, valid)


def _evaluate_record(record: dict, base_dir: str, cfg: BenchConfig) -> list[ImageResult]:
    triplet = load_triplet(record, base_dir)
    pair = FlashPair(triplet.ambient, triplet.flash, triplet.mask)
    ecfg = _estimate_config(cfg, triplet.n)
    out = []
    for method in cfg.methods:
        runs = [("flash", lambda m=method: estimate(pair, m, ecfg))]
        if cfg.include_noflash:
            runs.append(
                ("noflash", lambda m=method: estimate_no_flash(triplet.ambient, m, ecfg, triplet.mask))
            )
        if cfg.include_global:
            runs.append(("global", lambda m=method: _global_estimate(triplet, m, cfg)))
        for variant, run in runs:
            try:
                stats = _score(run(), triplet)
                out.append(ImageResult(triplet.object_id, triplet.n, method, variant, "ok", stats))
            except (FlashGPError, ValueError) as e:
                out.append(
                    ImageResult(triplet.object_id, triplet.n, method, variant, "failed", None, str(e))
                )
    return out


def _eval_star(args: tuple) -> list[ImageResult]:
    return _evaluate_record(*args)


def _cell(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {
        "median": median_low(arr),
        "mean": float(arr.mean()),
        "images": int(arr.size),
    }


def _aggregate(results: list[ImageResult]) -> tuple[dict, dict, int]:
    labels: list[str] = []
    for r in results:
        if r.label not in labels:
            labels.append(r.label)
    table: dict = {}
    failures = 0
    for label in labels:
        ok = [r for r in results if r.label == label and r.status == "ok"]
        failed = sum(1 for r in results if r.label == label and r.status == "failed")
        failures += failed
        cells: dict = {}
        for n in sorted({r.n for r in ok}):
            cells[str(n)] = _cell([r.stats.mean_deg for r in ok if r.n == n])
        if ok:
            cells["all"] = _cell([r.stats.mean_deg for r in ok])
        cells["failures"] = failed
        table[label] = cells

    improvements: dict = {}
    methods = sorted({r.method for r in results}, key=lambda m: labels.index(m) if m in labels else 99)
    for method in methods:
        flash = table.get(f"{method}+f", {}).get("all")
        base = table.get(method, {}).get("all")
        if flash and base and base["median"] > 0 and base["mean"] > 0:
            improvements[method] = {
                "median_pct": 100.0 * (1.0 - flash["median"] / base["median"]),
                "mean_pct": 100.0 * (1.0 - flash["mean"] / base["mean"]),
            }
    return table, improvements, failures


def run_benchmark(manifest_path: str | Path, cfg: BenchConfig = BenchConfig()) -> BenchmarkResult:
    """Evaluate every manifest sample under every configured variant.

    Per-image failures are recorded (with their cause) and excluded from the
    aggregates. Deterministic for a fixed manifest and config, regardless of
    the worker count.
    """
    manifest_path = Path(manifest_path)
    records = load_manifest(manifest_path)
    base_dir = str(manifest_path.parent)
    tasks = [(rec, base_dir, cfg) for rec in records]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            chunks = list(ex.map(_eval_star, tasks))
    else:
        chunks = [_evaluate_record(*t) for t in tasks]
    results = [r for chunk in chunks for r in chunk]
    table, improvements, failures = _aggregate(results)
    return BenchmarkResult(asdict(cfg), results, table, improvements, failures)


# ---------------------------------------------------------------------------
# renderings
# ---------------------------------------------------------------------------


def result_to_dict(result: BenchmarkResult) -> dict:
    per_image = []
    for r in result.per_image:
        entry = {
            "object": r.object_id,
            "n": r.n,
            "method": r.method,
            "variant": r.variant,
            "status": r.status,
        }
        if r.stats is not None:
            entry.update(
                mean_deg=r.stats.mean_deg,
                median_deg=r.stats.median_deg,
                valid_pixels=r.stats.valid_pixels,
            )
        if r.error is not None:
            entry["error"] = r.error
        per_image.append(entry)
    return {
        "config": result.config,
        "table": result.table,
        "improvements": result.improvements,
        "failures": result.failures,
        "per_image": per_image,
    }


def result_to_json(result: BenchmarkResult) -> str:
    return json.dumps(result_to_dict(result), indent=2) + "\n"


def format_table(result: BenchmarkResult) -> str:
    """Aligned text table: one row per variant, median/mean cells per light
    count plus the pooled column."""
    ns: list[int] = sorted(
        {int(k) for cells in result.table.values() for k in cells if k.isdigit()}
    )
    cols = [str(n) for n in ns] + ["all"]
    width = 14
    lines = []
    header = f"{'method/N':<14}" + "".join(f"{c:>{width}}" for c in cols)
    lines.append(header)
    lines.append(f"{'':<14}" + "".join(f"{'med / mean':>{width}}" for _ in cols))
    for label, cells in result.table.items():
        row = f"{label:<14}"
        for c in cols:
            cell = cells.get(c)
            if cell is None:
                row += f"{'-':>{width}}"
            else:
                row += f"{cell['median']:>6.2f} /{cell['mean']:>6.2f}"
        lines.append(row)
    lines.append(f"failures: {result.failures}")
    for method, imp in result.improvements.items():
        lines.append(
            f"{method}: flash improves median by {imp['median_pct']:.1f}% "
            f"and mean by {imp['mean_pct']:.1f}%"
        )
    return "\n".join(lines) + "\n"


def save_results(result: BenchmarkResult, out_dir: str | Path) -> dict[str, Path]:
    """Write results.json, results.txt, and per_image.csv under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / "results.json",
        "text": out_dir / "results.txt",
        "csv": out_dir / "per_image.csv",
    }
    paths["json"].write_text(result_to_json(result))
    paths["text"].write_text(format_table(result))
    with open(paths["csv"], "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["object", "n", "method", "variant", "status", "mean_deg", "median_deg", "valid_pixels", "error"]
        )
        for r in result.per_image:
            writer.writerow(
                [
                    r.object_id,
                    r.n,
                    r.method,
                    r.variant,
                    r.status,
                    "" if r.stats is None else repr(r.stats.mean_deg),
                    "" if r.stats is None else repr(r.stats.median_deg),
                    "" if r.stats is None else r.stats.valid_pixels,
                    r.error or "",
                ]
            )
    return paths
