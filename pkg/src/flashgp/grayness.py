"""Grayness scoring, gray-pixel selection, and the mean-shift global estimate.

Three per-pixel scores are provided; in all of them lower means grayer and
exactly 0 means the pixel is indistinguishable from a gray surface:

* ``gp``   - channel variance of the filtered log image over the channel mean.
* ``msgp`` - angle form: arccos of the l1/l2 norm ratio of the filtered log
  image, luminance independent by construction, range [0, arccos(1/sqrt(3))].
* ``dgp``  - norm of the filtered log chroma ratios (R and G against total
  intensity), sensitive only to local chroma variation.

All three inherit exposure invariance from the log transform plus the
zero-sum filter: scaling the input image by any k > 0 leaves them unchanged.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imgcore import (
    DEFAULT_EPS,
    DEFAULT_FILTER_SIGMA,
    EstimationError,
    LinearImage,
    PixelMask,
    ScalarMap,
    log_transform,
    mexican_hat,
)

METHODS = ("gp", "msgp", "dgp")

#: Upper bound of the msgp score, attained when only one channel responds.
MSGP_MAX = math.acos(1.0 / math.sqrt(3.0))

DEFAULT_CONTRAST_FLOOR = 1e-6
DEFAULT_MEANSHIFT_BANDWIDTH = 0.05


@dataclass(frozen=True)
class GraynessConfig:
    """Knobs shared by the grayness estimators.

    eps: dark-pixel floor; pixels with any channel at or below it are excluded.
    sigma: scale of the center-surround filter.
    contrast_floor: filtered-response magnitude below which a pixel carries
        no evidence either way and is marked invalid rather than gray.
    smooth_window: odd box-window width for optional score averaging
        (0 disables it; the filter support already smooths).
    """

    eps: float = DEFAULT_EPS
    sigma: float = DEFAULT_FILTER_SIGMA
    contrast_floor: float = DEFAULT_CONTRAST_FLOOR
    smooth_window: int = 0


@dataclass
class GraynessMap:
    """Per-pixel grayness score; lower = grayer, NaN where undefined."""

    data: np.ndarray
    mask: np.ndarray
    method: str

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown grayness method {self.method!r}")
        self.data = np.asarray(self.data, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.data.shape != self.mask.shape or self.data.ndim != 2:
            raise ValueError("grayness data and mask must be HxW with equal shapes")
        valid = self.data[self.mask]
        if valid.size and (not np.all(np.isfinite(valid)) or valid.min() < 0):
            raise ValueError("grayness must be finite and non-negative where valid")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def as_scalar_map(self) -> ScalarMap:
        return ScalarMap(self.data, self.mask)


def _filtered_log_channels(
    img: LinearImage, cfg: GraynessConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Stack of center-surround responses of the log channels, plus the
    shared (eroded) validity mask."""
    maps = log_transform(img, cfg.eps)
    filtered = [mexican_hat(m, cfg.sigma) for m in maps]
    d = np.stack([f.data for f in filtered], axis=-1)
    return d, filtered[0].mask


def _smooth_scores(values: np.ndarray, mask: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return values
    if window % 2 == 0:
        raise ValueError("smooth_window must be odd")
    filled = np.where(mask, values, 0.0)
    num = ndimage.uniform_filter(filled, size=window, mode="constant")
    den = ndimage.uniform_filter(mask.astype(np.float64), size=window, mode="constant")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / den, np.nan)
    return np.where(mask, out, np.nan)


def _finish(values: np.ndarray, valid: np.ndarray, method: str, cfg: GraynessConfig) -> GraynessMap:
    values = np.where(valid, values, np.nan)
    values = _smooth_scores(values, valid, cfg.smooth_window)
    return GraynessMap(values, valid, method)


def gp_score(d: np.ndarray) -> np.ndarray:
    """Channel-deviation score from filtered log responses d (..., 3).

    Sum of squared deviations from the channel mean, divided by the mean's
    magnitude. Callers must guard near-zero means.
    """
    mean = d.mean(axis=-1)
    dev = ((d - mean[..., None]) ** 2).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return dev / np.abs(mean)


def msgp_score(d: np.ndarray) -> np.ndarray:
    """Angle score from filtered log responses d (..., 3); range [0, MSGP_MAX].

    The score is the angle between the component-wise absolute response and
    the achromatic axis, i.e. arccos of the l1/l2 norm ratio over sqrt(3).
    It is evaluated through arctan2 of the cross and dot products, which is
    exact at zero angle where the arccos form loses eight digits to rounding;
    equal components therefore score exactly 0.
    """
    u = np.abs(d)
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    cross = np.sqrt((y - z) ** 2 + (z - x) ** 2 + (x - y) ** 2)
    return np.arctan2(cross, x + y + z)


def grayness_gp(img: LinearImage, cfg: GraynessConfig = GraynessConfig()) -> GraynessMap:
    """Channel-deviation grayness. 0 wherever the image is locally achromatic."""
    d, mask = _filtered_log_channels(img, cfg)
    mean = d.mean(axis=-1)
    valid = mask & (np.abs(mean) >= cfg.contrast_floor)
    return _finish(gp_score(d), valid, "gp", cfg)


def grayness_msgp(img: LinearImage, cfg: GraynessConfig = GraynessConfig()) -> GraynessMap:
    """Angle grayness, luminance independent; see msgp_score."""
    d, mask = _filtered_log_channels(img, cfg)
    norm = np.sqrt((d * d).sum(axis=-1))
    valid = mask & (norm >= cfg.contrast_floor)
    return _finish(msgp_score(d), valid, "msgp", cfg)


def grayness_dgp(img: LinearImage, cfg: GraynessConfig = GraynessConfig()) -> GraynessMap:
    """Chroma-ratio grayness.

    Filters log(R / total) and log(G / total) and takes the norm of the two
    responses; 0 wherever the local chroma is constant. The validity guard is
    the same filtered-log-contrast test the other estimators use, so flat
    regions are excluded rather than declared gray.
    """
    d, mask = _filtered_log_channels(img, cfg)
    contrast = np.sqrt((d * d).sum(axis=-1))
    valid = mask & (contrast >= cfg.contrast_floor)

    base_valid = np.all(img.data > cfg.eps, axis=2)
    log_total = np.log(np.maximum(img.data.sum(axis=2), cfg.eps))
    logs = np.log(np.maximum(img.data, cfg.eps))
    a_r = mexican_hat(ScalarMap(logs[:, :, 0] - log_total, base_valid), cfg.sigma)
    a_g = mexican_hat(ScalarMap(logs[:, :, 1] - log_total, base_valid), cfg.sigma)
    score = np.hypot(a_r.data, a_g.data)
    return _finish(score, valid, "dgp", cfg)


GRAYNESS_FUNCTIONS = {
    "gp": grayness_gp,
    "msgp": grayness_msgp,
    "dgp": grayness_dgp,
}


def compute_grayness(
    img: LinearImage, method: str, cfg: GraynessConfig = GraynessConfig()
) -> GraynessMap:
    """Dispatch to one of the estimators by name ('gp', 'msgp', 'dgp')."""
    try:
        fn = GRAYNESS_FUNCTIONS[method.lower()]
    except KeyError:
        raise ValueError(f"unknown grayness method {method!r}; expected one of {METHODS}")
    return fn(img, cfg)


# ---------------------------------------------------------------------------
# gray-pixel selection
# ---------------------------------------------------------------------------


@dataclass
class GrayPixelSet:
    """Selected gray pixels, sorted ascending by grayness.

    Each entry carries the pixel position, the l2-normalized RGB of the
    source image at that pixel (its local illuminant observation), and the
    grayness value. x indexes columns, y indexes rows.
    """

    x: np.ndarray
    y: np.ndarray
    chroma: np.ndarray
    grayness: np.ndarray
    image_width: int
    image_height: int

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.intp)
        self.y = np.asarray(self.y, dtype=np.intp)
        self.chroma = np.asarray(self.chroma, dtype=np.float64)
        self.grayness = np.asarray(self.grayness, dtype=np.float64)
        n = self.x.size
        if not (self.y.size == n and self.chroma.shape == (n, 3) and self.grayness.size == n):
            raise ValueError("inconsistent gray-pixel set fields")
        if n:
            if self.x.min() < 0 or self.x.max() >= self.image_width:
                raise ValueError("x coordinate out of bounds")
            if self.y.min() < 0 or self.y.max() >= self.image_height:
                raise ValueError("y coordinate out of bounds")
            if np.any(np.diff(self.grayness) < 0):
                raise ValueError("gray pixels must be sorted ascending by grayness")
            norms = np.linalg.norm(self.chroma, axis=1)
            if np.abs(norms - 1.0).max() > 1e-9:
                raise ValueError("chroma observations must be unit length")

    def __len__(self) -> int:
        return self.x.size

    def positions(self) -> np.ndarray:
        """(N, 2) array of (x, y) pixel coordinates as floats."""
        return np.stack([self.x, self.y], axis=1).astype(np.float64)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["x", "y", "r", "g", "b", "grayness"])
            for i in range(len(self)):
                writer.writerow(
                    [
                        int(self.x[i]),
                        int(self.y[i]),
                        repr(float(self.chroma[i, 0])),
                        repr(float(self.chroma[i, 1])),
                        repr(float(self.chroma[i, 2])),
                        repr(float(self.grayness[i])),
                    ]
                )


def select_top_gray(
    gmap: GraynessMap,
    img: LinearImage,
    fraction: float = 0.1,
    mask: PixelMask | np.ndarray | None = None,
) -> GrayPixelSet:
    """Pick the grayest ``ceil(fraction * valid_count)`` pixels.

    Ties at the rank boundary are broken by row-major pixel order, which makes
    selection deterministic and idempotent. Raises EstimationError when no
    valid candidates exist under the combined masks.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if (gmap.height, gmap.width) != (img.height, img.width):
        raise ValueError("grayness map and image dimensions differ")
    valid = gmap.mask
    if mask is not None:
        extra = mask.data if isinstance(mask, PixelMask) else np.asarray(mask, dtype=bool)
        if extra.shape != valid.shape:
            raise ValueError("mask dimensions differ from grayness map")
        valid = valid & extra
    flat = np.flatnonzero(valid.ravel())
    if flat.size == 0:
        raise EstimationError("no candidate gray pixels")
    scores = gmap.data.ravel()[flat]
    count = math.ceil(fraction * flat.size)
    order = np.lexsort((flat, scores))[:count]
    chosen = flat[order]
    ys, xs = np.divmod(chosen, gmap.width)
    rgb = img.data[ys, xs]
    norms = np.linalg.norm(rgb, axis=1, keepdims=True)
    chroma = rgb / norms
    return GrayPixelSet(xs, ys, chroma, scores[order], img.width, img.height)


# ---------------------------------------------------------------------------
# mean-shift mode of the chroma observations
# ---------------------------------------------------------------------------


def dominant_illuminant_meanshift(
    pixel_set: GrayPixelSet,
    bandwidth: float = DEFAULT_MEANSHIFT_BANDWIDTH,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> np.ndarray:
    """Strongest chroma mode of a gray-pixel set, as a unit 3-vector.

    Flat-kernel mean shift over the chroma observations: every point is
    shifted to the mean of its neighbors within ``bandwidth`` until the
    largest shift drops below ``tol`` (or ``max_iter`` passes). Converged
    points are grouped into modes within one bandwidth; the mode with the
    most members wins, earlier modes winning ties.
    """
    if len(pixel_set) == 0:
        raise EstimationError("cannot run mean shift on an empty gray-pixel set")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    data = pixel_set.chroma
    points = data.copy()
    for _ in range(max_iter):
        shifted = np.empty_like(points)
        for start in range(0, len(points), 2048):
            block = points[start : start + 2048]
            d2 = ((block[:, None, :] - data[None, :, :]) ** 2).sum(axis=-1)
            near = d2 <= bandwidth * bandwidth
            counts = near.sum(axis=1)
            shifted[start : start + 2048] = (near @ data) / counts[:, None]
        move = np.linalg.norm(shifted - points, axis=1).max()
        points = shifted
        if move < tol:
            break
    centers: list[np.ndarray] = []
    counts_per_mode: list[int] = []
    labels = np.full(len(points), -1, dtype=int)
    for i, p in enumerate(points):
        for m, c in enumerate(centers):
            if np.linalg.norm(p - c) < bandwidth:
                labels[i] = m
                counts_per_mode[m] += 1
                break
        else:
            labels[i] = len(centers)
            centers.append(p)
            counts_per_mode.append(1)
    best = int(np.argmax(counts_per_mode))
    mode = np.stack([points[i] for i in range(len(points)) if labels[i] == best]).mean(axis=0)
    return mode / np.linalg.norm(mode)
