"""The flash/no-flash estimation pipeline.

A flash adds one extra light of unknown color to the scene. Subtracting the
ambient frame from the flash frame leaves a residual image lit by that single
light alone, which restores the single-illuminant conditions gray-pixel
scoring needs. The chain is:

    residual -> grayness -> top-gray selection -> spatial k-means ->
    distance-weighted cluster blending -> albedo recovery -> per-pixel
    ambient illumination map

The flash color is never an input anywhere; it is observed at the detected
gray pixels and divided back out, which is what makes the method
calibration-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grayness import (
    GraynessConfig,
    GrayPixelSet,
    compute_grayness,
    select_top_gray,
)
from .imgcore import (
    DimensionError,
    EstimationError,
    IlluminationMap,
    LinearImage,
    PixelMask,
    normalize_chroma,
)

#: Channel floor below which divisions are masked instead of performed.
DIVISION_FLOOR = 1e-6

#: Residual pixels with total intensity below this fraction of the residual's
#: 99th-percentile total intensity are treated as flash shadow / noise.
RESIDUAL_FLOOR = 1e-3

FLASH_PAIR_TOL = 1e-3


def default_spatial_sigma(width: int, height: int) -> float:
    """Default bandwidth of the cluster blending, 0.15 of the image diagonal."""
    return 0.15 * math.hypot(width, height)


@dataclass(frozen=True)
class EstimateConfig:
    """End-to-end pipeline knobs.

    fraction: share of valid pixels kept as gray candidates.
    clusters: k-means cluster count (set it to the known light count when
        available; 4 is a serviceable default for real photos).
    sigma_spatial: blending bandwidth in pixels; None picks
        ``default_spatial_sigma`` for the image at hand.
    seed: k-means++ seed; every stochastic step goes through it.
    """

    fraction: float = 0.1
    clusters: int = 4
    sigma_spatial: float | None = None
    seed: int = 0
    grayness: GraynessConfig = field(default_factory=GraynessConfig)


@dataclass
class FlashPair:
    """A registered no-flash / flash exposure pair with an optional mask.

    The flash frame must not be darker than the ambient frame anywhere
    (beyond a small tolerance), since the flash only adds light.
    """

    ambient: LinearImage
    flash: LinearImage
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.ambient.shape != self.flash.shape:
            raise DimensionError(
                f"ambient {self.ambient.shape} and flash {self.flash.shape} "
                "dimensions differ"
            )
        if isinstance(self.mask, PixelMask):
            self.mask = self.mask.data
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.ambient.shape:
                raise DimensionError("mask dimensions differ from the image pair")
        deficit = (self.ambient.data - self.flash.data).max()
        if deficit > FLASH_PAIR_TOL:
            raise ValueError(
                f"flash image is darker than ambient by {deficit:.3g} "
                f"(tolerance {FLASH_PAIR_TOL}); pair is not a flash pair"
            )

    @property
    def height(self) -> int:
        return self.ambient.height

    @property
    def width(self) -> int:
        return self.ambient.width


def flash_only(pair: FlashPair) -> tuple[LinearImage, np.ndarray]:
    """Flash-minus-ambient residual, clamped at zero, plus its validity mask.

    The mask drops pixels whose residual total intensity sits below the noise
    floor (flash shadows, distant surfaces) and applies the pair's own mask.
    """
    residual = np.maximum(pair.flash.data - pair.ambient.data, 0.0)
    total = residual.sum(axis=2)
    floor = RESIDUAL_FLOOR * np.percentile(total, 99.0)
    valid = total > floor
    if pair.mask is not None:
        valid &= pair.mask
    return LinearImage(residual), valid


# ---------------------------------------------------------------------------
# spatial clustering of gray pixels
# ---------------------------------------------------------------------------


@dataclass
class ClusterModel:
    """Spatial k-means clusters of gray pixels with per-cluster mean chroma.

    centroids: (M, 2) cluster centers in (x, y) pixel coordinates.
    chroma: (M, 3) unit-norm mean illuminant observation per cluster.
    counts: member count per cluster; sums to the size of the source set.
    sigma: spatial bandwidth used when blending clusters into a map.
    """

    centroids: np.ndarray
    chroma: np.ndarray
    counts: np.ndarray
    sigma: float

    def __post_init__(self) -> None:
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        self.chroma = np.asarray(self.chroma, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.intp)
        m = self.centroids.shape[0]
        if self.centroids.shape != (m, 2) or self.chroma.shape != (m, 3) or self.counts.shape != (m,):
            raise ValueError("inconsistent cluster model fields")
        if m < 1:
            raise ValueError("cluster model must hold at least one cluster")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        norms = np.linalg.norm(self.chroma, axis=1)
        if np.abs(norms - 1.0).max() > 1e-9:
            raise ValueError("cluster chroma vectors must be unit length")

    @property
    def size(self) -> int:
        return self.centroids.shape[0]


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    first = int(rng.integers(n))
    centers = np.empty((k, 2), dtype=np.float64)
    centers[0] = points[first]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a center; take the first free one
            centers[j] = points[int(np.argmax(d2 == 0))]
        else:
            idx = int(rng.choice(n, p=d2 / total))
            centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def cluster_gray_pixels(
    pixel_set: GrayPixelSet,
    clusters: int,
    seed: int = 0,
    sigma: float | None = None,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> ClusterModel:
    """K-means over gray-pixel positions; chroma enters via cluster means.

    Uses k-means++ seeding from ``seed`` and runs until the largest centroid
    move drops below ``tol`` pixels. Clusters that empty out are reseeded at
    the point currently farthest from its assigned centroid. Deterministic
    for fixed inputs and seed.
    """
    n = len(pixel_set)
    if clusters < 1:
        raise ValueError("cluster count must be at least 1")
    if n < clusters:
        raise EstimationError(
            f"fewer gray pixels ({n}) than clusters ({clusters})"
        )
    points = pixel_set.positions()
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, clusters, rng)
    labels = np.zeros(n, dtype=np.intp)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        labels = d2.argmin(axis=1)
        for m in range(clusters):
            if not np.any(labels == m):
                own = d2[np.arange(n), labels]
                far = int(np.argmax(own))
                centers[m] = points[far]
                d2[:, m] = ((points - centers[m]) ** 2).sum(axis=-1)
                labels = d2.argmin(axis=1)
        new_centers = np.stack([points[labels == m].mean(axis=0) for m in range(clusters)])
        move = np.linalg.norm(new_centers - centers, axis=1).max()
        centers = new_centers
        if move < tol:
            break
    counts = np.bincount(labels, minlength=clusters)
    mean_chroma = np.stack(
        [pixel_set.chroma[labels == m].mean(axis=0) for m in range(clusters)]
    )
    mean_chroma = normalize_chroma(mean_chroma)
    if sigma is None:
        sigma = default_spatial_sigma(pixel_set.image_width, pixel_set.image_height)
    return ClusterModel(centers, mean_chroma, counts, sigma)


def interpolation_weights(model: ClusterModel, width: int, height: int) -> np.ndarray:
    """(H, W, M) blending weights; exp(-D_m / (2 sigma^2)) normalized over m.

    D_m is the Euclidean pixel distance to centroid m. The smallest distance
    is subtracted inside the exponentials for numerical stability, which
    cancels in the normalization.
    """
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = xs[:, :, None] - model.centroids[None, None, :, 0]
    dy = ys[:, :, None] - model.centroids[None, None, :, 1]
    dist = np.sqrt(dx * dx + dy * dy)
    dist -= dist.min(axis=2, keepdims=True)
    w = np.exp(-dist / (2.0 * model.sigma**2))
    return w / w.sum(axis=2, keepdims=True)


def interpolate_illumination(model: ClusterModel, width: int, height: int) -> IlluminationMap:
    """Blend cluster chromas over the image; valid everywhere by construction."""
    w = interpolation_weights(model, width, height)
    blend = np.tensordot(w, model.chroma, axes=([2], [0]))
    blend /= np.linalg.norm(blend, axis=2, keepdims=True)
    return IlluminationMap(blend, np.ones((height, width), dtype=bool))


# ---------------------------------------------------------------------------
# albedo recovery and the final ambient illumination map
# ---------------------------------------------------------------------------


def recover_albedo(ifo: LinearImage, lfo: IlluminationMap) -> tuple[LinearImage, np.ndarray]:
    """Divide the flash-only image by its illumination map, channel-wise.

    The output is proportional to albedo times flash shading. Pixels where
    any illumination channel sits below the division floor are zeroed and
    masked instead of divided.
    """
    if ifo.shape != (lfo.height, lfo.width):
        raise DimensionError("flash-only image and illumination map dimensions differ")
    ok = lfo.mask & np.all(lfo.data >= DIVISION_FLOOR, axis=2)
    out = np.zeros_like(ifo.data)
    np.divide(ifo.data, lfo.data, out=out, where=ok[:, :, None])
    return LinearImage(out), ok


def mixed_illumination(
    ambient: LinearImage, igray: LinearImage, valid: np.ndarray | None = None
) -> IlluminationMap:
    """Per-pixel ambient illumination chroma: normalize(ambient / igray).

    Pixels where any ``igray`` channel sits below the division floor, or
    where the ratio comes out zero, are masked. Magnitudes are discarded; the
    map only encodes chroma directions.
    """
    if ambient.shape != igray.shape:
        raise DimensionError("ambient image and gray image dimensions differ")
    ok = np.all(igray.data >= DIVISION_FLOOR, axis=2)
    if valid is not None:
        ok &= valid
    ratio = np.zeros_like(ambient.data)
    np.divide(ambient.data, igray.data, out=ratio, where=ok[:, :, None])
    norms = np.linalg.norm(ratio, axis=2)
    ok &= norms > 0
    data = np.zeros_like(ratio)
    np.divide(ratio, norms[:, :, None], out=data, where=ok[:, :, None])
    return IlluminationMap(data, ok)


# ---------------------------------------------------------------------------
# end-to-end estimation
# ---------------------------------------------------------------------------


def _select_pixels(
    img: LinearImage,
    method: str,
    cfg: EstimateConfig,
    mask: np.ndarray | None,
) -> GrayPixelSet:
    gmap = compute_grayness(img, method, cfg.grayness)
    return select_top_gray(gmap, img, cfg.fraction, mask)


def estimate(pair: FlashPair, method: str = "gp", cfg: EstimateConfig = EstimateConfig()) -> IlluminationMap:
    """Estimate the spatially varying ambient illumination of a flash pair.

    Runs the full chain on the flash-only residual and divides the recovered
    gray image out of the ambient frame. The result is masked wherever the
    residual carried no signal or a division was unsafe.
    """
    residual, rmask = flash_only(pair)
    if not rmask.any():
        raise EstimationError("flash adds no measurable light (empty residual)")
    pixels = _select_pixels(residual, method, cfg, rmask)
    model = cluster_gray_pixels(pixels, cfg.clusters, cfg.seed, cfg.sigma_spatial)
    lfo = interpolate_illumination(model, pair.width, pair.height)
    igray, gmask = recover_albedo(residual, lfo)
    imap = mixed_illumination(pair.ambient, igray, gmask & rmask)
    if pair.mask is not None:
        imap = IlluminationMap(imap.data, imap.mask & pair.mask)
    return imap


def estimate_no_flash(
    img: LinearImage,
    method: str = "gp",
    cfg: EstimateConfig = EstimateConfig(),
    mask: np.ndarray | None = None,
) -> IlluminationMap:
    """Baseline without a flash frame: grayness on the image itself.

    The blended cluster map is returned directly as the illumination
    estimate. Under mixed lighting this is exactly the setting where
    gray-pixel evidence degrades; it exists for comparison.
    """
    if isinstance(mask, PixelMask):
        mask = mask.data
    pixels = _select_pixels(img, method, cfg, mask)
    model = cluster_gray_pixels(pixels, cfg.clusters, cfg.seed, cfg.sigma_spatial)
    imap = interpolate_illumination(model, img.width, img.height)
    if mask is not None:
        imap = IlluminationMap(imap.data, imap.mask & np.asarray(mask, dtype=bool))
    return imap


def estimate_stage_outputs(
    pair: FlashPair, method: str = "gp", cfg: EstimateConfig = EstimateConfig()
) -> dict:
    """Like ``estimate`` but returns intermediate stages for inspection."""
    residual, rmask = flash_only(pair)
    if not rmask.any():
        raise EstimationError("flash adds no measurable light (empty residual)")
    gmap = compute_grayness(residual, method, cfg.grayness)
    pixels = select_top_gray(gmap, residual, cfg.fraction, rmask)
    model = cluster_gray_pixels(pixels, cfg.clusters, cfg.seed, cfg.sigma_spatial)
    lfo = interpolate_illumination(model, pair.width, pair.height)
    igray, gmask = recover_albedo(residual, lfo)
    imap = mixed_illumination(pair.ambient, igray, gmask & rmask)
    if pair.mask is not None:
        imap = IlluminationMap(imap.data, imap.mask & pair.mask)
    return {
        "residual": residual,
        "residual_mask": rmask,
        "grayness": gmap,
        "pixels": pixels,
        "model": model,
        "flash_illumination": lfo,
        "gray_image": igray,
        "illumination": imap,
    }


def apply_correction(img: LinearImage, imap: IlluminationMap) -> LinearImage:
    """Von Kries correction: divide each channel by sqrt(3) times the chroma.

    The result is rescaled so its 99th-percentile intensity lands at 1 and
    clipped to [0, 1]; absolute scale is not physical after chroma
    normalization.
    """
    if img.shape != (imap.height, imap.width):
        raise DimensionError("image and illumination map dimensions differ")
    ok = imap.mask & np.all(imap.data >= DIVISION_FLOOR, axis=2)
    out = np.zeros_like(img.data)
    np.divide(img.data, imap.data * math.sqrt(3.0), out=out, where=ok[:, :, None])
    peak = np.percentile(out, 99.0)
    if peak > 0:
        out = np.clip(out / peak, 0.0, 1.0)
    return LinearImage(out)


def config_for_lights(n: int, base: EstimateConfig = EstimateConfig()) -> EstimateConfig:
    """Convenience: the benchmark convention of one cluster per light."""
    return replace(base, clusters=int(n))
