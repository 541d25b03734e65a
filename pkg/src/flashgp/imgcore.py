"""Linear image containers, zero-sum center-surround filtering, and float image I/O.

Everything downstream (grayness scoring, the flash pipeline, the synthetic
dataset) is built on the types here. Pixel math is float64 throughout; file
formats may quantize (PFM stores float32, PNG stores 16-bit integers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage


class FlashGPError(Exception):
    """Base class for errors raised by this package."""


class ImageIOError(FlashGPError):
    """Unreadable, malformed, or unsupported image file."""


class DimensionError(FlashGPError):
    """Image dimensions do not match where they must."""


class EstimationError(FlashGPError):
    """The estimation pipeline cannot produce a result from this input."""


def _owned(data: np.ndarray, dtype) -> np.ndarray:
    out = np.array(data, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass
class LinearImage:
    """H x W x 3 image in linear RGB.

    Values are non-negative, finite, dimensionless radiometric intensities.
    The nominal range is [0, 1] but values above 1 are allowed (flash sums).
    Instances are immutable after construction.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"expected an HxWx3 array, got shape {data.shape}")
        if data.shape[0] == 0 or data.shape[1] == 0:
            raise ValueError("image must contain at least one pixel")
        if not np.all(np.isfinite(data)):
            raise ValueError("image contains non-finite values")
        if data.min() < 0.0:
            raise ValueError("image contains negative intensities")
        self.data = _owned(data, np.float64)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def scaled(self, k: float) -> "LinearImage":
        """Globally rescaled copy (exposure change)."""
        if k < 0:
            raise ValueError("scale must be non-negative")
        return LinearImage(self.data * float(k))


@dataclass
class ScalarMap:
    """H x W scalar field with a per-pixel validity mask.

    Invalid pixels may hold any value (including NaN); every valid pixel is
    finite.
    """

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if data.ndim != 2:
            raise ValueError(f"expected an HxW array, got shape {data.shape}")
        if mask.shape != data.shape:
            raise ValueError("mask dimensions must match data dimensions")
        if not np.all(np.isfinite(data[mask])):
            raise ValueError("non-finite value at a valid pixel")
        self.data = data
        self.mask = mask

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class PixelMask:
    """Boolean participation mask (true = pixel takes part in estimation)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=bool)
        if data.ndim != 2:
            raise ValueError(f"expected an HxW boolean array, got shape {data.shape}")
        self.data = data

    @classmethod
    def full(cls, height: int, width: int) -> "PixelMask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class IlluminationMap:
    """Per-pixel illuminant chroma: H x W x 3 of unit-norm non-negative vectors."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"expected an HxWx3 array, got shape {data.shape}")
        if mask.shape != data.shape[:2]:
            raise ValueError("mask dimensions must match data dimensions")
        valid = data[mask]
        if valid.size:
            if not np.all(np.isfinite(valid)):
                raise ValueError("non-finite chroma at a valid pixel")
            if valid.min() < 0.0:
                raise ValueError("negative chroma component at a valid pixel")
            norms = np.linalg.norm(valid, axis=1)
            if np.abs(norms - 1.0).max() > 1e-9:
                raise ValueError("chroma vectors must be unit length at valid pixels")
        self.data = data
        self.mask = mask

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def constant(
        cls, chroma: np.ndarray, height: int, width: int, mask: np.ndarray | None = None
    ) -> "IlluminationMap":
        """Map holding the same chroma vector at every pixel."""
        v = np.asarray(chroma, dtype=np.float64)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("zero-length chroma vector")
        data = np.broadcast_to(v / n, (height, width, 3)).copy()
        if mask is None:
            mask = np.ones((height, width), dtype=bool)
        return cls(data, mask)


def normalize_chroma(vectors: np.ndarray) -> np.ndarray:
    """L2-normalize vectors along the last axis; zero vectors stay zero."""
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(norms > 0, v / norms, 0.0)
    return out


# ---------------------------------------------------------------------------
# log transform and center-surround filtering
# ---------------------------------------------------------------------------

DEFAULT_EPS = 1e-4  # dark-pixel floor, in units of full scale
DEFAULT_FILTER_SIGMA = 0.5


def log_transform(
    img: LinearImage, eps: float = DEFAULT_EPS
) -> tuple[ScalarMap, ScalarMap, ScalarMap]:
    """Per-channel natural log with a dark floor.

    Returns one ScalarMap per channel; all three share a mask that is true
    only where every channel exceeds ``eps``. Darker pixels are clamped to
    ``ln(eps)`` and flagged invalid, since they carry no reliable chroma.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    valid = np.all(img.data > eps, axis=2)
    logs = np.log(np.maximum(img.data, eps))
    return tuple(ScalarMap(logs[:, :, c], valid) for c in range(3))


def log_kernel(sigma: float) -> np.ndarray:
    """Discrete Laplacian-of-Gaussian kernel, renormalized to exactly zero sum.

    Half-width is ceil(3*sigma). The zero-sum correction makes the filter
    annihilate constants, which is what grants exposure invariance downstream.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h = math.ceil(3.0 * sigma)
    yy, xx = np.mgrid[-h : h + 1, -h : h + 1].astype(np.float64)
    r2 = xx * xx + yy * yy
    k = (r2 - 2.0 * sigma**2) / sigma**4 * np.exp(-r2 / (2.0 * sigma**2))
    return k - k.mean()


def mexican_hat(smap: ScalarMap, sigma: float = DEFAULT_FILTER_SIGMA) -> ScalarMap:
    """Convolve with a zero-sum center-surround (LoG) kernel.

    Borders are mirror-padded; the output mask is the input mask eroded by
    the kernel half-width, so every valid output pixel saw only valid,
    in-bounds inputs.
    """
    kernel = log_kernel(sigma)
    kh, kw = kernel.shape
    if smap.height < kh or smap.width < kw:
        raise ValueError("image too small for filter support")
    out = ndimage.convolve(smap.data, kernel, mode="mirror")
    eroded = ndimage.binary_erosion(
        smap.mask, structure=np.ones((kh, kw), dtype=bool), border_value=0
    )
    return ScalarMap(out, eroded)


# ---------------------------------------------------------------------------
# PFM (portable float map)
# ---------------------------------------------------------------------------


def write_pfm(path: str | Path, array: np.ndarray) -> None:
    """Write a 1- or 3-channel float32 PFM (little-endian, bottom-up rows)."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    elif arr.ndim == 2:
        magic = b"Pf"
    else:
        raise ValueError(f"cannot write array of shape {arr.shape} as PFM")
    height, width = arr.shape[:2]
    payload = np.flipud(arr).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(payload)


def _read_pfm_token(f, path) -> bytes:
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise ImageIOError(f"truncated PFM header: {path}")
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM file; returns float32, shape (H, W) or (H, W, 3), top-down."""
    try:
        f = open(path, "rb")
    except OSError as e:
        raise ImageIOError(f"cannot open file: {path} ({e})") from e
    with f:
        magic = _read_pfm_token(f, path)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ImageIOError(f"not a PFM file: {path}")
        try:
            width = int(_read_pfm_token(f, path))
            height = int(_read_pfm_token(f, path))
            scale = float(_read_pfm_token(f, path))
        except ValueError as e:
            raise ImageIOError(f"malformed PFM header: {path}") from e
        if width <= 0 or height <= 0:
            raise ImageIOError(f"invalid PFM dimensions {width}x{height}: {path}")
        if scale == 0:
            raise ImageIOError(f"invalid PFM scale 0: {path}")
        count = width * height * channels
        payload = f.read(count * 4)
        if len(payload) != count * 4:
            raise ImageIOError(
                f"PFM payload does not match header dimensions "
                f"({len(payload)} bytes, expected {count * 4}): {path}"
            )
        dtype = "<f4" if scale < 0 else ">f4"
        arr = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    if channels == 3:
        arr = arr.reshape(height, width, 3)
    else:
        arr = arr.reshape(height, width)
    return np.flipud(arr).copy()


# ---------------------------------------------------------------------------
# PNG (16-bit images, 8-bit masks)
# ---------------------------------------------------------------------------


def write_png16(path: str | Path, array: np.ndarray) -> None:
    """Write a 16-bit PNG; values are clipped to [0, 1] and scaled by 65535."""
    arr = np.clip(np.asarray(array, dtype=np.float64), 0.0, 1.0)
    q = np.round(arr * 65535.0).astype(np.uint16)
    if q.ndim == 3 and q.shape[2] == 3:
        q = q[:, :, ::-1]  # cv2 stores BGR
    elif q.ndim != 2:
        raise ValueError(f"cannot write array of shape {arr.shape} as PNG")
    if not cv2.imwrite(str(path), q):
        raise ImageIOError(f"cannot write PNG: {path}")


def read_png16(path: str | Path) -> np.ndarray:
    """Read a 16-bit PNG as linear values in [0, 1] (divided by 65535)."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIOError(f"cannot read image: {path}")
    if raw.dtype != np.uint16:
        raise ImageIOError(f"unsupported bit depth (expected 16-bit PNG): {path}")
    if raw.ndim == 3:
        if raw.shape[2] < 3:
            raise ImageIOError(f"unsupported channel count {raw.shape[2]}: {path}")
        raw = raw[:, :, 2::-1]  # BGR(A) -> RGB
    return raw.astype(np.float64) / 65535.0


def write_png8(path: str | Path, array: np.ndarray) -> None:
    """Write an 8-bit PNG for display; values are clipped to [0, 1]."""
    arr = np.clip(np.asarray(array, dtype=np.float64), 0.0, 1.0)
    q = np.round(arr * 255.0).astype(np.uint8)
    if q.ndim == 3 and q.shape[2] == 3:
        q = q[:, :, ::-1]
    elif q.ndim != 2:
        raise ValueError(f"cannot write array of shape {arr.shape} as PNG")
    if not cv2.imwrite(str(path), q):
        raise ImageIOError(f"cannot write PNG: {path}")


def save_mask(path: str | Path, mask: PixelMask | np.ndarray) -> None:
    """Store a boolean mask as an 8-bit PNG (0 / 255)."""
    data = mask.data if isinstance(mask, PixelMask) else np.asarray(mask, dtype=bool)
    if not cv2.imwrite(str(path), data.astype(np.uint8) * 255):
        raise ImageIOError(f"cannot write mask PNG: {path}")


def load_mask(path: str | Path) -> PixelMask:
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise ImageIOError(f"cannot read mask: {path}")
    return PixelMask(raw > 0)


# ---------------------------------------------------------------------------
# format dispatch
# ---------------------------------------------------------------------------


def _format_for(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        return fmt.lower()
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        return "pfm"
    if suffix == ".png":
        return "png"
    raise ImageIOError(f"cannot infer image format from suffix {suffix!r}: {path}")


def load_image(path: str | Path, fmt: str | None = None) -> LinearImage:
    """Load a linear-RGB image from PFM or 16-bit PNG.

    Single-channel inputs are replicated to three channels. Raises
    ImageIOError for unreadable files, malformed headers, negative samples,
    and unsupported bit depths, always naming the offending path.
    """
    path = Path(path)
    kind = _format_for(path, fmt)
    if kind == "pfm":
        arr = read_pfm(path).astype(np.float64)
    elif kind == "png":
        arr = read_png16(path)
    else:
        raise ImageIOError(f"unsupported image format {kind!r}: {path}")
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    try:
        return LinearImage(arr)
    except ValueError as e:
        raise ImageIOError(f"{e}: {path}") from e


def save_image(img: LinearImage, path: str | Path, fmt: str | None = None) -> None:
    """Save a LinearImage as PFM (lossless float32) or 16-bit PNG (clipped)."""
    path = Path(path)
    kind = _format_for(path, fmt)
    if kind == "pfm":
        write_pfm(path, img.data)
    elif kind == "png":
        write_png16(path, img.data)
    else:
        raise ImageIOError(f"unsupported image format {kind!r}: {path}")


def save_chroma_png(path: str | Path, imap: IlluminationMap) -> None:
    """8-bit visualization of an illumination map at fixed brightness.

    Each valid pixel's chroma is scaled so its largest channel is 0.95 of
    full scale; invalid pixels render black. For inspection only.
    """
    peak = imap.data.max(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        vis = np.where(peak > 0, imap.data / peak, 0.0) * 0.95
    vis[~imap.mask] = 0.0
    q = np.round(np.clip(vis, 0.0, 1.0) * 255.0).astype(np.uint8)
    if not cv2.imwrite(str(path), q[:, :, ::-1]):
        raise ImageIOError(f"cannot write PNG: {path}")
