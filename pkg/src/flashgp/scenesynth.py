"""Synthetic multi-illuminant dataset generation.

Samples are built from directional stacks: several renderings of one object,
each lit from a single direction by a unit white light, plus a foreground
mask. Stacks come from either the procedural Lambertian renderer here (which
also yields exact per-direction shading, so ground truth is analytic) or a
directory of real single-direction captures in the 10-direction layout
(``light01.png`` .. ``light10.png`` with ``mask.png``, the sixth direction
being roughly frontal and serving as the flash).

A sample triplet mixes N randomly colored directions into a no-flash frame,
adds a near-white flash term for the flash frame, and records the per-pixel
ground-truth illumination chroma of the mixture.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .imgcore import (
    ImageIOError,
    IlluminationMap,
    LinearImage,
    PixelMask,
    load_image,
    load_mask,
    normalize_chroma,
    save_mask,
    write_pfm,
    read_pfm,
)

GT_SHADING_FLOOR = 1e-6

#: Index of the roughly frontal direction used as the flash source in
#: 10-direction stacks.
FLASH_DIRECTION_INDEX = 5

#: Objects of the 20-object intrinsic-image collection whose surfaces are
#: entirely chromatic; they carry no gray evidence and are skipped.
MIT_CHROMATIC_OBJECTS = frozenset({"apple", "pear", "frog2", "potato", "turtle"})


# ---------------------------------------------------------------------------
# scene description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectionalLight:
    """A distant light: unit direction plus unit-norm chroma with positive
    components."""

    direction: tuple[float, float, float]
    chroma: tuple[float, float, float]

    def __post_init__(self) -> None:
        d = np.asarray(self.direction, dtype=np.float64)
        c = np.asarray(self.chroma, dtype=np.float64)
        if np.linalg.norm(d) == 0:
            raise ValueError("light direction must be non-zero")
        if c.min() <= 0:
            raise ValueError("light chroma components must be positive")
        d = d / np.linalg.norm(d)
        c = c / np.linalg.norm(c)
        object.__setattr__(self, "direction", tuple(d))
        object.__setattr__(self, "chroma", tuple(c))

    @property
    def direction_vec(self) -> np.ndarray:
        return np.asarray(self.direction, dtype=np.float64)

    @property
    def chroma_vec(self) -> np.ndarray:
        return np.asarray(self.chroma, dtype=np.float64)


@dataclass(frozen=True)
class Sphere:
    """A hemispherical bump on the z=0 plane, with a textured albedo.

    The albedo at (x, y) blends ``color_a`` and ``color_b`` through a smooth
    sinusoidal field; gray surfaces use achromatic endpoints (texture varies
    intensity only), chromatic surfaces use distinct hues (texture varies
    chroma, which keeps albedo edges visible to ratio-based scoring).
    """

    cx: float
    cy: float
    radius: float
    color_a: tuple[float, float, float]
    color_b: tuple[float, float, float]
    tex_freq: tuple[float, float, float, float] = (4.0, 3.0, -5.0, 6.0)
    tex_phase: tuple[float, float] = (0.0, 2.0)

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("degenerate geometry: sphere radius must be positive")
        for c in (self.color_a, self.color_b):
            arr = np.asarray(c, dtype=np.float64)
            if arr.shape != (3,) or arr.min() < 0:
                raise ValueError("albedo colors must be non-negative 3-vectors")

    def albedo_field(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        fx1, fy1, fx2, fy2 = self.tex_freq
        p1, p2 = self.tex_phase
        t = (
            0.5
            + 0.25 * np.sin(2.0 * math.pi * (fx1 * xs + fy1 * ys) + p1)
            + 0.25 * np.sin(2.0 * math.pi * (fx2 * xs + fy2 * ys) + p2)
        )
        a = np.asarray(self.color_a, dtype=np.float64)
        b = np.asarray(self.color_b, dtype=np.float64)
        return a[None, None, :] + (b - a)[None, None, :] * t[:, :, None]


@dataclass(frozen=True)
class SceneSpec:
    """Procedural scene: bump geometry, albedo layout, ambient lights, flash."""

    spheres: tuple[Sphere, ...]
    lights: tuple[DirectionalLight, ...]
    flash: DirectionalLight

    def __post_init__(self) -> None:
        if not self.spheres:
            raise ValueError("scene needs at least one sphere")
        if not self.lights:
            raise ValueError("scene needs at least one ambient light")


# ---------------------------------------------------------------------------
# Lambertian renderer
# ---------------------------------------------------------------------------


def _geometry(
    spheres: Sequence[Sphere],
    width: int,
    height: int,
    background: Sequence[float] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normals, albedo, and coverage for a sphere set (z-buffered).

    With a ``background`` albedo, uncovered pixels become an upward-facing
    plane and the whole frame counts as foreground.
    """
    ys, xs = np.mgrid[0:height, 0:width]
    # normalized scene coordinates; pixel centers
    u = (xs + 0.5) / width
    v = (ys + 0.5) / height
    depth = np.full((height, width), -np.inf)
    normals = np.zeros((height, width, 3))
    albedo = np.zeros((height, width, 3))
    for s in spheres:
        dx = u - s.cx
        dy = v - s.cy
        d2 = dx * dx + dy * dy
        inside = d2 <= s.radius**2
        z = np.sqrt(np.maximum(s.radius**2 - d2, 0.0))
        closer = inside & (z > depth)
        depth = np.where(closer, z, depth)
        n = np.stack([dx, dy, z], axis=-1) / s.radius
        normals = np.where(closer[:, :, None], n, normals)
        field = s.albedo_field(u, v)
        albedo = np.where(closer[:, :, None], field, albedo)
    mask = np.isfinite(depth)
    if background is not None:
        bg = np.asarray(background, dtype=np.float64)
        if bg.shape != (3,) or bg.min() < 0:
            raise ValueError("background albedo must be a non-negative 3-vector")
        albedo = np.where(mask[:, :, None], albedo, bg[None, None, :])
        normals = np.where(mask[:, :, None], normals, np.array([0.0, 0.0, 1.0]))
        mask = np.ones((height, width), dtype=bool)
    return normals, albedo, mask


def render_directions(
    spheres: Sequence[Sphere],
    directions: Iterable[np.ndarray],
    width: int,
    height: int,
    background: Sequence[float] | None = None,
) -> tuple[list[LinearImage], list[np.ndarray], np.ndarray]:
    """Render one image per light direction under a unit white light.

    Returns (images, shadings, foreground mask); image c-channel values are
    ``albedo_c * max(n . s, 0)`` and shadings hold the exact cosine terms.
    """
    normals, albedo, mask = _geometry(spheres, width, height, background)
    images = []
    shadings = []
    for s in directions:
        s = np.asarray(s, dtype=np.float64)
        s = s / np.linalg.norm(s)
        lam = np.maximum(np.tensordot(normals, s, axes=([2], [0])), 0.0)
        lam *= mask
        images.append(LinearImage(albedo * lam[:, :, None]))
        shadings.append(lam)
    return images, shadings, mask


# ---------------------------------------------------------------------------
# directional stacks and triplets
# ---------------------------------------------------------------------------


@dataclass
class DirectionalStack:
    """Single-direction renderings of one object plus its foreground mask."""

    object_id: str
    images: list[LinearImage]
    mask: np.ndarray
    flash_index: int = FLASH_DIRECTION_INDEX
    shadings: list[np.ndarray] | None = None

    def __post_init__(self) -> None:
        if len(self.images) < 2:
            raise ValueError("a directional stack needs at least two directions")
        shape = self.images[0].shape
        if any(img.shape != shape for img in self.images):
            raise ValueError("stack images must share dimensions")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != shape:
            raise ValueError("stack mask dimensions differ from images")
        if not 0 <= self.flash_index < len(self.images):
            raise ValueError("flash index out of range")
        if self.shadings is not None and len(self.shadings) != len(self.images):
            raise ValueError("per-direction shadings must match image count")

    @property
    def ambient_indices(self) -> list[int]:
        return [i for i in range(len(self.images)) if i != self.flash_index]

    def shading_proxy(self, index: int) -> np.ndarray:
        """Exact shading when known, else the channel mean of the base image.

        Under a whitish capture light the base image is shading times albedo;
        the albedo luminance factor is common to all directions at a pixel,
        so it cancels when the ground-truth mixture is normalized.
        """
        if self.shadings is not None:
            return self.shadings[index]
        return self.images[index].data.mean(axis=2)


@dataclass
class SampleTriplet:
    """One dataset sample: no-flash frame, flash frame, ground-truth map."""

    ambient: LinearImage
    flash: LinearImage
    gt: IlluminationMap
    object_id: str
    n: int
    seed: int
    light_indices: tuple[int, ...]
    light_chromas: np.ndarray
    flash_chroma: np.ndarray
    mask: np.ndarray | None = None


def compose_from_lights(
    stack: DirectionalStack,
    indices: Sequence[int],
    chromas: Sequence[np.ndarray],
    flash_chroma: np.ndarray,
    seed: int = 0,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> SampleTriplet:
    """Mix chosen directions with given chromas into a triplet.

    The ambient frame is the chroma-weighted sum of the base images; the
    flash frame adds the flash-direction term tinted by ``flash_chroma``.
    Ground truth is the normalized shading-weighted chroma mixture, masked
    where total shading falls below a floor. With ``noise`` > 0, Gaussian
    noise (relative to full scale) perturbs the ambient frame and the flash
    term; ground truth stays noise-free.
    """
    indices = [int(i) for i in indices]
    if len(set(indices)) != len(indices):
        raise ValueError("light direction indices must be distinct")
    if stack.flash_index in indices:
        raise ValueError("the flash direction cannot be an ambient light")
    for i in indices:
        if not 0 <= i < len(stack.images):
            raise ValueError(f"direction index {i} out of range")
    if len(chromas) != len(indices):
        raise ValueError("one chroma per chosen direction required")

    shape = stack.images[0].data.shape
    ambient = np.zeros(shape)
    gt_sum = np.zeros(shape)
    total_shading = np.zeros(shape[:2])
    light_chromas = []
    for i, chroma in zip(indices, chromas):
        c = np.asarray(chroma, dtype=np.float64)
        c = c / np.linalg.norm(c)
        light_chromas.append(c)
        ambient += c[None, None, :] * stack.images[i].data
        lam = stack.shading_proxy(i)
        gt_sum += c[None, None, :] * lam[:, :, None]
        total_shading += lam

    fc = np.asarray(flash_chroma, dtype=np.float64)
    fc = fc / np.linalg.norm(fc)
    flash_term = fc[None, None, :] * stack.images[stack.flash_index].data

    if noise > 0.0:
        if rng is None:
            rng = np.random.default_rng(seed)
        ambient = np.maximum(ambient + rng.normal(0.0, noise, shape), 0.0)
        flash_term = np.maximum(flash_term + rng.normal(0.0, noise, shape), 0.0)

    gt_mask = stack.mask & (total_shading > GT_SHADING_FLOOR)
    gt_data = normalize_chroma(gt_sum)
    gt_data[~gt_mask] = 0.0

    return SampleTriplet(
        ambient=LinearImage(ambient),
        flash=LinearImage(ambient + flash_term),
        gt=IlluminationMap(gt_data, gt_mask),
        object_id=stack.object_id,
        n=len(indices),
        seed=seed,
        light_indices=tuple(indices),
        light_chromas=np.stack(light_chromas),
        flash_chroma=fc,
        mask=stack.mask.copy(),
    )


def sample_light_chroma(rng: np.random.Generator, min_ratio: float = 0.2) -> np.ndarray:
    """Random unit chroma, uniform on the simplex but rejecting near-pure
    colors (min/max channel ratio below ``min_ratio``), which would erase
    all gray evidence from a scene."""
    while True:
        p = rng.dirichlet((1.0, 1.0, 1.0))
        if p.min() / p.max() >= min_ratio:
            return p / np.linalg.norm(p)


def sample_flash_chroma(rng: np.random.Generator) -> np.ndarray:
    """Near-white flash chroma: channels uniform in [0.8, 1.0], normalized."""
    u = rng.uniform(0.8, 1.0, 3)
    return u / np.linalg.norm(u)


def triplet_seed(seed: int, object_id: str, n: int) -> int:
    """Stable per-triplet subseed so generation order never matters."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(object_id.encode("utf-8")), int(n)])
    return int(ss.generate_state(1, np.uint32)[0])


def compose_triplet(
    stack: DirectionalStack, n: int, seed: int, noise: float = 0.0
) -> SampleTriplet:
    """Draw N ambient directions and chromas from ``seed`` and compose."""
    available = stack.ambient_indices
    if not 1 <= n <= len(available):
        raise ValueError(
            f"light count {n} out of range for a stack with "
            f"{len(available)} ambient directions"
        )
    rng = np.random.default_rng(seed)
    indices = rng.choice(np.asarray(available), size=n, replace=False)
    chromas = [sample_light_chroma(rng) for _ in range(n)]
    flash_chroma = sample_flash_chroma(rng)
    return compose_from_lights(
        stack, indices, chromas, flash_chroma, seed=seed, noise=noise, rng=rng
    )


def render_scene(spec: SceneSpec, width: int, height: int) -> SampleTriplet:
    """Render an explicit scene description straight to a triplet.

    Shading is exact, so the ground-truth map is analytic rather than a
    proxy. Handy for controlled experiments with known light placements.
    """
    directions = [l.direction_vec for l in spec.lights] + [spec.flash.direction_vec]
    images, shadings, mask = render_directions(spec.spheres, directions, width, height)
    stack = DirectionalStack(
        object_id="scene",
        images=images,
        mask=mask,
        flash_index=len(images) - 1,
        shadings=shadings,
    )
    return compose_from_lights(
        stack,
        indices=list(range(len(spec.lights))),
        chromas=[l.chroma_vec for l in spec.lights],
        flash_chroma=spec.flash.chroma_vec,
    )


# ---------------------------------------------------------------------------
# procedural object suite
# ---------------------------------------------------------------------------


def default_light_directions() -> np.ndarray:
    """Ten capture directions: a 9-way ring at 55 degrees from the vertical,
    with the frontal direction inserted at FLASH_DIRECTION_INDEX."""
    zen = math.radians(55.0)
    ring = []
    for j in range(9):
        az = 2.0 * math.pi * j / 9.0
        ring.append(
            (math.cos(az) * math.sin(zen), math.sin(az) * math.sin(zen), math.cos(zen))
        )
    dirs = ring[:FLASH_DIRECTION_INDEX] + [(0.0, 0.0, 1.0)] + ring[FLASH_DIRECTION_INDEX:]
    return np.asarray(dirs)


def _random_chromatic_color(rng: np.random.Generator) -> np.ndarray:
    while True:
        c = rng.uniform(0.15, 0.9, 3)
        if c.min() / c.max() <= 0.7:  # visibly saturated
            return c


def _random_color_pair(rng: np.random.Generator, gray: bool):
    if gray:
        va, vb = rng.uniform(0.35, 0.85, 2)
        return (float(va),) * 3, (float(vb),) * 3
    while True:
        a = _random_chromatic_color(rng)
        b = _random_chromatic_color(rng)
        cos = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        if math.degrees(math.acos(min(cos, 1.0))) >= 5.0:
            return tuple(float(v) for v in a), tuple(float(v) for v in b)


def make_procedural_object(
    object_id: str,
    rng: np.random.Generator,
    width: int,
    height: int,
    directions: np.ndarray | None = None,
) -> DirectionalStack:
    """One gray-dominant bump arrangement rendered under every direction.

    The largest bumps get gray albedo until they cover roughly 70% of the
    bump area; the rest stay chromatic so scenes contain distractors.
    """
    if directions is None:
        directions = default_light_directions()
    count = int(rng.integers(3, 6))
    geoms = []
    for _ in range(count):
        cx, cy = rng.uniform(0.18, 0.82, 2)
        radius = float(rng.uniform(0.12, 0.26))
        freqs = tuple(float(v) for v in rng.uniform(3.0, 8.0, 4) * rng.choice((-1.0, 1.0), 4))
        phases = tuple(float(v) for v in rng.uniform(0.0, 2.0 * math.pi, 2))
        geoms.append((float(cx), float(cy), radius, freqs, phases))
    areas = np.array([g[2] ** 2 for g in geoms])
    order = np.argsort(-areas)
    gray_flags = [False] * count
    covered = 0.0
    for rank, idx in enumerate(order):
        if covered < 0.7 * areas.sum() and not (count >= 2 and rank == count - 1):
            gray_flags[idx] = True
            covered += areas[idx]
    spheres = []
    for (cx, cy, radius, freqs, phases), gray in zip(geoms, gray_flags):
        color_a, color_b = _random_color_pair(rng, gray)
        spheres.append(Sphere(cx, cy, radius, color_a, color_b, freqs, phases))
    images, shadings, mask = render_directions(spheres, directions, width, height)
    return DirectionalStack(object_id, images, mask, FLASH_DIRECTION_INDEX, shadings)


def make_procedural_stacks(
    count: int = 15, width: int = 128, height: int = 128, seed: int = 0
) -> list[DirectionalStack]:
    """A deterministic suite of procedural objects for desk-scale benchmarks."""
    directions = default_light_directions()
    stacks = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x0B1EC7, i]))
        stacks.append(
            make_procedural_object(f"obj{i:02d}", rng, width, height, directions)
        )
    return stacks


# ---------------------------------------------------------------------------
# dataset building and loading
# ---------------------------------------------------------------------------


def generate_triplets(
    stacks: Sequence[DirectionalStack],
    n_values: Sequence[int] = tuple(range(2, 9)),
    seed: int = 0,
    noise: float = 0.0,
) -> Iterator[SampleTriplet]:
    """One triplet per (object, N) cell, each with its own derived subseed."""
    for stack in stacks:
        for n in n_values:
            yield compose_triplet(stack, int(n), triplet_seed(seed, stack.object_id, int(n)), noise)


def build_dataset(
    stacks: Sequence[DirectionalStack],
    out_dir: str | Path,
    n_values: Sequence[int] = tuple(range(2, 9)),
    seed: int = 0,
    noise: float = 0.0,
) -> Path:
    """Write triplets and a JSON-lines manifest under ``out_dir``.

    Returns the manifest path. Identical inputs and seed produce
    byte-identical manifests and image files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w") as mf:
        for triplet in generate_triplets(stacks, n_values, seed, noise):
            base = f"{triplet.object_id}_n{triplet.n}"
            names = {
                "ambient": f"{base}_ambient.pfm",
                "flash": f"{base}_flash.pfm",
                "gt": f"{base}_gt.pfm",
                "mask": f"{triplet.object_id}_mask.png",
            }
            write_pfm(out_dir / names["ambient"], triplet.ambient.data)
            write_pfm(out_dir / names["flash"], triplet.flash.data)
            write_pfm(out_dir / names["gt"], triplet.gt.data)
            save_mask(out_dir / names["mask"], triplet.mask)
            record = {
                "object": triplet.object_id,
                "n": triplet.n,
                "seed": triplet.seed,
                "ambient": names["ambient"],
                "flash": names["flash"],
                "gt": names["gt"],
                "mask": names["mask"],
                "light_indices": list(triplet.light_indices),
                "lights": [[float(v) for v in c] for c in triplet.light_chromas],
                "flash_chroma": [float(v) for v in triplet.flash_chroma],
            }
            mf.write(json.dumps(record) + "\n")
    return manifest


def load_manifest(manifest_path: str | Path) -> list[dict]:
    manifest_path = Path(manifest_path)
    try:
        lines = manifest_path.read_text().splitlines()
    except OSError as e:
        raise ImageIOError(f"cannot read manifest: {manifest_path} ({e})") from e
    records = []
    for line in lines:
        line = line.strip()
        if line:
            records.append(json.loads(line))
    if not records:
        raise ImageIOError(f"manifest holds no records: {manifest_path}")
    return records


def load_triplet(record: dict, base_dir: str | Path) -> SampleTriplet:
    """Reload one manifest record; ground-truth vectors are re-normalized to
    undo float32 quantization."""
    base_dir = Path(base_dir)
    ambient = load_image(base_dir / record["ambient"])
    flash = load_image(base_dir / record["flash"])
    gt_raw = read_pfm(base_dir / record["gt"]).astype(np.float64)
    mask = load_mask(base_dir / record["mask"]).data
    norms = np.linalg.norm(gt_raw, axis=2)
    gt_mask = mask & (norms > 0.5)
    gt_data = normalize_chroma(gt_raw)
    gt_data[~gt_mask] = 0.0
    return SampleTriplet(
        ambient=ambient,
        flash=flash,
        gt=IlluminationMap(gt_data, gt_mask),
        object_id=record["object"],
        n=int(record["n"]),
        seed=int(record["seed"]),
        light_indices=tuple(record["light_indices"]),
        light_chromas=np.asarray(record["lights"], dtype=np.float64),
        flash_chroma=np.asarray(record["flash_chroma"], dtype=np.float64),
        mask=mask,
    )


# ---------------------------------------------------------------------------
# loader for real 10-direction captures
# ---------------------------------------------------------------------------


def load_directional_stack(
    obj_dir: str | Path, flash_index: int = FLASH_DIRECTION_INDEX
) -> DirectionalStack:
    """Load one object directory in the light01..light10 + mask.png layout."""
    obj_dir = Path(obj_dir)
    paths = [obj_dir / f"light{i:02d}.png" for i in range(1, 11)]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise ImageIOError(f"missing stack files for {obj_dir.name}: {', '.join(missing)}")
    mask_path = obj_dir / "mask.png"
    if not mask_path.exists():
        raise ImageIOError(f"missing stack files for {obj_dir.name}: {mask_path}")
    images = [load_image(p) for p in paths]
    mask = load_mask(mask_path)
    return DirectionalStack(obj_dir.name, images, mask.data, flash_index)


def load_directional_stacks(
    root: str | Path, exclude_chromatic: bool = True
) -> list[DirectionalStack]:
    """Load every object directory under ``root``, sorted by name."""
    root = Path(root)
    if not root.is_dir():
        raise ImageIOError(f"stack root is not a directory: {root}")
    stacks = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if exclude_chromatic and sub.name in MIT_CHROMATIC_OBJECTS:
            continue
        stacks.append(load_directional_stack(sub))
    if not stacks:
        raise ImageIOError(f"no object directories found under: {root}")
    return stacks
