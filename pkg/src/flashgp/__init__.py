"""Spatially varying illumination estimation from flash/no-flash image pairs.

The flash frame minus the ambient frame is lit by the flash alone, so
gray-pixel detection runs on single-illuminant data even when the scene mixes
several lights. Detected gray pixels reveal the flash color locally, the
flash-only frame is corrected with it, and dividing the corrected frame out
of the ambient frame yields a per-pixel ambient illumination chroma map. No
flash calibration, illuminant prior, or training is involved.
"""

from .imgcore import (
    DimensionError,
    EstimationError,
    FlashGPError,
    ImageIOError,
    IlluminationMap,
    LinearImage,
    PixelMask,
    ScalarMap,
    load_image,
    load_mask,
    read_pfm,
    save_image,
    save_mask,
    write_pfm,
)
from .grayness import (
    METHODS,
    GraynessConfig,
    GraynessMap,
    GrayPixelSet,
    compute_grayness,
    dominant_illuminant_meanshift,
    grayness_dgp,
    grayness_gp,
    grayness_msgp,
    select_top_gray,
)
from .pipeline import (
    ClusterModel,
    EstimateConfig,
    FlashPair,
    apply_correction,
    cluster_gray_pixels,
    estimate,
    estimate_no_flash,
    flash_only,
    interpolate_illumination,
    mixed_illumination,
    recover_albedo,
)
from .scenesynth import (
    DirectionalLight,
    DirectionalStack,
    SampleTriplet,
    SceneSpec,
    Sphere,
    build_dataset,
    compose_from_lights,
    compose_triplet,
    load_directional_stacks,
    load_manifest,
    load_triplet,
    make_procedural_stacks,
    render_scene,
)
from .evalbench import (
    BenchConfig,
    BenchmarkResult,
    angular_error,
    error_map,
    format_table,
    run_benchmark,
    save_results,
)

__version__ = "0.1.0"

__all__ = [
    "angular_error",
    "apply_correction",
    "BenchConfig",
    "BenchmarkResult",
    "build_dataset",
    "cluster_gray_pixels",
    "ClusterModel",
    "compose_from_lights",
    "compose_triplet",
    "compute_grayness",
    "DimensionError",
    "DirectionalLight",
    "DirectionalStack",
    "dominant_illuminant_meanshift",
    "error_map",
    "estimate",
    "estimate_no_flash",
    "EstimateConfig",
    "EstimationError",
    "flash_only",
    "FlashGPError",
    "FlashPair",
    "format_table",
    "grayness_dgp",
    "grayness_gp",
    "grayness_msgp",
    "GraynessConfig",
    "GraynessMap",
    "GrayPixelSet",
    "IlluminationMap",
    "ImageIOError",
    "interpolate_illumination",
    "LinearImage",
    "load_directional_stacks",
    "load_image",
    "load_manifest",
    "load_mask",
    "load_triplet",
    "make_procedural_stacks",
    "METHODS",
    "mixed_illumination",
    "PixelMask",
    "read_pfm",
    "recover_albedo",
    "render_scene",
    "run_benchmark",
    "SampleTriplet",
    "save_image",
    "save_mask",
    "save_results",
    "ScalarMap",
    "SceneSpec",
    "select_top_gray",
    "Sphere",
    "write_pfm",
]
