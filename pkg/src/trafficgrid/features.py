"""Per-cell HOG and LBP descriptors.

The heavy lifting happens in a backend module: the compiled ``_kernels``
extension when it was built, else the numpy ``_fallback``. Set
``TRAFFICGRID_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _fallback
from .imaging import Image, to_grayscale

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

__all__ = [
    "HogParams", "LbpParams", "GradientField", "FeatureError",
    "compute_gradients", "compute_hog", "compute_lbp", "extract_features",
    "extract_batch", "hog_stack", "lbp_stack", "feature_dim", "lbp_offsets",
    "available_backends", "get_backend", "set_backend",
]


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class HogParams:
    sub_cell_size: int = 3
    orientations: int = 8

    def __post_init__(self):
        if self.sub_cell_size < 1:
            raise FeatureError("sub_cell_size must be >= 1")
        if self.orientations < 2:
            raise FeatureError("orientations must be >= 2")

    def length(self, width: int, height: int) -> int:
        s = self.sub_cell_size
        return (width // s) * (height // s) * self.orientations


@dataclass(frozen=True)
class LbpParams:
    radius: int = 8
    points: int = 24

    def __post_init__(self):
        if self.radius < 1:
            raise FeatureError("radius must be >= 1")
        if self.points < 4:
            raise FeatureError("points must be >= 4")

    @property
    def length(self) -> int:
        return self.points + 2


@dataclass(frozen=True)
class GradientField:
    magnitude: np.ndarray
    orientation: np.ndarray  # degrees in [0, 180)


def feature_dim(width: int, height: int, hog: HogParams = HogParams(),
                lbp: LbpParams = LbpParams()) -> int:
    return hog.length(width, height) + lbp.length


# --- backend selection ------------------------------------------------------

def available_backends() -> list[str]:
    return (["compiled"] if _kernels is not None else []) + ["python"]


def _initial_backend():
    want = os.environ.get("TRAFFICGRID_BACKEND", "auto")
    if want == "python" or _kernels is None:
        return _fallback
    return _kernels


_backend = _initial_backend()


def get_backend() -> str:
    return "compiled" if _backend is _kernels and _kernels is not None else "python"


def set_backend(name: str) -> None:
    global _backend
    if name == "auto":
        _backend = _kernels if _kernels is not None else _fallback
    elif name == "compiled":
        if _kernels is None:
            raise RuntimeError("compiled extension is not available")
        _backend = _kernels
    elif name == "python":
        _backend = _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")


# --- descriptors ------------------------------------------------------------

def _gray_array(cell: Image, strict: bool = True) -> np.ndarray:
    if cell.channels != 1:
        if strict:
            raise FeatureError("descriptor needs a grayscale cell")
        cell = to_grayscale(cell)
    return np.ascontiguousarray(cell.array, dtype=np.float64)


@lru_cache(maxsize=None)
def lbp_offsets(radius: int, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Sampling offsets (dx, dy) around a pixel, y pointing down.

    Offsets within 1e-9 of an integer are snapped to it.
    """
    dx = np.empty(points)
    dy = np.empty(points)
    for k in range(points):
        theta = 2.0 * math.pi * k / points
        dx[k] = radius * math.cos(theta)
        dy[k] = -radius * math.sin(theta)
    for arr in (dx, dy):
        r = np.round(arr)
        near = np.abs(arr - r) < 1e-9
        arr[near] = r[near]
    arr_dx, arr_dy = dx + 0.0, dy + 0.0  # normalise -0.0
    arr_dx.flags.writeable = False
    arr_dy.flags.writeable = False
    return arr_dx, arr_dy


def _check_hog(h, w, hog):
    if h < hog.sub_cell_size or w < hog.sub_cell_size:
        raise FeatureError(f"cell {w}x{h} smaller than one {hog.sub_cell_size}px sub-cell")


def _check_lbp(h, w, lbp):
    if h <= 2 * lbp.radius or w <= 2 * lbp.radius:
        raise FeatureError(f"cell {w}x{h} too small for LBP radius {lbp.radius}")


def compute_gradients(cell: Image) -> GradientField:
    mag, ori = _fallback.gradients(_gray_array(cell))
    return GradientField(mag, ori)


def compute_hog(cell: Image, params: HogParams = HogParams()) -> np.ndarray:
    return hog_stack(_gray_array(cell)[None], params)[0]


def compute_lbp(cell: Image, params: LbpParams = LbpParams()) -> np.ndarray:
    """Rotation-invariant uniform LBP histogram, normalised to sum to one."""
    return lbp_stack(_gray_array(cell)[None], params)[0]


def extract_features(cell: Image, hog: HogParams = HogParams(),
                     lbp: LbpParams = LbpParams()) -> np.ndarray:
    a = _gray_array(cell, strict=False)
    return extract_batch(a[None], hog, lbp)[0]


def _as_stack(cells):
    cells = np.ascontiguousarray(cells, dtype=np.float64)
    if cells.ndim != 3:
        raise FeatureError("expected a (n, h, w) stack of grayscale cells")
    return cells


def hog_stack(cells, params: HogParams = HogParams()) -> np.ndarray:
    """HOG rows for a real-valued (n, h, w) stack."""
    cells = _as_stack(cells)
    _check_hog(cells.shape[1], cells.shape[2], params)
    return _backend.hog_batch(cells, params.sub_cell_size, params.orientations)


def lbp_stack(cells, params: LbpParams = LbpParams()) -> np.ndarray:
    """LBP histograms for a real-valued (n, h, w) stack."""
    cells = _as_stack(cells)
    _check_lbp(cells.shape[1], cells.shape[2], params)
    dx, dy = lbp_offsets(params.radius, params.points)
    return _backend.lbp_batch(cells, params.radius, params.points, dx, dy)


def _extract_block(cells, hog, lbp):
    return np.hstack([hog_stack(cells, hog), lbp_stack(cells, lbp)])


def extract_batch(cells, hog: HogParams = HogParams(), lbp: LbpParams = LbpParams(),
                  threads: int = 1) -> np.ndarray:
    """Feature rows for a (n, h, w) stack of grayscale cells.

    With threads > 1 the stack is split into contiguous chunks evaluated
    concurrently; rows come back in input order and are identical to the
    sequential result.
    """
    cells = _as_stack(cells)
    n, h, w = cells.shape
    _check_hog(h, w, hog)
    _check_lbp(h, w, lbp)
    if n == 0:
        return np.empty((0, feature_dim(w, h, hog, lbp)))
    threads = max(1, min(int(threads), n))
    if threads == 1:
        return _extract_block(cells, hog, lbp)
    chunks = np.array_split(cells, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: _extract_block(np.ascontiguousarray(c), hog, lbp), chunks))
    return np.vstack(parts)
