"""Attention maps and the numeric primitives applied to them.

An attention map is a nonnegative H x W grid of attention mass for one
prompt token.  This module owns map validation, Gaussian smoothing with
reflect padding, cosine similarity, and the CSV / PGM interchange formats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import correlate2d


@dataclass(frozen=True)
class AttentionMap:
    """One token's spatial attention mass.

    Values are validated at construction: nonnegative, finite, and not
    identically zero (an all-zero map would make cosine similarity
    undefined downstream).
    """

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"attention map must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("attention map contains non-finite values")
        if np.any(v < 0):
            raise ValueError("attention map contains negative values")
        if not np.any(v > 0):
            raise ValueError("attention map is identically zero")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class SmoothingKernel:
    """A sampled 2-D Gaussian, normalized to unit mass."""

    size: int
    sigma: float
    weights: np.ndarray = field(repr=False)


def make_kernel(size: int, sigma: float) -> SmoothingKernel:
    """Sample a ``size x size`` Gaussian with the given sigma.

    ``size`` must be odd so the kernel has a center cell; weights are
    normalized to sum to one.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if not (sigma > 0):
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = size // 2
    coords = np.arange(size, dtype=np.float64) - half
    sq = coords[:, None] ** 2 + coords[None, :] ** 2
    w = np.exp(-sq / (2.0 * sigma * sigma))
    w /= w.sum()
    return SmoothingKernel(size=size, sigma=float(sigma), weights=w)


def smooth(amap: AttentionMap, kernel: SmoothingKernel) -> AttentionMap:
    """Gaussian-smooth a map; borders are handled by reflect padding.

    Reflect padding mirrors interior cells, so a normalized kernel keeps
    constant maps fixed and preserves nonnegativity.  A size-1 kernel
    returns the map unchanged.
    """
    if kernel.size == 1:
        return amap
    return AttentionMap(smooth_array(amap.values, kernel.weights))


def smooth_array(values: np.ndarray, kernel_weights: np.ndarray) -> np.ndarray:
    """Reflect-pad correlation on a raw array (shared by the autodiff op)."""
    k = kernel_weights.shape[0]
    if k == 1:
        return values * float(kernel_weights[0, 0])
    pad = k // 2
    h, w = values.shape
    if pad > min(h, w) - 1:
        raise ValueError(f"kernel size {k} too large for {h}x{w} map under reflect padding")
    padded = np.pad(values, pad, mode="reflect")
    return correlate2d(padded, kernel_weights, mode="valid")


def cosine_similarity(a: AttentionMap, b: AttentionMap) -> float:
    """Cosine similarity of two maps, flattened.

    Nonnegative inputs make the result land in [0, 1]; construction
    guarantees both maps have positive norm.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    num = float(np.vdot(a.values, b.values))
    den = float(np.linalg.norm(a.values) * np.linalg.norm(b.values))
    return min(max(num / den, 0.0), 1.0)


# -- interchange formats -------------------------------------------------------


def to_csv(amap: AttentionMap) -> str:
    """Serialize as ``H,W`` on the first line, then H rows of W floats."""
    lines = [f"{amap.height},{amap.width}"]
    for row in amap.values:
        lines.append(",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def from_csv(text: str) -> AttentionMap:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty attention map document")
    try:
        h, w = (int(part) for part in lines[0].split(","))
    except ValueError as err:
        raise ValueError(f"bad header line {lines[0]!r}: expected 'H,W'") from err
    if len(lines) - 1 != h:
        raise ValueError(f"expected {h} data rows, found {len(lines) - 1}")
    rows = []
    for ln in lines[1:]:
        row = [float(part) for part in ln.split(",")]
        if len(row) != w:
            raise ValueError(f"expected {w} columns, found {len(row)}")
        rows.append(row)
    return AttentionMap(np.array(rows, dtype=np.float64))


def write_csv(amap: AttentionMap, path: str | Path) -> None:
    Path(path).write_text(to_csv(amap))


def read_csv(path: str | Path) -> AttentionMap:
    return from_csv(Path(path).read_text())


def to_pgm(amap: AttentionMap) -> str:
    """8-bit plain PGM (P2), scaled so the map maximum maps to 255."""
    peak = float(amap.values.max())
    scaled = np.rint(amap.values / peak * 255.0).astype(int)
    lines = ["P2", f"{amap.width} {amap.height}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in scaled)
    return "\n".join(lines) + "\n"


def write_pgm(amap: AttentionMap, path: str | Path) -> None:
    Path(path).write_text(to_pgm(amap))


def delta_map(height: int, width: int, row: int, col: int) -> AttentionMap:
    """Unit impulse map, handy for tests and demos."""
    v = np.zeros((height, width))
    v[row, col] = 1.0
    return AttentionMap(v)


def gaussian_blob(height: int, width: int, row: float, col: float, sigma: float) -> AttentionMap:
    """Smooth bump centered at (row, col); a stand-in for a real region."""
    rr, cc = np.mgrid[0:height, 0:width]
    v = np.exp(-((rr - row) ** 2 + (cc - col) ** 2) / (2.0 * sigma * sigma))
    return AttentionMap(v / max(v.max(), math.ulp(1.0)))
