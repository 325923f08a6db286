"""Gaussian fixation maps over a centered temporal window."""

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BadConfig, FormatError, InvalidMap

DEFAULT_K = 30
DEFAULT_SIGMA_RATIO = 0.015
AGZ_MAGIC = b"AGZ1"


@dataclass(frozen=True)
class WindowConfig:
    """Temporal window length ``k`` (frames) and Gaussian std ``sigma`` (px).

    ``sigma=None`` resolves to ``DEFAULT_SIGMA_RATIO * width`` per map.
    """

    k: int = DEFAULT_K
    sigma: Optional[float] = None
    fps: float = 30.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2 or self.k % 2:
            raise BadConfig(f"window length k must be even and >= 2, got {self.k}")
        if self.sigma is not None and not self.sigma > 0:
            raise BadConfig(f"sigma must be positive, got {self.sigma}")
        if not self.fps > 0:
            raise BadConfig(f"fps must be positive, got {self.fps}")

    @property
    def half(self) -> int:
        return self.k // 2

    def sigma_for(self, width: int) -> float:
        return self.sigma if self.sigma is not None else DEFAULT_SIGMA_RATIO * width


@dataclass(frozen=True)
class ThresholdPolicy:
    """Binarization threshold.

    ``relative``: threshold = ratio * max(map); ``absolute``: threshold = ratio.
    """

    ratio: float = 0.5
    mode: str = "relative"

    def __post_init__(self):
        if self.mode not in ("relative", "absolute"):
            raise BadConfig(f"unknown threshold mode {self.mode!r}")
        if not np.isfinite(self.ratio) or self.ratio < 0:
            raise BadConfig(f"threshold ratio must be a nonnegative number, got {self.ratio}")

    def absolute(self, values: np.ndarray) -> float:
        if self.mode == "absolute":
            return self.ratio
        return self.ratio * float(values.max())


@dataclass
class AttentionMap:
    values: np.ndarray
    valid: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("attention map must be 2-D")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @classmethod
    def empty(cls, width: int, height: int) -> "AttentionMap":
        return cls(np.zeros((height, width)), valid=False)


TAIL_FLOOR = 1e-150


def gaussian_profiles(centers: np.ndarray, n: int, sigma: float) -> np.ndarray:
    """Unnormalized 1-D Gaussians sampled at pixel centers 0..n-1, one row per center."""
    grid = np.arange(n, dtype=np.float64)
    d = grid[None, :] - centers[:, None]
    g = np.exp(-0.5 * (d / sigma) ** 2)
    # far tails would feed subnormals into the outer product, which is slow
    g[g < TAIL_FLOOR] = 0.0
    return g


def build_attention_map(
    points,
    cfg: WindowConfig,
    width: int,
    height: int,
    offsets: Optional[Sequence[int]] = None,
) -> AttentionMap:
    """Accumulate isotropic Gaussians at scene-frame ``points`` (x, y) in pixels.

    Pixel (col, row) is centered at coordinate (col, row). When ``offsets``
    is given, only points with |offset| <= k/2 contribute. Gaussians are
    truncated at the image border and the result renormalized to sum 1.
    """
    if width <= 0 or height <= 0:
        raise BadConfig("map dimensions must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise ValueError("fixation points must be finite")
    if offsets is not None:
        offsets = np.asarray(offsets)
        if offsets.shape != (len(pts),):
            raise ValueError("offsets must match points")
        pts = pts[np.abs(offsets) <= cfg.half]
    if len(pts) == 0:
        return AttentionMap.empty(width, height)

    sigma = cfg.sigma_for(width)
    gx = gaussian_profiles(pts[:, 0], width, sigma)
    gy = gaussian_profiles(pts[:, 1], height, sigma)
    # sum of separable Gaussians = Gy^T Gx; the 1/k and 1/(2 pi sigma^2)
    # constants cancel in the final renormalization
    acc = gy.T @ gx
    total = acc.sum()
    if not total > 0:
        return AttentionMap.empty(width, height)
    acc /= total
    return AttentionMap(acc, valid=True)


def binarize(amap: AttentionMap, tau: ThresholdPolicy = ThresholdPolicy()) -> np.ndarray:
    """Boolean mask of pixels strictly above the threshold."""
    if not amap.valid:
        raise InvalidMap("cannot binarize an invalid attention map")
    return amap.values > tau.absolute(amap.values)


def encode_agz(amap: AttentionMap) -> bytes:
    h, w = amap.shape
    return AGZ_MAGIC + struct.pack("<II", w, h) + amap.values.astype("<f4").tobytes(order="C")


def decode_agz(data: bytes) -> AttentionMap:
    if len(data) < 12 or data[:4] != AGZ_MAGIC:
        raise FormatError("not an AGZ1 attention map")
    w, h = struct.unpack("<II", data[4:12])
    body = data[12:]
    if len(body) != 4 * w * h:
        raise FormatError(f"AGZ1 payload has {len(body)} bytes, expected {4 * w * h}")
    values = np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)
    return AttentionMap(values, valid=bool(values.any()))


def write_agz(path, amap: AttentionMap):
    with open(path, "wb") as fh:
        fh.write(encode_agz(amap))


def read_agz(path) -> AttentionMap:
    with open(path, "rb") as fh:
        return decode_agz(fh.read())
