"""Synthetic mixtures and IDX image ingestion."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801

# Invented default for the nine-point 1-D set: three loose clusters.
DEFAULT_POINTS_1D = (-0.8, -0.7, -0.55, -0.1, 0.0, 0.15, 0.5, 0.65, 0.85)


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture with a shared standard deviation."""

    centers: np.ndarray
    sigma: float
    weights: np.ndarray

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        weights = np.asarray(self.weights, dtype=np.float64)
        if centers.shape[1] not in (1, 2):
            raise ValueError(f"mixtures are 1-D or 2-D, got dimension {centers.shape[1]}")
        if weights.shape != (centers.shape[0],):
            raise ValueError("need one weight per center")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must form a probability vector")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "sigma": self.sigma,
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        return cls(np.asarray(d["centers"]), float(d["sigma"]), np.asarray(d["weights"]))


def ring2d(k: int = 8, radius: float = 2.0, sigma: float = 0.02) -> MixtureSpec:
    """``k`` modes evenly spaced on a circle, starting at ``(radius, 0)``."""
    if k < 1:
        raise ValueError("a ring needs at least one mode")
    theta = 2.0 * np.pi * np.arange(k) / k
    centers = radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return MixtureSpec(centers, sigma, np.full(k, 1.0 / k))


def grid2d(side: int = 5, spacing: float = 1.0, sigma: float = 0.02) -> MixtureSpec:
    """A ``side x side`` lattice of modes centred on the origin."""
    if side < 1:
        raise ValueError("grid side must be positive")
    ticks = (np.arange(side) - (side - 1) / 2.0) * spacing
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    centers = np.stack([xx.ravel(), yy.ravel()], axis=1)
    return MixtureSpec(centers, sigma, np.full(side * side, 1.0 / (side * side)))


def pointset1d(points=DEFAULT_POINTS_1D, sigma: float = 0.02) -> MixtureSpec:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 1)
    if points.shape[0] < 1:
        raise ValueError("need at least one point")
    k = points.shape[0]
    return MixtureSpec(points, sigma, np.full(k, 1.0 / k))


def sample_mixture(spec: MixtureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if n <= 0:
        raise ValueError("sample count must be positive")
    idx = rng.choice(spec.k, size=n, p=spec.weights)
    return spec.centers[idx] + spec.sigma * rng.standard_normal((n, spec.dim))


# IDX files


@dataclass
class IdxImageSet:
    pixels: np.ndarray  # uint8, (count, rows, cols)
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.pixels.ndim != 3:
            raise ValueError("pixels must have shape (count, rows, cols)")
        if self.labels is not None and len(self.labels) != len(self.pixels):
            raise ValueError("label count does not match image count")

    @property
    def count(self) -> int:
        return self.pixels.shape[0]

    @property
    def rows(self) -> int:
        return self.pixels.shape[1]

    @property
    def cols(self) -> int:
        return self.pixels.shape[2]

    def scaled(self) -> np.ndarray:
        """Pixels mapped affinely from [0, 255] to [-1, 1]."""
        return rescale(self.pixels)


def rescale(pixels) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64) / 127.5 - 1.0


class IdxFormatError(ValueError):
    pass


def idx_load(path, kind: str = "images"):
    """Read an IDX images (``idx3``) or labels (``idx1``) file.

    Images come back as an :class:`IdxImageSet` of raw bytes (see
    :meth:`IdxImageSet.scaled`); labels as a uint8 array.
    """
    buf = Path(path).read_bytes()
    expected = {"images": IDX_IMAGES, "labels": IDX_LABELS}.get(kind)
    if expected is None:
        raise ValueError(f"kind must be 'images' or 'labels', got {kind!r}")
    if len(buf) < 4:
        raise IdxFormatError("truncated header at byte 0")
    (magic,) = struct.unpack_from(">I", buf, 0)
    if magic != expected:
        raise IdxFormatError(f"bad magic 0x{magic:08x} at byte 0, expected 0x{expected:08x}")
    ndims = 3 if kind == "images" else 1
    header = 4 + 4 * ndims
    if len(buf) < header:
        raise IdxFormatError(f"truncated header at byte {len(buf)}: need {header} header bytes")
    dims = struct.unpack_from(f">{ndims}I", buf, 4)
    need = int(np.prod(dims))
    if len(buf) - header < need:
        raise IdxFormatError(
            f"truncated payload: expected {need} bytes from byte {header}, "
            f"found {len(buf) - header}"
        )
    data = np.frombuffer(buf, dtype=np.uint8, count=need, offset=header).copy()
    if kind == "labels":
        return data
    return IdxImageSet(data.reshape(dims))


def idx_write(path, images: np.ndarray | None = None, labels: np.ndarray | None = None) -> None:
    """Write one IDX file; used to build fixtures."""
    if (images is None) == (labels is None):
        raise ValueError("pass exactly one of images or labels")
    if images is not None:
        arr = np.asarray(images, dtype=np.uint8)
        head = struct.pack(">4I", IDX_IMAGES, *arr.shape)
    else:
        arr = np.asarray(labels, dtype=np.uint8)
        head = struct.pack(">2I", IDX_LABELS, arr.shape[0])
    Path(path).write_bytes(head + arr.tobytes())


def downsample(images: np.ndarray, factor: int) -> np.ndarray:
    """Average non-overlapping ``factor x factor`` blocks of ``(count, rows, cols)`` images."""
    images = np.asarray(images, dtype=np.float64)
    n, r, c = images.shape
    if factor < 1 or r % factor or c % factor:
        raise ValueError(f"image size {r}x{c} is not divisible by factor {factor}")
    return images.reshape(n, r // factor, factor, c // factor, factor).mean(axis=(2, 4))
