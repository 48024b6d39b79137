"""Episodic, non-stationary data: IDX ingestion, synthetic clusters, permuted episodes."""

from __future__ import annotations

import gzip
import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataFormatError, InsufficientDataError, SequencingError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

_SPLIT_CODES = {"train": 0, "test": 1}


@dataclass(frozen=True)
class LabeledData:
    """Feature matrix (one row per sample, values in [0, 1]) plus integer labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.ndim != 1 or self.x.shape[0] != self.y.shape[0]:
            raise ValueError(f"inconsistent shapes x={self.x.shape} y={self.y.shape}")

    def __len__(self):
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class EpisodeDataset:
    index: int
    x: np.ndarray
    y: np.ndarray
    permutation_seed: int
    permutation: np.ndarray

    def __len__(self):
        return self.y.shape[0]

    @property
    def size(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class AccumulatedDataset:
    episodes: tuple[EpisodeDataset, ...]

    def __len__(self):
        return sum(len(e) for e in self.episodes)

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([e.x for e in self.episodes])

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([e.y for e in self.episodes])


# ---------------------------------------------------------------- IDX files

def _open(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Read one IDX file of unsigned bytes; shape comes from the header."""
    path = Path(path)
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise DataFormatError(path, "file too short for an IDX header")
    magic = int.from_bytes(raw[:4], "big")
    if magic != expected_magic:
        raise DataFormatError(path, f"bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise DataFormatError(path, "truncated dimension header")
    dims = np.frombuffer(raw[4:header_len], dtype=">u4").astype(np.int64)
    expected = int(np.prod(dims))
    payload = len(raw) - header_len
    if payload != expected:
        raise DataFormatError(path, f"payload has {payload} bytes, header implies {expected}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header_len).reshape(tuple(dims))


def idx_header(path) -> dict:
    """Magic, dimensions and SHA-256 of an IDX file, without validating the payload."""
    path = Path(path)
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataFormatError(path, "file too short for an IDX header")
    magic = int.from_bytes(raw[:4], "big")
    ndim = magic & 0xFF
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    return {
        "path": str(path),
        "magic": f"0x{magic:08x}",
        "dims": dims,
        "bytes": len(raw),
        "sha256": hashlib.sha256(raw).hexdigest(),
    }


def load_idx(images_path, labels_path) -> LabeledData:
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            labels_path, f"{labels.shape[0]} labels but {images_path} holds {images.shape[0]} images"
        )
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledData(x, labels.astype(np.int64))


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX (gzip when the suffix is .gz).  Used for fixtures."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    header = magic.to_bytes(4, "big") + b"".join(int(d).to_bytes(4, "big") for d in array.shape)
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


# ---------------------------------------------------------------- synthetic

def make_synthetic(base_seed: int, classes: int, dim: int, count: int, radius: float = 4.0,
                   spread: float = 4.0, offset: float = 0.5, active: int | None = None) -> LabeledData:
    """Gaussian clusters with unit spread, class means on a sphere of ``radius``.

    Only the first ``active`` features (all of them by default) carry signal;
    the rest are 0, like the blank border of a digit image, so a feature
    permutation moves the informative inputs onto different first-layer rows.
    Means are mutually orthogonal when ``classes <= active`` and random
    directions otherwise.  Labels are assigned round-robin.  Points are mapped
    to [0, 1] by ``offset + v / spread`` and clipped.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if count < 0:
        raise ValueError("count must be >= 0")
    if spread <= 0:
        raise ValueError("spread must be positive")
    active = dim if active is None else active
    if not 1 <= active <= dim:
        raise ValueError(f"active must lie in [1, {dim}], got {active}")
    rng = np.random.default_rng(np.random.SeedSequence([base_seed, 0x5EED]))
    if classes <= active:
        q, _ = np.linalg.qr(rng.standard_normal((active, classes)))
        means = radius * q.T
    else:
        g = rng.standard_normal((classes, active))
        means = radius * g / np.linalg.norm(g, axis=1, keepdims=True)
    y = np.arange(count) % classes
    v = means[y] + rng.standard_normal((count, active))
    x = np.zeros((count, dim))
    x[:, :active] = np.clip(offset + v / spread, 0.0, 1.0)
    return LabeledData(x, y.astype(np.int64))


# ---------------------------------------------------------------- episodes

def permutation_seed(seed: int, k: int) -> int:
    """Per-episode seed derived from the master seed."""
    return int(np.random.SeedSequence([seed, k]).generate_state(1, dtype=np.uint32)[0])


@lru_cache(maxsize=256)
def _permutations(dim: int, seed: int, k: int) -> tuple[tuple[int, ...], ...]:
    # Episode 0 keeps pixel order.  Later episodes redraw until they differ
    # from every earlier one, as long as enough distinct permutations exist.
    if k == 0:
        return (tuple(range(dim)),)
    prev = _permutations(dim, seed, k - 1)
    distinct = math.factorial(dim) > k if dim < 13 else True
    attempt = 0
    while True:
        rng = np.random.default_rng(np.random.SeedSequence([permutation_seed(seed, k), attempt]))
        perm = tuple(int(i) for i in rng.permutation(dim))
        if not distinct or perm not in prev:
            return prev + (perm,)
        attempt += 1


def episode_permutation(dim: int, k: int, seed: int) -> np.ndarray:
    if k < 0:
        raise ValueError("episode index must be >= 0")
    return np.array(_permutations(dim, seed, k)[k], dtype=np.int64)


def make_episode(base: LabeledData, k: int, seed: int, size: int, split: str = "train") -> EpisodeDataset:
    """Draw ``size`` samples of ``base`` after a seeded shuffle and permute their features.

    The permutation depends only on ``(seed, k)`` so train and test draws of
    the same episode share it; the shuffle also depends on ``split``.
    """
    if size > len(base):
        raise InsufficientDataError(f"episode {k} needs {size} samples, base has {len(base)}")
    if size < 0:
        raise ValueError("size must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([seed, k, 1 + _SPLIT_CODES[split]]))
    rows = rng.permutation(len(base))[:size]
    perm = episode_permutation(base.dim, k, seed)
    x = base.x[rows][:, perm]
    x.setflags(write=False)
    y = base.y[rows].copy()
    y.setflags(write=False)
    return EpisodeDataset(k, x, y, permutation_seed(seed, k), perm)


def accumulate(episodes: Sequence[EpisodeDataset]) -> AccumulatedDataset:
    for expected, ep in enumerate(episodes):
        if ep.index != expected:
            raise SequencingError(
                f"episode indices must run 0..k without gaps, got {[e.index for e in episodes]}"
            )
    return AccumulatedDataset(tuple(episodes))
