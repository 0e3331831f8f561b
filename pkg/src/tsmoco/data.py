"""Windowed multivariate datasets: TSD1 files, splits, balancing, synthetic tasks.

TSD1 layout (little-endian)::

    b"TSD1" | u32 N | u32 T | u32 C_ch | u32 C
    | float32[N * T * C_ch]  (window, time, channel)
    | u32[N] labels
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"TSD1"
_HEADER = struct.Struct("<4sIIII")


class FormatError(ValueError):
    """Base class for malformed dataset or checkpoint files."""


class BadMagicError(FormatError):
    pass


class SizeMismatchError(FormatError):
    pass


class LabelRangeError(FormatError):
    pass


@dataclass
class Dataset:
    windows: np.ndarray  # (N, T, C_ch) float32
    labels: np.ndarray  # (N,) int64
    num_classes: int
    name: str = ""
    sampling_rate: float | None = None

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.windows.ndim != 3:
            raise ValueError(f"windows must be (N, T, C_ch), got {self.windows.shape}")
        if self.labels.shape != (self.windows.shape[0],):
            raise ValueError(f"{self.labels.shape[0]} labels for {self.windows.shape[0]} windows")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelRangeError(f"labels must lie in [0, {self.num_classes - 1}]")

    @property
    def n(self) -> int:
        return self.windows.shape[0]

    @property
    def T(self) -> int:
        return self.windows.shape[1]

    @property
    def n_channels(self) -> int:
        return self.windows.shape[2]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.windows[idx], self.labels[idx], self.num_classes,
                       self.name, self.sampling_rate)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def to_bytes(ds: Dataset) -> bytes:
    header = _HEADER.pack(MAGIC, ds.n, ds.T, ds.n_channels, ds.num_classes)
    return (header + ds.windows.astype("<f4").tobytes()
            + ds.labels.astype("<u4").tobytes())


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(to_bytes(ds))


def from_bytes(buf: bytes, name: str = "") -> Dataset:
    if len(buf) < _HEADER.size:
        raise SizeMismatchError(f"expected at least {_HEADER.size} header bytes, got {len(buf)}")
    magic, n, t, ch, c = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 4 * n * t * ch + 4 * n
    if len(buf) != expected:
        raise SizeMismatchError(f"expected {expected} bytes for N={n}, T={t}, C_ch={ch}, got {len(buf)}")
    body = _HEADER.size + 4 * n * t * ch
    windows = np.frombuffer(buf, dtype="<f4", count=n * t * ch, offset=_HEADER.size)
    labels = np.frombuffer(buf, dtype="<u4", count=n, offset=body).astype(np.int64)
    if n and labels.max() >= c:
        raise LabelRangeError(f"label {int(labels.max())} >= num_classes {c}")
    return Dataset(windows.reshape(n, t, ch).astype(np.float32), labels, c, name=name)


def load_dataset(path) -> Dataset:
    path = Path(path)
    return from_bytes(path.read_bytes(), name=path.stem)


def fingerprint(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def split(ds_or_n, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> SplitIndices:
    """Seeded permutation cut at ``floor(r0 * N)`` and ``floor((r0 + r1) * N)``."""
    n = ds_or_n if isinstance(ds_or_n, int) else ds_or_n.n
    if n < 5:
        raise ValueError(f"need at least 5 windows to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    a = int(np.floor(ratios[0] * n + 1e-9))
    b = int(np.floor((ratios[0] + ratios[1]) * n + 1e-9))
    return SplitIndices(perm[:a], perm[a:b], perm[b:])


def undersample(ds: Dataset, rng: np.random.Generator) -> Dataset:
    """Reduce every class to the minority count by sampling without replacement."""
    counts = ds.class_counts()
    if np.any(counts == 0):
        raise ValueError(f"empty class(es): {np.flatnonzero(counts == 0).tolist()}")
    keep = counts.min()
    idx = [rng.choice(np.flatnonzero(ds.labels == k), size=keep, replace=False)
           for k in range(ds.num_classes)]
    return ds.subset(np.sort(np.concatenate(idx)))


def synth_generate(n_per_class: int, C: int, T: int, C_ch: int, noise_sigma: float = 0.1,
                   seed: int = 0, base_freq: float = 2.0) -> Dataset:
    """Class ``k`` is a sinusoid at ``(k + 1) * base_freq`` cycles per window.

    Each channel gets its own uniform random phase, plus Gaussian noise.
    """
    if C < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    t = np.arange(T, dtype=np.float64)
    windows = np.empty((C * n_per_class, T, C_ch))
    labels = np.repeat(np.arange(C), n_per_class)
    for i, k in enumerate(labels):
        phase = rng.uniform(0.0, 2.0 * np.pi, size=C_ch)
        f = (k + 1) * base_freq
        windows[i] = np.sin(2.0 * np.pi * f * t[:, None] / T + phase[None, :])
    if noise_sigma > 0:
        windows += rng.normal(0.0, noise_sigma, size=windows.shape)
    return Dataset(windows, labels, C, name="synth")


def past_future_split(x, K: int):
    """Split ``(T, C_ch)`` (or ``(B, T, C_ch)``) into past, future and the last past step."""
    x = np.asarray(x)
    T = x.shape[-2]
    if not 1 <= K <= T - 1:
        raise ValueError(f"K must lie in [1, {T - 1}], got {K}")
    past = x[..., :T - K, :]
    return past, x[..., T - K:, :], past[..., -1, :]


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, windows: np.ndarray) -> Normalizer:
        w = np.asarray(windows, dtype=np.float64)
        mean = w.mean(axis=(0, 1))
        std = w.std(axis=(0, 1))
        return cls(mean, np.where(std > 0, std, 1.0))

    def __call__(self, windows: np.ndarray) -> np.ndarray:
        return (np.asarray(windows, dtype=np.float64) - self.mean) / self.std


def iter_batches(idx: np.ndarray, batch_size: int, rng: np.random.Generator | None = None):
    """Yield index batches; shuffled when ``rng`` is given, final partial batch kept."""
    idx = np.asarray(idx)
    if rng is not None:
        idx = idx[rng.permutation(idx.size)]
    for start in range(0, idx.size, batch_size):
        yield idx[start:start + batch_size]

