"""Window-wise temporal masking of the student view."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MaskSpec:
    p_M: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_M <= 1.0:
            raise ValueError(f"p_M must lie in [0, 1], got {self.p_M}")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def mask_length(T: int, p_M: float) -> int:
    """Number of masked timesteps, ``p_M * T`` rounded half-up."""
    return min(T, int(math.floor(p_M * T + 0.5)))


def window_mask(x: np.ndarray, p_M: float, rng: np.random.Generator) -> np.ndarray:
    """Zero one contiguous run of ``round(p_M * T)`` timesteps across all channels.

    ``x`` has shape ``(T, C_ch)``. The start of the run is uniform over
    ``{0, ..., T - W}``; the input is left untouched.
    """
    x = np.asarray(x)
    T = x.shape[0]
    if T < 1:
        raise ValueError("window_mask needs at least one timestep")
    w = mask_length(T, p_M)
    out = x.copy()
    if w == 0:
        return out
    start = int(rng.integers(0, T - w + 1))
    out[start:start + w] = 0
    return out


def window_mask_batch(x: np.ndarray, p_M: float, rng: np.random.Generator) -> np.ndarray:
    """Independent masks per window of a ``(B, T, C_ch)`` batch."""
    x = np.asarray(x)
    B, T = x.shape[:2]
    w = mask_length(T, p_M)
    out = x.copy()
    if w == 0:
        return out
    starts = rng.integers(0, T - w + 1, size=B)
    for b, s in enumerate(starts):
        out[b, s:s + w] = 0
    return out
