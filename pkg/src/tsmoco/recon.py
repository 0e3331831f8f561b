"""GRU head that forecasts the held-out future from a context vector under teacher forcing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import DimensionError, Tensor

GATES = ("z", "r", "h")


@dataclass
class ReconParams:
    tensors: dict[str, Tensor]
    n_channels: int
    hidden: int

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def __getitem__(self, key: str) -> Tensor:
        return self.tensors[key]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.tensors.items()}

    @classmethod
    def from_state_dict(cls, state: dict[str, np.ndarray]) -> ReconParams:
        hidden, n_channels = state["out.weight"].shape
        return cls({k: dc.parameter(v, name=k) for k, v in state.items()}, n_channels, hidden)


def init_recon(n_channels: int, hidden: int, rng: np.random.Generator | None = None) -> ReconParams:
    rng = np.random.default_rng() if rng is None else rng
    bound = 1.0 / math.sqrt(hidden)
    arrays = {}
    for g in GATES:
        arrays[f"gru.w{g}"] = rng.uniform(-bound, bound, size=(n_channels, hidden))
        arrays[f"gru.u{g}"] = rng.uniform(-bound, bound, size=(hidden, hidden))
        arrays[f"gru.b{g}"] = np.zeros(hidden)
    arrays["out.weight"] = rng.uniform(-bound, bound, size=(hidden, n_channels))
    arrays["out.bias"] = np.zeros(n_channels)
    return ReconParams({k: dc.parameter(v, name=k) for k, v in arrays.items()}, n_channels, hidden)


def gru_cell(x_t, h_prev: Tensor, params: ReconParams) -> Tensor:
    """One GRU step; ``x_t`` is ``(C,)`` or ``(B, C)``, ``h_prev`` matches with width D.

    z = s(W_z x + U_z h + b_z), r = s(W_r x + U_r h + b_r),
    h~ = tanh(W_h x + U_h (r * h) + b_h), h' = (1 - z) * h + z * h~.
    """
    x_t = x_t if isinstance(x_t, Tensor) else dc.constant(x_t)
    if x_t.shape[-1] != params.n_channels or h_prev.shape[-1] != params.hidden:
        raise DimensionError(
            f"gru_cell: input {x_t.shape} / hidden {h_prev.shape} vs "
            f"channels={params.n_channels}, hidden={params.hidden}")
    squeeze = x_t.ndim == 1
    if squeeze:
        x_t = dc.reshape(x_t, (1, -1))
        h_prev = dc.reshape(h_prev, (1, -1))
    p = params
    z = dc.sigmoid(dc.linear(x_t, p["gru.wz"], p["gru.bz"]) + dc.matmul(h_prev, p["gru.uz"]))
    r = dc.sigmoid(dc.linear(x_t, p["gru.wr"], p["gru.br"]) + dc.matmul(h_prev, p["gru.ur"]))
    cand = dc.tanh(dc.linear(x_t, p["gru.wh"], p["gru.bh"]) + dc.matmul(r * h_prev, p["gru.uh"]))
    h = h_prev + z * (cand - h_prev)
    return dc.reshape(h, (params.hidden,)) if squeeze else h


def reconstruct_future(c: Tensor, x_future, x_last, params: ReconParams) -> Tensor:
    """Predict ``K`` future steps starting from hidden state ``c``.

    Step 1 consumes ``x_last`` (the final past timestep); step ``j > 1``
    consumes the ground-truth ``x_future[j - 2]``.
    """
    x_future = np.asarray(x_future.data if isinstance(x_future, Tensor) else x_future)
    x_last = np.asarray(x_last.data if isinstance(x_last, Tensor) else x_last)
    squeeze = x_future.ndim == 2
    if squeeze:
        x_future = x_future[None]
        x_last = x_last[None]
        c = dc.reshape(c, (1, -1))
    K = x_future.shape[1]
    if K < 1:
        raise ValueError("need at least one future step")
    h = c
    outputs = []
    for j in range(K):
        inp = x_last if j == 0 else x_future[:, j - 1]
        h = gru_cell(inp, h, params)
        outputs.append(dc.linear(h, params["out.weight"], params["out.bias"]))
    pred = dc.stack(outputs, axis=1)
    return dc.reshape(pred, pred.shape[1:]) if squeeze else pred
