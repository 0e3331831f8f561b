"""Transformer feature encoder: tokenizer, CLS token, sinusoidal positions, pre-norm blocks.

Inputs are ``(L, C_ch)`` windows or ``(B, L, C_ch)`` batches; the context
vector is the final hidden state at the CLS position.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import DimensionError, Tensor

BLOCK_KEYS = (
    "ln1.gamma", "ln1.beta",
    "attn.wq", "attn.wk", "attn.wv", "attn.wo",
    "ln2.gamma", "ln2.beta",
    "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2",
)


@dataclass
class EncoderParams:
    tensors: dict[str, Tensor]
    n_channels: int
    d_model: int
    d_ff: int
    n_heads: int
    depth: int

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def __getitem__(self, key: str) -> Tensor:
        return self.tensors[key]

    def block(self, i: int) -> dict[str, Tensor]:
        prefix = f"block{i}."
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        return (self.n_channels, self.d_model, self.d_ff, self.n_heads, self.depth)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.tensors.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.tensors):
            raise ValueError(f"parameter names differ: {sorted(set(state) ^ set(self.tensors))}")
        for k, v in state.items():
            if v.shape != self.tensors[k].shape:
                raise ValueError(f"{k}: shape {v.shape} != {self.tensors[k].shape}")
            self.tensors[k].data = np.array(v, dtype=np.float64)

    def copy(self, requires_grad: bool = True) -> EncoderParams:
        tensors = {k: Tensor(v.data, requires_grad=requires_grad, name=k)
                   for k, v in self.tensors.items()}
        return EncoderParams(tensors, *self.dims)

    @classmethod
    def from_state_dict(cls, state: dict[str, np.ndarray], n_heads: int,
                        requires_grad: bool = True) -> EncoderParams:
        n_channels, d_model = state["tokenizer.weight"].shape
        depth = len({k.split(".")[0] for k in state if k.startswith("block")})
        d_ff = state["block0.ffn.w1"].shape[1] if depth else 0
        tensors = {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in state.items()}
        return cls(tensors, n_channels, d_model, d_ff, n_heads, depth)


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_encoder(n_channels: int, d_model: int = 32, d_ff: int = 256, n_heads: int = 4,
                 depth: int = 2, rng: np.random.Generator | None = None) -> EncoderParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), CLS ~ N(0, 0.02), biases zero, LN = (1, 0)."""
    if d_model % n_heads:
        raise ValueError(f"n_heads={n_heads} must divide d_model={d_model}")
    rng = np.random.default_rng() if rng is None else rng
    D = d_model
    arrays: dict[str, np.ndarray] = {
        "tokenizer.weight": _uniform(rng, n_channels, (n_channels, D)),
        "tokenizer.bias": np.zeros(D),
        "cls": rng.normal(0.0, 0.02, size=D),
    }
    for i in range(depth):
        p = f"block{i}."
        arrays[p + "ln1.gamma"] = np.ones(D)
        arrays[p + "ln1.beta"] = np.zeros(D)
        for name in ("wq", "wk", "wv", "wo"):
            arrays[p + "attn." + name] = _uniform(rng, D, (D, D))
        arrays[p + "ln2.gamma"] = np.ones(D)
        arrays[p + "ln2.beta"] = np.zeros(D)
        arrays[p + "ffn.w1"] = _uniform(rng, D, (D, d_ff))
        arrays[p + "ffn.b1"] = np.zeros(d_ff)
        arrays[p + "ffn.w2"] = _uniform(rng, d_ff, (d_ff, D))
        arrays[p + "ffn.b2"] = np.zeros(D)
    tensors = {k: dc.parameter(v, name=k) for k, v in arrays.items()}
    return EncoderParams(tensors, n_channels, d_model, d_ff, n_heads, depth)


def tokenize(x, params: EncoderParams) -> Tensor:
    x = x if isinstance(x, Tensor) else dc.constant(x)
    if x.shape[-1] != params.n_channels:
        raise DimensionError(f"input has {x.shape[-1]} channels, encoder expects {params.n_channels}")
    return dc.linear(x, params["tokenizer.weight"], params["tokenizer.bias"])


def prepend_cls(h1: Tensor, cls: Tensor) -> Tensor:
    """Put the CLS embedding at position 0 of the token axis."""
    if h1.ndim == 2:
        return dc.concat([dc.reshape(cls, (1, -1)), h1], axis=0)
    B = h1.shape[0]
    return dc.concat([dc.broadcast_to(dc.reshape(cls, (1, 1, -1)), (B, 1, cls.shape[0])), h1], axis=1)


@functools.lru_cache(maxsize=64)
def _positional_table(L: int, D: int) -> np.ndarray:
    pos = np.arange(L, dtype=np.float64)[:, None]
    freq = np.power(10000.0, -np.arange(0, D, 2, dtype=np.float64) / D)
    table = np.zeros((L, D))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq)
    table.setflags(write=False)
    return table


def positional_encoding(L: int, D: int) -> np.ndarray:
    if D % 2:
        raise ValueError(f"sinusoidal positions need an even width, got {D}")
    return _positional_table(L, D)


def apply_positional(h2: Tensor, alpha: int) -> Tensor:
    if alpha == 0:
        return h2
    L, D = h2.shape[-2:]
    table = positional_encoding(L, D) * alpha
    if h2.ndim == 3:
        table = np.broadcast_to(table, h2.shape)
    return h2 + dc.constant(table)


def multi_head_attention(h: Tensor, block: dict[str, Tensor], n_heads: int,
                         trace: list | None = None) -> Tensor:
    B, L, D = h.shape
    dh = D // n_heads

    def heads(t: Tensor) -> Tensor:
        return dc.transpose(dc.reshape(t, (B, L, n_heads, dh)), (0, 2, 1, 3))

    q = heads(dc.linear(h, block["attn.wq"]))
    k = heads(dc.linear(h, block["attn.wk"]))
    v = heads(dc.linear(h, block["attn.wv"]))
    scores = dc.scale(dc.matmul(q, dc.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    weights = dc.softmax(scores, axis=-1)
    if trace is not None:
        trace.append(weights.data.copy())
    mixed = dc.reshape(dc.transpose(dc.matmul(weights, v), (0, 2, 1, 3)), (B, L, D))
    return dc.linear(mixed, block["attn.wo"])


def transformer_block(h: Tensor, block: dict[str, Tensor], n_heads: int,
                      trace: list | None = None, eps: float = 1e-5) -> Tensor:
    """Pre-norm residual block: ``h + MHA(LN(h))`` then ``+ FFN(LN(.))``."""
    squeeze = h.ndim == 2
    if squeeze:
        h = dc.reshape(h, (1,) + h.shape)
    a = dc.layer_norm(h, block["ln1.gamma"], block["ln1.beta"], eps)
    h = h + multi_head_attention(a, block, n_heads, trace)
    f = dc.layer_norm(h, block["ln2.gamma"], block["ln2.beta"], eps)
    f = dc.linear(dc.relu(dc.linear(f, block["ffn.w1"], block["ffn.b1"])), block["ffn.w2"], block["ffn.b2"])
    h = h + f
    return dc.reshape(h, h.shape[1:]) if squeeze else h


def encode(x, params: EncoderParams, alpha: int = 1, trace: list | None = None) -> Tensor:
    """Context vector(s): shape ``(D,)`` for one window, ``(B, D)`` for a batch."""
    x = x if isinstance(x, Tensor) else dc.constant(x)
    if x.ndim not in (2, 3) or x.shape[-2] < 1:
        raise DimensionError(f"encode expects (L, C) or (B, L, C) with L >= 1, got {x.shape}")
    squeeze = x.ndim == 2
    if squeeze:
        x = dc.reshape(x, (1,) + x.shape)
    h = apply_positional(prepend_cls(tokenize(x, params), params["cls"]), alpha)
    for i in range(params.depth):
        h = transformer_block(h, params.block(i), params.n_heads, trace)
    c = h[:, 0, :]
    return dc.reshape(c, (params.d_model,)) if squeeze else c
