"""Self-supervised losses, the momentum (EMA) teacher update and the probe loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import DimensionError, Tensor
from .encoder import EncoderParams

_NORM_FLOOR = 1e-12


class DegenerateRepresentationError(ValueError):
    """Both context vectors collapsed to (near) zero; cosine is undefined."""


@dataclass(frozen=True)
class LossWeights:
    lam: float = 1.0
    tau: float = 0.9

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")


def _values(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def loss_rec(x_future, x_hat: Tensor, reduction: str = "mean") -> Tensor:
    """Squared error between forecast and truth.

    ``mean`` averages over every element; ``sum`` sums over steps and
    channels of each window and averages over the batch.
    """
    target = _values(x_future)
    if target.shape != x_hat.shape:
        raise DimensionError(f"loss_rec: target {target.shape} vs prediction {x_hat.shape}")
    diff = x_hat - dc.constant(target)
    sq = diff * diff
    if reduction == "mean":
        return dc.mean(sq)
    if reduction == "sum":
        n_windows = target.shape[0] if target.ndim == 3 else 1
        return dc.scale(dc.sum(sq), 1.0 / n_windows)
    raise ValueError(f"unknown reduction {reduction!r}")


def loss_mc(c_student: Tensor, c_teacher) -> Tensor:
    """``1 - cos(c_s, c_t)``, averaged over the batch; the teacher side carries no gradient."""
    ct = _values(c_teacher)
    if ct.shape != c_student.shape:
        raise DimensionError(f"loss_mc: student {c_student.shape} vs teacher {ct.shape}")
    cs = c_student if c_student.ndim == 2 else dc.reshape(c_student, (1, -1))
    ct = ct.reshape(cs.shape)
    ns = dc.sqrt(dc.sum(cs * cs, axis=1))
    nt = np.sqrt((ct * ct).sum(axis=1))
    if np.any((ns.data <= _NORM_FLOOR) & (nt <= _NORM_FLOOR)):
        raise DegenerateRepresentationError("student and teacher context vectors are both ~0")
    dot = dc.sum(cs * dc.constant(ct), axis=1)
    # one-sided zero gives cos = 0 rather than 0/0
    denom = ns * dc.constant(nt) + 1e-300
    cos = dot / denom
    return 1.0 - dc.mean(cos)


def loss_ss(l_rec, l_mc, lam: float):
    """``l_rec + lam * l_mc``."""
    if lam == 0:
        return l_rec
    return l_rec + lam * l_mc


def ema_update(teacher: EncoderParams, student: EncoderParams, tau: float) -> None:
    """In place: every teacher entry becomes ``tau * teacher + (1 - tau) * student``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if teacher.tensors.keys() != student.tensors.keys():
        raise ValueError("teacher and student parameter schemas differ")
    for name, t in teacher.tensors.items():
        s = student.tensors[name]
        if t.shape != s.shape:
            raise ValueError(f"{name}: teacher {t.shape} vs student {s.shape}")
        if tau == 1.0:
            continue
        if tau == 0.0:
            t.data = s.data.copy()
        else:
            t.data = tau * t.data + (1.0 - tau) * s.data


def loss_linear_eval(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of ``(B, C)`` logits against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    B, C = logits.shape
    if labels.shape != (B,):
        raise DimensionError(f"labels shape {labels.shape} vs logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"labels must lie in [0, {C - 1}]")
    onehot = np.zeros((B, C))
    onehot[np.arange(B), labels] = 1.0
    picked = dc.sum(dc.log_softmax(logits, axis=1) * dc.constant(onehot))
    return dc.scale(picked, -1.0 / B)
