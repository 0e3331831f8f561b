"""Pretraining, frozen-encoder probing, and the baselines it is compared against."""

from __future__ import annotations

import dataclasses
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

import numpy as np

from . import diffcore as dc
from .augment import window_mask_batch
from .data import (Dataset, Normalizer, SplitIndices, iter_batches, past_future_split, split,
                   undersample)
from .encoder import EncoderParams, encode, init_encoder
from .objective import ema_update, loss_linear_eval, loss_mc, loss_rec, loss_ss
from .recon import ReconParams, init_recon, reconstruct_future

log = logging.getLogger(__name__)

# JSON key -> dataclass field, for keys that are not valid identifiers or are aliases
_KEY_ALIASES = {"lambda": "lam", "kappa": "tau"}
SWEEP_KEYS = ("kappa", "lambda", "K", "p_M", "alpha")


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, phase: str, step: int, lr: float, last_losses: list[float]):
        self.phase, self.step, self.lr, self.last_losses = phase, step, lr, last_losses
        super().__init__(f"{phase}: non-finite loss at step {step} (lr={lr}); "
                         f"last losses {last_losses}")


@dataclass
class TrainConfig:
    lam: float = 1.0
    tau: float = 0.9
    K: int = 6
    p_M: float = 0.5
    alpha: int = 1
    depth: int = 2
    D: int = 32
    D_ff: int = 256
    n_heads: int = 4
    batch_size: int = 16
    lr: float = 1e-2
    probe_lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    pretrain_epochs: int = 100
    lineval_epochs: int = 100
    supervised_epochs: int = 100
    early_stop_patience: int = 20
    seed: int = 0
    lr_schedule: str = "constant"
    warmup_frac: float = 0.05
    grad_clip: float = 0.0
    recon_loss: str = "mean"
    normalize: bool = True
    balance: bool = False

    def validate(self, T: int | None = None) -> TrainConfig:
        problems = []
        if not 0.0 <= self.tau <= 1.0:
            problems.append(f"tau={self.tau} outside [0, 1]")
        if not 0.0 <= self.p_M <= 1.0:
            problems.append(f"p_M={self.p_M} outside [0, 1]")
        if self.lam < 0:
            problems.append(f"lambda={self.lam} is negative")
        if self.alpha not in (0, 1):
            problems.append(f"alpha={self.alpha} not in {{0, 1}}")
        if self.D % 2:
            problems.append(f"D={self.D} must be even")
        if self.n_heads < 1 or self.D % self.n_heads:
            problems.append(f"n_heads={self.n_heads} must divide D={self.D}")
        if self.depth < 0:
            problems.append(f"depth={self.depth} is negative")
        if self.K < 1 or (T is not None and self.K > T - 1):
            problems.append(f"K={self.K} outside [1, T-1]" + (f" with T={T}" if T else ""))
        if self.grad_clip < 0:
            problems.append("grad_clip must be non-negative")
        if self.batch_size < 1:
            problems.append("batch_size must be positive")
        if self.lr_schedule not in ("constant", "cosine"):
            problems.append(f"lr_schedule={self.lr_schedule!r} not in ('constant', 'cosine')")
        if not 0.0 <= self.warmup_frac < 1.0:
            problems.append(f"warmup_frac={self.warmup_frac} outside [0, 1)")
        if self.recon_loss not in ("mean", "sum"):
            problems.append(f"recon_loss={self.recon_loss!r} not in ('mean', 'sum')")
        for name in ("pretrain_epochs", "lineval_epochs", "supervised_epochs", "early_stop_patience"):
            if getattr(self, name) < 0:
                problems.append(f"{name} is negative")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @classmethod
    def from_dict(cls, raw: dict) -> TrainConfig:
        names = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            name = _KEY_ALIASES.get(key, key)
            if name not in names or key == "lam":
                raise ConfigError(f"unknown config key {key!r}")
            if name in kwargs:
                raise ConfigError(f"config sets {name!r} twice (alias {key!r})")
            kwargs[name] = _coerce(names[name], key, value)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    def override(self, raw: dict) -> TrainConfig:
        """Apply JSON-style keys (aliases allowed) on top of this config."""
        parsed = TrainConfig.from_dict(raw)
        names = [_KEY_ALIASES.get(k, k) for k in raw]
        return self.replace(**{n: getattr(parsed, n) for n in names})


def _coerce(f: dataclasses.Field, key: str, value):
    kind = {"float": float, "int": int, "bool": bool, "str": str}[f.type]
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be numeric")
    if kind is int and float(value) != int(value):
        raise ConfigError(f"{key} must be an integer")
    return kind(value)


@dataclass
class MetricsRecord:
    phase: str
    epoch: int
    train_loss: float
    val_loss: float | None = None
    val_accuracy: float | None = None
    wall_ms: float | None = field(default=None, compare=False)

    def to_dict(self, wall_time: bool = True) -> dict:
        return {
            "phase": self.phase,
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
            "wall_ms": self.wall_ms if wall_time else None,
        }


Logger = Callable[[MetricsRecord], None]


class _Streams:
    """Independent generators per concern so changing one never shifts another."""

    NAMES = ("encoder", "recon", "shuffle", "mask", "val_mask", "probe", "probe_shuffle", "balance")

    def __init__(self, seed: int):
        children = np.random.SeedSequence(seed).spawn(len(self.NAMES))
        for name, child in zip(self.NAMES, children):
            setattr(self, name, np.random.default_rng(child))


# ----------------------------------------------------------------------------
# data preparation
# ----------------------------------------------------------------------------


@dataclass
class Prepared:
    x: np.ndarray  # (N, T, C_ch) float64, normalised with train statistics
    labels: np.ndarray
    num_classes: int
    split: SplitIndices

    @property
    def T(self) -> int:
        return self.x.shape[1]

    @property
    def n_channels(self) -> int:
        return self.x.shape[2]


def prepare(ds: Dataset | Prepared, cfg: TrainConfig) -> Prepared:
    if isinstance(ds, Prepared):
        return ds
    if cfg.balance:
        ds = undersample(ds, _Streams(cfg.seed).balance)
    idx = split(ds, seed=cfg.seed)
    x = ds.windows.astype(np.float64)
    if cfg.normalize:
        x = Normalizer.fit(x[idx.train])(x)
    return Prepared(x, ds.labels.copy(), ds.num_classes, idx)


def new_encoder(cfg: TrainConfig, n_channels: int) -> EncoderParams:
    """The encoder every run starts from; shared by SSL, supervised and random-probe runs."""
    return init_encoder(n_channels, cfg.D, cfg.D_ff, cfg.n_heads, cfg.depth, _Streams(cfg.seed).encoder)


# ----------------------------------------------------------------------------
# self-supervised pretraining
# ----------------------------------------------------------------------------


class SSLLoss(NamedTuple):
    total: dc.Tensor
    rec: dc.Tensor
    mc: dc.Tensor


def ssl_objective(x: np.ndarray, student: EncoderParams, teacher: EncoderParams,
                  recon: ReconParams, cfg: TrainConfig, rng: np.random.Generator) -> SSLLoss:
    """Reconstruction + momentum-contrast loss for a ``(B, T, C_ch)`` batch."""
    past, future, last = past_future_split(x, cfg.K)
    with dc.no_grad():
        c_teacher = encode(past, teacher, cfg.alpha).data
    c_student = encode(window_mask_batch(past, cfg.p_M, rng), student, cfg.alpha)
    x_hat = reconstruct_future(c_student, future, last, recon)
    l_rec = loss_rec(future, x_hat, cfg.recon_loss)
    l_mc = loss_mc(c_student, c_teacher)
    return SSLLoss(loss_ss(l_rec, l_mc, cfg.lam), l_rec, l_mc)


class PretrainResult(NamedTuple):
    student: EncoderParams
    recon: ReconParams
    history: list[MetricsRecord]
    teacher: EncoderParams


def pretrain_lr(cfg: TrainConfig, step: int, total_steps: int) -> float:
    """Learning rate for 1-based ``step``: linear warmup then cosine decay to zero."""
    if cfg.lr_schedule == "constant" or total_steps <= 1:
        return cfg.lr
    warmup = int(cfg.warmup_frac * total_steps)
    if step <= warmup:
        return cfg.lr * step / warmup
    progress = (step - warmup) / max(total_steps - warmup, 1)
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def clip_gradients(params, max_norm: float) -> float:
    """Rescale grads in place so their global L2 norm is at most ``max_norm`` (0 disables)."""
    norm = math.sqrt(math.fsum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None))
    if max_norm > 0 and norm > max_norm:
        for p in params:
            if p.grad is not None:
                p.grad *= max_norm / norm
    return norm


def _finite_or_raise(value: float, phase: str, step: int, lr: float, recent: list[float]):
    recent.append(value)
    del recent[:-5]
    if not math.isfinite(value):
        raise TrainingDiverged(phase, step, lr, list(recent))


def pretrain(windows: np.ndarray, cfg: TrainConfig, val_windows: np.ndarray | None = None,
             logger: Logger | None = None, step_hook: Callable | None = None) -> PretrainResult:
    """Self-supervised pretraining on unlabeled ``(N, T, C_ch)`` windows.

    ``step_hook(student, teacher)`` is called after every EMA update.
    """
    windows = np.asarray(windows, dtype=np.float64)
    cfg.validate(windows.shape[1])
    streams = _Streams(cfg.seed)
    student = init_encoder(windows.shape[2], cfg.D, cfg.D_ff, cfg.n_heads, cfg.depth, streams.encoder)
    teacher = student.copy(requires_grad=False)
    recon = init_recon(windows.shape[2], cfg.D, streams.recon)
    params = student.parameters() + recon.parameters()
    state = dc.AdamState.for_params(params)
    history: list[MetricsRecord] = []
    recent: list[float] = []
    step = 0
    total_steps = cfg.pretrain_epochs * math.ceil(len(windows) / cfg.batch_size)
    for epoch in range(1, cfg.pretrain_epochs + 1):
        t0 = time.perf_counter()
        total, count = 0.0, 0
        for idx in iter_batches(np.arange(len(windows)), cfg.batch_size, streams.shuffle):
            loss = ssl_objective(windows[idx], student, teacher, recon, cfg, streams.mask).total
            step += 1
            lr = pretrain_lr(cfg, step, total_steps)
            _finite_or_raise(loss.item(), "pretrain", step, lr, recent)
            dc.zero_grad(params)
            dc.backward(loss)
            clip_gradients(params, cfg.grad_clip)
            dc.adam_step(params, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
            ema_update(teacher, student, cfg.tau)
            if step_hook is not None:
                step_hook(student, teacher)
            total += loss.item() * len(idx)
            count += len(idx)
        val_loss = None
        if val_windows is not None and len(val_windows):
            val_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
            with dc.no_grad():
                val_loss = ssl_objective(np.asarray(val_windows, dtype=np.float64), student,
                                         teacher, recon, cfg, val_rng).total.item()
        rec = MetricsRecord("pretrain", epoch, total / max(count, 1), val_loss,
                            wall_ms=1000.0 * (time.perf_counter() - t0))
        history.append(rec)
        if logger is not None:
            logger(rec)
    dc.zero_grad(params)
    return PretrainResult(student, recon, history, teacher)


# ----------------------------------------------------------------------------
# classification heads
# ----------------------------------------------------------------------------


@dataclass
class Classifier:
    """Linear layer on features standardised with fixed train-split statistics."""

    weight: dc.Tensor  # (D, C)
    bias: dc.Tensor  # (C,)
    mu: np.ndarray | None = None
    sd: np.ndarray | None = None

    @classmethod
    def init(cls, d: int, num_classes: int, rng: np.random.Generator,
             mu: np.ndarray | None = None, sd: np.ndarray | None = None) -> Classifier:
        bound = 1.0 / math.sqrt(d)
        return cls(dc.parameter(rng.uniform(-bound, bound, size=(d, num_classes)), "classifier.weight"),
                   dc.parameter(np.zeros(num_classes), "classifier.bias"), mu, sd)

    def parameters(self) -> list[dc.Tensor]:
        return [self.weight, self.bias]

    def __call__(self, features) -> dc.Tensor:
        if self.mu is not None:
            raw = features.data if isinstance(features, dc.Tensor) else np.asarray(features)
            features = (raw - self.mu) / self.sd
        return dc.linear(features, self.weight, self.bias)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"weight": self.weight.data.copy(), "bias": self.bias.data.copy()}
        if self.mu is not None:
            out.update(mu=self.mu.copy(), sd=self.sd.copy())
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.weight.data = state["weight"].copy()
        self.bias.data = state["bias"].copy()
        if "mu" in state:
            self.mu, self.sd = state["mu"].copy(), state["sd"].copy()


def encode_all(x: np.ndarray, encoder: EncoderParams, alpha: int, chunk: int = 128) -> np.ndarray:
    """Frozen-encoder context vectors for every window, no graph recorded."""
    out = []
    with dc.no_grad():
        for start in range(0, len(x), chunk):
            out.append(encode(x[start:start + chunk], encoder, alpha).data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, encoder.d_model))


def _accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


class _EarlyStopper:
    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_state = None
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, val_loss: float, snapshot: Callable[[], object]) -> bool:
        """Returns True when training should stop."""
        if val_loss < self.best:
            self.best, self.best_epoch, self.wait = val_loss, epoch, 0
            self.best_state = snapshot()
            return False
        self.wait += 1
        return self.wait >= self.patience


class LinearEvalResult(NamedTuple):
    classifier: Classifier
    test_accuracy: float
    history: list[MetricsRecord]
    best_val_loss: float


def fit_probe(features: np.ndarray, labels: np.ndarray, num_classes: int, idx: SplitIndices,
              cfg: TrainConfig, phase: str = "linear", logger: Logger | None = None) -> LinearEvalResult:
    """Train only a linear layer on fixed features, early-stopped on validation cross-entropy."""
    streams = _Streams(cfg.seed)
    mu = features[idx.train].mean(axis=0)
    sd = features[idx.train].std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    clf = Classifier.init(features.shape[1], num_classes, streams.probe, mu, sd)
    params = clf.parameters()
    state = dc.AdamState.for_params(params)
    stopper = _EarlyStopper(cfg.early_stop_patience)
    f_val, y_val = features[idx.val], labels[idx.val]
    history: list[MetricsRecord] = []
    recent: list[float] = []
    step = 0

    def val_metrics():
        with dc.no_grad():
            logits = clf(f_val)
            return loss_linear_eval(logits, y_val).item(), _accuracy(logits.data, y_val)

    for epoch in range(1, cfg.lineval_epochs + 1):
        t0 = time.perf_counter()
        total = 0.0
        for b in iter_batches(idx.train, cfg.batch_size, streams.probe_shuffle):
            loss = loss_linear_eval(clf(features[b]), labels[b])
            step += 1
            _finite_or_raise(loss.item(), phase, step, cfg.probe_lr, recent)
            dc.zero_grad(params)
            dc.backward(loss)
            dc.adam_step(params, state, cfg.probe_lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
            total += loss.item() * len(b)
        val_loss, val_acc = val_metrics()
        rec = MetricsRecord(phase, epoch, total / max(len(idx.train), 1), val_loss, val_acc,
                            1000.0 * (time.perf_counter() - t0))
        history.append(rec)
        if logger is not None:
            logger(rec)
        if stopper.update(epoch, val_loss, clf.state_dict):
            break
    if stopper.best_state is not None:
        clf.load_state_dict(stopper.best_state)
    best = stopper.best if stopper.best_state is not None else val_metrics()[0]
    with dc.no_grad():
        test_acc = _accuracy(clf(features[idx.test]).data, labels[idx.test])
    return LinearEvalResult(clf, test_acc, history, best)


def linear_eval(encoder: EncoderParams, ds: Dataset | Prepared, cfg: TrainConfig,
                phase: str = "linear", logger: Logger | None = None) -> LinearEvalResult:
    """Probe a frozen encoder on full, unmasked windows; the encoder is not modified."""
    data = prepare(ds, cfg)
    features = encode_all(data.x, encoder, cfg.alpha)
    return fit_probe(features, data.labels, data.num_classes, data.split, cfg, phase, logger)


def random_encoder_probe(ds: Dataset | Prepared, cfg: TrainConfig,
                         logger: Logger | None = None) -> LinearEvalResult:
    """Probe the untrained initial encoder (the one pretraining would start from)."""
    data = prepare(ds, cfg)
    return linear_eval(new_encoder(cfg, data.n_channels), data, cfg, "random-encoder", logger)


class SupervisedResult(NamedTuple):
    encoder: EncoderParams
    classifier: Classifier
    test_accuracy: float
    history: list[MetricsRecord]


def supervised_train(ds: Dataset | Prepared, cfg: TrainConfig, epochs: int | None = None,
                     logger: Logger | None = None) -> SupervisedResult:
    """Encoder + linear head trained end-to-end with cross-entropy, early-stopped on val loss."""
    data = prepare(ds, cfg)
    cfg.validate()
    epochs = cfg.supervised_epochs if epochs is None else epochs
    streams = _Streams(cfg.seed)
    encoder = new_encoder(cfg, data.n_channels)
    clf = Classifier.init(cfg.D, data.num_classes, streams.probe)
    params = encoder.parameters() + clf.parameters()
    state = dc.AdamState.for_params(params)
    stopper = _EarlyStopper(cfg.early_stop_patience)
    idx = data.split
    history: list[MetricsRecord] = []
    recent: list[float] = []
    step = 0

    def snapshot():
        return encoder.state_dict(), clf.state_dict()

    def evaluate(rows):
        logits = clf(encode_all(data.x[rows], encoder, cfg.alpha))
        return logits

    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        total = 0.0
        for b in iter_batches(idx.train, cfg.batch_size, streams.shuffle):
            loss = loss_linear_eval(clf(encode(data.x[b], encoder, cfg.alpha)), data.labels[b])
            step += 1
            _finite_or_raise(loss.item(), "supervised", step, cfg.lr, recent)
            dc.zero_grad(params)
            dc.backward(loss)
            dc.adam_step(params, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
            total += loss.item() * len(b)
        with dc.no_grad():
            logits = evaluate(idx.val)
            val_loss = loss_linear_eval(logits, data.labels[idx.val]).item()
        rec = MetricsRecord("supervised", epoch, total / max(len(idx.train), 1), val_loss,
                            _accuracy(logits.data, data.labels[idx.val]),
                            1000.0 * (time.perf_counter() - t0))
        history.append(rec)
        if logger is not None:
            logger(rec)
        if stopper.update(epoch, val_loss, snapshot):
            break
    if stopper.best_state is not None:
        enc_state, clf_state = stopper.best_state
        encoder.load_state_dict(enc_state)
        clf.load_state_dict(clf_state)
    dc.zero_grad(params)
    with dc.no_grad():
        test_acc = _accuracy(evaluate(idx.test).data, data.labels[idx.test])
    return SupervisedResult(encoder, clf, test_acc, history)


# ----------------------------------------------------------------------------
# chance baseline
# ----------------------------------------------------------------------------


def expected_random_accuracy(train_labels, test_labels, num_classes: int | None = None) -> float:
    """Closed form sum_k p_k q_k for the stratified random classifier."""
    train_labels = np.asarray(train_labels)
    test_labels = np.asarray(test_labels)
    c = num_classes or int(max(train_labels.max(), test_labels.max())) + 1
    p = np.bincount(train_labels, minlength=c) / len(train_labels)
    q = np.bincount(test_labels, minlength=c) / len(test_labels)
    return float(p @ q)


def random_classifier(train_labels, test_labels, seed: int = 0, repeats: int = 1) -> float:
    """Accuracy of labels drawn i.i.d. from the empirical training prior (mean over repeats)."""
    train_labels = np.asarray(train_labels, dtype=np.int64)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    if train_labels.size == 0 or test_labels.size == 0:
        raise ValueError("random_classifier needs non-empty train and test labels")
    c = int(max(train_labels.max(), test_labels.max())) + 1
    prior = np.bincount(train_labels, minlength=c) / train_labels.size
    rng = np.random.default_rng(seed)
    draws = rng.choice(c, size=(repeats, test_labels.size), p=prior)
    return float(np.mean(draws == test_labels[None, :]))


# ----------------------------------------------------------------------------
# full pipeline and ablation grid
# ----------------------------------------------------------------------------


class SSLRun(NamedTuple):
    pretrain: PretrainResult
    probe: LinearEvalResult

    @property
    def test_accuracy(self) -> float:
        return self.probe.test_accuracy


def run_ssl(ds: Dataset | Prepared, cfg: TrainConfig, logger: Logger | None = None) -> SSLRun:
    """Pretrain on the train split (labels unused), then probe the student encoder."""
    data = prepare(ds, cfg)
    cfg.validate(data.T)
    pre = pretrain(data.x[data.split.train], cfg, data.x[data.split.val], logger)
    return SSLRun(pre, linear_eval(pre.student, data, cfg, logger=logger))


@dataclass
class SweepRow:
    overrides: dict
    config: TrainConfig
    accuracies: list[float | None]
    errors: list[str | None]

    @property
    def failed(self) -> bool:
        return any(a is None for a in self.accuracies)

    @property
    def mean(self) -> float | None:
        ok = [a for a in self.accuracies if a is not None]
        return float(np.mean(ok)) if ok and not self.failed else None


def _sweep_value(cfg: TrainConfig, key: str):
    return getattr(cfg, _KEY_ALIASES.get(key, key))


def sweep_configs(base: TrainConfig, grid: dict) -> list[tuple[dict, TrainConfig]]:
    """Base row first, then one row per non-base value, varying one key at a time."""
    unknown = [k for k in grid if k not in SWEEP_KEYS and k != "tau"]
    if unknown:
        raise ConfigError(f"unknown hyperparameter(s) in grid: {', '.join(map(str, unknown))}")
    rows = [({}, base)]
    for key, values in grid.items():
        name = _KEY_ALIASES.get(key, key)
        for value in values:
            if value == _sweep_value(base, key):
                continue
            field_ = {f.name: f for f in dataclasses.fields(TrainConfig)}[name]
            rows.append(({key: value}, base.replace(**{name: _coerce(field_, key, value)})))
    return rows


def sweep_workers() -> int:
    try:
        return max(1, int(os.environ.get("TSMOCO_THREADS", "1")))
    except ValueError:
        return 1


def ablation_sweep(ds: Dataset, base_cfg: TrainConfig, grid: dict, seeds: Iterable[int] | None = None,
                   workers: int | None = None) -> list[SweepRow]:
    """Pretrain + probe every one-at-a-time variant of ``base_cfg``; failures are recorded, not raised.

    Every row uses the same seeds so rows differ only in the varied hyperparameter.
    """
    seeds = [base_cfg.seed] if seeds is None else list(seeds)
    configs = sweep_configs(base_cfg, grid)
    jobs = [(r, s) for r in range(len(configs)) for s in range(len(seeds))]

    def run(job):
        r, s = job
        cfg = configs[r][1].replace(seed=seeds[s])
        try:
            cfg.validate(ds.T)
            return job, run_ssl(ds, cfg).test_accuracy, None
        except Exception as exc:  # noqa: BLE001 - a failed row must not stop the sweep
            log.warning("sweep row %d seed %d failed: %s", r, seeds[s], exc)
            return job, None, f"{type(exc).__name__}: {exc}"

    workers = workers or sweep_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    rows = [SweepRow(o, c, [None] * len(seeds), [None] * len(seeds)) for o, c in configs]
    for (r, s), acc, err in results:
        rows[r].accuracies[s] = acc
        rows[r].errors[s] = err
    return rows
