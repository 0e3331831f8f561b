"""Command-line driver: ``tsmoco pretrain|eval|sweep|gradcheck|synth``.

Exit codes: 0 ok, 1 bad arguments or config, 2 unreadable data or
checkpoint, 3 training diverged, 4 gradient check failed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, train
from . import diffcore as dc
from .augment import window_mask_batch
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (FormatError, fingerprint, load_dataset, past_future_split, save_dataset,
                   synth_generate)
from .encoder import encode, init_encoder
from .objective import loss_mc, loss_rec, loss_ss
from .recon import init_recon, reconstruct_future

log = logging.getLogger("tsmoco")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 1, 2, 3, 4
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ----------------------------------------------------------------------------
# config and run-directory helpers
# ----------------------------------------------------------------------------


def load_config(path: str | None, seed: int | None = None, **overrides) -> train.TrainConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise train.ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise train.ConfigError(f"config {path} must hold a JSON object")
    cfg = train.TrainConfig.from_dict(raw)
    changes = {k: v for k, v in overrides.items() if v is not None}
    if seed is not None:
        changes["seed"] = seed
    return cfg.replace(**changes) if changes else cfg


def _load_data(path: str):
    try:
        return load_dataset(path)
    except (OSError, FormatError) as exc:
        raise _DataError(f"cannot load dataset {path}: {exc}") from None


class _DataError(Exception):
    pass


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out: Path, cfg: train.TrainConfig, data_path: str, command: str) -> dict:
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "dataset": {"path": str(Path(data_path).resolve()), "sha256": fingerprint(data_path)},
        "version": __version__,
        "seed": cfg.seed,
        "started": _now(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


class MetricsWriter:
    """Appends one JSON line per record; wall time is omitted unless asked for."""

    def __init__(self, path: Path, wall_time: bool = False):
        self.path = path
        self.wall_time = wall_time

    def __call__(self, rec: train.MetricsRecord) -> None:
        with self.path.open("a") as fh:
            fh.write(json.dumps(rec.to_dict(self.wall_time)) + "\n")


def _prepare_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    metrics = out / "metrics.jsonl"
    if metrics.exists():
        metrics.unlink()
    return out


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------


def cmd_pretrain(args) -> int:
    cfg = load_config(args.config, args.seed, pretrain_epochs=args.epochs)
    ds = _load_data(args.data)
    cfg.validate(ds.T)
    out = _prepare_out(args.out)
    write_manifest(out, cfg, args.data, "pretrain")
    data = train.prepare(ds, cfg)
    logger = MetricsWriter(out / "metrics.jsonl", args.wall_time)
    result = train.pretrain(data.x[data.split.train], cfg, data.x[data.split.val], logger)
    meta = {"config": cfg.to_dict(), "dataset_sha256": fingerprint(args.data), "version": __version__}
    save_checkpoint(Checkpoint(result.student, result.teacher, result.recon, meta=meta),
                    out / "checkpoint.bin")
    last = result.history[-1] if result.history else None
    print(f"pretrain done: {len(result.history)} epochs"
          + (f", final train loss {last.train_loss:.6f}" if last else "") + f" -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.seed, lineval_epochs=args.epochs)
    ckpt = None
    if args.mode == "linear":
        if not args.checkpoint:
            raise _DataError("--mode linear needs --checkpoint")
        try:
            ckpt = load_checkpoint(args.checkpoint)
        except (OSError, FormatError) as exc:
            raise _DataError(f"cannot load checkpoint {args.checkpoint}: {exc}") from None
        saved = ckpt.meta.get("config", {})
        # architecture, preprocessing and split must match what was pretrained
        keys = ["D", "D_ff", "n_heads", "depth", "alpha", "normalize", "balance"]
        if args.seed is None:
            keys.append("seed")
        cfg = cfg.override({k: saved[k] for k in keys if k in saved})
    ds = _load_data(args.data)
    cfg.validate(ds.T)
    data = train.prepare(ds, cfg)
    out = Path(args.out) if args.out else None
    logger = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        logger = MetricsWriter(out / "metrics.jsonl", args.wall_time)

    record = {"phase": args.mode, "seed": cfg.seed, "dataset_sha256": fingerprint(args.data)}
    if args.mode == "linear":
        res = train.linear_eval(ckpt.student, data, cfg, logger=logger)
        acc = res.test_accuracy
        if out is not None:
            ckpt.classifier = res.classifier.state_dict()
            save_checkpoint(ckpt, out / "checkpoint.bin")
    elif args.mode == "random-encoder":
        acc = train.random_encoder_probe(data, cfg, logger).test_accuracy
    elif args.mode == "supervised":
        acc = train.supervised_train(data, cfg, args.epochs, logger).test_accuracy
    else:
        idx = data.split
        acc = train.random_classifier(data.labels[idx.train], data.labels[idx.test],
                                      seed=cfg.seed, repeats=args.draws)
        record["expected"] = train.expected_random_accuracy(
            data.labels[idx.train], data.labels[idx.test], data.num_classes)
        record["draws"] = args.draws
    record["test_accuracy"] = acc
    if out is not None:
        with (out / "results.jsonl").open("a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"{args.mode}: test accuracy {acc:.4f}")
    return EXIT_OK


def load_grid(path: str) -> tuple[dict, dict]:
    """A grid file holds ``{"base": {...}, "grid": {key: [values]}}``; a bare mapping is the grid."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise train.ConfigError(f"cannot read grid {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise train.ConfigError("grid file must hold a JSON object")
    if "grid" in raw or "base" in raw:
        extra = set(raw) - {"base", "grid"}
        if extra:
            raise train.ConfigError(f"unknown grid file section(s): {', '.join(sorted(extra))}")
        return raw.get("base", {}), raw.get("grid", {})
    return {}, raw


def write_sweep_csv(path: Path, rows: list[train.SweepRow], n_seeds: int) -> None:
    header = list(train.SWEEP_KEYS) + [f"accuracy_seed_{i}" for i in range(n_seeds)] + ["mean"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            hp = [row.config.tau, row.config.lam, row.config.K, row.config.p_M, row.config.alpha]
            accs = ["FAILED" if a is None else f"{a:.6f}" for a in row.accuracies]
            w.writerow(hp + accs + ["FAILED" if row.failed else f"{row.mean:.6f}"])


def cmd_sweep(args) -> int:
    base_raw, grid = load_grid(args.grid)
    cfg = load_config(args.config, args.seed, pretrain_epochs=args.epochs,
                      lineval_epochs=args.lineval_epochs)
    cfg = cfg.override(base_raw)
    configs = train.sweep_configs(cfg, grid)  # raises on unknown keys before any data access
    ds = _load_data(args.data)
    seeds = [cfg.seed + i for i in range(args.seeds)]
    print(f"sweep: {len(configs)} rows x {len(seeds)} seed(s)")
    rows = train.ablation_sweep(ds, cfg, grid, seeds=seeds, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out, rows, len(seeds))
    for row in rows:
        label = ", ".join(f"{k}={v}" for k, v in row.overrides.items()) or "base"
        print(f"  {label}: " + ("FAILED " + "; ".join(e for e in row.errors if e) if row.failed
                                else f"mean {row.mean:.4f}"))
    if rows and all(r.failed for r in rows):
        return EXIT_DATA
    return EXIT_OK


# toy dimensions for the full-graph gradient check
GRADCHECK_DIMS = dict(T=8, C_ch=2, D=4, depth=1, n_heads=2, K=2, batch=2, D_ff=8)


def gradcheck_groups(h: float = 1e-5, seed: int = 0) -> dict[str, float]:
    """Max relative error per parameter group of the full self-supervised loss at toy size."""
    d = GRADCHECK_DIMS
    rng = np.random.default_rng(seed)
    student = init_encoder(d["C_ch"], d["D"], d["D_ff"], d["n_heads"], d["depth"], rng)
    teacher = init_encoder(d["C_ch"], d["D"], d["D_ff"], d["n_heads"], d["depth"], rng).copy(
        requires_grad=False)
    recon = init_recon(d["C_ch"], d["D"], rng)
    # nonzero biases and LN shifts so every term is exercised
    for p in student.parameters() + recon.parameters():
        p.data = p.data + rng.normal(scale=0.1, size=p.shape)
    x = rng.normal(size=(d["batch"], d["T"], d["C_ch"]))
    past, future, last = past_future_split(x, d["K"])
    masked = window_mask_batch(past, 0.5, np.random.default_rng(seed + 1))
    with dc.no_grad():
        c_t = encode(past, teacher, 1).data

    def build():
        c_s = encode(masked, student, 1)
        x_hat = reconstruct_future(c_s, future, last, recon)
        return loss_ss(loss_rec(future, x_hat), loss_mc(c_s, c_t), 1.0)

    named = [("encoder." + k, v) for k, v in student.tensors.items()]
    named += [("recon." + k, v) for k, v in recon.tensors.items()]
    errors = dc.gradient_errors(build, [p for _, p in named], h)
    groups: dict[str, float] = {}
    for (name, _), err in zip(named, errors):
        parts = name.split(".")
        group = ".".join(parts[:3] if parts[1].startswith("block") else parts[:2])
        groups[group] = max(groups.get(group, 0.0), err)
    return groups


def cmd_gradcheck(args) -> int:
    groups = gradcheck_groups(args.eps, args.seed or 0)
    bad = [g for g, e in groups.items() if not e < GRADCHECK_TOL]
    for g, e in groups.items():
        print(f"{g:28s} {e:.3e}" + ("  FAIL" if g in bad else ""))
    if bad:
        print(f"gradcheck FAILED (tol {GRADCHECK_TOL:g}): {', '.join(bad)}", file=sys.stderr)
        return EXIT_GRADCHECK
    print(f"gradcheck ok: max relative error {max(groups.values()):.3e} < {GRADCHECK_TOL:g}")
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synth_generate(args.n_per_class, args.classes, args.T, args.channels,
                        args.sigma, args.seed or 0)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, args.out)
    print(f"wrote {ds.n} windows (T={ds.T}, C_ch={ds.n_channels}, C={ds.num_classes}) to {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tsmoco", description="Momentum-contrast self-supervised learning for time series.")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", required=True, help="TSD1 dataset file")
        sp.add_argument("--config", help="JSON file of TrainConfig keys")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("pretrain", help="self-supervised pretraining")
    common(sp)
    sp.add_argument("--out", required=True, help="run directory")
    sp.add_argument("--epochs", type=int, help="override pretrain_epochs")
    sp.add_argument("--wall-time", action="store_true", help="record wall_ms in metrics.jsonl")
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("eval", help="probe or baseline accuracy")
    common(sp)
    sp.add_argument("--mode", required=True,
                    choices=["linear", "random-encoder", "random-classifier", "supervised"])
    sp.add_argument("--checkpoint", help="pretrain checkpoint (required for --mode linear)")
    sp.add_argument("--out", help="directory for results.jsonl and metrics.jsonl")
    sp.add_argument("--epochs", type=int, help="override probe / supervised epochs")
    sp.add_argument("--draws", type=int, default=10_000, help="random-classifier repeats")
    sp.add_argument("--wall-time", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="one-at-a-time hyperparameter ablation")
    common(sp)
    sp.add_argument("--grid", required=True, help="JSON grid file")
    sp.add_argument("--out", required=True, help="CSV output path")
    sp.add_argument("--seeds", type=int, default=1, help="seeds per row (seed, seed+1, ...)")
    sp.add_argument("--epochs", type=int, help="override pretrain_epochs")
    sp.add_argument("--lineval-epochs", type=int)
    sp.add_argument("--workers", type=int, help="parallel runs (default TSMOCO_THREADS or 1)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gradcheck", help="finite-difference check of the full loss at toy size")
    sp.add_argument("--eps", type=float, default=1e-5, help="central-difference step h")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("synth", help="write a synthetic sinusoid dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-per-class", type=int, default=200)
    sp.add_argument("--classes", type=int, default=3)
    sp.add_argument("--T", type=int, default=64)
    sp.add_argument("--channels", type=int, default=4)
    sp.add_argument("--sigma", type=float, default=0.1)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except train.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except train.TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
