"""
Files and the command line
==========================

Write a TSD1 dataset, pretrain through the CLI entry point, read the
checkpoint back and run a two-row ablation sweep.
"""

# %%
import json
import tempfile
from pathlib import Path

from tsmoco import cli
from tsmoco.checkpoint import load_checkpoint
from tsmoco.data import load_dataset

work = Path(tempfile.mkdtemp())
cli.main(["synth", "--out", str(work / "synth.tsd"), "--n-per-class", "30", "--T", "32"])
ds = load_dataset(work / "synth.tsd")
print(ds.windows.shape, ds.class_counts())

# %% a small config; unknown keys are rejected
cfg = {"D": 16, "D_ff": 32, "n_heads": 2, "depth": 1, "K": 4, "pretrain_epochs": 3, "lineval_epochs": 20}
(work / "cfg.json").write_text(json.dumps(cfg))
cli.main(["pretrain", "--data", str(work / "synth.tsd"), "--config", str(work / "cfg.json"),
          "--out", str(work / "run")])
print((work / "run" / "metrics.jsonl").read_text())

# %% the checkpoint carries student, teacher and head plus the resolved config
ckpt = load_checkpoint(work / "run" / "checkpoint.bin")
print(sorted(ckpt.student.tensors)[:4], "...", ckpt.meta["config"]["K"])

# %% probe the checkpoint and the chance baseline
cli.main(["eval", "--data", str(work / "synth.tsd"), "--config", str(work / "cfg.json"),
          "--mode", "linear", "--checkpoint", str(work / "run" / "checkpoint.bin"), "--out", str(work / "run")])
cli.main(["eval", "--data", str(work / "synth.tsd"), "--mode", "random-classifier", "--out", str(work / "run")])
print((work / "run" / "results.jsonl").read_text())

# %% one-at-a-time sweep over masking ratio
(work / "grid.json").write_text(json.dumps({"p_M": [0.5, 0.25]}))
cli.main(["sweep", "--data", str(work / "synth.tsd"), "--config", str(work / "cfg.json"),
          "--grid", str(work / "grid.json"), "--out", str(work / "sweep.csv")])
print((work / "sweep.csv").read_text())
