"""
Pretraining, probing and the baselines
======================================

Pretrain a student encoder with future reconstruction plus momentum
contrast, then fit a linear probe on frozen context vectors and compare
against a random encoder, a supervised model and chance. Takes a few
minutes on one CPU; lower ``EPOCHS`` for a quick look.
"""

# %%
import numpy as np

from tsmoco import train
from tsmoco.data import synth_generate

EPOCHS = 50
ds = synth_generate(n_per_class=200, C=3, T=64, C_ch=4, noise_sigma=0.1, seed=0)
cfg = train.TrainConfig(pretrain_epochs=EPOCHS, seed=0)
data = train.prepare(ds, cfg)
print(cfg)

# %% pretraining never sees labels
log = []
run = train.run_ssl(data, cfg, logger=log.append)
pre = [r for r in log if r.phase == "pretrain"]
print("L_SS epoch 1 -> last:", round(pre[0].train_loss, 4), "->", round(pre[-1].train_loss, 4))
print("SSL linear probe:", run.test_accuracy)

# %% controls
rand = train.random_encoder_probe(data, cfg)
sup = train.supervised_train(data, cfg)
y_tr, y_te = data.labels[data.split.train], data.labels[data.split.test]
print("random encoder probe:", rand.test_accuracy)
print("supervised:", sup.test_accuracy)
print("random classifier:", train.random_classifier(y_tr, y_te, repeats=100),
      "expected", round(train.expected_random_accuracy(y_tr, y_te), 4))

# %% how far apart are the classes in context space?
feats = train.encode_all(data.x, run.pretrain.student, cfg.alpha)
for k in range(3):
    f = feats[data.labels == k]
    print(k, "mean norm", np.linalg.norm(f.mean(0)).round(3), "spread", f.std(0).mean().round(4))
