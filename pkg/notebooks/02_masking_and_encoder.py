"""
Masking, positions and the context vector
=========================================

The student sees the past with one contiguous window zeroed out. The
encoder turns a window into a single CLS context vector; with positions
switched off it cannot tell the order of timesteps.
"""

# %%
import numpy as np

from tsmoco.augment import mask_length, window_mask
from tsmoco.data import past_future_split, synth_generate
from tsmoco.encoder import encode, init_encoder, positional_encoding

ds = synth_generate(n_per_class=2, C=3, T=64, C_ch=4, noise_sigma=0.1, seed=0)
x = ds.windows[0].astype(np.float64)
past, future, last = past_future_split(x, K=6)
print("past", past.shape, "future", future.shape)

# %% half of the past is blanked in one run
masked = window_mask(past, 0.5, np.random.default_rng(1))
zero_rows = np.flatnonzero(np.all(masked == 0, axis=1))
print("masked", mask_length(len(past), 0.5), "steps:", zero_rows.min(), "to", zero_rows.max())

# %% sinusoidal positions, row 0 belongs to the CLS slot
P = positional_encoding(len(past) + 1, 32)
print("position 0:", P[0, :6], "position 1:", np.round(P[1, :6], 4))

# %% order matters only when alpha = 1
enc = init_encoder(4, d_model=32, d_ff=64, n_heads=4, depth=2, rng=np.random.default_rng(0))
perm = np.random.default_rng(2).permutation(len(past))
for alpha in (0, 1):
    c = encode(past, enc, alpha).data
    c_perm = encode(past[perm], enc, alpha).data
    print(f"alpha={alpha}: context norm {np.linalg.norm(c):.3f}, "
          f"change under shuffling {np.abs(c - c_perm).max():.2e}")

# %% attention weights can be traced per block
trace = []
encode(past, enc, 1, trace)
print([w.shape for w in trace], "rows sum to", trace[0].sum(axis=-1).mean())
