"""
Reverse-mode autodiff on numpy arrays
=====================================

Build a small graph, backpropagate, and compare against central
differences. Then take a few Adam steps on a least-squares problem.
"""

# %%
import numpy as np

from tsmoco import diffcore as dc

rng = np.random.default_rng(0)
W = dc.parameter(rng.normal(size=(3, 2)), name="W")
b = dc.parameter(np.zeros(2), name="b")
x = dc.constant(rng.normal(size=(5, 3)))

# %% a two-layer expression with a softmax on top
def loss_fn():
    h = dc.tanh(dc.linear(x, W, b))
    return dc.mean(dc.softmax(h, axis=1) * h)

loss = loss_fn()
dc.backward(loss)
print("loss", loss.item())
print("dL/dW\n", W.grad)

# %% analytic gradients agree with finite differences
print("max relative error", dc.check_gradients(loss_fn, [W, b]))

# %% Adam on a linear regression
target = rng.normal(size=(5, 2))
state = dc.AdamState.for_params([W, b])
for step in range(300):
    diff = dc.linear(x, W, b) - dc.constant(target)
    mse = dc.mean(diff * diff)
    dc.zero_grad([W, b])
    dc.backward(mse)
    dc.adam_step([W, b], state, lr=0.05)
    if step % 100 == 0:
        print(step, mse.item())
print("final", mse.item())
