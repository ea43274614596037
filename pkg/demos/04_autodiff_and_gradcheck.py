"""The numeric kernel: numpy tensors, reverse-mode gradients, and the
finite-difference oracle that keeps them honest.
"""

import numpy as np

import meses.autodiff as ad
from meses.autodiff import Tensor, grad_check

rng = np.random.default_rng(0)

# Build a small computation and pull gradients back through it.
w = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
b = Tensor(np.zeros(4), requires_grad=True)
x = Tensor(rng.standard_normal((8, 3)))

hidden = ad.relu(ad.linear(x, w, b))
loss = ad.mean(hidden * hidden)
loss.backward()
print(f"loss = {loss.item():.4f}")
print(f"dloss/db = {b.grad}")

# Composites come with exact masked behaviour: softmax rows with masked keys
# put exactly zero probability there.
scores = Tensor(rng.standard_normal((2, 5)))
mask = np.array([[False, True, False, True, False], [False, False, False, False, True]])
probs = ad.softmax(scores, axis=-1, mask=mask)
print(f"\nmasked softmax rows sum to one: {probs.data.sum(axis=-1)}")
print(f"masked entries exactly zero: {probs.data[mask]}")

# The oracle: central differences on sampled coordinates.  Coordinates whose
# +-step evaluations land on different sides of a ReLU kink are skipped.
def f():
    h = ad.relu(ad.linear(x, w, b))
    return ad.mean(h * h)


report = grad_check(f, [w, b], step=1e-5, n_samples=16, rng=rng)
print(f"\ngrad_check: {report.n_checked} checked, {report.n_skipped} skipped at kinks")
print(f"max relative error: {report.max_rel_error:.2e}")
