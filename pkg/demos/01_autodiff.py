"""
Reverse-mode autodiff on numpy arrays
=====================================

A Tensor wraps a float64 array and records how it was made. Calling
backward() on a scalar walks that record in reverse and fills in .grad.
"""

import numpy as np

from hcsa import Tensor, backward
from hcsa import tensor as T

rng = np.random.default_rng(0)

# a tiny regression: loss = mean((x @ W - y)^2)
x = Tensor(rng.normal(size=(6, 3)))
y = Tensor(rng.normal(size=(6, 2)))
W = Tensor(rng.normal(size=(3, 2)), requires_grad=True)

r = x @ W - y
loss = (r * r).mean()
backward(loss)
print("loss", loss.item())

# closed form for comparison
expected = 2 * x.data.T @ (x.data @ W.data - y.data) / r.size
print("max |dW - closed form|", np.abs(W.grad - expected).max())

# central differences agree too
numeric = T.numerical_grad(lambda: ((x @ W - y) * (x @ W - y)).mean().item(), W)
print("max relative error vs finite differences",
      T.relative_error(W.grad, numeric).max())

# segment softmax normalises blocks of rows; a short last block is fine
scores = Tensor(rng.normal(size=(7, 1)), requires_grad=True)
alpha = T.segment_softmax(scores, size=3)
print("alpha per segment sums:", T.segment_sum(alpha, 3).numpy().ravel())
