"""
Reverse-mode gradients on numpy arrays
======================================

Build a small graph, run backward once, and compare against central
differences.
"""
import numpy as np

from capt import tensor as T
from capt.optim import Adam

rng = np.random.default_rng(0)
a = T.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
b = T.Tensor(rng.normal(size=(4, 2)), requires_grad=True)

# every op records itself on a thread-local tape
y = T.matmul(a, b)
loss = T.sum(T.mul(y, y))
T.backward(loss)
print("loss", loss.item())
print("dL/da\n", a.grad)

# central difference for one entry
h = 1e-6
a_up, a_down = a.data.copy(), a.data.copy()
a_up[1, 2] += h
a_down[1, 2] -= h
fd = (np.sum((a_up @ b.data) ** 2) - np.sum((a_down @ b.data) ** 2)) / (2 * h)
print("analytic", a.grad[1, 2], "finite difference", fd)

# no_grad skips recording; Adam updates parameters in place
x = T.Tensor([4.0, -3.0], requires_grad=True)
opt = Adam([x], lr=0.1)
for step in range(300):
    opt.zero_grad()
    T.backward(T.sum(T.mul(x, x)))
    opt.step()
with T.no_grad():
    print("minimized |x|^2 at", x.data, "tape length", len(T.get_tape()))
