"""Pure NumPy implementation of the hot kernels.

This is the fallback backend; `akt._kernels._core` is the compiled twin with
the same function signatures. All inputs are C-contiguous float64 arrays and
all scalar reductions return Python floats. Validation lives one level up in
`akt.kernel`; these functions assume well-formed inputs.
"""

import numpy as np
from scipy.special import expit


def affine_forward(x, w, b):
    """y[i] = x[i] . w^T + b for each row i."""
    return x @ w.T + b


def affine_backward(grad_y, x, w, grad_w, grad_b):
    """Accumulate grad_w += grad_y^T.x and grad_b += column sums; return grad_x."""
    grad_w += grad_y.T @ x
    grad_b += grad_y.sum(axis=0)
    return grad_y @ w


def affine_backward_input(grad_y, w):
    """Input gradient only (parameter buffers untouched)."""
    return grad_y @ w


def relu_forward(x):
    y = np.maximum(x, 0.0)
    mask = (x > 0.0).astype(np.float64)
    return y, mask


def relu_backward(grad_y, mask):
    return grad_y * mask


def softmax_xent(logits, onehot):
    """Mean stable cross-entropy over rows and its gradient (softmax - y)/b."""
    rows = logits.shape[0]
    shift = logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - shift).sum(axis=1, keepdims=True)) + shift
    loss = float((lse[:, 0] - (logits * onehot).sum(axis=1)).sum() / rows)
    grad = (np.exp(logits - lse) - onehot) / rows
    return loss, grad


def sigmoid_bce(logits, targets):
    """Mean stable binary cross-entropy over all entries and its gradient."""
    n = logits.size
    per_entry = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    loss = float(per_entry.sum() / n)
    grad = (expit(logits) - targets) / n
    return loss, grad


def sgd_update(param, grad, velocity, lr, momentum, weight_decay):
    """v <- mu*v + (g + wd*p); p <- p - lr*v, in place on flat views."""
    velocity *= momentum
    if weight_decay != 0.0:
        velocity += grad + weight_decay * param
    else:
        velocity += grad
    param -= lr * velocity
