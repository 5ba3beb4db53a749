"""Deterministic differentiable-compute layer.

Affine layers with hand-written backward passes, ReLU, numerically stable
classification losses, momentum SGD, and a central-difference gradient
checker. Everything is double precision; backward passes accumulate into
explicit gradient buffers owned by the layers.
"""

import numpy as np

from akt import _kernels as _B
from akt.errors import NumericError, ShapeError, StateError, ValidationError


def as_tensor(x):
    """Coerce to a C-contiguous float64 array."""
    return np.ascontiguousarray(x, dtype=np.float64)


def _as_matrix(x, name):
    arr = as_tensor(x)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


class AffineLayer:
    """Dense layer y = x.W^T + b with gradient buffers grad_w, grad_b.

    The forward pass caches its input so backward can accumulate parameter
    gradients; gradient buffers are zero after construction and zero_grad().
    """

    def __init__(self, w, b):
        self.w = _as_matrix(w, "w")
        self.b = as_tensor(b)
        if self.b.ndim != 1 or self.b.shape[0] != self.w.shape[0]:
            raise ShapeError(
                f"bias shape {self.b.shape} does not match weight shape {self.w.shape}"
            )
        self.grad_w = np.zeros_like(self.w)
        self.grad_b = np.zeros_like(self.b)
        self._cached_x = None

    @property
    def in_dim(self):
        return self.w.shape[1]

    @property
    def out_dim(self):
        return self.w.shape[0]

    def zero_grad(self):
        self.grad_w[...] = 0.0
        self.grad_b[...] = 0.0


def affine_forward(x, layer):
    """Apply the layer rowwise and cache the input for backward."""
    x = _as_matrix(x, "x")
    if x.shape[1] != layer.in_dim:
        raise ShapeError(
            f"input shape {x.shape} incompatible with weight shape {layer.w.shape}"
        )
    layer._cached_x = x
    return _B.affine_forward(x, layer.w, layer.b)


def affine_backward(grad_y, layer, cached_x=None):
    """Accumulate parameter gradients and return the input gradient.

    grad_w += grad_y^T.x, grad_b += column-sum(grad_y), returns grad_y.W.
    Uses the input cached by affine_forward unless cached_x is given.
    """
    grad_y = _as_matrix(grad_y, "grad_y")
    if cached_x is None:
        cached_x = layer._cached_x
        if cached_x is None:
            raise StateError("affine_backward called before affine_forward")
    else:
        cached_x = _as_matrix(cached_x, "cached_x")
    if grad_y.shape[1] != layer.out_dim:
        raise ShapeError(
            f"grad_y shape {grad_y.shape} incompatible with weight shape {layer.w.shape}"
        )
    if cached_x.shape != (grad_y.shape[0], layer.in_dim):
        raise ShapeError(
            f"cached input shape {cached_x.shape} incompatible with grad_y shape "
            f"{grad_y.shape} and weight shape {layer.w.shape}"
        )
    return _B.affine_backward(grad_y, cached_x, layer.w, layer.grad_w, layer.grad_b)


def affine_backward_input(grad_y, layer):
    """Input gradient grad_y.W without touching the parameter buffers."""
    grad_y = _as_matrix(grad_y, "grad_y")
    if grad_y.shape[1] != layer.out_dim:
        raise ShapeError(
            f"grad_y shape {grad_y.shape} incompatible with weight shape {layer.w.shape}"
        )
    return _B.affine_backward_input(grad_y, layer.w)


def relu(x):
    """Elementwise max(x, 0) plus the 0/1 mask (1 where x > 0)."""
    return _B.relu_forward(_as_matrix(x, "x"))


def relu_backward(grad_y, mask):
    """grad_y masked by the forward activation pattern."""
    grad_y = _as_matrix(grad_y, "grad_y")
    if grad_y.shape != mask.shape:
        raise ShapeError(f"grad_y shape {grad_y.shape} != mask shape {mask.shape}")
    return _B.relu_backward(grad_y, mask)


def softmax_cross_entropy(logits, onehot):
    """Mean cross-entropy from logits via max-shifted logsumexp.

    Returns (loss, grad) with grad = (softmax(logits) - onehot) / batch.
    Natural logarithm; rows of `onehot` must be exact one-hot vectors.
    """
    logits = _as_matrix(logits, "logits")
    onehot = _as_matrix(onehot, "onehot")
    if logits.shape != onehot.shape:
        raise ShapeError(f"logits shape {logits.shape} != labels shape {onehot.shape}")
    if not np.isfinite(logits).all():
        raise NumericError("softmax_cross_entropy received non-finite logits")
    if not (((onehot == 0.0) | (onehot == 1.0)).all() and (onehot.sum(axis=1) == 1.0).all()):
        raise ValidationError("each label row must be one-hot with entries in {0, 1}")
    return _B.softmax_xent(logits, onehot)


def sigmoid_bce(logits, targets):
    """Mean stable binary cross-entropy over all entries.

    Per entry: max(z,0) - z*t + ln(1+exp(-|z|)); grad = (sigma(z) - t) / (b*c).
    """
    logits = _as_matrix(logits, "logits")
    targets = _as_matrix(targets, "targets")
    if logits.shape != targets.shape:
        raise ShapeError(f"logits shape {logits.shape} != targets shape {targets.shape}")
    if not np.isfinite(logits).all():
        raise NumericError("sigmoid_bce received non-finite logits")
    if ((targets < 0.0) | (targets > 1.0)).any():
        raise ValidationError("sigmoid_bce targets must lie in [0, 1]")
    return _B.sigmoid_bce(logits, targets)


class OptimizerState:
    """Momentum-SGD state: one zero-initialized velocity buffer per parameter."""

    def __init__(self, params, lr, momentum=0.0, weight_decay=0.0, names=None):
        if not lr > 0.0:
            raise ValidationError(f"learning rate must be > 0, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValidationError(f"momentum must lie in [0, 1), got {momentum}")
        if weight_decay < 0.0:
            raise ValidationError(f"weight decay must be >= 0, got {weight_decay}")
        params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocities = [np.zeros_like(p) for p in params]
        self.names = list(names) if names is not None else [f"param{i}" for i in range(len(params))]
        if len(self.names) != len(params):
            raise ValidationError("names and params must have equal length")


def sgd_step(params, grads, state):
    """In-place heavy-ball update: v <- mu*v + (g + wd*p), p <- p - lr*v."""
    params = list(params)
    grads = list(grads)
    if not (len(params) == len(grads) == len(state.velocities)):
        raise ShapeError(
            f"got {len(params)} params, {len(grads)} grads, "
            f"{len(state.velocities)} velocity buffers"
        )
    for name, p, g, v in zip(state.names, params, grads, state.velocities):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeError(
                f"{name}: param {p.shape}, grad {g.shape}, velocity {v.shape} differ"
            )
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name}")
        _B.sgd_update(
            p.reshape(-1), g.reshape(-1), v.reshape(-1),
            state.lr, state.momentum, state.weight_decay,
        )


def grad_check(loss_fn, params, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    loss_fn() must recompute (loss, [grad per param]) from the current values
    of `params` (the same array objects; they are perturbed in place). The
    relative error per coordinate is |a - n| / max(|a|, |n|, 1e-12).
    """
    if not h > 0.0:
        raise ValidationError(f"step size must be > 0, got {h}")
    _, grads = loss_fn()
    grads = [np.array(g, dtype=np.float64, copy=True) for g in grads]
    max_rel = 0.0
    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + h
            f_plus = loss_fn()[0]
            flat_p[j] = orig - h
            f_minus = loss_fn()[0]
            flat_p[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            rel = abs(flat_g[j] - numeric) / max(abs(flat_g[j]), abs(numeric), 1e-12)
            if rel > max_rel:
                max_rel = rel
    return max_rel
