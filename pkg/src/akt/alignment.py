"""Instance- and group-level feature alignment.

Two binary discriminators score whether a feature (or a batch-mean feature)
came from the classifier or from the pseudo-label generator. All losses are
stated as minimization objectives built from stable logits-space BCE: the
discriminator objective labels classifier features 1 and generator features
0; the generator minimizes the non-saturating fooling form -log sigma(D(.)).
"""

from dataclasses import dataclass

import numpy as np

from akt.errors import ConfigError, ShapeError, ValidationError
from akt.kernel import (
    AffineLayer,
    affine_backward,
    affine_backward_input,
    affine_forward,
    as_tensor,
    relu,
    relu_backward,
    sigmoid_bce,
)
from akt.networks import forward_with_feature_tap, glorot_layer, mlp_backward

ALIGNMENT_MODES = ("adversarial", "mse", "none")


@dataclass(frozen=True)
class AlignmentConfig:
    """Loss weights for the two discriminators plus the alignment mode."""

    lambda_di: float = 1.0
    lambda_dg: float = 1.0
    mode: str = "adversarial"

    def __post_init__(self):
        for name, value in (("lambda_di", self.lambda_di), ("lambda_dg", self.lambda_dg)):
            if not np.isfinite(value) or value < 0.0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
        if self.mode not in ALIGNMENT_MODES:
            raise ValidationError(f"mode must be one of {ALIGNMENT_MODES}, got {self.mode!r}")


class DiscriminatorParams:
    """ReLU stack over feature vectors ending in a single raw logit."""

    def __init__(self, layers, head):
        self.layers = list(layers)
        self.head = head
        if head.out_dim != 1:
            raise ShapeError(f"discriminator head must emit 1 logit, got {head.out_dim}")
        self._masks = None

    @property
    def input_dim(self):
        return self.layers[0].in_dim if self.layers else self.head.in_dim

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()
        self.head.zero_grad()

    def param_lists(self):
        names, params, grads = [], [], []
        for i, layer in enumerate(self.layers):
            names += [f"disc{i}.w", f"disc{i}.b"]
            params += [layer.w, layer.b]
            grads += [layer.grad_w, layer.grad_b]
        names += ["disc_head.w", "disc_head.b"]
        params += [self.head.w, self.head.b]
        grads += [self.head.grad_w, self.head.grad_b]
        return names, params, grads


def init_discriminator(input_dim, hidden_dims, seed):
    """Seeded discriminator init mirroring the network init scheme."""
    if input_dim < 1:
        raise ValidationError(f"input_dim must be >= 1, got {input_dim}")
    rng = np.random.default_rng(seed)
    layers = []
    in_dim = input_dim
    for out_dim in hidden_dims:
        layers.append(glorot_layer(rng, in_dim, out_dim))
        in_dim = out_dim
    return DiscriminatorParams(layers, glorot_layer(rng, in_dim, 1))


def disc_forward(disc, f):
    """Raw logits, one per input row; caches activations for backward."""
    f = as_tensor(f)
    if f.ndim != 2 or f.shape[1] != disc.input_dim:
        raise ShapeError(
            f"feature shape {f.shape} incompatible with discriminator input dim {disc.input_dim}"
        )
    a = f
    masks = []
    for layer in disc.layers:
        z = affine_forward(a, layer)
        a, mask = relu(z)
        masks.append(mask)
    disc._masks = masks
    return affine_forward(a, disc.head)


def disc_backward(disc, grad_logits, accumulate=True):
    """Backpropagate to the discriminator input.

    With accumulate=False the parameter gradient buffers stay untouched;
    this is how generator losses see through a frozen discriminator.
    """
    if accumulate:
        g = affine_backward(as_tensor(grad_logits), disc.head)
    else:
        g = affine_backward_input(as_tensor(grad_logits), disc.head)
    for layer, mask in zip(reversed(disc.layers), reversed(disc._masks)):
        g = relu_backward(g, mask)
        if accumulate:
            g = affine_backward(g, layer)
        else:
            g = affine_backward_input(g, layer)
    return g


_REAL = 1.0
_FAKE = 0.0


def _bce_pass(disc, f, target, accumulate):
    """Forward + backward one side of a discriminator BCE term.

    Returns (loss, grad_f). Loss is the mean over the batch of the stable
    logistic loss with the given 0/1 target.
    """
    z = disc_forward(disc, f)
    targets = np.full_like(z, target)
    loss, grad_z = sigmoid_bce(z, targets)
    grad_f = disc_backward(disc, grad_z, accumulate=accumulate)
    return loss, grad_f


def instance_disc_loss(d_i, f_t, f_s):
    """Per-sample discriminator loss: classifier features 1, generator features 0.

    Accumulates gradients into d_i only; the features are treated as constants.
    """
    f_t = as_tensor(f_t)
    f_s = as_tensor(f_s)
    if f_t.shape[0] != f_s.shape[0]:
        raise ShapeError(
            f"batch sizes differ: {f_t.shape[0]} target vs {f_s.shape[0]} source features"
        )
    if f_t.shape[0] < 1:
        raise ValidationError("instance_disc_loss needs a nonempty batch")
    loss_real, _ = _bce_pass(d_i, f_t, _REAL, accumulate=True)
    loss_fake, _ = _bce_pass(d_i, f_s, _FAKE, accumulate=True)
    return loss_real + loss_fake


def group_disc_loss(d_g, f_t, f_s):
    """Batch-mean discriminator loss: one real and one fake term per batch."""
    f_t = as_tensor(f_t)
    f_s = as_tensor(f_s)
    if f_t.shape[0] < 1 or f_s.shape[0] < 1:
        raise ValidationError("group_disc_loss needs nonempty batches")
    mu_t = f_t.mean(axis=0, keepdims=True)
    mu_s = f_s.mean(axis=0, keepdims=True)
    loss_real, _ = _bce_pass(d_g, mu_t, _REAL, accumulate=True)
    loss_fake, _ = _bce_pass(d_g, mu_s, _FAKE, accumulate=True)
    return loss_real + loss_fake


def total_disc_loss(cfg, d_i, d_g, f_t, f_s):
    """lambda_di * L_DI + lambda_dg * L_DG with matching gradient scaling.

    Owns the discriminator gradient buffers: both are zeroed first, then each
    discriminator's accumulated gradients are scaled by its loss weight.
    """
    if cfg.mode != "adversarial":
        raise ConfigError(f"total_disc_loss requires adversarial mode, got {cfg.mode!r}")
    d_i.zero_grad()
    d_g.zero_grad()
    loss_i = instance_disc_loss(d_i, f_t, f_s)
    if cfg.lambda_di != 1.0:
        for _, _, g in zip(*d_i.param_lists()):
            g *= cfg.lambda_di
    loss_g = group_disc_loss(d_g, f_t, f_s)
    if cfg.lambda_dg != 1.0:
        for _, _, g in zip(*d_g.param_lists()):
            g *= cfg.lambda_dg
    return cfg.lambda_di * loss_i + cfg.lambda_dg * loss_g


def generator_alignment_loss(cfg, d_i, d_g, gen, x_s):
    """Non-saturating fooling loss, minimized over the generator trunk.

    loss = mean_i -log sigma(D_I(G(x_s_i))) - log sigma(D_G(mean_i G(x_s_i))).
    Gradients flow through the frozen discriminators into gen's hidden layers
    (the head is off the feature path and receives nothing).
    """
    if cfg.mode != "adversarial":
        raise ConfigError(f"generator_alignment_loss requires adversarial mode, got {cfg.mode!r}")
    x_s = as_tensor(x_s)
    if x_s.shape[0] < 1:
        raise ValidationError("generator_alignment_loss needs a nonempty batch")
    b = x_s.shape[0]
    f_s, _ = forward_with_feature_tap(gen, x_s)
    loss_i, grad_f_instance = _bce_pass(d_i, f_s, _REAL, accumulate=False)
    mu = f_s.mean(axis=0, keepdims=True)
    loss_g, grad_mu = _bce_pass(d_g, mu, _REAL, accumulate=False)
    grad_f = grad_f_instance + np.repeat(grad_mu / b, b, axis=0)
    mlp_backward(gen, grad_feature=grad_f)
    return loss_i + loss_g


def feature_mean_mse(f_t, f_s):
    """Squared distance between batch means and its gradient wrt f_s rows.

    The target-side mean is a constant; each f_s row receives
    2*(mu_s - mu_t)/b.
    """
    f_t = as_tensor(f_t)
    f_s = as_tensor(f_s)
    if f_t.ndim != 2 or f_s.ndim != 2 or f_t.shape[1] != f_s.shape[1]:
        raise ShapeError(f"feature dims differ: {f_t.shape} vs {f_s.shape}")
    if f_t.shape[0] < 1 or f_s.shape[0] < 1:
        raise ValidationError("feature_mean_mse needs nonempty batches")
    diff = f_t.mean(axis=0) - f_s.mean(axis=0)
    loss = float(diff @ diff)
    grad_rows = np.repeat((-2.0 * diff / f_s.shape[0])[None, :], f_s.shape[0], axis=0)
    return loss, grad_rows


def mse_alignment_loss(gen, x_s, f_t):
    """Batch-mean L2 alignment ablation; gradients flow into gen only."""
    f_s, _ = forward_with_feature_tap(gen, as_tensor(x_s))
    loss, grad_f = feature_mean_mse(f_t, f_s)
    mlp_backward(gen, grad_feature=grad_f)
    return loss
