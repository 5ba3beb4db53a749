"""Classifier and pseudo-label generator networks.

Both are multilayer perceptrons built from one shared spec so their feature
spaces match. The designated feature-tap layer provides the activation used
for alignment; the classification head maps that activation to class logits.
Hidden layers listed after the tap are constructed but sit off the forward
path (the default tap is the last hidden layer, where no such layers exist).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from akt.errors import ShapeError, StateError, ValidationError
from akt.kernel import (
    AffineLayer,
    affine_backward,
    affine_forward,
    as_tensor,
    relu,
    relu_backward,
)

TASK_KINDS = ("multiclass", "multilabel")


@dataclass(frozen=True)
class MLPSpec:
    """Architecture of the classifier M and generator G.

    feature_tap indexes the hidden layer whose post-activation output is the
    alignment feature; -1 (the default) means the last hidden layer. The head
    consumes the tap activation.
    """

    input_dim: int
    num_classes: int
    hidden_dims: tuple = (256, 128)
    task_kind: str = "multiclass"
    feature_tap: int = -1

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if self.input_dim < 1:
            raise ValidationError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.hidden_dims:
            raise ValidationError("hidden_dims must be nonempty")
        if any(d < 1 for d in self.hidden_dims):
            raise ValidationError(f"hidden dims must be >= 1, got {self.hidden_dims}")
        if self.task_kind not in TASK_KINDS:
            raise ValidationError(f"task_kind must be one of {TASK_KINDS}, got {self.task_kind!r}")
        if self.task_kind == "multiclass" and self.num_classes < 2:
            raise ValidationError(f"multiclass needs num_classes >= 2, got {self.num_classes}")
        if self.num_classes < 1:
            raise ValidationError(f"num_classes must be >= 1, got {self.num_classes}")
        tap = self.feature_tap
        if tap == -1:
            tap = len(self.hidden_dims) - 1
        if not 0 <= tap < len(self.hidden_dims):
            raise ValidationError(
                f"feature_tap {self.feature_tap} outside hidden stack of depth {len(self.hidden_dims)}"
            )
        object.__setattr__(self, "feature_tap", tap)

    @property
    def feature_dim(self):
        return self.hidden_dims[self.feature_tap]


@dataclass
class MLPParams:
    """Parameter container: ordered hidden AffineLayers plus the head."""

    spec: MLPSpec
    hidden: list
    head: AffineLayer
    _masks: list = field(default=None, repr=False)

    def __post_init__(self):
        dims = (self.spec.input_dim,) + self.spec.hidden_dims
        for i, layer in enumerate(self.hidden):
            if (layer.out_dim, layer.in_dim) != (dims[i + 1], dims[i]):
                raise ShapeError(
                    f"hidden layer {i} has shape {layer.w.shape}, "
                    f"spec requires ({dims[i + 1]}, {dims[i]})"
                )
        if self.head.in_dim != self.spec.feature_dim or self.head.out_dim != self.spec.num_classes:
            raise ShapeError(
                f"head shape {self.head.w.shape} does not map feature dim "
                f"{self.spec.feature_dim} to {self.spec.num_classes} classes"
            )

    @property
    def path_layers(self):
        """Hidden layers actually evaluated (up to and including the tap)."""
        return self.hidden[: self.spec.feature_tap + 1]

    def zero_grad(self):
        for layer in self.hidden:
            layer.zero_grad()
        self.head.zero_grad()

    def param_lists(self, include_head=True):
        """Aligned (names, params, grads) over trainable layers, in order."""
        names, params, grads = [], [], []
        for i, layer in enumerate(self.path_layers):
            names += [f"hidden{i}.w", f"hidden{i}.b"]
            params += [layer.w, layer.b]
            grads += [layer.grad_w, layer.grad_b]
        if include_head:
            names += ["head.w", "head.b"]
            params += [self.head.w, self.head.b]
            grads += [self.head.grad_w, self.head.grad_b]
        return names, params, grads


def glorot_layer(rng, in_dim, out_dim):
    """Affine layer with uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero bias."""
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    w = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    return AffineLayer(w, np.zeros(out_dim))


def init_mlp(spec, seed):
    """Seeded network init; identical (spec, seed) gives bitwise-identical params."""
    rng = np.random.default_rng(seed)
    hidden = []
    in_dim = spec.input_dim
    for out_dim in spec.hidden_dims:
        hidden.append(glorot_layer(rng, in_dim, out_dim))
        in_dim = out_dim
    head = glorot_layer(rng, spec.feature_dim, spec.num_classes)
    return MLPParams(spec, hidden, head)


def forward_with_feature_tap(net, x):
    """Return (feature, logits); caches activations for mlp_backward.

    The feature is the post-ReLU activation at the tap layer and the logits
    are the head applied to that feature.
    """
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != net.spec.input_dim:
        raise ShapeError(
            f"input shape {x.shape} incompatible with input_dim {net.spec.input_dim}"
        )
    a = x
    masks = []
    for layer in net.path_layers:
        z = affine_forward(a, layer)
        a, mask = relu(z)
        masks.append(mask)
    net._masks = masks
    logits = affine_forward(a, net.head)
    return a, logits


def mlp_backward(net, grad_logits=None, grad_feature=None):
    """Accumulate parameter gradients from head and/or feature gradients.

    grad_logits flows through the head into the feature path; grad_feature is
    added directly at the tap (the head is untouched when only grad_feature
    is given). Returns the gradient with respect to the network input.
    """
    if net._masks is None:
        raise StateError("mlp_backward called before forward_with_feature_tap")
    if grad_logits is None and grad_feature is None:
        raise ValidationError("mlp_backward needs grad_logits and/or grad_feature")
    g = None
    if grad_logits is not None:
        g = affine_backward(as_tensor(grad_logits), net.head)
    if grad_feature is not None:
        gf = as_tensor(grad_feature)
        g = gf if g is None else g + gf
    for layer, mask in zip(reversed(net.path_layers), reversed(net._masks)):
        g = relu_backward(g, mask)
        g = affine_backward(g, layer)
    return g


def copy_classifier_head(src, dst):
    """Copy the head parameters of src into dst bitwise; idempotent."""
    if src.spec != dst.spec:
        raise ValidationError(
            f"cannot copy head across different specs: {src.spec} vs {dst.spec}"
        )
    np.copyto(dst.head.w, src.head.w)
    np.copyto(dst.head.b, src.head.b)


def hard_labels(logits, task_kind):
    """Hard labels from logits: argmax one-hot, or per-class threshold at 0.5.

    Multiclass ties break toward the lowest class index; the multilabel
    threshold sigma(z) >= 0.5 is z >= 0, boundary included.
    """
    logits = as_tensor(logits)
    if task_kind == "multiclass":
        labels = np.zeros_like(logits)
        labels[np.arange(logits.shape[0]), np.argmax(logits, axis=1)] = 1.0
        return labels
    if task_kind == "multilabel":
        return (logits >= 0.0).astype(np.float64)
    raise ValidationError(f"unknown task_kind {task_kind!r}")


def predict_pseudo_labels(net, x, task_kind=None):
    """Hard pseudo-labels for x from the network's (copied) head.

    The result is a plain label array: no gradient flows through it.
    """
    kind = task_kind if task_kind is not None else net.spec.task_kind
    _, logits = forward_with_feature_tap(net, x)
    return hard_labels(logits, kind)
