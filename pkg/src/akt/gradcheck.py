"""Finite-difference verification of every hand-written backward pass.

Each registered check builds a tiny seeded fixture, computes analytic
gradients through the real code paths, and compares them against central
differences via kernel.grad_check. Losses with stop-gradient semantics
(frozen features, frozen discriminators, constant pseudo-labels) are checked
per optimized parameter family so the comparison matches what training
actually descends.
"""

from dataclasses import dataclass

import numpy as np

from akt.alignment import (
    AlignmentConfig,
    disc_backward,
    disc_forward,
    generator_alignment_loss,
    group_disc_loss,
    init_discriminator,
    instance_disc_loss,
    mse_alignment_loss,
    total_disc_loss,
)
from akt.kernel import (
    AffineLayer,
    affine_backward,
    affine_forward,
    grad_check,
    relu,
    relu_backward,
    sigmoid_bce,
    softmax_cross_entropy,
)
from akt.networks import (
    MLPSpec,
    forward_with_feature_tap,
    hard_labels,
    init_mlp,
    mlp_backward,
)
from akt.trainer import classifier_joint_loss

TOLERANCE = 1e-6


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    passed: bool


def _maybe_corrupt(grads, corrupt):
    if corrupt:
        grads[0] = grads[0].copy()
        grads[0].reshape(-1)[0] += 1e-3
    return grads


def _onehot(rng, rows, cols):
    y = np.zeros((rows, cols))
    y[np.arange(rows), rng.integers(0, cols, size=rows)] = 1.0
    return y


def _check_affine_backward(corrupt=False):
    rng = np.random.default_rng(101)
    x = np.ascontiguousarray(rng.normal(size=(3, 4)))
    layer = AffineLayer(0.5 * rng.normal(size=(5, 4)), 0.1 * rng.normal(size=5))
    r = rng.normal(size=(3, 5))

    def loss_fn():
        layer.zero_grad()
        y = affine_forward(x, layer)
        grad_x = affine_backward(r, layer)
        grads = _maybe_corrupt([layer.grad_w.copy(), layer.grad_b.copy(), grad_x], corrupt)
        return float((y * r).sum()), grads

    return grad_check(loss_fn, [layer.w, layer.b, x], h=1e-6)


def _check_relu_backward(corrupt=False):
    rng = np.random.default_rng(102)
    # Keep inputs away from the kink at zero.
    x = np.ascontiguousarray(rng.uniform(0.2, 1.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4)))
    r = rng.normal(size=(3, 4))

    def loss_fn():
        y, mask = relu(x)
        grads = _maybe_corrupt([relu_backward(r, mask)], corrupt)
        return float((y * r).sum()), grads

    return grad_check(loss_fn, [x], h=1e-6)


def _check_softmax_cross_entropy(corrupt=False):
    rng = np.random.default_rng(103)
    logits = np.ascontiguousarray(rng.normal(size=(4, 5)))
    y = _onehot(rng, 4, 5)

    def loss_fn():
        loss, grad = softmax_cross_entropy(logits, y)
        return loss, _maybe_corrupt([grad], corrupt)

    return grad_check(loss_fn, [logits], h=1e-6)


def _check_sigmoid_bce(corrupt=False):
    rng = np.random.default_rng(104)
    logits = np.ascontiguousarray(rng.normal(size=(3, 4)))
    targets = rng.uniform(0.0, 1.0, size=(3, 4))

    def loss_fn():
        loss, grad = sigmoid_bce(logits, targets)
        return loss, _maybe_corrupt([grad], corrupt)

    return grad_check(loss_fn, [logits], h=1e-6)


def _tiny_mlp(seed, input_dim=6, hidden=(5, 4), classes=3, task_kind="multiclass"):
    spec = MLPSpec(input_dim=input_dim, num_classes=classes, hidden_dims=hidden, task_kind=task_kind)
    return init_mlp(spec, np.random.default_rng(seed))


def _check_mlp_feature_and_logits(corrupt=False):
    rng = np.random.default_rng(105)
    net = _tiny_mlp(1105)
    x = rng.uniform(0.05, 0.95, size=(2, 6))
    r_feature = rng.normal(size=(2, net.spec.feature_dim))
    r_logits = rng.normal(size=(2, net.spec.num_classes))
    _, params, grads = net.param_lists()

    def loss_fn():
        net.zero_grad()
        feature, logits = forward_with_feature_tap(net, x)
        mlp_backward(net, grad_logits=r_logits, grad_feature=r_feature)
        loss = float((feature * r_feature).sum() + (logits * r_logits).sum())
        return loss, _maybe_corrupt([g.copy() for g in grads], corrupt)

    return grad_check(loss_fn, params, h=1e-6)


def _tiny_disc(seed, input_dim=4, hidden=(4, 3)):
    return init_discriminator(input_dim, hidden, np.random.default_rng(seed))


def _check_discriminator_backward(corrupt=False):
    rng = np.random.default_rng(106)
    disc = _tiny_disc(1106)
    f = rng.normal(size=(3, 4))
    r = rng.normal(size=(3, 1))
    _, params, grads = disc.param_lists()

    def loss_fn():
        disc.zero_grad()
        z = disc_forward(disc, f)
        disc_backward(disc, r)
        loss = float((z * r).sum())
        return loss, _maybe_corrupt([g.copy() for g in grads], corrupt)

    return grad_check(loss_fn, params, h=1e-6)


def _check_instance_disc_loss(corrupt=False):
    rng = np.random.default_rng(107)
    disc = _tiny_disc(1107)
    f_t = rng.normal(size=(3, 4))
    f_s = rng.normal(size=(3, 4))
    _, params, grads = disc.param_lists()

    def loss_fn():
        disc.zero_grad()
        loss = instance_disc_loss(disc, f_t, f_s)
        return loss, _maybe_corrupt([g.copy() for g in grads], corrupt)

    return grad_check(loss_fn, params, h=1e-6)


def _check_group_disc_loss(corrupt=False):
    rng = np.random.default_rng(108)
    disc = _tiny_disc(1108)
    f_t = rng.normal(size=(3, 4))
    f_s = rng.normal(size=(3, 4))
    _, params, grads = disc.param_lists()

    def loss_fn():
        disc.zero_grad()
        loss = group_disc_loss(disc, f_t, f_s)
        return loss, _maybe_corrupt([g.copy() for g in grads], corrupt)

    return grad_check(loss_fn, params, h=1e-6)


def _check_total_disc_loss(corrupt=False):
    rng = np.random.default_rng(109)
    cfg = AlignmentConfig(lambda_di=2.0, lambda_dg=3.0)
    d_i = _tiny_disc(1109)
    d_g = _tiny_disc(2109)
    f_t = rng.normal(size=(3, 4))
    f_s = rng.normal(size=(3, 4))
    _, params_i, grads_i = d_i.param_lists()
    _, params_g, grads_g = d_g.param_lists()

    def loss_fn():
        loss = total_disc_loss(cfg, d_i, d_g, f_t, f_s)
        return loss, _maybe_corrupt([g.copy() for g in grads_i + grads_g], corrupt)

    return grad_check(loss_fn, params_i + params_g, h=1e-6)


def _check_generator_alignment_loss(corrupt=False):
    rng = np.random.default_rng(110)
    cfg = AlignmentConfig()
    gen = _tiny_mlp(1110)
    d_i = _tiny_disc(2110)
    d_g = _tiny_disc(3110)
    x_s = rng.uniform(0.05, 0.95, size=(2, 6))
    _, params, grads = gen.param_lists(include_head=False)

    def loss_fn():
        gen.zero_grad()
        loss = generator_alignment_loss(cfg, d_i, d_g, gen, x_s)
        return loss, _maybe_corrupt([g.copy() for g in grads], corrupt)

    return grad_check(loss_fn, params, h=1e-6)


def _check_mse_alignment_loss(corrupt=False):
    rng = np.random.default_rng(111)
    gen = _tiny_mlp(1111)
    x_s = rng.uniform(0.05, 0.95, size=(3, 6))
    f_t = rng.normal(size=(3, gen.spec.feature_dim))
    _, params, grads = gen.param_lists(include_head=False)

    def loss_fn():
        gen.zero_grad()
        loss = mse_alignment_loss(gen, x_s, f_t)
        return loss, _maybe_corrupt([g.copy() for g in grads], corrupt)

    return grad_check(loss_fn, params, h=1e-6)


def _joint_loss_check(task_kind, seed, corrupt):
    rng = np.random.default_rng(seed)
    net = _tiny_mlp(seed + 1000, task_kind=task_kind)
    x_t = rng.uniform(0.05, 0.95, size=(2, 6))
    x_s = rng.uniform(0.05, 0.95, size=(3, 6))
    if task_kind == "multiclass":
        y_t = _onehot(rng, 2, 3)
        pseudo = _onehot(rng, 3, 3)
    else:
        y_t = (rng.random((2, 3)) < 0.5).astype(np.float64)
        pseudo = (rng.random((3, 3)) < 0.5).astype(np.float64)
    _, params, grads = net.param_lists()

    def loss_fn():
        net.zero_grad()
        loss, _, _ = classifier_joint_loss(net, x_t, y_t, x_s, pseudo, 0.7, task_kind)
        return loss, _maybe_corrupt([g.copy() for g in grads], corrupt)

    return grad_check(loss_fn, params, h=1e-6)


def _check_joint_loss_multiclass(corrupt=False):
    return _joint_loss_check("multiclass", 112, corrupt)


def _check_joint_loss_multilabel(corrupt=False):
    return _joint_loss_check("multilabel", 113, corrupt)


def _check_akt_composite(corrupt=False):
    """All three training losses on one shared 2-sample fixture.

    Each loss is checked against the parameter family it actually optimizes,
    matching the stop-gradient semantics of the training step.
    """
    rng = np.random.default_rng(114)
    spec = MLPSpec(input_dim=5, num_classes=3, hidden_dims=(4, 4))
    m = init_mlp(spec, np.random.default_rng(1114))
    g = init_mlp(spec, np.random.default_rng(2114))
    d_i = init_discriminator(spec.feature_dim, (4, 3), np.random.default_rng(3114))
    d_g = init_discriminator(spec.feature_dim, (4, 3), np.random.default_rng(4114))
    cfg = AlignmentConfig()
    x_t = rng.uniform(0.05, 0.95, size=(2, 5))
    x_s = rng.uniform(0.05, 0.95, size=(2, 5))
    y_t = _onehot(rng, 2, 3)
    f_t, _ = forward_with_feature_tap(m, x_t)
    f_s, _ = forward_with_feature_tap(g, x_s)
    _, logits_s = forward_with_feature_tap(g, x_s)
    pseudo = hard_labels(logits_s, "multiclass")
    _, params_di, grads_di = d_i.param_lists()
    _, params_dg, grads_dg = d_g.param_lists()
    _, params_g, grads_g = g.param_lists(include_head=False)
    _, params_m, grads_m = m.param_lists()

    def disc_loss_fn():
        loss = total_disc_loss(cfg, d_i, d_g, f_t, f_s)
        return loss, _maybe_corrupt([x.copy() for x in grads_di + grads_dg], corrupt)

    def gen_loss_fn():
        g.zero_grad()
        loss = generator_alignment_loss(cfg, d_i, d_g, g, x_s)
        return loss, [x.copy() for x in grads_g]

    def m_loss_fn():
        m.zero_grad()
        loss, _, _ = classifier_joint_loss(m, x_t, y_t, x_s, pseudo, 1.0, "multiclass")
        return loss, [x.copy() for x in grads_m]

    return max(
        grad_check(disc_loss_fn, params_di + params_dg, h=1e-6),
        grad_check(gen_loss_fn, params_g, h=1e-6),
        grad_check(m_loss_fn, params_m, h=1e-6),
    )


CHECKS = [
    ("affine_backward", _check_affine_backward),
    ("relu_backward", _check_relu_backward),
    ("softmax_cross_entropy", _check_softmax_cross_entropy),
    ("sigmoid_bce", _check_sigmoid_bce),
    ("mlp_feature_and_logits", _check_mlp_feature_and_logits),
    ("discriminator_backward", _check_discriminator_backward),
    ("instance_disc_loss", _check_instance_disc_loss),
    ("group_disc_loss", _check_group_disc_loss),
    ("total_disc_loss", _check_total_disc_loss),
    ("generator_alignment_loss", _check_generator_alignment_loss),
    ("mse_alignment_loss", _check_mse_alignment_loss),
    ("classifier_joint_loss_multiclass", _check_joint_loss_multiclass),
    ("classifier_joint_loss_multilabel", _check_joint_loss_multilabel),
    ("akt_composite_two_sample", _check_akt_composite),
]


def run_all(tolerance=TOLERANCE, corrupt_check=None):
    """Run every registered check; corrupt_check injects a fault by name."""
    results = []
    for name, fn in CHECKS:
        error = fn(corrupt=(name == corrupt_check))
        results.append(CheckResult(name=name, max_rel_error=error, passed=error <= tolerance))
    return results


def format_report(results):
    lines = []
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        lines.append(f"{status}  {result.name:36s} max_rel_error={result.max_rel_error:.3e}")
    failed = sum(1 for r in results if not r.passed)
    lines.append(f"{len(results) - failed}/{len(results)} gradient checks passed")
    return "\n".join(lines)
