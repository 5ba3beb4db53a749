"""The adversarial knowledge transfer training loop.

Per iteration: (a) the discriminators take d_updates_per_iter steps, each on
a freshly drawn (target, source) batch pair; (b) the generator trunk takes
g_updates_per_iter fooling steps on one more freshly drawn pair; (c) the
classifier head is copied into the generator, pseudo-labels are predicted for
that pair's source batch, and the classifier steps on the joint loss. The
head copy is repeated after the classifier step so the generator's head stays
in lockstep with the classifier between iterations.

In mode "mse" step (a) is skipped and (b) minimizes the batch-mean L2 gap; in
mode "none" both (a) and (b) are skipped. A lambda_s of zero disables step
(c)'s source term entirely, which reduces the loop to scratch training.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from akt.alignment import (
    AlignmentConfig,
    generator_alignment_loss,
    init_discriminator,
    mse_alignment_loss,
    total_disc_loss,
)
from akt.data import BatchStream
from akt.errors import NumericError, ValidationError
from akt.kernel import OptimizerState, sgd_step, sigmoid_bce, softmax_cross_entropy
from akt.metrics import dataset_pseudo_label_purity, mean_average_precision
from akt.networks import (
    copy_classifier_head,
    forward_with_feature_tap,
    init_mlp,
    mlp_backward,
    predict_pseudo_labels,
)

DEFAULT_DISC_HIDDEN = (64, 32)


@dataclass(frozen=True)
class TrainerConfig:
    """All training hyperparameters; the defaults follow the reference recipe
    (lr 0.01/0.01/0.001 for classifier/generator/discriminator, momentum 0.9
    and weight decay 5e-4 on the classifier only, batch 96, loss weights 1,
    two discriminator updates per iteration, lr x0.1 after 3/4 of training).
    """

    epochs: int
    batch_size: int = 96
    lr_m: float = 0.01
    lr_g: float = 0.01
    lr_d: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lambda_s: float = 1.0
    lambda_di: float = 1.0
    lambda_dg: float = 1.0
    d_updates_per_iter: int = 2
    g_updates_per_iter: int = 1
    lr_decay_factor: float = 0.1
    lr_decay_fraction: float = 0.75
    alignment_mode: str = "adversarial"
    warmup_epochs: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("lr_m", "lr_g", "lr_d", "lr_decay_factor"):
            if not getattr(self, name) > 0.0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 < self.lr_decay_fraction <= 1.0:
            raise ValidationError(
                f"lr_decay_fraction must lie in (0, 1], got {self.lr_decay_fraction}"
            )
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ValidationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        for name in ("lambda_s", "lambda_di", "lambda_dg"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
        if self.d_updates_per_iter < 0 or self.g_updates_per_iter < 0:
            raise ValidationError("update counts must be >= 0")
        if self.warmup_epochs < 0:
            raise ValidationError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.alignment_mode not in ("adversarial", "mse", "none"):
            raise ValidationError(f"unknown alignment_mode {self.alignment_mode!r}")

    def alignment_config(self):
        return AlignmentConfig(self.lambda_di, self.lambda_dg, self.alignment_mode)


@dataclass
class TrainState:
    """Everything the loop mutates: networks, optimizers, streams, counters."""

    m: object
    g: object
    d_i: object
    d_g: object
    opt_m: OptimizerState
    opt_g: OptimizerState
    opt_di: OptimizerState
    opt_dg: OptimizerState
    target_stream: BatchStream
    source_stream: BatchStream
    epoch: int = 0
    iteration: int = 0
    lr_decay_applied: bool = False


@dataclass
class StepLosses:
    loss_d: float = None
    loss_g: float = None
    loss_m_target: float = None
    loss_m_source: float = None


@dataclass
class MetricsRecord:
    """One CSV row: mean step losses, the classifier lr in effect, the
    held-out target score, and the pseudo-label agreement diagnostic."""

    epoch: int
    loss_d: float
    loss_g: float
    loss_m_target: float
    loss_m_source: float
    lr_m: float
    target_test_score: float
    pseudo_label_agreement: float


def init_train_state(target_train, source, spec, cfg, disc_hidden_dims=DEFAULT_DISC_HIDDEN):
    """Build networks, optimizers and batch streams from independent seed
    streams spawned off cfg.seed (order: M, G, D_I, D_G, target, source)."""
    children = np.random.SeedSequence(cfg.seed).spawn(6)
    m = init_mlp(spec, np.random.default_rng(children[0]))
    g = init_mlp(spec, np.random.default_rng(children[1]))
    d_i = init_discriminator(spec.feature_dim, disc_hidden_dims, np.random.default_rng(children[2]))
    d_g = init_discriminator(spec.feature_dim, disc_hidden_dims, np.random.default_rng(children[3]))
    names_m, params_m, _ = m.param_lists()
    names_g, params_g, _ = g.param_lists(include_head=False)
    names_di, params_di, _ = d_i.param_lists()
    names_dg, params_dg, _ = d_g.param_lists()
    state = TrainState(
        m=m,
        g=g,
        d_i=d_i,
        d_g=d_g,
        opt_m=OptimizerState(params_m, cfg.lr_m, cfg.momentum, cfg.weight_decay, names=names_m),
        opt_g=OptimizerState(params_g, cfg.lr_g, names=names_g),
        opt_di=OptimizerState(params_di, cfg.lr_d, names=names_di),
        opt_dg=OptimizerState(params_dg, cfg.lr_d, names=names_dg),
        target_stream=BatchStream(target_train, cfg.batch_size, np.random.default_rng(children[4])),
        source_stream=(
            BatchStream(source, cfg.batch_size, np.random.default_rng(children[5]))
            if source is not None
            else None
        ),
    )
    return state


def _loss_for_kind(logits, labels, task_kind):
    if task_kind == "multiclass":
        return softmax_cross_entropy(logits, labels)
    return sigmoid_bce(logits, labels)


def classifier_joint_loss(m, x_t, y_t, x_s, pseudo_y, lambda_s, task_kind):
    """Accumulate the joint classification gradient into m.

    loss = CE(M(x_t), y_t) + lambda_s * CE(M(x_s), pseudo_y), each term
    batch-averaged; the pseudo-labels are constants. Returns (total loss,
    target term, unweighted source term or None). A lambda_s of zero skips
    the source pass entirely.
    """
    feature_t, logits_t = forward_with_feature_tap(m, x_t)
    loss_t, grad_t = _loss_for_kind(logits_t, y_t, task_kind)
    mlp_backward(m, grad_logits=grad_t)
    if x_s is None or lambda_s == 0.0:
        return loss_t, loss_t, None
    _, logits_s = forward_with_feature_tap(m, x_s)
    loss_s, grad_s = _loss_for_kind(logits_s, pseudo_y, task_kind)
    mlp_backward(m, grad_logits=grad_s * lambda_s)
    return loss_t + lambda_s * loss_s, loss_t, loss_s


def _check_finite(value, step_name):
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss in {step_name} step: {value}")


def akt_train_step(state, cfg, align_cfg, task_kind, lambda_s):
    """One Algorithm-1 iteration; returns the per-step losses."""
    mode = align_cfg.mode
    have_source = state.source_stream is not None
    loss_d_values = []
    loss_g_values = []

    if mode == "adversarial" and have_source:
        for _ in range(cfg.d_updates_per_iter):
            x_t, _ = state.target_stream.next_batch()
            x_s, _ = state.source_stream.next_batch()
            f_t, _ = forward_with_feature_tap(state.m, x_t)
            f_s, _ = forward_with_feature_tap(state.g, x_s)
            loss_d = total_disc_loss(align_cfg, state.d_i, state.d_g, f_t, f_s)
            _check_finite(loss_d, "discriminator")
            _, params, grads = state.d_i.param_lists()
            sgd_step(params, grads, state.opt_di)
            _, params, grads = state.d_g.param_lists()
            sgd_step(params, grads, state.opt_dg)
            loss_d_values.append(loss_d)

    x_t, y_t = state.target_stream.next_batch()
    x_s = state.source_stream.next_batch()[0] if have_source else None

    if mode in ("adversarial", "mse") and have_source:
        for _ in range(cfg.g_updates_per_iter):
            state.g.zero_grad()
            if mode == "adversarial":
                loss_g = generator_alignment_loss(align_cfg, state.d_i, state.d_g, state.g, x_s)
            else:
                f_t, _ = forward_with_feature_tap(state.m, x_t)
                loss_g = mse_alignment_loss(state.g, x_s, f_t)
            _check_finite(loss_g, "generator")
            _, params, grads = state.g.param_lists(include_head=False)
            sgd_step(params, grads, state.opt_g)
            loss_g_values.append(loss_g)

    use_source_term = have_source and lambda_s != 0.0
    pseudo_y = None
    if use_source_term:
        copy_classifier_head(state.m, state.g)
        pseudo_y = predict_pseudo_labels(state.g, x_s, task_kind)
    state.m.zero_grad()
    _, loss_t, loss_s = classifier_joint_loss(
        state.m, x_t, y_t, x_s if use_source_term else None, pseudo_y, lambda_s, task_kind
    )
    _check_finite(loss_t if loss_s is None else loss_t + loss_s, "classifier")
    _, params, grads = state.m.param_lists()
    sgd_step(params, grads, state.opt_m)
    if use_source_term:
        copy_classifier_head(state.m, state.g)

    state.iteration += 1
    return StepLosses(
        loss_d=float(np.mean(loss_d_values)) if loss_d_values else None,
        loss_g=float(np.mean(loss_g_values)) if loss_g_values else None,
        loss_m_target=loss_t,
        loss_m_source=loss_s,
    )


def evaluate_model(m, dataset, task_kind, chunk=4096):
    """Top-1 accuracy (multiclass) or mAP (multilabel), both in [0, 100]."""
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    logits = np.vstack(
        [
            forward_with_feature_tap(m, dataset.x[i : i + chunk])[1]
            for i in range(0, len(dataset), chunk)
        ]
    )
    if task_kind == "multiclass":
        predicted = np.argmax(logits, axis=1)
        actual = np.argmax(dataset.y, axis=1)
        return 100.0 * float((predicted == actual).mean())
    return mean_average_precision(logits, dataset.y)


def _mean_or_none(values):
    return float(np.mean(values)) if values else None


def decay_epoch(cfg, total_epochs=None):
    """The epoch after which lr_m and lr_g are scaled by lr_decay_factor."""
    total = cfg.epochs if total_epochs is None else total_epochs
    return math.ceil(cfg.lr_decay_fraction * total)


def run_training(
    target_train,
    target_test,
    source,
    spec,
    cfg,
    disc_hidden_dims=DEFAULT_DISC_HIDDEN,
    epoch_callback=None,
    iteration_callback=None,
):
    """Train the classifier for cfg.epochs and return (M, history).

    One epoch is one pass over the target set (len // batch_size iterations;
    the streams cycle internally as steps draw extra batches). The lr decay
    hits lr_m and lr_g exactly once, after epoch ceil(fraction * epochs).
    Fully deterministic given cfg.seed.
    """
    state = init_train_state(target_train, source, spec, cfg, disc_hidden_dims)
    align_cfg = cfg.alignment_config()
    task_kind = spec.task_kind
    iters_per_epoch = len(target_train) // cfg.batch_size
    decay_at = decay_epoch(cfg)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        lambda_s = 0.0 if epoch <= cfg.warmup_epochs else cfg.lambda_s
        lr_in_effect = state.opt_m.lr
        sums = {"loss_d": [], "loss_g": [], "loss_m_target": [], "loss_m_source": []}
        for it in range(iters_per_epoch):
            losses = akt_train_step(state, cfg, align_cfg, task_kind, lambda_s)
            for key, bucket in sums.items():
                value = getattr(losses, key)
                if value is not None:
                    bucket.append(value)
            if iteration_callback is not None:
                iteration_callback(state, epoch, it)
        state.epoch = epoch
        score = evaluate_model(state.m, target_test, task_kind)
        agreement = None
        if source is not None and lambda_s != 0.0:
            pseudo_full = predict_pseudo_labels(state.g, source.x, task_kind)
            agreement = dataset_pseudo_label_purity(pseudo_full, source)
        record = MetricsRecord(
            epoch=epoch,
            loss_d=_mean_or_none(sums["loss_d"]),
            loss_g=_mean_or_none(sums["loss_g"]),
            loss_m_target=_mean_or_none(sums["loss_m_target"]),
            loss_m_source=_mean_or_none(sums["loss_m_source"]),
            lr_m=lr_in_effect,
            target_test_score=score,
            pseudo_label_agreement=agreement,
        )
        history.append(record)
        if epoch_callback is not None:
            epoch_callback(record)
        if not state.lr_decay_applied and epoch == decay_at:
            state.opt_m.lr *= cfg.lr_decay_factor
            state.opt_g.lr *= cfg.lr_decay_factor
            state.lr_decay_applied = True
    return state.m, history


def scratch_config(cfg):
    """The same hyperparameters with knowledge transfer disabled."""
    return replace(cfg, alignment_mode="none", lambda_s=0.0)
