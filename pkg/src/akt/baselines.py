"""Comparison trainers: scratch, static pseudo-labels, and supervised toplines.

Scratch is literally the main loop with knowledge transfer disabled, so the
reduction identity holds bitwise. The static pseudo-label baseline labels the
source set once with a frozen classifier; the toplines consume the source's
diagnostic labels and exist only as upper-bound comparators.
"""

from dataclasses import replace

import numpy as np

from akt.data import BatchStream, LabeledDataset
from akt.errors import ValidationError
from akt.kernel import OptimizerState, affine_backward, affine_forward, sgd_step
from akt.metrics import dataset_pseudo_label_purity, diagnostic_onehot
from akt.networks import (
    MLPParams,
    forward_with_feature_tap,
    glorot_layer,
    hard_labels,
    init_mlp,
    mlp_backward,
)
from akt.trainer import (
    MetricsRecord,
    akt_train_step,
    classifier_joint_loss,
    decay_epoch,
    evaluate_model,
    init_train_state,
    run_training,
    scratch_config,
)

BASELINE_KINDS = ("scratch", "static_pseudo_labels", "finetune", "joint")


def train_scratch(target_train, target_test, spec, cfg, **kwargs):
    """Supervised training on target data only.

    Shares the main loop: identical to run_training with alignment disabled
    and a zero source weight, with no source dataset.
    """
    return run_training(target_train, target_test, None, spec, scratch_config(cfg), **kwargs)


def train_static_pseudo_labels(
    target_train, target_test, source, spec, cfg, phase1_epochs=None, epoch_callback=None
):
    """Three-phase pseudo-label baseline.

    Phase 1 trains the classifier on target data only (the scratch path);
    phase 2 labels the source set once with the frozen classifier; phase 3
    trains on the union with those fixed labels. phase1_epochs defaults to
    half the budget; the lr decay follows the global epoch count.
    """
    if phase1_epochs is None:
        phase1_epochs = cfg.epochs // 2
    if not 0 <= phase1_epochs <= cfg.epochs:
        raise ValidationError(
            f"phase1_epochs must lie in [0, {cfg.epochs}], got {phase1_epochs}"
        )
    base = scratch_config(cfg)
    state = init_train_state(target_train, None, spec, base)
    align_cfg = base.alignment_config()
    task_kind = spec.task_kind
    iters_per_epoch = len(target_train) // cfg.batch_size
    decay_at = decay_epoch(cfg)
    history = []
    source_stream = None
    agreement = None
    for epoch in range(1, cfg.epochs + 1):
        if epoch == phase1_epochs + 1:
            _, logits = forward_with_feature_tap(state.m, source.x)
            pseudo_y = hard_labels(logits, task_kind)
            agreement = dataset_pseudo_label_purity(pseudo_y, source)
            labeled_source = LabeledDataset(
                source.x, pseudo_y, pseudo_y.shape[1], name="static-pseudo-source"
            )
            children = np.random.SeedSequence(cfg.seed).spawn(6)
            source_stream = BatchStream(
                labeled_source, cfg.batch_size, np.random.default_rng(children[5])
            )
        loss_t_values, loss_s_values = [], []
        lr_in_effect = state.opt_m.lr
        for _ in range(iters_per_epoch):
            if source_stream is None:
                losses = akt_train_step(state, base, align_cfg, task_kind, 0.0)
                loss_t_values.append(losses.loss_m_target)
            else:
                x_t, y_t = state.target_stream.next_batch()
                x_s, y_s = source_stream.next_batch()
                state.m.zero_grad()
                _, loss_t, loss_s = classifier_joint_loss(
                    state.m, x_t, y_t, x_s, y_s, cfg.lambda_s, task_kind
                )
                _, params, grads = state.m.param_lists()
                sgd_step(params, grads, state.opt_m)
                state.iteration += 1
                loss_t_values.append(loss_t)
                if loss_s is not None:
                    loss_s_values.append(loss_s)
        state.epoch = epoch
        record = MetricsRecord(
            epoch=epoch,
            loss_d=None,
            loss_g=None,
            loss_m_target=float(np.mean(loss_t_values)),
            loss_m_source=float(np.mean(loss_s_values)) if loss_s_values else None,
            lr_m=lr_in_effect,
            target_test_score=evaluate_model(state.m, target_test, task_kind),
            pseudo_label_agreement=agreement if source_stream is not None else None,
        )
        history.append(record)
        if epoch_callback is not None:
            epoch_callback(record)
        if not state.lr_decay_applied and epoch == decay_at:
            state.opt_m.lr *= cfg.lr_decay_factor
            state.opt_g.lr *= cfg.lr_decay_factor
            state.lr_decay_applied = True
    return state.m, history


def _source_as_labeled(source):
    y_src = diagnostic_onehot(source)
    if y_src is None:
        raise ValidationError("supervised toplines require source diagnostic labels")
    return LabeledDataset(source.x, y_src, y_src.shape[1], name="source-labeled")


def train_supervised_topline(
    kind, target_train, target_test, source, spec, cfg, source_epochs=None, epoch_callback=None
):
    """Upper-bound comparators that are allowed to read source labels.

    joint: one trunk with separate target and source heads trained together
    (the source term weighted by lambda_s). finetune: pretrain on labeled
    source, then retrain end-to-end on target with a fresh target head.
    """
    if kind == "joint":
        return _train_joint(target_train, target_test, source, spec, cfg, epoch_callback)
    if kind == "finetune":
        return _train_finetune(
            target_train, target_test, source, spec, cfg, source_epochs, epoch_callback
        )
    raise ValidationError(f"unknown topline kind {kind!r}; expected 'finetune' or 'joint'")


def _train_joint(target_train, target_test, source, spec, cfg, epoch_callback):
    labeled_source = _source_as_labeled(source)
    children = np.random.SeedSequence(cfg.seed).spawn(6)
    net = init_mlp(spec, np.random.default_rng(children[0]))
    head_s = glorot_layer(
        np.random.default_rng(children[1]), spec.feature_dim, labeled_source.class_count
    )
    names, params, grads = net.param_lists()
    names = names + ["source_head.w", "source_head.b"]
    params = params + [head_s.w, head_s.b]
    grads = grads + [head_s.grad_w, head_s.grad_b]
    opt = OptimizerState(params, cfg.lr_m, cfg.momentum, cfg.weight_decay, names=names)
    target_stream = BatchStream(target_train, cfg.batch_size, np.random.default_rng(children[4]))
    source_stream = BatchStream(labeled_source, cfg.batch_size, np.random.default_rng(children[5]))
    task_kind = spec.task_kind
    iters_per_epoch = len(target_train) // cfg.batch_size
    decay_at = decay_epoch(cfg)
    history = []
    decayed = False
    for epoch in range(1, cfg.epochs + 1):
        loss_t_values, loss_s_values = [], []
        lr_in_effect = opt.lr
        for _ in range(iters_per_epoch):
            x_t, y_t = target_stream.next_batch()
            x_s, y_s = source_stream.next_batch()
            net.zero_grad()
            head_s.zero_grad()
            _, loss_t, _ = classifier_joint_loss(net, x_t, y_t, None, None, 0.0, task_kind)
            loss_t_values.append(loss_t)
            if cfg.lambda_s != 0.0:
                feature_s, _ = forward_with_feature_tap(net, x_s)
                logits_s = affine_forward(feature_s, head_s)
                from akt.trainer import _loss_for_kind

                loss_s, grad_s = _loss_for_kind(logits_s, y_s, task_kind)
                grad_f = affine_backward(grad_s * cfg.lambda_s, head_s)
                mlp_backward(net, grad_feature=grad_f)
                loss_s_values.append(loss_s)
            sgd_step(params, grads, opt)
        record = MetricsRecord(
            epoch=epoch,
            loss_d=None,
            loss_g=None,
            loss_m_target=float(np.mean(loss_t_values)),
            loss_m_source=float(np.mean(loss_s_values)) if loss_s_values else None,
            lr_m=lr_in_effect,
            target_test_score=evaluate_model(net, target_test, task_kind),
            pseudo_label_agreement=None,
        )
        history.append(record)
        if epoch_callback is not None:
            epoch_callback(record)
        if not decayed and epoch == decay_at:
            opt.lr *= cfg.lr_decay_factor
            decayed = True
    return net, history


def _train_finetune(target_train, target_test, source, spec, cfg, source_epochs, epoch_callback):
    labeled_source = _source_as_labeled(source)
    if source_epochs is None or source_epochs < 0:
        source_epochs = cfg.epochs
    children = np.random.SeedSequence(cfg.seed).spawn(6)
    spec_src = replace(spec, num_classes=labeled_source.class_count)
    net = init_mlp(spec_src, np.random.default_rng(children[0]))
    task_kind = spec.task_kind
    history = []

    # Phase 1: supervised pretraining on the labeled source set.
    names, params, grads = net.param_lists()
    opt = OptimizerState(params, cfg.lr_m, cfg.momentum, cfg.weight_decay, names=names)
    source_stream = BatchStream(labeled_source, cfg.batch_size, np.random.default_rng(children[5]))
    iters_src = len(labeled_source) // cfg.batch_size
    decay_at = decay_epoch(cfg, source_epochs)
    decayed = False
    for epoch in range(1, source_epochs + 1):
        loss_values = []
        lr_in_effect = opt.lr
        for _ in range(iters_src):
            x_s, y_s = source_stream.next_batch()
            net.zero_grad()
            _, loss_s, _ = classifier_joint_loss(net, x_s, y_s, None, None, 0.0, task_kind)
            sgd_step(params, grads, opt)
            loss_values.append(loss_s)
        record = MetricsRecord(
            epoch=epoch,
            loss_d=None,
            loss_g=None,
            loss_m_target=None,
            loss_m_source=float(np.mean(loss_values)),
            lr_m=lr_in_effect,
            target_test_score=None,
            pseudo_label_agreement=None,
        )
        history.append(record)
        if epoch_callback is not None:
            epoch_callback(record)
        if not decayed and epoch == decay_at:
            opt.lr *= cfg.lr_decay_factor
            decayed = True

    # Phase 2: fresh target head, end-to-end training on the target set.
    head_t = glorot_layer(np.random.default_rng(children[1]), spec.feature_dim, spec.num_classes)
    net_t = MLPParams(spec, net.hidden, head_t)
    names, params, grads = net_t.param_lists()
    opt = OptimizerState(params, cfg.lr_m, cfg.momentum, cfg.weight_decay, names=names)
    target_stream = BatchStream(target_train, cfg.batch_size, np.random.default_rng(children[4]))
    iters_per_epoch = len(target_train) // cfg.batch_size
    decay_at = decay_epoch(cfg)
    decayed = False
    for epoch in range(1, cfg.epochs + 1):
        loss_values = []
        lr_in_effect = opt.lr
        for _ in range(iters_per_epoch):
            x_t, y_t = target_stream.next_batch()
            net_t.zero_grad()
            _, loss_t, _ = classifier_joint_loss(net_t, x_t, y_t, None, None, 0.0, task_kind)
            sgd_step(params, grads, opt)
            loss_values.append(loss_t)
        record = MetricsRecord(
            epoch=source_epochs + epoch,
            loss_d=None,
            loss_g=None,
            loss_m_target=float(np.mean(loss_values)),
            loss_m_source=None,
            lr_m=lr_in_effect,
            target_test_score=evaluate_model(net_t, target_test, task_kind),
            pseudo_label_agreement=None,
        )
        history.append(record)
        if epoch_callback is not None:
            epoch_callback(record)
        if not decayed and epoch == decay_at:
            opt.lr *= cfg.lr_decay_factor
            decayed = True
    return net_t, history
