"""Command-line entry point.

Subcommands:
    run <config-path>                      train per config, write artifacts
    eval <checkpoint> <idx-images> <idx-labels>   score a saved classifier
    gradcheck                              finite-difference suite
    synth-gen <config-path> <out-dir>      write a synthetic task as IDX files

`run` writes metrics.csv (appended and flushed per epoch), summary.txt and
model.ckpt into the config's output_dir. AKT_OUTPUT_ROOT, when set, anchors
relative output dirs.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from akt import _kernels
from akt.baselines import train_scratch, train_static_pseudo_labels, train_supervised_topline
from akt.checkpoint import load_checkpoint, model_arrays, restore_mlp, save_checkpoint
from akt.config import config_hash, parse_config, render_config
from akt.data import (
    as_unlabeled,
    load_idx,
    make_glyph_transfer_task,
    make_synthetic_transfer_task,
    write_idx_images,
    write_idx_labels,
)
from akt.errors import AktError, ConfigError
from akt.gradcheck import format_report, run_all
from akt.trainer import evaluate_model, run_training

CSV_COLUMNS = (
    "epoch",
    "loss_d",
    "loss_g",
    "loss_m_target",
    "loss_m_source",
    "lr_m",
    "target_test_score",
    "pseudo_label_agreement",
)


def _csv_cell(value):
    return "" if value is None else repr(value) if isinstance(value, float) else str(value)


def format_metrics_row(record):
    return ",".join(_csv_cell(getattr(record, column)) for column in CSV_COLUMNS)


def resolve_output_dir(cfg):
    out = Path(cfg.output_dir)
    root = os.environ.get("AKT_OUTPUT_ROOT", "")
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def build_task(cfg):
    """Materialize the datasets the config describes."""
    if cfg.task == "synth":
        if cfg.synth_family == "gaussian":
            return make_synthetic_transfer_task(
                seed=cfg.seed,
                dim=cfg.synth_dim,
                target_classes=cfg.synth_target_classes,
                source_classes=cfg.synth_source_classes,
                target_per_class=cfg.synth_target_per_class,
                test_per_class=cfg.synth_test_per_class,
                source_per_class=cfg.synth_source_per_class,
                separation=cfg.synth_separation,
                noise=cfg.synth_noise,
            )
        return make_glyph_transfer_task(
            seed=cfg.seed,
            target_classes=cfg.synth_target_classes,
            source_classes=cfg.synth_source_classes,
            target_per_class=cfg.synth_target_per_class,
            test_per_class=cfg.synth_test_per_class,
            source_per_class=cfg.synth_source_per_class,
            jitter=cfg.glyph_jitter,
            noise=cfg.glyph_noise,
            dropout=cfg.glyph_dropout,
        )
    if cfg.task == "idx_pair":
        for key in (
            "target_train_images",
            "target_train_labels",
            "target_test_images",
            "target_test_labels",
        ):
            if not Path(getattr(cfg, key)).exists():
                raise ConfigError(f"{key} path does not exist: {getattr(cfg, key)}")
        limit = cfg.target_limit if cfg.target_limit > 0 else None
        target_train = load_idx(cfg.target_train_images, cfg.target_train_labels, limit=limit)
        target_test = load_idx(cfg.target_test_images, cfg.target_test_labels)
        source = None
        if cfg.source_images:
            if not Path(cfg.source_images).exists():
                raise ConfigError(f"source_images path does not exist: {cfg.source_images}")
            source_limit = cfg.source_limit if cfg.source_limit > 0 else None
            if cfg.source_labels:
                labeled = load_idx(cfg.source_images, cfg.source_labels, limit=source_limit)
                source = as_unlabeled(labeled)
            else:
                source = load_idx(cfg.source_images, limit=source_limit)

        from akt.data import TransferTask

        return TransferTask(target_train=target_train, target_test=target_test, source=source)
    raise ConfigError(f"task={cfg.task} has no dataset builder; use the Python API")


def run_experiment(cfg):
    """Train per config; write metrics.csv, summary.txt and model.ckpt."""
    task = build_task(cfg)
    target_train, target_test, source = task.target_train, task.target_test, task.source
    spec = cfg.mlp_spec(target_train.x.shape[1], target_train.class_count)
    tcfg = cfg.trainer_config()
    out_dir = resolve_output_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"

    with open(metrics_path, "w", encoding="utf-8") as csv_file:
        csv_file.write(",".join(CSV_COLUMNS) + "\n")
        csv_file.flush()

        def on_epoch(record):
            csv_file.write(format_metrics_row(record) + "\n")
            csv_file.flush()

        if cfg.method == "akt":
            model, history = run_training(
                target_train,
                target_test,
                source,
                spec,
                tcfg,
                disc_hidden_dims=cfg.disc_hidden_dims,
                epoch_callback=on_epoch,
            )
        elif cfg.method == "scratch":
            model, history = train_scratch(
                target_train, target_test, spec, tcfg, epoch_callback=on_epoch
            )
        elif cfg.method == "static_pseudo":
            phase1 = cfg.phase1_epochs if cfg.phase1_epochs >= 0 else None
            model, history = train_static_pseudo_labels(
                target_train,
                target_test,
                source,
                spec,
                tcfg,
                phase1_epochs=phase1,
                epoch_callback=on_epoch,
            )
        elif cfg.method in ("finetune", "joint"):
            source_epochs = cfg.source_epochs if cfg.source_epochs >= 0 else None
            model, history = train_supervised_topline(
                cfg.method,
                target_train,
                target_test,
                source,
                spec,
                tcfg,
                source_epochs=source_epochs,
                epoch_callback=on_epoch,
            )
        else:
            raise ConfigError(f"unknown method {cfg.method!r}")

    final_score = (
        history[-1].target_test_score
        if history
        else evaluate_model(model, target_test, spec.task_kind)
    )
    config_text = render_config(cfg)
    save_checkpoint(out_dir / "model.ckpt", config_text, model_arrays("m", model))
    with open(out_dir / "summary.txt", "w", encoding="utf-8") as fh:
        fh.write(f"method = {cfg.method}\n")
        fh.write(f"final_target_test_score = {_csv_cell(final_score)}\n")
        fh.write(f"config_sha256 = {config_hash(cfg)}\n")
        fh.write(f"backend = {_kernels.BACKEND}\n")
    return 0


def _cmd_run(args):
    cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    status = run_experiment(cfg)
    out_dir = resolve_output_dir(cfg)
    print(f"wrote {out_dir / 'metrics.csv'}, {out_dir / 'summary.txt'}, {out_dir / 'model.ckpt'}")
    return status


def _cmd_eval(args):
    config_text, arrays = load_checkpoint(args.checkpoint)
    cfg = parse_config(config_text)
    model = restore_mlp(arrays, "m", cfg.task_kind)
    dataset = load_idx(args.images, args.labels)
    score = evaluate_model(model, dataset, cfg.task_kind)
    print(f"target_test_score = {score!r}")
    return 0


def _cmd_gradcheck(_args):
    results = run_all()
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 1


def _cmd_synth_gen(args):
    cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    if cfg.task != "synth":
        raise ConfigError(f"synth-gen requires task=synth, got task={cfg.task}")
    task = build_task(cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def to_u8_images(x):
        n, dim = x.shape
        if dim == 784:
            shape = (n, 28, 28)
        else:
            shape = (n, 1, dim)
        return np.clip(np.rint(x * 255.0), 0.0, 255.0).astype(np.uint8).reshape(shape)

    def label_ids(y):
        return np.argmax(y, axis=1).astype(np.uint8)

    from akt.metrics import diagnostic_class_ids

    files = {
        "target-train-images.idx3-ubyte": ("images", task.target_train.x),
        "target-train-labels.idx1-ubyte": ("labels", label_ids(task.target_train.y)),
        "target-test-images.idx3-ubyte": ("images", task.target_test.x),
        "target-test-labels.idx1-ubyte": ("labels", label_ids(task.target_test.y)),
        "source-images.idx3-ubyte": ("images", task.source.x),
        "source-labels.idx1-ubyte": ("labels", diagnostic_class_ids(task.source).astype(np.uint8)),
    }
    for name, (kind, payload) in files.items():
        path = out_dir / name
        if kind == "images":
            write_idx_images(path, to_u8_images(payload))
        else:
            write_idx_labels(path, payload)
        print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="akt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train per a key=value config file")
    p_run.add_argument("config")
    p_run.set_defaults(fn=_cmd_run)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on an IDX pair")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("images")
    p_eval.add_argument("labels")
    p_eval.set_defaults(fn=_cmd_eval)

    p_grad = sub.add_parser("gradcheck", help="run the finite-difference suite")
    p_grad.set_defaults(fn=_cmd_gradcheck)

    p_gen = sub.add_parser("synth-gen", help="write a synthetic task as IDX files")
    p_gen.add_argument("config")
    p_gen.add_argument("out_dir")
    p_gen.set_defaults(fn=_cmd_synth_gen)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except AktError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
