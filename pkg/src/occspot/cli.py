"""The `occspot` command line: reproducible pipeline orchestration.

Subcommands: gen-scenes, make-occ, resample, balance-weights, pretrain,
finetune, eval-miou, theory-check.  Every run writes outputs atomically and
drops a JSON run manifest (config hash, seed, versions) next to them, so an
artifact can be regenerated bit-exactly from its manifest.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
OCCSPOT_THREADS caps internal worker count.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, theory
from .augment import ResampleFactor, beam_resample
from .balance import class_stats, sampling_weights
from .config import ConfigError, PipelineConfig, load_config
from .formats import (FormatError, atomic_write_text, read_frame, read_labels,
                      write_frame, write_grid, write_labels)
from .learn import (ModelConfig, NumericalError, TrainConfig, evaluate,
                    finetune_segmentation, load_model, pretrain, save_model)
from .pipeline import (build_samples, generate_dataset, load_sequence,
                       sequence_occupancy, worker_count)
from .seeding import substream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class DataError(RuntimeError):
    pass


def _config_hash(cfg: PipelineConfig) -> str:
    return hashlib.sha256(cfg.to_json().encode()).hexdigest()


def _write_manifest(path, command: str, cfg: PipelineConfig | None,
                    seed: int | None, outputs: list[str],
                    extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "seed": seed,
        "config_sha256": _config_hash(cfg) if cfg else None,
        "config": cfg.to_json_dict() if cfg else None,
        "outputs": outputs,
        "versions": {
            "occspot": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }
    if extra:
        doc.update(extra)
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _model_and_train_config(cfg: PipelineConfig, seed: int
                            ) -> tuple[ModelConfig, TrainConfig]:
    mc = ModelConfig(n_cls=cfg.grid.n_cls, feat_dim=1, channels=cfg.channels,
                     lam=cfg.lam)
    tc = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                     lr_peak=cfg.lr_peak, seed=seed,
                     lovasz_classes=cfg.lovasz_classes)
    return mc, tc


def _loss_weights(cfg: PipelineConfig) -> np.ndarray:
    from .balance import class_loss_weights
    fg = list(cfg.foreground_classes)
    bg = [c for c in range(1, cfg.grid.n_cls + 1) if c not in fg]
    return class_loss_weights(cfg.grid.n_cls, fg, bg,
                              w_fg=cfg.w_fg, w_bg=cfg.w_bg, w_empty=cfg.w_empty)


def _load_dataset_dirs(data_dir: Path) -> list[Path]:
    dirs = sorted(p for p in data_dir.iterdir() if p.is_dir()
                  and p.name.startswith("seq_"))
    if not dirs:
        raise DataError(f"{data_dir}: no seq_* directories found")
    return dirs


# -- subcommand bodies --------------------------------------------------------

def cmd_gen_scenes(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    out = Path(args.out)
    seq_dirs = generate_dataset(cfg, out, seed=seed, workers=worker_count())
    _write_manifest(out / "manifest.json", "gen-scenes", cfg, seed,
                    [d.name for d in seq_dirs])
    print(f"wrote {len(seq_dirs)} sequences to {out}")
    return EXIT_OK


def cmd_make_occ(args) -> int:
    cfg = load_config(args.config)
    seq = load_sequence(args.sequence_dir)
    grid = sequence_occupancy(seq, cfg)
    out = Path(args.out)
    write_grid(out, grid)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "make-occ",
                    cfg, cfg.seed, [out.name],
                    {"sequence_dir": str(args.sequence_dir),
                     "occupied_cells": grid.occupied_count})
    print(f"wrote {out} ({grid.occupied_count} occupied cells)")
    return EXIT_OK


def cmd_resample(args) -> int:
    if not 0.0 < args.factor <= 1.0:
        raise ConfigError(f"--factor must lie in (0, 1], got {args.factor}")
    src = Path(args.input)
    cloud = read_frame(src)
    labels_path = src.with_suffix(".sptl")
    labels = read_labels(labels_path) if labels_path.exists() else \
        np.zeros(len(cloud), dtype=np.int64)
    out_cloud, out_labels = beam_resample(cloud, labels,
                                          ResampleFactor(args.factor), args.seed)
    out = Path(args.output)
    write_frame(out, out_cloud)
    if labels_path.exists():
        write_labels(out.with_suffix(".sptl"), out_labels)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "resample",
                    None, args.seed, [out.name],
                    {"factor": args.factor, "input": str(src),
                     "points_in": len(cloud), "points_out": len(out_cloud)})
    print(f"kept {len(out_cloud)}/{len(cloud)} points -> {out}")
    return EXIT_OK


def cmd_balance_weights(args) -> int:
    try:
        doc = json.loads(Path(args.stats).read_text())
        frames = doc["frames"]
        stats = class_stats([{int(k): int(v) for k, v in fr.items()}
                             for fr in frames])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"{args.stats}: bad stats document: {exc}") from exc
    weights = sampling_weights(stats)
    print(json.dumps({"class_ids": list(weights.class_ids),
                      "s": list(weights.s)}, indent=2))
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    seq_dirs = _load_dataset_dirs(Path(args.data))
    seqs = [load_sequence(d) for d in seq_dirs]
    samples = build_samples(seqs, cfg, augment=not args.no_augment, seed=seed)
    mc, tc = _model_and_train_config(cfg, seed)
    params, trace = pretrain(samples, cfg.grid, mc, tc,
                             weights=_loss_weights(cfg))
    out = Path(args.out)
    save_model(out, params, mc, seed, extra={"loss_trace": trace})
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "pretrain",
                    cfg, seed, [out.name],
                    {"data": str(args.data), "loss_trace": trace})
    print(f"pretrained {tc.epochs} epochs on {len(samples)} samples; "
          f"loss {trace[0]:.4f} -> {trace[-1]:.4f}; wrote {out}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    pretrained, mc, _ = load_model(args.ckpt)
    seq_dirs = _load_dataset_dirs(Path(args.data))
    if args.labels < 1:
        raise DataError("empty fine-tune set: --labels must be >= 1")
    if args.labels > len(seq_dirs):
        raise DataError(f"--labels {args.labels} exceeds {len(seq_dirs)} sequences")
    seqs = [load_sequence(d) for d in seq_dirs[:args.labels]]
    samples = build_samples(seqs, cfg, augment=False, seed=seed)
    _, tc = _model_and_train_config(cfg, seed)
    params, trace = finetune_segmentation(pretrained, samples, cfg.grid, mc, tc,
                                          weights=_loss_weights(cfg))
    out = Path(args.out)
    save_model(out, params, mc, seed, extra={"loss_trace": trace,
                                             "finetuned_from": str(args.ckpt)})
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "finetune",
                    cfg, seed, [out.name],
                    {"ckpt": str(args.ckpt), "labels": args.labels,
                     "loss_trace": trace})
    print(f"finetuned on {len(samples)} labeled frames; wrote {out}")
    return EXIT_OK


def cmd_eval_miou(args) -> int:
    cfg = load_config(args.config)
    params, mc, _ = load_model(args.ckpt)
    seq_dirs = _load_dataset_dirs(Path(args.data))
    seqs = [load_sequence(d) for d in seq_dirs]
    samples = build_samples(seqs, cfg, augment=False)
    _, iou, mean = evaluate(params, samples, cfg.grid, mc)
    per_class = {str(i): (None if np.isnan(v) else round(float(v), 6))
                 for i, v in enumerate(iou)}
    print(json.dumps({"miou": round(float(mean), 6), "iou": per_class},
                     indent=2))
    return EXIT_OK


def cmd_theory_check(args) -> int:
    rng = substream(args.seed, "theory")
    bound = theory.sweep_bayes_bound(args.sweeps, int(rng.integers(2**63)))
    lemma = theory.sweep_lemma1(max(1, args.sweeps // 10),
                                int(rng.integers(2**63)))
    risk = theory.sweep_risk_ordering(max(1, args.sweeps // 10),
                                      int(rng.integers(2**63)))
    report = {"bayes_bound": bound, "lemma1": lemma, "risk_ordering": risk}
    print(json.dumps(report, indent=2))
    total_violations = (bound["violations"] + lemma["violations"]
                        + risk["violations"])
    return EXIT_OK if total_violations == 0 else EXIT_NUMERIC


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="occspot",
                                description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenes", help="generate a synthetic dataset tree")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_scenes)

    m = sub.add_parser("make-occ", help="occupancy grid from a sequence dir")
    m.add_argument("--config", required=True)
    m.add_argument("sequence_dir")
    m.add_argument("out")
    m.set_defaults(fn=cmd_make_occ)

    r = sub.add_parser("resample", help="beam-resample a frame file")
    r.add_argument("--factor", type=float, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("input")
    r.add_argument("output")
    r.set_defaults(fn=cmd_resample)

    b = sub.add_parser("balance-weights", help="print Eq-7-style class weights")
    b.add_argument("stats")
    b.set_defaults(fn=cmd_balance_weights)

    t = sub.add_parser("pretrain", help="pre-train the toy model on occupancy")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--no-augment", action="store_true")
    t.set_defaults(fn=cmd_pretrain)

    f = sub.add_parser("finetune", help="fine-tune on K labeled sequences")
    f.add_argument("--ckpt", required=True)
    f.add_argument("--labels", type=int, required=True)
    f.add_argument("--config", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int, default=None)
    f.set_defaults(fn=cmd_finetune)

    e = sub.add_parser("eval-miou", help="evaluate a checkpoint's mIoU")
    e.add_argument("ckpt")
    e.add_argument("data")
    e.add_argument("--config", required=True)
    e.set_defaults(fn=cmd_eval_miou)

    c = sub.add_parser("theory-check", help="randomized bound verification")
    c.add_argument("--sweeps", type=int, default=100000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_theory_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
