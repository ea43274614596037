"""Command-line pipeline: generate -> index -> pretrain -> finetune -> score -> evaluate.

Every stage writes versioned outputs plus a manifest carrying the resolved
config, its hash, and the seed; `evaluate` refuses score/corpus pairs whose
manifests do not match.  Each stage resolves its own profile/config/flags;
fine-tuning pins architecture and data keys to the checkpoint's embedded
config and takes the training knobs (budgets, perturbation, routing) from
the invocation.  Exit codes: 0 success, 1 usage, 2 data validation,
3 numerical failure.  The MESES_THREADS environment variable caps BLAS
worker threads (set before the numeric modules load).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path


def _setup_threads() -> None:
    n = os.environ.get("MESES_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _write_manifest(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_config(args):
    from .config import load_config

    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "bypass_cooc", False):
        overrides["bypass_cooc"] = True
    if getattr(args, "perturb", None):
        overrides["perturb_variant"] = args.perturb
    return load_config(path=args.config, profile=args.profile, **overrides)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    from dataclasses import replace

    from .schema import save_events, save_substrate, temporal_split
    from .synthgen import generate_full, plant_inserted_visits

    import numpy as np

    cfg = _resolve_config(args)
    gen_cfg = replace(cfg.gen, seed=cfg.seed if args.seed is not None else cfg.gen.seed)
    result = generate_full(gen_cfg)
    events, labels = result.events, np.zeros(len(result.events), dtype=np.int64)
    if gen_cfg.anomaly_rate > 0:
        split = temporal_split(events, cfg.train_frac, cfg.val_frac_of_train)
        test_rows = split.test
        rng = np.random.default_rng([gen_cfg.seed, 0xA40])
        planted, test_labels = plant_inserted_visits(
            [events[i] for i in test_rows],
            gen_cfg.anomaly_rate,
            rng,
            substrate=result.substrate,
            profiles=result.profiles,
            hotspots=result.hotspots,
            spread=gen_cfg.hour_profile_spread,
            entity_fraction=0.25,
        )
        # A replanted hour can sort before the entity's train/test boundary;
        # shift whole days until it cannot, so planted labels stay out of the
        # train/val partitions after the canonical re-sort on reload.
        boundary: dict[int, float] = {}
        for row in np.concatenate([split.train, split.val]):
            ev = events[row]
            boundary[ev.entity_id] = max(boundary.get(ev.entity_id, -np.inf), ev.t_start)
        events = list(events)
        for slot, row in enumerate(test_rows):
            ev = planted[slot]
            if test_labels[slot]:
                floor_t = boundary.get(ev.entity_id, -np.inf)
                while ev.t_start <= floor_t:
                    ev = replace(ev, t_start=ev.t_start + 24.0)
            events[row] = ev
            labels[row] = test_labels[slot]
    out = _out_dir(args)
    save_substrate(result.substrate, out / "substrate.jsonl")
    save_events(events, out / "events.jsonl", labels=labels if gen_cfg.anomaly_rate > 0 else None)
    _write_manifest(
        out / "generate.manifest.json",
        {"stage": "generate", "config": cfg.to_dict(), "config_hash": cfg.config_hash(), "seed": gen_cfg.seed,
         "events_digest": _file_digest(out / "events.jsonl"), "n_events": len(events)},
    )
    print(f"wrote {out / 'events.jsonl'} ({len(events)} events)")
    return 0


def _load_corpus(args, out: Path):
    from .schema import load_corpus_with_labels

    events_path = Path(args.events) if getattr(args, "events", None) else out / "events.jsonl"
    substrate_path = Path(args.substrate) if getattr(args, "substrate", None) else out / "substrate.jsonl"
    substrate, events, labels = load_corpus_with_labels(events_path, substrate_path)
    return substrate, events, labels, events_path


def cmd_index(args) -> int:
    from .cooc import build_index, save_index
    from .schema import temporal_split

    cfg = _resolve_config(args)
    out = _out_dir(args)
    substrate, events, _, events_path = _load_corpus(args, out)
    split = temporal_split(events, cfg.train_frac, cfg.val_frac_of_train)
    rows = getattr(split, args.partition)
    index = build_index([events[i] for i in rows], partition_tag=args.partition)
    path = out / f"cooc.{args.partition}.idx"
    save_index(index, path)
    _write_manifest(
        out / f"index.{args.partition}.manifest.json",
        {"stage": "index", "partition": args.partition, "config_hash": cfg.config_hash(),
         "events_digest": _file_digest(events_path), "n_indexed": index.n_indexed()},
    )
    print(f"wrote {path} ({index.n_indexed()} events)")
    return 0


def cmd_pretrain(args) -> int:
    from .train import pretrain, save_model

    cfg = _resolve_config(args)
    out = _out_dir(args)
    substrate, events, _, events_path = _load_corpus(args, out)
    result = pretrain(substrate, events, cfg)
    path = out / "pretrained.ckpt"
    manifest = save_model(path, result, "pretrain", extra={"seed": cfg.seed, "events_digest": _file_digest(events_path)})
    with open(out / "pretrain.runlog.jsonl", "w", encoding="utf-8") as fh:
        for rec in result.history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _write_manifest(out / "pretrain.manifest.json", manifest)
    print(f"wrote {path} (best epoch {result.best_epoch})")
    return 0


# Keys a fine-tune run may change relative to the checkpoint; everything
# architecture- or data-bound stays pinned to the checkpoint's config.
_FINETUNE_TUNABLE = (
    "seed", "batch_size", "peak_lr", "eta_min", "weight_decay", "clip_norm", "ema_factor",
    "finetune_max_epochs", "finetune_patience", "p_norm", "flag_rate", "modes",
    "perturb_variant", "swap_prob", "bypass_cooc", "min_overlap",
    "prototype_loss_enabled", "gamma", "beta", "n_neg", "poi_temperature",
)


def cmd_finetune(args) -> int:
    from .model import EventStreamModel
    from .train import finetune, load_model, save_model

    cfg = _resolve_config(args)
    out = _out_dir(args)
    substrate, events, labels, events_path = _load_corpus(args, out)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "pretrained.ckpt"
    model, manifest = load_model(ckpt, substrate)
    overrides = {key: getattr(cfg, key) for key in _FINETUNE_TUNABLE}
    cfg2 = model.cfg.with_overrides(**overrides)
    if cfg2 != model.cfg:
        # Rebuild the wrapper around the same weights with the new settings.
        state = model.registry.state_arrays()
        model = EventStreamModel(cfg2, substrate, manifest["n_entities"])
        model.registry.load_state_arrays(state)
    reads_before = labels.reads
    result = finetune(model, substrate, events, args.task)
    if labels.reads != reads_before:
        raise AssertionError("label tripwire: fine-tuning read the anomaly labels")
    path = out / f"finetuned.{args.task}.ckpt"
    manifest = save_model(path, result, f"finetune:{args.task}", extra={"seed": cfg.seed, "events_digest": _file_digest(events_path)})
    _write_manifest(out / f"finetune.{args.task}.manifest.json", manifest)
    print(f"wrote {path} (best epoch {result.best_epoch})")
    return 0


def cmd_score(args) -> int:
    import numpy as np

    from .metrics import rank_fuse
    from .schema import temporal_split
    from .train import build_partition, load_model, score_events

    cfg = _resolve_config(args)
    out = _out_dir(args)
    substrate, events, _, events_path = _load_corpus(args, out)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / f"finetuned.{args.task}.ckpt"
    if not ckpt.exists():
        ckpt = out / "pretrained.ckpt"
    model, manifest = load_model(ckpt, substrate)
    split = temporal_split(events, model.cfg.train_frac, model.cfg.val_frac_of_train)
    partition = build_partition(events, split.test, model.cfg.window, "test")
    scores = score_events(model, partition, use_anomaly_head=model.anomaly_head is not None)
    if args.fuse:
        fused = rank_fuse(scores.anomaly if scores.anomaly is not None else scores.noise, scores.prototype)
        values, head = fused, "fused"
    elif scores.anomaly is not None:
        values, head = scores.anomaly, "anomaly"
    else:
        values, head = scores.noise, "noise"
    path = out / "scores.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row, ent, value in zip(scores.rows, scores.entities, values):
            fh.write(json.dumps({"event_key": int(row), "entity_id": int(ent), "score": float(value)}) + "\n")
    _write_manifest(
        out / "score.manifest.json",
        {"stage": "score", "head": head, "config_hash": manifest["config_hash"],
         "events_digest": _file_digest(events_path), "checkpoint": str(ckpt), "n_scored": int(len(values))},
    )
    print(f"wrote {path} ({len(values)} events, head={head})")
    return 0


def cmd_evaluate(args) -> int:
    import numpy as np

    from .metrics import auroc, average_precision, max_f1, pool_agent_max, sens_at_spec
    from .schema import DataError

    out = _out_dir(args)
    substrate, events, labels, events_path = _load_corpus(args, out)
    score_manifest_path = out / "score.manifest.json"
    if score_manifest_path.exists():
        with open(score_manifest_path, "r", encoding="utf-8") as fh:
            score_manifest = json.load(fh)
        if score_manifest.get("events_digest") != _file_digest(events_path):
            raise DataError("scores were produced for a different corpus (digest mismatch)")
    scores_path = Path(args.scores) if args.scores else out / "scores.jsonl"
    keys, ents, values = [], [], []
    with open(scores_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                keys.append(int(obj["event_key"]))
                ents.append(int(obj["entity_id"]))
                values.append(float(obj["score"]))
    if not labels.present:
        raise DataError("corpus carries no anomaly labels to evaluate against")
    truth = labels.values()[np.asarray(keys, dtype=np.int64)]
    values = np.asarray(values)
    ents = np.asarray(ents)
    report = {
        "event_ap": average_precision(values, truth),
        "event_auroc": auroc(values, truth),
        "event_max_f1": max_f1(values, truth),
        "event_sens_at_spec90": sens_at_spec(values, truth, 0.9),
        "prevalence": float(truth.mean()),
        "n_events": int(len(values)),
    }
    _, pooled_scores, pooled_labels = pool_agent_max(values, truth, ents)
    report["agent_ap"] = average_precision(pooled_scores, pooled_labels)
    report["agent_prevalence"] = float(pooled_labels.mean())
    path = out / "metrics.json"
    _write_manifest(path, report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    from .testkit import joint_loss_gradcheck

    report = joint_loss_gradcheck(n_samples=args.samples, seed=args.seed or 0)
    frac = report.fraction_below(1e-4)
    print(
        f"gradcheck: {report.n_checked} coordinates checked, {report.n_skipped} skipped, "
        f"max rel err {report.max_rel_error:.3e}, {frac:.1%} below 1e-4"
    )
    if report.n_checked == 0 or frac < 0.99:
        print("gradcheck FAILED", file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meses", description="Event-stream pre-training pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, scores=False, task=False):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--profile", default=None, help="packaged profile name (desk, paper)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="runs/default", help="run directory")
        p.add_argument("--events", default=None, help="events JSONL (default: <out>/events.jsonl)")
        p.add_argument("--substrate", default=None, help="substrate JSONL (default: <out>/substrate.jsonl)")
        if checkpoint:
            p.add_argument("--checkpoint", default=None)
        if scores:
            p.add_argument("--scores", default=None)
        if task:
            p.add_argument("--task", choices=("anomaly", "next-visit"), default="anomaly")
        p.add_argument("--perturb", choices=("structural", "swap"), default=None)
        p.add_argument("--bypass-cooc", action="store_true", dest="bypass_cooc")
        p.add_argument("--fuse", action="store_true")

    p = sub.add_parser("generate", help="emit a synthetic corpus")
    common(p)
    p.set_defaults(func=cmd_generate)
    p = sub.add_parser("index", help="build and save a co-occurrence index")
    common(p)
    p.add_argument("--partition", choices=("train", "val", "test"), default="train")
    p.set_defaults(func=cmd_index)
    p = sub.add_parser("pretrain", help="pre-train the backbone")
    common(p)
    p.set_defaults(func=cmd_pretrain)
    p = sub.add_parser("finetune", help="fine-tune from a checkpoint")
    common(p, checkpoint=True, task=True)
    p.set_defaults(func=cmd_finetune)
    p = sub.add_parser("score", help="score the test partition")
    common(p, checkpoint=True, task=True)
    p.set_defaults(func=cmd_score)
    p = sub.add_parser("evaluate", help="compute metrics from scores")
    common(p, scores=True)
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("gradcheck", help="run the finite-difference oracle")
    common(p)
    p.add_argument("--samples", type=int, default=500)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    _setup_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 1 if err.code not in (0, None) else 0
    try:
        return args.func(args)
    except Exception as err:  # map failures onto the documented exit codes
        from .schema import DataError
        from .train import NumericalError

        if isinstance(err, NumericalError):
            print(f"numerical failure: {err}", file=sys.stderr)
            return 3
        if isinstance(err, (DataError, FileNotFoundError)):
            print(f"data error: {err}", file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
