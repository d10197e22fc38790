"""Command line front end wiring the modules into reproducible runs.

Every command takes an explicit --seed (no wall-clock randomness), reads
and writes plain files, and prints a JSON summary to stdout. Dataset
files are the (data, labels) pair used throughout; configs are JSON
objects mirroring the typed configs, under keys model/train/loss/augment.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from penscript import metrics
from penscript.dataio import (
    Alphabet,
    FoldPlan,
    Sample,
    build_alphabet,
    equations_alphabet,
    make_splits,
    parse_recording,
    write_recording,
)
from penscript.losses import LossParams, beam_decode, greedy_decode
from penscript.netcore.model import (
    ModelConfig,
    RecognitionModel,
    load_checkpoint,
    save_checkpoint,
)
from penscript.netcore.train import TrainConfig, train
from penscript.preprocess import AugmentConfig, augment, interpolate
from penscript.segment import split_equation
from penscript import fdcheck


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    cfg = json.loads(_read(path))
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _alphabet(choice: str, labels: list[str]) -> Alphabet:
    if choice == "equations":
        return equations_alphabet()
    if choice == "auto":
        return build_alphabet(labels)
    raise ValueError(f"unknown alphabet {choice!r}")


def _load_dataset(args) -> tuple[list[Sample], Alphabet]:
    labels_text = _read(args.labels)
    strings = [
        str(json.loads(line)["label"])
        for line in labels_text.splitlines()
        if line.strip()
    ]
    alphabet = _alphabet(args.alphabet, strings)
    samples = parse_recording(_read(args.data), labels_text, alphabet)
    return samples, alphabet


def _emit(obj: dict) -> None:
    json.dump(obj, sys.stdout, indent=2, ensure_ascii=False)
    sys.stdout.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args) -> int:
    samples, alphabet = _load_dataset(args)
    out = _out_dir(args)
    data_text, labels_text = write_recording(samples, alphabet)
    (out / "data.csv").write_text(data_text, encoding="utf-8")
    (out / "labels.jsonl").write_text(labels_text, encoding="utf-8")

    histogram = {s: 0 for s in alphabet.symbols}
    for s in samples:
        for i in s.label:
            histogram[alphabet.decode(i)] += 1
    by_len: dict[int, list[int]] = {}
    for s in samples:
        by_len.setdefault(len(s.label), []).append(s.num_timesteps)
    length_stats = {
        str(k): {
            "count": len(v),
            "mean_timesteps": float(np.mean(v)),
            "std_timesteps": float(np.std(v)),
        }
        for k, v in sorted(by_len.items())
    }
    _emit(
        {
            "samples": len(samples),
            "writers": len({s.writer_id for s in samples}),
            "class_histogram": histogram,
            "length_stats": length_stats,
        }
    )
    return 0


def cmd_split(args) -> int:
    samples, _ = _load_dataset(args)
    plan = make_splits(samples, args.mode, args.k, args.seed)
    out = _out_dir(args)
    (out / "folds.json").write_text(plan.to_json(), encoding="utf-8")
    _emit(
        {
            "mode": plan.mode,
            "k": plan.k,
            "fold_sizes": [{"train": len(tr), "val": len(va)} for tr, va in plan.folds],
        }
    )
    return 0


def cmd_augment(args) -> int:
    samples, alphabet = _load_dataset(args)
    cfg_file = _load_config(args.config)
    cfg = AugmentConfig.from_dict(cfg_file.get("augment", {}))
    methods = set(args.methods.split(",")) if args.methods else set()
    augmented = [
        augment(s, cfg, methods, args.seed + i) for i, s in enumerate(samples)
    ]
    out = _out_dir(args)
    data_text, labels_text = write_recording(augmented, alphabet)
    (out / "data.csv").write_text(data_text, encoding="utf-8")
    (out / "labels.jsonl").write_text(labels_text, encoding="utf-8")
    digest = hashlib.sha256(data_text.encode("utf-8")).hexdigest()
    _emit({"samples": len(augmented), "methods": sorted(methods), "sha256": digest})
    return 0


def cmd_segment(args) -> int:
    samples, alphabet = _load_dataset(args)
    out = _out_dir(args)
    manifest = []
    piece_count = 0
    for i, s in enumerate(samples):
        result = split_equation(
            s, threshold=args.threshold, min_len=args.min_len, alphabet=alphabet
        )
        data_text, labels_text = write_recording(result.samples, alphabet)
        (out / f"sample{i:04d}.csv").write_text(data_text, encoding="utf-8")
        (out / f"sample{i:04d}.jsonl").write_text(labels_text, encoding="utf-8")
        piece_count += len(result)
        manifest.append(
            {
                "index": i,
                "label": alphabet.decode_label(s.label),
                "assignment": list(result.assignment),
                "ambiguous": result.ambiguous,
            }
        )
    (out / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2), encoding="utf-8"
    )
    _emit({"equations": len(samples), "characters": piece_count})
    return 0


def cmd_train(args) -> int:
    samples, alphabet = _load_dataset(args)
    cfg_file = _load_config(args.config)

    model_dict = dict(cfg_file.get("model", {}))
    model_dict.setdefault("num_classes", alphabet.size)
    for flag, key in (
        ("filters", "conv_filters"),
        ("kernel", "conv_kernel"),
        ("pool", "pool_size"),
        ("units", "lstm_units"),
        ("recurrent", "recurrent_kind"),
        ("dropout", "dropout_rate"),
    ):
        value = getattr(args, flag)
        if value is not None:
            model_dict[key] = value
    if args.no_batchnorm:
        model_dict["use_batchnorm"] = False
    model_cfg = ModelConfig.from_dict(model_dict)

    train_dict = dict(cfg_file.get("train", {}))
    train_dict["seed"] = args.seed
    for flag, key in (
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("lr", "learning_rate"),
        ("target_len", "target_len"),
    ):
        value = getattr(args, flag)
        if value is not None:
            train_dict[key] = value
    if "epochs" not in train_dict:
        raise ValueError("epochs must be set via --epochs or the config file")
    train_cfg = TrainConfig.from_dict(train_dict)

    loss_params = LossParams.from_dict(cfg_file.get("loss", {}))

    if args.folds:
        plan = FoldPlan.from_json(_read(args.folds))
        fold = plan.folds[args.fold]
    else:
        everything = tuple(range(len(samples)))
        fold = (everything, everything)

    start_model = None
    completed = 0
    if args.resume:
        start_model, header = load_checkpoint(args.resume)
        completed = int(header.get("epochs_completed", 0))

    model, history = train(
        samples, fold, model_cfg, train_cfg, args.loss, loss_params, model=start_model
    )

    out = _out_dir(args)
    with open(out / "history.jsonl", "w", encoding="utf-8") as f:
        for record in history:
            f.write(json.dumps(record) + "\n")
    save_checkpoint(
        str(out / "model.ckpt"),
        model,
        extra={
            "train": train_cfg.to_dict(),
            "loss": args.loss,
            "alphabet": list(alphabet.symbols),
            "epochs_completed": completed + train_cfg.epochs,
        },
    )
    final = history[-1] if history else {}
    _emit({"epochs": len(history), "final": final, "checkpoint": str(out / "model.ckpt")})
    return 0


def cmd_evaluate(args) -> int:
    refs = [line for line in _read(args.refs).splitlines() if line.strip()]
    hyps = [line for line in _read(args.hyps).splitlines() if line.strip()]
    if len(refs) != len(hyps):
        raise ValueError("reference and hypothesis files differ in line count")
    alphabet = _alphabet(args.alphabet, refs + hyps)
    scripts = [metrics.edit_distance(r, h) for r, h in zip(refs, hyps)]
    hists = metrics.error_positions(scripts, [len(r) for r in refs], args.bins)
    report = {
        "cer": metrics.cer(refs, hyps),
        "wer": metrics.wer([[r] for r in refs], [[h] for h in hyps]),
        "histograms": {k: v.tolist() for k, v in hists.items()},
        "confusion": metrics.confusion_matrix(scripts, alphabet).tolist(),
        "confusion_symbols": list(alphabet.symbols),
    }
    if all(len(r) == 1 for r in refs) and all(len(h) == 1 for h in hyps):
        report["crr"] = metrics.crr(refs, hyps)
    _emit(report)
    return 0


def cmd_decode(args) -> int:
    model, header = load_checkpoint(args.checkpoint)
    alphabet = Alphabet(header["alphabet"])
    samples = parse_recording(_read(args.data), _read(args.labels), alphabet)
    target_len = int(header.get("train", {}).get("target_len", 800))

    decoded = []
    refs, hyps = [], []
    for s in samples:
        prepared = interpolate(s, target_len)
        out = model.forward(prepared.values[None, :, :], "eval").data[0]
        if model.task == "seq2seq":
            hyp = beam_decode(out, args.beam) if args.beam > 1 else greedy_decode(out)
        else:
            hyp = (int(np.argmax(out)),)
        refs.append(s.label)
        hyps.append(hyp)
        decoded.append(
            {
                "reference": alphabet.decode_label(s.label),
                "hypothesis": alphabet.decode_label(hyp),
            }
        )
    _emit({"decoded": decoded, "cer": metrics.cer(refs, hyps)})
    return 0


def cmd_gradcheck(args) -> int:
    report = fdcheck.run_all(args.seed)
    worst = max(report.values())
    _emit({"max_rel_error": {k: float(v) for k, v in report.items()}, "worst": worst})
    return 0 if worst < args.tolerance else 1


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="recording data file")
    p.add_argument("--labels", required=True, help="labels file, one JSON object per line")
    p.add_argument(
        "--alphabet",
        default="equations",
        choices=("equations", "auto"),
        help="label alphabet: the fixed 15-symbol equation set, or built from labels",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="penscript",
        description="Handwriting recognition from pen sensor time-series",
    )
    parser.add_argument("--seed", type=int, default=0, help="random seed (no wall-clock seeding)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and summarize a dataset")
    _add_dataset_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("split", help="write a k-fold train/validation plan")
    _add_dataset_args(p)
    p.add_argument("--mode", required=True, choices=("WD", "WI"))
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("augment", help="write an augmented copy of a dataset")
    _add_dataset_args(p)
    p.add_argument("--methods", default="scale,shift,jitter,mag_warp,time_warp")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("segment", help="split equations into character samples")
    _add_dataset_args(p)
    p.add_argument("--threshold", type=float, default=0.02)
    p.add_argument("--min-len", dest="min_len", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("train", help="train a model")
    _add_dataset_args(p)
    p.add_argument("--loss", required=True, help="ctc, joint_opt, or a character loss")
    p.add_argument("--folds", default=None, help="fold plan JSON; omit to train on everything")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--target-len", dest="target_len", type=int, default=None)
    p.add_argument("--filters", type=int, default=None)
    p.add_argument("--kernel", type=int, default=None)
    p.add_argument("--pool", type=int, default=None)
    p.add_argument("--units", type=int, default=None)
    p.add_argument("--recurrent", choices=("LSTM", "BiLSTM"), default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--no-batchnorm", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score hypothesis labels against references")
    p.add_argument("--refs", required=True, help="reference labels, one per line")
    p.add_argument("--hyps", required=True, help="hypothesis labels, one per line")
    p.add_argument("--alphabet", default="auto", choices=("equations", "auto"))
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("decode", help="decode samples with a trained model")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--beam", type=int, default=1, help="beam width; 1 = greedy")
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("gradcheck", help="finite-difference checks on losses and layers")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
