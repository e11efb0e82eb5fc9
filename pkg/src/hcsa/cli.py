"""Command-line entry point: gen-data, train, infer, eval, bench, gradcheck.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 bad input
(missing or corrupt files), 4 invalid configuration, 5 gradient check failed.
The log level comes from the LOG_LEVEL environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .config import HCSAConfig, RunConfig
from .errors import CheckpointError, ConfigError, DatasetError, InputError, TaxonomyError

log = logging.getLogger("hcsa")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_INPUT, EXIT_VALIDATION, EXIT_GRADCHECK = 0, 1, 2, 3, 4, 5
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_MAX_PARAMS = 50_000


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.model = dataclasses.replace(cfg.model, seed=args.seed)
        cfg.data = dataclasses.replace(cfg.data, seed=args.seed)
    return cfg


def _out(args, default: Path) -> Path:
    return Path(args.out) if args.out else default


def cmd_gen_data(args) -> int:
    from .data import generate_synthetic_dataset, save_dataset, write_references, REFERENCES_NAME

    cfg = _load_config(args)
    root = _out(args, Path(cfg.paths.data_dir))
    samples = generate_synthetic_dataset(cfg.data, cfg.num_samples)
    n_eval = int(round(cfg.num_samples * cfg.eval_fraction))
    splits = {"train": samples[: len(samples) - n_eval], "eval": samples[len(samples) - n_eval:]}
    for name, part in splits.items():
        if not part:
            continue
        directory = save_dataset(part, root / name)
        write_references(part, directory / REFERENCES_NAME)
    print(f"wrote {len(splits['train'])} train and {n_eval} eval samples to {root}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .data import load_dataset
    from .training import exact_match_accuracy, train

    cfg = _load_config(args)
    out = _out(args, Path(cfg.paths.out_dir))
    out.mkdir(parents=True, exist_ok=True)
    train_dir = Path(cfg.paths.train_dir or Path(cfg.paths.data_dir) / "train")
    samples = load_dataset(train_dir)
    model, report = train(samples, cfg.model, cfg.train, checkpoint_path=out / "model.hcsm",
                          run_config=cfg.to_dict())
    summary = report.to_dict()
    summary["steps"] = report.steps
    summary["train_accuracy"] = exact_match_accuracy(model, samples)
    (out / "train_report.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"trained {report.steps} steps, final epoch loss {report.epoch_losses[-1]:.4f}, "
          f"train accuracy {summary['train_accuracy']:.3f}; checkpoint {out / 'model.hcsm'}")
    return EXIT_OK


def cmd_infer(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import ANSWER_VOCAB, load_dataset
    from .metrics import write_answers
    from .model import HCSA

    if not args.checkpoint:
        raise InputError("infer needs --checkpoint")
    params, snapshot, _ = load_checkpoint(args.checkpoint)
    if args.data:
        data_dir = Path(args.data)
    else:
        cfg = _load_config(args) if args.config else RunConfig.from_dict(snapshot) if snapshot else RunConfig()
        data_dir = Path(cfg.paths.data_dir) / "eval"
    samples = load_dataset(data_dir)
    model = HCSA(params.cfg, params)
    predictions = model.answer_batch(samples)
    out = _out(args, Path(args.checkpoint).with_name("predictions.jsonl"))
    write_answers(
        ({"id": s.id, "answer": " ".join(ANSWER_VOCAB.decode(p)), "type": s.type_tag}
         for s, p in zip(samples, predictions)),
        out,
    )
    print(f"wrote {len(samples)} predictions to {out}")
    return EXIT_OK


def _oracle(args):
    from .metrics import SimilarityOracle

    if args.oracle == "exact":
        return SimilarityOracle("exact")
    if args.oracle == "synonyms":
        return SimilarityOracle.from_synonym_file(args.synonyms)
    return SimilarityOracle.from_taxonomy_file(args.taxonomy)


def cmd_eval(args) -> int:
    from .metrics import evaluate, read_answers, wups

    if not args.predictions or not args.references:
        raise InputError("eval needs --predictions and --references")
    preds, refs = read_answers(args.predictions), read_answers(args.references)
    oracle = _oracle(args)
    report = evaluate(preds, refs, oracle)
    print(report.format())
    if args.gamma is not None:
        by_id = {p["id"]: p["answer"] for p in preds}
        score = wups([by_id[r["id"]] for r in refs], [r["answer"] for r in refs], args.gamma, oracle)
        print(f"WUPS@{args.gamma}: {score:.4f}")
    out = _out(args, Path(args.predictions).with_name("eval_report.json"))
    out.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import bench_model_config, run_bench, summary_table, write_csv

    cfg = _load_config(args)
    model_cfg = bench_model_config(cfg.bench, cfg.model)
    results = run_bench(cfg.bench.lengths, model_cfg, cfg.bench.reps, cfg.bench)
    out = _out(args, Path(cfg.paths.out_dir) / "bench.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(results, out)
    print(summary_table(results))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .params import ModelParams
    from .training import gradcheck_sample, gradient_check

    if args.config:
        model_cfg = _load_config(args).model
    else:
        model_cfg = HCSAConfig.micro(**({"seed": args.seed} if args.seed is not None else {}))
    count = ModelParams.initialize(model_cfg).count()
    if count > GRADCHECK_MAX_PARAMS:
        raise ConfigError(f"gradcheck needs a micro-scale model; this one has {count} parameters")
    err = gradient_check(model_cfg, gradcheck_sample(model_cfg, model_cfg.seed))
    status = "ok" if err < GRADCHECK_TOLERANCE else "FAILED"
    print(f"max relative error {err:.3e} over {count} parameters ({status}, tolerance {GRADCHECK_TOLERANCE:g})")
    return EXIT_OK if err < GRADCHECK_TOLERANCE else EXIT_GRADCHECK


COMMANDS = {
    "gen-data": (cmd_gen_data, "generate the synthetic dataset"),
    "train": (cmd_train, "train a model and write a checkpoint"),
    "infer": (cmd_infer, "answer every question in a dataset"),
    "eval": (cmd_eval, "score predictions with BLEU-1 and WUPS"),
    "bench": (cmd_bench, "time the conv encoder against a GRU encoder"),
    "gradcheck": (cmd_gradcheck, "compare backprop with finite differences"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcsa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="JSON run configuration")
        p.add_argument("--out", metavar="PATH", help="output file or directory")
        p.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
        if name == "infer":
            p.add_argument("--checkpoint", metavar="PATH")
            p.add_argument("--data", metavar="DIR", help="dataset directory (default: <data_dir>/eval)")
        if name == "eval":
            p.add_argument("--predictions", metavar="PATH")
            p.add_argument("--references", metavar="PATH")
            p.add_argument("--gamma", type=float, choices=(0.0, 0.9))
            p.add_argument("--oracle", choices=("exact", "synonyms", "taxonomy"), default="exact")
            p.add_argument("--taxonomy", metavar="PATH", help="term<TAB>parent file (default: bundled)")
            p.add_argument("--synonyms", metavar="PATH", help="a<TAB>b file (default: bundled)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except (ConfigError, TaxonomyError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InputError, DatasetError, CheckpointError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def run() -> None:
    sys.exit(main())
