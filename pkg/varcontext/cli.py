"""Command line surface: ``varcontext {synth,train,eval,generate,oracle,compare}``.

Exit codes: 0 success, 1 usage or configuration, 2 I/O, 3 numerical failure.
"""
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence
import argparse
import logging
import sys

from varcontext.comprehension import HEAD_NAMES
from varcontext.config import RunConfig, load_config
from varcontext.core import VariationalContext
from varcontext.data import ReferringDataset, load_annotations, save_annotations, synth_world
from varcontext.errors import (EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, ConfigError, ModeError, ValidationError,
                               VarContextError, exit_code_for)
from varcontext.evaluation import add_generation_bleu, compare_heads, corpus_bleu, grounding_accuracy, reference_sets
from varcontext.language import load_glove
from varcontext.suites import default_manager
from varcontext.training import CHECKPOINT_NAME, Trainer, load_checkpoint
from varcontext.utils.reports import (ATTENTION_COLUMNS, COMPARISON_COLUMNS, CONTEXT_COLUMNS, EVAL_COLUMNS,
                                      GENERATION_COLUMNS, GROUNDING_COLUMNS, attention_rows, comparison_rows,
                                      context_rows, eval_rows, grounding_rows, write_csv, write_html_summary)

logger = logging.getLogger("varcontext.cli")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors map to exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args: argparse.Namespace, **extra: Any) -> RunConfig:
    overrides: Dict[str, Any] = {"run.seed": args.seed, "run.out": args.out}
    overrides.update(extra)
    return load_config(args.config, **overrides)


def _mode_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    generation_mode = None
    if getattr(args, "with_gen", None):
        generation_mode = "with_generation"
    if getattr(args, "with_gen_pg", None):
        generation_mode = "with_generation_pg"
    return {
        "train.supervision": "unsupervised" if getattr(args, "unsupervised", None) else None,
        "train.generation_mode": generation_mode,
        "train.iterations": getattr(args, "iterations", None),
        "model.wo_reg": getattr(args, "wo_reg", None),
        "model.wo_alpha": getattr(args, "wo_alpha", None),
        "model.exclude_self": getattr(args, "exclude_self", None),
        "model.head": getattr(args, "head", None),
    }


def _require(value: Optional[str], flag: str) -> str:
    if not value:
        raise ConfigError(f"{flag} is required for this command")
    return value


def _load_model(checkpoint_path: str):
    """Rebuild a model from a checkpoint; returns (model, checkpoint)."""
    checkpoint = load_checkpoint(Path(checkpoint_path))
    model = VariationalContext.from_metadata(checkpoint.metadata)
    model.load_state_dict(checkpoint.params)
    return model, checkpoint


def _check_fingerprint(checkpoint, dataset: ReferringDataset) -> None:
    trained_on = checkpoint.metadata.get("dataset_fingerprint")
    if trained_on and trained_on != dataset.fingerprint():
        logger.warning("Checkpoint was trained on a different dataset (%s...)", trained_on[:12])


# ---------------------------------------------------------------------- #
#  COMMANDS                                                               #
# ---------------------------------------------------------------------- #

def cmd_synth(args: argparse.Namespace) -> int:
    config = _config(args)
    out = Path(_require(config.out, "--out"))
    dataset, report = synth_world(replace(config.synth, seed=config.seed))
    save_annotations(dataset, out)
    summary = dataset.summary()
    print(f"Wrote {out}")
    for key, value in summary.items():
        print(f"  {key}: {value}")
    print(f"  skipped: {report.skipped}")
    if report.skipped_scenes:
        print(f"  skipped scenes: {report.skipped_scenes}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _config(args, **_mode_overrides(args), **{"run.data": args.data, "train.split": args.split})
    data = _require(config.data, "--data")
    out = Path(_require(config.out, "--out"))
    supervised = config.train.supervision == "supervised"
    dataset = load_annotations(Path(data), supervised=supervised, visual_dim=config.model.visual_dim)
    logger.info("Dataset: %s", dataset.summary())

    if args.resume:
        checkpoint = load_checkpoint(Path(args.resume))
        model = VariationalContext.from_metadata(checkpoint.metadata)
        trainer = Trainer(model, dataset, config.train, seed=int(checkpoint.metadata.get("seed", config.seed)),
                          out_dir=out)
        trainer.resume(Path(args.resume))
    else:
        first = next(iter(dataset.scenes.values()))
        visual_dim = int(first.regions[0].feature.visual.shape[0])
        params = config.model
        if visual_dim != params.visual_dim:
            logger.info("Using the dataset's visual dimension %d (configured %d)", visual_dim, params.visual_dim)
            params = replace(params, visual_dim=visual_dim)
        model = VariationalContext.for_dataset(params, dataset, split=config.train.split, seed=config.seed)
        if args.glove:
            load_glove(Path(args.glove), model.vocabulary, model.encoder.embedding)
        trainer = Trainer(model, dataset, config.train, seed=config.seed, out_dir=out)

    state = trainer.train()
    print(f"Trained {state.iteration} iterations ({state.mode}); checkpoint {out / CHECKPOINT_NAME}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model, checkpoint = _load_model(_require(args.checkpoint, "--checkpoint"))
    dataset = load_annotations(Path(_require(args.data, "--data")), visual_dim=model.params.visual_dim)
    _check_fingerprint(checkpoint, dataset)
    out = Path(_require(args.out, "--out"))
    split = args.split or "test"
    report = grounding_accuracy(model, dataset, split, threshold=args.threshold, workers=args.workers)
    expressions = [e for e in dataset.split(split) if e.referent_index is not None]
    if model.decoder is not None:
        references = reference_sets(dataset)
        add_generation_bleu(report, [model.generate(dataset.scene_of(e), e.referent_index, e) for e in expressions],
                            [references[(e.scene_id, e.referent_index)] for e in expressions])

    tables = {
        "Grounding accuracy": write_csv(out / "eval.csv", EVAL_COLUMNS, eval_rows(report)),
        "Region scores": write_csv(out / "grounding.csv", GROUNDING_COLUMNS,
                                   grounding_rows(model, dataset, expressions)),
    }
    if model.params.head == "vc":
        tables["Context"] = write_csv(out / "context.csv", CONTEXT_COLUMNS,
                                      context_rows(model, dataset, expressions))
    if model.params.head != "random":
        tables["Word attention"] = write_csv(out / "attention.csv", ATTENTION_COLUMNS,
                                             attention_rows(model, expressions))
    if args.html:
        write_html_summary(out / "summary.html", f"Evaluation on {split}", tables)
    print(f"Accuracy on {split}: {report.accuracy:.4f} ({report.count} expressions)")
    for n, accuracy in report.bucket_accuracy().items():
        print(f"  {n} regions: {accuracy:.4f} ({report.buckets[n][1]})")
    if report.bleu1 is not None:
        print(f"  BLEU-1 {report.bleu1:.4f}  BLEU-2 {report.bleu2:.4f}")
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    self_check = bool(args.self_check)
    model = None
    if not self_check:
        model, _ = _load_model(_require(args.checkpoint, "--checkpoint"))
        if model.decoder is None:
            raise ModeError("Checkpoint has no generation module; train with --with-gen or --with-gen-pg")
        visual_dim = model.params.visual_dim
    else:
        visual_dim = 16
        if args.checkpoint:
            model, _ = _load_model(args.checkpoint)
            visual_dim = model.params.visual_dim
    dataset = load_annotations(Path(_require(args.data, "--data")), visual_dim=visual_dim)
    out = Path(_require(args.out, "--out"))
    split = args.split or "test"
    expressions = [e for e in dataset.split(split) if e.referent_index is not None]
    references = reference_sets(dataset)

    rows, candidates, candidate_refs = [], [], []
    for expression in expressions:
        scene = dataset.scene_of(expression)
        k = expression.referent_index
        if self_check:
            words, likelihood = list(expression.words), ""
        else:
            words = model.generate(scene, k, expression)
            likelihood = f"{model.expression_log_likelihood(scene, k, expression):.6f}"
        candidates.append(words)
        candidate_refs.append(references[(expression.scene_id, k)])
        rows.append([str(expression.id), str(scene.regions[k].id), " ".join(words), likelihood])
    write_csv(out / "generation.csv", GENERATION_COLUMNS, rows)
    count = len(expressions)
    b1 = corpus_bleu(candidates, candidate_refs, 1)
    b2 = corpus_bleu(candidates, candidate_refs, 2)
    write_csv(out / "generation_bleu.csv", ["split", "count", "bleu1", "bleu2"],
              [[split, str(count), f"{b1:.6f}", f"{b2:.6f}"]])
    print(f"BLEU-1 {b1:.4f}  BLEU-2 {b2:.4f} over {count} expressions")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    manager = default_manager()
    kwargs = {} if args.seed is None else {"seed": args.seed}
    result = manager.run_suite(args.suite, **kwargs)
    for line in result.lines():
        print(line)
    return EXIT_OK if result.passed else EXIT_NUMERICAL


def cmd_compare(args: argparse.Namespace) -> int:
    paths = args.checkpoint or []
    if len(paths) < 2:
        raise ConfigError("compare needs at least two --checkpoint arguments")
    models, fingerprints = {}, {}
    for path in paths:
        model, checkpoint = _load_model(path)
        label = model.params.head
        suffix = 2
        while label in models:
            label = f"{model.params.head}#{suffix}"
            suffix += 1
        models[label] = model
        fingerprints[label] = checkpoint.metadata.get("dataset_fingerprint", "")
    first = next(iter(models.values()))
    dataset = load_annotations(Path(_require(args.data, "--data")), visual_dim=first.params.visual_dim)
    rows = compare_heads(dataset, models, split=args.split or "test", threshold=args.threshold,
                         fingerprints=fingerprints)
    out = Path(_require(args.out, "--out"))
    write_csv(out / "comparison.csv", COMPARISON_COLUMNS, comparison_rows(rows))
    for row in rows:
        print(f"{row['head']:>10} {row['bucket']:>4}: {row['accuracy']:.4f} ({row['count']})")
    return EXIT_OK


# ---------------------------------------------------------------------- #
#  PARSER                                                                 #
# ---------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Sectioned key = value config file")
    common.add_argument("--seed", type=int, default=None, help="Run seed (VC_SEED overrides)")
    common.add_argument("--out", help="Output file (synth) or directory")
    common.add_argument("--log-level", default=argparse.SUPPRESS, choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="Annotation JSON")
    data.add_argument("--split", default=None, help="Split name")

    parser = _Parser(prog="varcontext", description="Referring-expression grounding with variational context")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="Generate a synthetic world")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", parents=[common, data], help="Train a model")
    p.add_argument("--unsupervised", action="store_true", default=None)
    gen = p.add_mutually_exclusive_group()
    gen.add_argument("--with-gen", action="store_true", default=None)
    gen.add_argument("--with-gen-pg", action="store_true", default=None)
    p.add_argument("--wo-reg", action="store_true", default=None)
    p.add_argument("--wo-alpha", action="store_true", default=None)
    p.add_argument("--exclude-self", action="store_true", default=None)
    p.add_argument("--head", choices=[h for h in HEAD_NAMES if h != "random"], default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--resume", help="Checkpoint to continue from")
    p.add_argument("--glove", help="Pretrained word vectors (word v1 ... vD per line)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", parents=[common, data], help="Grounding accuracy and reports")
    p.add_argument("--checkpoint")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--html", action="store_true")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("generate", parents=[common, data], help="Generate expressions and score BLEU")
    p.add_argument("--checkpoint")
    p.add_argument("--self-check", action="store_true", help="Score the references against themselves")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("oracle", parents=[common], help="Run a property suite")
    p.add_argument("suite", help="elbo, gradcheck, reinforce or mil")
    p.set_defaults(handler=cmd_oracle)

    p = sub.add_parser("compare", parents=[common, data], help="Accuracy per head per region-count bucket")
    p.add_argument("--checkpoint", action="append")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level or "INFO"), format=LOG_FORMAT)
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except ConfigError as exc:
        where = f" (lines {', '.join(map(str, exc.lines))})" if exc.lines else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return EXIT_USAGE
    except (VarContextError, OSError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except ValueError as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
