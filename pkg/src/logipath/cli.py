"""Command line surface tying the pipeline stages together.

One subcommand per stage: extract / closure / augment / perturb /
gen-synth / train / eval / consistency / perception / stats /
gradcheck.  The flags --seed, --config, --lexicon, and --jobs are
shared and may appear before or after the subcommand.  A config file
is flat ``key=value`` text whose keys mirror the flags; explicit flags
win over file values.  Every artifact starts with a header echoing the
effective configuration, so any output can be traced back to the exact
invocation.  Exit codes: 0 success, 1 bad input or usage, 2 internal
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from multiprocessing import get_context
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .atoms import Sample
from .datasets import (
    DatasetError,
    load_checkpoint,
    read_dataset,
    save_checkpoint,
    write_dataset,
    write_rows,
)
from .engine import ClosureConfig, closure
from .epe import (
    ADVERSARIAL_KINDS,
    MiningConfig,
    OverlapScorer,
    augment,
    perturb_adversarial,
    perturb_equivalent,
)
from .extraction import ExtractionError, extract_sample
from .lexicon import Lexicon, LexiconError, load_lexicon
from .model import ModelConfig, ModelScorer
from .training import (
    SynthConfig,
    TrainConfig,
    consistency_eval,
    evaluate,
    generate_synthetic,
    model_gradcheck,
    perception_eval,
    stats,
    train,
)

log = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-4


class UsageError(Exception):
    """Bad flags or unparseable config; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits the process on bad flags; raise instead so run()
    # can turn it into the documented exit code
    def error(self, message: str) -> Any:  # type: ignore[override]
        raise UsageError(f"{self.format_usage().rstrip()}\n{message}")


def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # the subparser copies suppress their defaults, otherwise parsing
    # "--seed 5 gen-synth ..." would reset seed after the subcommand
    common = argparse.ArgumentParser(add_help=False)

    def dflt(value: Any) -> Any:
        return argparse.SUPPRESS if suppress else value

    common.add_argument("--seed", type=int, default=dflt(0), help="master RNG seed")
    common.add_argument("--config", type=str, default=dflt(None), help="key=value defaults file")
    common.add_argument("--lexicon", type=str, default=dflt(None), help="connective table override")
    common.add_argument("--jobs", type=int, default=dflt(1), help="worker process cap")
    return common


def build_parser() -> _Parser:
    common = _common_flags(suppress=True)
    parser = _Parser(prog="logipath", parents=[_common_flags(suppress=False)])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("extract", parents=[common], help="dump canonical atoms per sample")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)

    p = sub.add_parser("closure", parents=[common], help="derive the atom base per sample")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--max-rounds", type=int, default=8)
    p.add_argument("--max-atoms", type=int, default=64)
    p.add_argument("--unsound", action="store_true", help="skip the entailment gate on rewrites")

    p = sub.add_parser("augment", parents=[common], help="mine and filter equivalent contexts")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--epsilon-star", type=float, default=0.9, help="confidence filter threshold")
    p.add_argument("--checkpoint", type=str, default=None, help="scorer model; token overlap otherwise")
    p.add_argument("--max-extra", type=int, default=2)
    p.add_argument("--max-candidates", type=int, default=20)

    p = sub.add_parser("perturb", parents=[common], help="rewrite one context sentence per sample")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--mode", choices=("equivalent", "adversarial"), required=True)
    p.add_argument("--kinds", type=str, default=",".join(ADVERSARIAL_KINDS),
                   help="adversarial edit kinds, comma separated")

    p = sub.add_parser("gen-synth", parents=[common], help="generate certified entailment puzzles")
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--n-vars", type=int, default=6)
    p.add_argument("--body-len", type=int, default=4)
    p.add_argument("--p-derived", type=float, default=0.5)
    p.add_argument("--id-prefix", type=str, default="synth")
    p.add_argument("--jsonl", action="store_true")

    p = sub.add_parser("train", parents=[common], help="fit the model on a labeled dataset")
    p.add_argument("--train", dest="train_file", required=True)
    p.add_argument("--dev", dest="dev_file", default=None)
    p.add_argument("--out", dest="outfile", required=True, help="checkpoint path")
    p.add_argument("--history", dest="history_file", default=None)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--target-acc", type=float, default=None)
    p.add_argument("--augment-equivalent", action="store_true")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--diffusion-steps", type=int, default=2)
    p.add_argument("--alpha", type=str, default="0.2,0.8")
    p.add_argument("--beta", type=str, default="0.0,1.0")
    p.add_argument("--leaky-slope", type=float, default=0.02)
    p.add_argument("--max-units", type=int, default=64)
    p.add_argument("--no-path-attention", action="store_true")
    p.add_argument("--no-in-atom", action="store_true")
    p.add_argument("--no-cross-atom", action="store_true")
    p.add_argument("--no-diffusion", action="store_true")

    p = sub.add_parser("eval", parents=[common], help="score a dataset with a checkpoint")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--predictions", dest="outfile", default=None)

    for name, help_text in (
        ("consistency", "flip rate under meaning-preserving rewrites"),
        ("perception", "change rate under meaning-breaking edits"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--out", dest="outfile", default=None)
        if name == "perception":
            p.add_argument("--kinds", type=str, default=",".join(ADVERSARIAL_KINDS))

    p = sub.add_parser("stats", parents=[common], help="category counts and ratios")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", default=None)

    p = sub.add_parser("gradcheck", parents=[common], help="analytic vs numeric gradients")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--max-units", type=int, default=12)
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--max-coords", type=int, default=200)

    return parser


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: _Parser, args: argparse.Namespace) -> None:
    """Fill flags still at their defaults from the config file."""
    if not args.config:
        return
    values = _read_config_file(args.config)
    actions: dict[str, argparse.Action] = {}
    for sp in _all_parsers(parser):
        for action in sp._actions:
            actions.setdefault(action.dest, action)
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"config key {key!r} matches no flag")
        if not hasattr(args, key) or getattr(args, key) != action.default:
            continue  # flag not on this subcommand, or explicitly set
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            setattr(args, key, raw.lower() in ("1", "true", "yes", "on"))
        elif action.type is not None:
            try:
                setattr(args, key, action.type(raw))
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
        else:
            setattr(args, key, raw)


def _all_parsers(parser: _Parser) -> list[argparse.ArgumentParser]:
    out: list[argparse.ArgumentParser] = [parser]
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            out.extend(action.choices.values())
    return out


def _effective_config(args: argparse.Namespace) -> dict[str, Any]:
    skip = {"config"}
    cfg = {
        k: v for k, v in sorted(vars(args).items())
        if k not in skip and not k.startswith("_")
    }
    cfg["version"] = __version__
    return cfg


def _lexicon_for(args: argparse.Namespace) -> Lexicon:
    return load_lexicon(args.lexicon)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise UsageError(f"expected comma separated floats, got {text!r}") from exc


def _model_config(args: argparse.Namespace) -> ModelConfig:
    return ModelConfig(
        d=args.d,
        n_layers=args.layers,
        n_heads=args.heads,
        diffusion_steps=args.diffusion_steps,
        alpha=_floats(args.alpha),
        beta=_floats(args.beta),
        leaky_slope=args.leaky_slope,
        max_units=args.max_units,
        seed=args.seed,
        use_path_attention=not args.no_path_attention,
        use_in_atom=not args.no_in_atom,
        use_cross_atom=not args.no_cross_atom,
        use_diffusion=not args.no_diffusion,
    )


def _scorer_for(args: argparse.Namespace, lexicon: Lexicon) -> Any:
    if getattr(args, "checkpoint", None):
        ck = load_checkpoint(args.checkpoint)
        return ModelScorer(ck.params, ck.config, lexicon, ck.vocab)
    return OverlapScorer()


# --- worker-pool plumbing ---------------------------------------------------
# fork start method: children inherit _POOL_CTX set up just before the
# pool is created, so nothing heavyweight is pickled per task

_POOL_CTX: dict[str, Any] = {}


def _chunks(items: list, n_chunks: int) -> list[list]:
    size = max(1, (len(items) + n_chunks - 1) // n_chunks)
    return [items[i : i + size] for i in range(0, len(items), size)]


def _eval_worker(chunk: list[Sample]) -> list[dict[str, Any]]:
    report = evaluate(
        _POOL_CTX["params"],
        chunk,
        _POOL_CTX["model_cfg"],
        _POOL_CTX["lexicon"],
        _POOL_CTX["vocab"],
    )
    return report.predictions


def _augment_worker(chunk: list[Sample]) -> list[dict[str, Any]]:
    produced = augment(
        chunk,
        _POOL_CTX["lexicon"],
        scorer=_POOL_CTX["scorer"],
        threshold=_POOL_CTX["threshold"],
        mining=_POOL_CTX["mining"],
    )
    return [a.to_dict() for a in produced]


def _run_pool(
    worker: Callable[[list], list], items: list, jobs: int
) -> list:
    if jobs <= 1 or len(items) <= 1:
        return worker(items)
    with get_context("fork").Pool(processes=jobs) as pool:
        parts = pool.map(worker, _chunks(items, jobs))
    return [row for part in parts for row in part]


# --- subcommands ------------------------------------------------------------


def _cfg_comment(args: argparse.Namespace) -> str:
    return "# config " + json.dumps(
        _effective_config(args), ensure_ascii=False, sort_keys=True
    )


def cmd_extract(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    samples = read_dataset(args.infile)
    lines = [_cfg_comment(args)]
    n_failed = 0
    for sample in samples:
        try:
            ex = extract_sample(sample, lexicon)
        except ExtractionError as exc:
            n_failed += 1
            lines.append(f"sample {sample.id} ERROR {exc}")
            continue
        lines.append(f"sample {sample.id}")
        lines.append("  body: " + " ; ".join(a.canonical() for a in ex.body))
        for k, path in enumerate(ex.paths):
            lines.append(
                f"  head {k}: " + " ; ".join(a.canonical() for a in path.head)
            )
    Path(args.outfile).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"extracted {len(samples) - n_failed}/{len(samples)} samples -> {args.outfile}")
    return 0


def cmd_closure(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    samples = read_dataset(args.infile)
    cfg = ClosureConfig(
        max_rounds=args.max_rounds,
        max_atoms=args.max_atoms,
        sound_only=not args.unsound,
    )
    rows = []
    for sample in samples:
        try:
            ex = extract_sample(sample, lexicon)
        except ExtractionError as exc:
            rows.append({"id": sample.id, "error": str(exc)})
            continue
        base = closure(ex.body, cfg)
        rows.append(
            {
                "id": sample.id,
                "axioms": [a.canonical() for a in base.atoms[: base.n_axioms]],
                "derived": [a.canonical() for a in base.derived()],
                "traces": base.trace_lines(),
                "truncated": base.truncated,
            }
        )
    write_rows(rows, args.outfile, header=_effective_config(args))
    n_derived = sum(len(r.get("derived", ())) for r in rows)
    print(f"closed {len(rows)} samples, {n_derived} derived atoms -> {args.outfile}")
    return 0


def cmd_augment(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    samples = read_dataset(args.infile)
    _POOL_CTX.update(
        lexicon=lexicon,
        scorer=_scorer_for(args, lexicon),
        threshold=args.epsilon_star,
        mining=MiningConfig(
            max_extra=args.max_extra, max_candidates=args.max_candidates
        ),
    )
    rows = _run_pool(_augment_worker, samples, args.jobs)
    write_rows(rows, args.outfile, header=_effective_config(args))
    print(f"kept {len(rows)} augmented samples from {len(samples)} -> {args.outfile}")
    return 0


def cmd_perturb(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    samples = read_dataset(args.infile)
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    rows = []
    n_applied = 0
    for sample in samples:
        if args.mode == "equivalent":
            variant, applied = perturb_equivalent(sample, lexicon, seed=args.seed)
        else:
            variant, applied = perturb_adversarial(
                sample, lexicon, seed=args.seed, kinds=kinds
            )
        n_applied += int(applied)
        row = variant.to_dict()
        row["source_id"] = sample.id
        row["applied"] = applied
        rows.append(row)
    write_rows(rows, args.outfile, header=_effective_config(args))
    print(f"perturbed {n_applied}/{len(samples)} samples -> {args.outfile}")
    return 0


def cmd_gen_synth(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    cfg = SynthConfig(
        n=args.n,
        n_vars=args.n_vars,
        body_len=args.body_len,
        seed=args.seed,
        p_derived=args.p_derived,
        id_prefix=args.id_prefix,
    )
    samples = generate_synthetic(cfg, lexicon)
    write_dataset(
        samples, args.outfile, header=_effective_config(args), jsonl=args.jsonl
    )
    print(f"generated {len(samples)} samples -> {args.outfile}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    train_set = read_dataset(args.train_file)
    dev_set = read_dataset(args.dev_file) if args.dev_file else []
    model_cfg = _model_config(args)
    train_cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        patience=args.patience,
        seed=args.seed,
        augment_equivalent=args.augment_equivalent,
        target_acc=args.target_acc,
    )
    result = train(
        train_set, dev_set, model_cfg, train_cfg, lexicon,
        progress=lambda msg: print(msg, file=sys.stderr),
    )
    meta = {
        "best_epoch": result.best_epoch,
        "best_dev_acc": result.best_dev_acc,
        "train_seconds": round(result.train_seconds, 3),
        "config": _effective_config(args),
    }
    save_checkpoint(args.outfile, result.params, model_cfg, result.vocab, meta)
    if args.history_file:
        write_rows(result.history, args.history_file, header=_effective_config(args))
    note = f" best_dev_acc={result.best_dev_acc:.4f}" if result.best_dev_acc >= 0 else ""
    print(
        f"trained {len(train_set)} samples in {result.train_seconds:.1f}s,"
        f" best_epoch={result.best_epoch}{note} -> {args.outfile}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    samples = read_dataset(args.infile)
    ck = load_checkpoint(args.checkpoint)
    _POOL_CTX.update(
        params=ck.params, model_cfg=ck.config, lexicon=lexicon, vocab=ck.vocab
    )
    rows = _run_pool(_eval_worker, samples, args.jobs)
    labeled = [r for r in rows if "label" in r]
    hits = sum(int(r["pred"] == r["label"]) for r in labeled)
    if args.outfile:
        write_rows(rows, args.outfile, header=_effective_config(args))
    if labeled:
        print(f"accuracy {hits / len(labeled):.4f} on {len(labeled)} labeled samples")
    else:
        print(f"scored {len(rows)} samples (no labels)")
    return 0


def cmd_consistency(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    samples = read_dataset(args.infile)
    scorer = _scorer_for(args, lexicon)
    report = consistency_eval(scorer, samples, lexicon, seed=args.seed)
    return _finish_perturbation_report(args, report)


def cmd_perception(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    samples = read_dataset(args.infile)
    scorer = _scorer_for(args, lexicon)
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    report = perception_eval(scorer, samples, lexicon, seed=args.seed, kinds=kinds)
    return _finish_perturbation_report(args, report)


def _finish_perturbation_report(args: argparse.Namespace, report: Any) -> int:
    if args.outfile:
        write_rows([report.to_dict()], args.outfile, header=_effective_config(args))
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    samples = read_dataset(args.infile)
    report = stats(samples, lexicon)
    if args.outfile:
        write_rows([report.to_dict()], args.outfile, header=_effective_config(args))
    print(report.as_text())
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    lexicon = _lexicon_for(args)
    report = model_gradcheck(
        d=args.d,
        max_units=args.max_units,
        n_instances=args.instances,
        seed=args.seed,
        eps=args.eps,
        max_coords=args.max_coords,
        lexicon=lexicon,
    )
    print(report)
    return 0 if report.ok and report.max_rel_err <= GRADCHECK_TOLERANCE else 1


_COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "extract": cmd_extract,
    "closure": cmd_closure,
    "augment": cmd_augment,
    "perturb": cmd_perturb,
    "gen-synth": cmd_gen_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "consistency": cmd_consistency,
    "perception": cmd_perception,
    "stats": cmd_stats,
    "gradcheck": cmd_gradcheck,
}


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_usage().rstrip())
        _apply_config(parser, args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (DatasetError, ExtractionError, LexiconError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # pragma: no cover - defensive
        log.exception("internal error")
        return 2


def main() -> None:
    logging.basicConfig(level=logging.WARNING)
    sys.exit(run())


if __name__ == "__main__":
    main()
