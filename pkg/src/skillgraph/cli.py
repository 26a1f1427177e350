"""Command-line front end.

Subcommands: ``train``, ``complete``, ``predict``, ``evaluate``, ``report``.
Exit status is 0 on success, 1 on invalid input, 2 on runtime failure
(divergence, I/O). Every error is a single stderr line starting ``error:``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ConfigError, Hyperparams
from .data import (
    DataError,
    Entity,
    EntityCatalog,
    SparseIncidence,
    ingest_edges,
    ingest_entities,
    split_holdout,
)
from .encoder import build_vocab, load_pretrained_embeddings
from .evaluation import evaluate
from .model import complete_matrix, init_model, load_checkpoint, predict_entry, save_checkpoint
from .reporting import (
    ProficiencyThresholds,
    clamp_predictions,
    demand_report,
    write_report,
)
from .training import DivergenceError, train

log = logging.getLogger("skillgraph")

SPLIT_SEED_OFFSET = 0
INIT_SEED_OFFSET = 1
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

# flag dest -> Hyperparams field
HP_FLAGS = {
    "seed": "seed",
    "epochs": "epochs",
    "lr": "lr",
    "latent_dim": "k",
    "embed_dim": "embed_dim",
    "filters": "n_filters",
    "windows": "windows",
    "min_count": "min_count",
    "l2": "l2",
    "batch_mode": "batch_mode",
    "activation": "activation",
}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _windows(text):
    try:
        values = tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skillgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    p.add_argument("--entities", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--config", help="JSON file of hyperparameters; flags override it")
    # None defaults let config-file values show through unless a flag is given
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--filters", type=int)
    p.add_argument("--windows", type=_windows, help="e.g. 1,2")
    p.add_argument("--min-count", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--batch-mode", choices=("per-edge", "full-batch"))
    p.add_argument("--activation", choices=("relu", "none"))
    p.add_argument("--holdout", type=float, default=None,
                   help="fraction of edges held out for evaluation (0 disables; default 0.2)")
    p.add_argument("--freeze-encoder", action="store_true", default=None)
    p.add_argument("--no-encoder", action="store_true", default=None)
    p.add_argument("--no-shuffle", action="store_true", default=None)
    p.add_argument("--pretrained-embeddings")
    p.add_argument("--trace", help="write per-epoch loss as TSV")

    p = sub.add_parser("complete", help="write every pair's clamped demand in edges format")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="output path (default: stdout)")

    p = sub.add_parser("predict", help="raw predicted demand for one pair")
    p.add_argument("--model", required=True)
    p.add_argument("--occupation", required=True)
    p.add_argument("--skill", required=True)

    p = sub.add_parser("evaluate", help="error metrics on a held-out edges file")
    p.add_argument("--model", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--train-mean", type=float, help="baseline constant (default: from checkpoint)")
    p.add_argument("--format", choices=("json", "tsv"), default="json")

    p = sub.add_parser("report", help="coverage fractions and proficiency bins for one skill")
    p.add_argument("--model", required=True)
    p.add_argument("--skill", required=True)
    p.add_argument("--edges", help="observed edges (default: those stored in the checkpoint)")
    p.add_argument("--threshold", type=float, help="demand cutoff (default: --t-basic)")
    p.add_argument("--t-basic", type=float, default=ProficiencyThresholds.t_basic)
    p.add_argument("--t-advanced", type=float, default=ProficiencyThresholds.t_advanced)
    p.add_argument("--out", help="output path (default: stdout)")
    return parser


def _require_files(*paths):
    for path in paths:
        if path is not None and not os.path.exists(path):
            raise DataError("no such file", path)


def resolve_hyperparams(args) -> tuple[Hyperparams, float]:
    """Defaults, then the config file, then explicit flags."""
    values = {}
    holdout = 0.2
    if args.config:
        _require_files(args.config)
        with open(args.config, encoding="utf-8") as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: {exc.msg}") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        holdout = float(cfg.pop("holdout", holdout))
        unknown = set(cfg) - set(Hyperparams.field_names())
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {', '.join(sorted(unknown))}")
        values.update(cfg)
    for flag, name in HP_FLAGS.items():
        if getattr(args, flag) is not None:
            values[name] = getattr(args, flag)
    if args.freeze_encoder:
        values["freeze_encoder"] = True
    if args.no_encoder:
        values["encoder_enabled"] = False
    if args.no_shuffle:
        values["shuffle"] = False
    if args.holdout is not None:
        holdout = args.holdout
    if not 0.0 <= holdout < 1.0:
        raise ConfigError(f"--holdout must be in [0, 1), got {holdout}")
    try:
        return Hyperparams(**values), holdout
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _edge_records(incidence, catalog):
    return [[catalog.occupations[e.occ].id, catalog.skills[e.skill].id, e.demand]
            for e in incidence]


def cmd_train(args, out):
    _require_files(args.entities, args.edges, args.pretrained_embeddings)
    hp, holdout = resolve_hyperparams(args)
    catalog = ingest_entities(args.entities)
    observed = ingest_edges(args.edges, catalog)
    if len(observed) == 0:
        raise DataError("no edges", args.edges)
    if holdout > 0:
        train_set, heldout = split_holdout(observed, holdout, hp.seed + SPLIT_SEED_OFFSET)
    else:
        train_set, heldout = observed, None
    vocab = build_vocab(catalog.texts(), hp.min_count)
    model = init_model(catalog, vocab, hp, hp.seed + INIT_SEED_OFFSET)
    if args.pretrained_embeddings:
        n = load_pretrained_embeddings(args.pretrained_embeddings, vocab, model.encoder)
        log.info("loaded %d pretrained embedding rows", n)
    log.info("training on %d edges (%d held out)", len(train_set),
             0 if heldout is None else len(heldout))
    model, trace = train(model, train_set, hp, trace_path=args.trace)
    train_mean = train_set.mean_demand()
    model.meta = {
        "hyperparams": {**vars(hp), "windows": list(hp.windows)},
        "holdout": holdout,
        "observed": _edge_records(observed, catalog),
        "heldout": [] if heldout is None else _edge_records(heldout, catalog),
        "train_mean": train_mean,
        "final_loss": trace[-1] if len(trace) else None,
    }
    save_checkpoint(model, args.out)
    summary = {"checkpoint": args.out, "epochs": hp.epochs,
               "final_loss": model.meta["final_loss"], "n_train": len(train_set)}
    if heldout is not None:
        summary["eval"] = json.loads(evaluate(model, heldout, train_mean).to_json())
    out.write(json.dumps(summary, sort_keys=True) + "\n")


def _catalog_of(model) -> EntityCatalog:
    return EntityCatalog(
        tuple(Entity(i, i, "") for i in model.occupation_ids),
        tuple(Entity(s, s, "") for s in model.skill_ids),
    )


def _stored_observed(model, catalog) -> SparseIncidence:
    rows = [(catalog.occupation_index(o), catalog.skill_index(s), d)
            for o, s, d in model.meta.get("observed", [])]
    return SparseIncidence(rows, catalog.n_occupations, catalog.n_skills)


def _load(path):
    _require_files(path)
    return load_checkpoint(path)


def _open_out(path, default):
    return open(path, "w", encoding="utf-8", newline="\n") if path else default


def cmd_complete(args, out):
    model = _load(args.model)
    catalog = _catalog_of(model)
    clamped = clamp_predictions(complete_matrix(model), _stored_observed(model, catalog))
    fh = _open_out(args.out, out)
    try:
        fh.write("occupation_id\tskill_id\tdemand\n")
        for i, occ_id in enumerate(model.occupation_ids):
            for j, skill_id in enumerate(model.skill_ids):
                fh.write(f"{occ_id}\t{skill_id}\t{float(clamped[i, j])!r}\n")
    finally:
        if fh is not out:
            fh.close()


def cmd_predict(args, out):
    model = _load(args.model)
    catalog = _catalog_of(model)
    i = catalog.occupation_index(args.occupation)
    j = catalog.skill_index(args.skill)
    out.write(f"{predict_entry(model, i, j)!r}\n")


def cmd_evaluate(args, out):
    model = _load(args.model)
    _require_files(args.edges)
    heldout = ingest_edges(args.edges, _catalog_of(model))
    train_mean = args.train_mean if args.train_mean is not None else model.meta.get("train_mean")
    if train_mean is None:
        raise ConfigError("checkpoint has no stored train mean; pass --train-mean")
    report = evaluate(model, heldout, float(train_mean))
    out.write((report.to_json() if args.format == "json" else report.to_tsv()) + "\n")


def cmd_report(args, out):
    model = _load(args.model)
    catalog = _catalog_of(model)
    thresholds = ProficiencyThresholds(args.t_basic, args.t_advanced)
    threshold = args.threshold if args.threshold is not None else thresholds.t_basic
    j = catalog.skill_index(args.skill)
    if args.edges:
        _require_files(args.edges)
        observed = ingest_edges(args.edges, catalog)
    else:
        observed = _stored_observed(model, catalog)
    clamped = clamp_predictions(complete_matrix(model), observed)
    report = demand_report(clamped, observed, j, threshold, args.skill, thresholds)
    fh = _open_out(args.out, out)
    try:
        write_report(fh, clamped, observed, j, report, model.occupation_ids, args.skill, thresholds)
    finally:
        if fh is not out:
            fh.close()


COMMANDS = {
    "train": cmd_train,
    "complete": cmd_complete,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def _one_line(exc) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


def dispatch(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    level = os.environ.get("SKILLGRAPH_LOG", "quiet").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=err)
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, out)
    except DivergenceError as exc:
        err.write(f"error: divergence: {_one_line(exc)}\n")
        return 2
    except ValueError as exc:
        err.write(f"error: {_one_line(exc)}\n")
        return 1
    except OSError as exc:
        err.write(f"error: I/O: {_one_line(exc)}\n")
        return 2
    return 0


def main():
    sys.exit(dispatch())
