"""Command-line entry point: ``frameseq <subcommand> ...``."""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import warnings
from pathlib import Path

from .annotation import LoopConfig, run_loop
from .coherence import REPAIR, STRICT
from .corpus import CorpusError, corpus_stats, read_corpus, write_corpus
from .crf import ModelBank
from .evaluation import (EXACT, PARTIAL, default_grid, eer_summary, pr_curve, score,
                         write_curve_csv, write_report_json)
from .features import load_embeddings
from .neural import NET_FORMAT, load_tagger, save_tagger
from .pipeline import BILSTM, CRF, parse_corpus, train_parser
from .splitter import plan_split
from .synthetic import GeneratorConfig, generate, make_inventory


class CliError(Exception):
    pass


def read_config(path) -> dict:
    """Key-value file (``key = value``, optional ``[section]`` headers ignored).

    Values are read as JSON when they parse, as plain strings otherwise.
    """
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[DEFAULT]\n" + text)
    except configparser.Error as exc:
        raise CliError(f"{path}: {exc}") from None
    out = {}
    for section in [parser.defaults()] + [parser[s] for s in parser.sections()]:
        for key, raw in section.items():
            try:
                out[key] = json.loads(raw)
            except json.JSONDecodeError:
                out[key] = raw
    return out


def _dump(obj, path):
    if path is None:
        json.dump(obj, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2)


def load_model(path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"PK":
        return load_tagger(path)
    return ModelBank.load(path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args):
    cfg = read_config(args.config) if args.config else {}
    n_frames, n_lus = cfg.pop("n_frames", None), cfg.pop("n_lus", None)
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    known = GeneratorConfig.__dataclass_fields__
    unknown = sorted(set(cfg) - set(known))
    if unknown:
        raise CliError(f"unknown generator keys: {', '.join(unknown)}")
    if n_frames is not None or n_lus is not None:
        cfg["frame_inventory"] = make_inventory(n_frames or 5, n_lus or 12, cfg["seed"])
    for key in ("sources",):
        if key in cfg:
            cfg[key] = tuple(cfg[key])
    corpus = generate(GeneratorConfig(**cfg))
    write_corpus(corpus, args.out)
    print(f"wrote {len(corpus.documents)} documents to {args.out}", file=sys.stderr)


def cmd_stats(args):
    report = corpus_stats(read_corpus(args.corpus))
    if args.json:
        _dump(report.as_dict() if args.per_source else {"total": report.total.as_dict(),
                                                         "lu_lexicon_size": report.lu_lexicon_size}, None)
        return
    if args.per_source:
        sys.stdout.write(report.render())
    else:
        for key, value in report.total.as_dict().items():
            print(f"{key}\t{value}")


def cmd_split(args):
    corpus = read_corpus(args.corpus)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plan = plan_split(corpus, args.fraction, args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_corpus(corpus.subset(plan.train_ids), args.out_train)
    write_corpus(corpus.subset(plan.test_ids), args.out_test)
    manifest = args.manifest or str(Path(args.out_train).with_suffix("")) + ".manifest.json"
    plan.write(manifest)
    print(f"train share {plan.achieved:.3f}, JS {plan.divergence:.2e}, manifest {manifest}", file=sys.stderr)


def cmd_train(args):
    train = read_corpus(args.train)
    hyper = read_config(args.hyper) if args.hyper else {}
    hyper.setdefault("seed", args.seed)
    if args.embeddings and args.model != BILSTM:
        raise CliError("--embeddings only applies to --model bilstm")
    pretrained = load_embeddings(args.embeddings) if args.embeddings else None
    model = train_parser(args.model, train, hyper, jobs=args.jobs, pretrained=pretrained)
    if args.model == CRF:
        model.save(args.out)
        print(f"saved {len(model.models)} LU models to {args.out}", file=sys.stderr)
    else:
        save_tagger(model, args.out)
        print(f"saved {NET_FORMAT} tagger to {args.out}", file=sys.stderr)


def cmd_parse(args):
    model = load_model(args.model)
    corpus = read_corpus(args.input)
    result = parse_corpus(model, corpus, args.threshold, args.mode)
    write_corpus(result.as_corpus(corpus), args.out)
    if result.coverage:
        print(f"coverage: {dict(result.coverage)}", file=sys.stderr)


def cmd_eval(args):
    gold = read_corpus(args.gold)
    pred = read_corpus(args.pred, validate=False)
    report = score(gold, pred, args.match, cascade=not args.no_cascade)
    print(report.render())
    if args.out:
        write_report_json(report, args.out)


def cmd_curve(args):
    gold = read_corpus(args.gold)
    pred = read_corpus(args.pred, validate=False)
    curve = pr_curve(gold, pred, default_grid(args.grid), args.match)
    write_curve_csv(curve, args.out)
    eer = {k: p.as_dict() for k, p in eer_summary(curve).items()}
    if args.eer_out:
        _dump(eer, args.eer_out)
    for k, p in eer.items():
        flag = " (boundary)" if p["boundary"] else ""
        print(f"{k} EER {p['value']:.4f} at t={p['threshold']:.3f}{flag}")


def cmd_loop(args):
    pool = read_corpus(args.pool)
    cfg = read_config(args.config) if args.config else {}
    cfg.setdefault("seed", args.seed)
    unknown = sorted(set(cfg) - set(LoopConfig.__dataclass_fields__))
    if unknown:
        raise CliError(f"unknown loop keys: {', '.join(unknown)}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = run_loop(pool, LoopConfig.from_dict(cfg))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    report.write_json(args.out)
    if args.csv:
        report.write_csv(args.csv)
    for r in report.iterations:
        f1 = r.f1("RC")
        print(f"iteration {r.iteration}: {r.annotated} annotated, RC F1 "
              f"{'skipped' if f1 is None else f'{f1:.4f}'}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frameseq", description="Frame semantic parsing as sequence tagging.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("stats", help="corpus counts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--per-source", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="document-atomic train/test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a parser")
    p.add_argument("--model", choices=[CRF, BILSTM], required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--hyper")
    p.add_argument("--embeddings")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="parse a corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--mode", choices=[REPAIR, STRICT], default=REPAIR)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--match", choices=[EXACT, PARTIAL], default=EXACT)
    p.add_argument("--no-cascade", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="precision/recall sweep and EER")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--match", choices=[EXACT, PARTIAL], default=EXACT)
    p.add_argument("--out", required=True)
    p.add_argument("--eer-out")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("loop", help="simulate the annotation loop")
    p.add_argument("--pool", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_loop)
    return ap


def _fail(kind: str, message: str, code: int = 1) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except FileNotFoundError as exc:
        return _fail("missing_file", f"{exc.filename}: no such file")
    except (CorpusError, CliError, ValueError, KeyError, TypeError) as exc:
        return _fail(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
