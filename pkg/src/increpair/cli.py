"""Command-line entry point: ``increpair <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import (CorpusError, SynthConfig, Token, generate_synthetic, read_corpus,
                     write_corpus)
from .evaluation import evaluate_runs, format_table
from .features import FEATURE_NAMES, STAGES, FeatureError, information_gain_ranking
from .forest import ForestError, ForestParams
from .lm import LMError
from .pipeline import PipelineError, run_detector
from .sweep import POW2_5, POW2_8, SweepConfig, format_report, run_sweep
from .training import Bundle, TrainingError, cross_fold_stage_data, train_bundle

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DATA_ERRORS = (CorpusError, LMError, TrainingError, ForestError, FeatureError, PipelineError,
               FileNotFoundError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _kv_floats(text: str) -> dict[str, float]:
    """Parse ``a=1,b=2`` into a dict of floats."""
    out = {}
    for part in filter(None, text.split(",")):
        k, sep, v = part.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected key=value, got {part!r}")
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {v!r}") from None
    return out


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="increpair", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file of option defaults for the subcommand")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--n-utts", type=int, default=1000)
    s.add_argument("--vocab-size", type=int, default=60)
    s.add_argument("--repair-rate", type=float, default=0.1)
    s.add_argument("--kind-mix", type=_kv_floats, default={"repeat": 0.6, "substitute": 0.3,
                                                           "delete": 0.1})
    s.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train a detector bundle from a marked-up corpus")
    t.add_argument("corpus")
    t.add_argument("--out", required=True)
    t.add_argument("--folds", type=int, default=10)
    t.add_argument("--costs", type=_kv_floats, default={},
                   help="per-stage fn costs, e.g. rp_start=2,rm_start=16,rp_end=8")
    t.add_argument("--seed", type=int, default=0)

    d = sub.add_parser("detect", help="stream word<TAB>pos lines to JSON edit scripts")
    d.add_argument("--bundle", required=True)
    d.add_argument("--capacity", type=int, default=1, choices=(1, 2))
    d.add_argument("--input", default="-")
    d.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("evaluate", help="run a bundle over a corpus and report all metrics")
    e.add_argument("corpus")
    e.add_argument("--bundle", required=True)
    e.add_argument("--capacity", type=int, default=1, choices=(1, 2))
    e.add_argument("--report-json")
    e.add_argument("--seed", type=int, default=0)

    w = sub.add_parser("sweep", help="evaluate the cost-function grid")
    w.add_argument("corpus")
    w.add_argument("--bundle", required=True)
    w.add_argument("--results", required=True, help="JSON-lines results file (resumable)")
    w.add_argument("--rp-start-costs", type=_float_list, default=POW2_8)
    w.add_argument("--rm-start-costs", type=_float_list, default=POW2_5)
    w.add_argument("--rp-end-costs", type=_float_list, default=POW2_8)
    w.add_argument("--capacities", type=_int_list, default=(1, 2))
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--report")
    w.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("rank-features", help="information-gain ranking of a stage's features")
    r.add_argument("--stage", required=True, choices=STAGES)
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--bundle")
    src.add_argument("--corpus")
    r.add_argument("--folds", type=int, default=10)
    r.add_argument("--seed", type=int, default=0)
    p.subcommands = sub.choices
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for sp in parser.subcommands.values():
        valid = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in cfg.items() if k in valid})


def cmd_synth(a) -> int:
    cfg = SynthConfig(n_utts=a.n_utts, vocab_size=a.vocab_size, repair_rate=a.repair_rate,
                      kind_mix=a.kind_mix, seed=a.seed)
    try:
        corpus = generate_synthetic(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_corpus(a.out, corpus, header=f"synthetic corpus seed={a.seed} n={a.n_utts} "
                                        f"repair_rate={a.repair_rate}")
    print(f"wrote {len(corpus)} utterances to {a.out}", file=sys.stderr)
    return EXIT_OK


def cmd_train(a) -> int:
    if a.folds < 2:
        raise UsageError("--folds must be at least 2 (out-of-fold LM features need held-out folds)")
    corpus = read_corpus(a.corpus)
    bundle = train_bundle(corpus, folds=a.folds, seed=a.seed, costs=a.costs,
                          params=ForestParams(seed=a.seed))
    bundle.save(a.out)
    print(f"bundle written to {a.out}", file=sys.stderr)
    return EXIT_OK


def _emit(rec: dict, out) -> None:
    out.write(json.dumps(rec) + "\n")
    out.flush()


def cmd_detect(a, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    bundle = Bundle.load(a.bundle)
    det = bundle.detector(a.capacity)
    src = stdin if a.input == "-" else open(a.input, encoding="utf-8")
    utt = 0
    lineno = 0
    try:
        while True:
            line = src.readline()
            if not line:
                break
            lineno += 1
            text = line.rstrip("\n").rstrip("\r")
            if not text.strip():
                if det.words:
                    utt += 1
                    det.reset()
                continue
            parts = text.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                _emit({"utt": utt, "line": lineno, "error": "expected word<TAB>pos"}, stdout)
                continue
            word, pos = parts[0].strip().lower(), parts[1].strip()
            edits = det.consume(Token(word, pos, len(det.words)))
            _emit({"utt": utt, "index": len(det.words) - 1, "word": word,
                   "edits": [e.as_dict() for e in edits]}, stdout)
    finally:
        if src is not stdin:
            src.close()
    return EXIT_OK


def cmd_evaluate(a) -> int:
    corpus = read_corpus(a.corpus)
    det = Bundle.load(a.bundle).detector(a.capacity)
    rep = evaluate_runs(corpus, [run_detector(det, u.tokens) for u in corpus])
    print(format_table([(f"capacity={a.capacity}", rep)]))
    print("DA curve: " + " ".join(f"{v:.3f}" for v in rep.da_curve))
    if a.report_json:
        Path(a.report_json).write_text(rep.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_sweep(a) -> int:
    corpus = read_corpus(a.corpus)
    bundle = Bundle.load(a.bundle, with_data=True)
    cfg = SweepConfig(tuple(a.rp_start_costs), tuple(a.rm_start_costs), tuple(a.rp_end_costs),
                      tuple(a.capacities))
    if any(c not in (1, 2) for c in cfg.stack_capacities):
        raise UsageError("capacities must be 1 or 2")
    records = run_sweep(bundle, corpus, cfg, a.results, ForestParams(seed=a.seed),
                        workers=a.workers, bundle_dir=a.bundle)
    text = format_report(records)
    print(text)
    if a.report:
        Path(a.report).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_rank_features(a) -> int:
    if a.bundle:
        data = Bundle.load(a.bundle, with_data=True).data
        if a.stage not in data:
            raise TrainingError("bundle holds no stored stage data")
    else:
        corpus = read_corpus(a.corpus)
        data = cross_fold_stage_data(corpus, max(2, min(a.folds, len(corpus))), a.seed)
    d = data[a.stage]
    ranked = information_gain_ranking(d.X, d.y, FEATURE_NAMES[a.stage], a.folds, a.seed)
    print(f"{'feature':<32}{'merit':>10}{'sd':>8}{'rank':>8}{'sd':>8}")
    for r in ranked:
        print(f"{r.name:<32}{r.merit:>10.4f}{r.merit_sd:>8.4f}{r.rank:>8.2f}{r.rank_sd:>8.2f}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "detect": cmd_detect,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep, "rank-features": cmd_rank_features}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"increpair: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"increpair: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
