"""Final, incremental and diachronic metrics for detector output.

Label states are sequences of tag sets, one per word.  Corpus-level F-scores
are micro-averaged: counts are pooled over all words of all utterances.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .corpus import Utterance, coarse, gold_labels, to_incremental_gold
from .pipeline import LabelEdit, UtteranceRun, diff_states, replay

DA_DISTANCES = 6
TS_METRICS = ("f_rm", "f_s", "da", "eo", "po")
LOWER_IS_BETTER = ("eo", "po")


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f: float
    undefined: bool = False


def _is_rm(tags) -> bool:
    return any(t.startswith("rm") for t in tags)


def prf(tp: int, fp: int, fn: int, empty_value: float = 0.0) -> PRF:
    """Precision, recall and F1 from counts; zero denominators give 0 (flagged)."""
    undefined = False
    if tp + fp == 0:
        p, undefined = 0.0, True
    else:
        p = tp / (tp + fp)
    if tp + fn == 0:
        r, undefined = 0.0, True
    else:
        r = tp / (tp + fn)
    if tp + fp == 0 and tp + fn == 0:
        return PRF(empty_value, empty_value, empty_value, True)
    # same value as 2pr/(p+r), without the intermediate rounding
    f = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return PRF(p, r, f, undefined)


def _check_aligned(gold, hyp) -> None:
    if len(gold) != len(hyp):
        raise ValueError(f"{len(gold)} gold vs {len(hyp)} hypothesised utterances")
    for g, h in zip(gold, hyp):
        if len(g) != len(h):
            raise ValueError("gold and hypothesis utterances differ in length")


def f_score_rm(gold: Sequence[Sequence], hyp: Sequence[Sequence]) -> PRF:
    """Micro F over reparandum words; arguments are per-utterance label states."""
    _check_aligned(gold, hyp)
    tp = fp = fn = 0
    for g_utt, h_utt in zip(gold, hyp):
        for g, h in zip(g_utt, h_utt):
            gi, hi = _is_rm(g), _is_rm(h)
            tp += gi and hi
            fp += hi and not gi
            fn += gi and not hi
    return prf(tp, fp, fn)


def f_score_structure(gold: Sequence[Sequence], hyp: Sequence[Sequence]) -> PRF:
    """Micro F over (word, category) pairs for the rm, ed and rp categories.

    Interregnum and isolated edit terms are both scored as ``ed``.  With no
    positives on either side the score is 1.0 and flagged as undefined.
    """
    _check_aligned(gold, hyp)
    tp = fp = fn = 0
    for g_utt, h_utt in zip(gold, hyp):
        for g, h in zip(g_utt, h_utt):
            gc, hc = coarse(g), coarse(h)
            tp += len(gc & hc)
            fp += len(hc - gc)
            fn += len(gc - hc)
    return prf(tp, fp, fn, empty_value=1.0)


def delayed_accuracy(histories: Sequence[Sequence[Sequence]], gold: Sequence[Sequence],
                     max_d: int = DA_DISTANCES) -> tuple[list[float], float]:
    """Reparandum F of word ``t - d`` as labelled in snapshot ``t``, pooled over the corpus.

    Returns the curve for d = 1..``max_d`` and its mean.
    """
    if len(histories) != len(gold):
        raise ValueError("one snapshot history per utterance required")
    curve = []
    for d in range(1, max_d + 1):
        tp = fp = fn = 0
        for snaps, g in zip(histories, gold):
            for t in range(d, len(snaps)):
                hi = _is_rm(snaps[t][t - d])
                gi = _is_rm(g[t - d])
                tp += gi and hi
                fp += hi and not gi
                fn += gi and not hi
        curve.append(prf(tp, fp, fn).f)
    return curve, sum(curve) / len(curve)


def _coarse_steps(edit_log: Sequence[Sequence[LabelEdit]]) -> list[list[LabelEdit]]:
    """Re-express an edit log over the rm / ed / rp categories, step by step."""
    out = []
    fine: list[LabelEdit] = []
    prev: tuple = ()
    for step in edit_log:
        fine.extend(step)
        state = replay(fine)
        cur = tuple(coarse(s) for s in state)
        out.append(diff_states(prev, cur))
        prev = cur
    return out


def edit_overhead_counts(edit_log: Sequence[Sequence[LabelEdit]],
                         incremental_gold: Sequence[Sequence], use_coarse: bool = True
                         ) -> tuple[int, int]:
    """(unnecessary, total) edits for one utterance.

    An edit emitted at step ``t`` is necessary iff it belongs to the script
    that turns incremental gold ``t - 1`` into incremental gold ``t``.
    """
    steps = _coarse_steps(edit_log) if use_coarse else [list(s) for s in edit_log]
    unnecessary = total = 0
    prev: tuple = ()
    for t, emitted in enumerate(steps):
        g = incremental_gold[t] if t < len(incremental_gold) else prev
        g = tuple(coarse(s) for s in g) if use_coarse else tuple(g)
        needed = set(diff_states(prev, g))
        for e in emitted:
            total += 1
            unnecessary += e not in needed
        prev = g
    return unnecessary, total


def edit_overhead(edit_log: Sequence[Sequence[LabelEdit]], incremental_gold: Sequence[Sequence],
                  use_coarse: bool = True) -> float:
    """Fraction of unnecessary edits for one utterance; 0 for an empty log."""
    bad, tot = edit_overhead_counts(edit_log, incremental_gold, use_coarse)
    return bad / tot if tot else 0.0


def corpus_edit_overhead(edit_logs, incremental_golds, use_coarse: bool = True) -> float:
    """Edit overhead with counts pooled over utterances."""
    bad = tot = 0
    for log, gold in zip(edit_logs, incremental_golds):
        u, t = edit_overhead_counts(log, gold, use_coarse)
        bad += u
        tot += t
    return bad / tot if tot else 0.0


def time_to_detection(outputs: Sequence[Sequence[frozenset]],
                      gold_pairs: Sequence[Iterable[tuple[int, int]]]) -> tuple[float | None, float | None]:
    """Mean words consumed from rm_start and from rp_start until a correct repair is output.

    ``outputs[u][t]`` is the set of (rm_start, rp_start) pairs shown after
    word ``t``.  Only repairs present in the final output are counted;
    ``(None, None)`` when there are none.
    """
    td_rm, td_rp = [], []
    for outs, pairs in zip(outputs, gold_pairs):
        if not outs:
            continue
        final = outs[-1]
        for pair in pairs:
            if pair not in final:
                continue
            first = next(t for t, o in enumerate(outs) if pair in o)
            td_rm.append(first - pair[0] + 1)
            td_rp.append(first - pair[1] + 1)
    if not td_rm:
        return None, None
    return sum(td_rm) / len(td_rm), sum(td_rp) / len(td_rp)


def processing_overhead(counts: Iterable[Iterable[int]]) -> float:
    """Classifier invocations per word."""
    total = words = 0
    for utt in counts:
        for c in utt:
            total += c
            words += 1
    return total / words if words else 0.0


@dataclass
class MetricsReport:
    f_rm: float
    f_s: float
    da: float
    da_curve: list[float]
    eo: float
    po: float
    td_rm: float | None
    td_rp: float | None
    ts: float | None = None
    precision_rm: float = 0.0
    recall_rm: float = 0.0
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def total_score(reports: Sequence[MetricsReport]) -> list[float]:
    """Mean over the five metrics of each setting's fraction of the best setting's score.

    Higher-is-better metrics use score / best; lower-is-better metrics use
    best / score, capped at 1.
    """
    if not reports:
        return []
    ts = [0.0] * len(reports)
    for m in TS_METRICS:
        vals = [getattr(r, m) for r in reports]
        if m in LOWER_IS_BETTER:
            best = min(vals)
            fr = [1.0 if v == best else min(1.0, best / v) if v > 0 else 1.0 for v in vals]
        else:
            best = max(vals)
            fr = [1.0 if v == best else v / best if best > 0 else 1.0 for v in vals]
        for i, f in enumerate(fr):
            ts[i] += f / len(TS_METRICS)
    return ts


def evaluate_runs(corpus: Sequence[Utterance], runs: Sequence[UtteranceRun]) -> MetricsReport:
    if len(corpus) != len(runs):
        raise ValueError("one run per utterance required")
    gold = [gold_labels(u) for u in corpus]
    hyp = [r.final for r in runs]
    rm = f_score_rm(gold, hyp)
    fs = f_score_structure(gold, hyp)
    curve, da = delayed_accuracy([r.snapshots for r in runs], gold)
    eo = corpus_edit_overhead([r.edit_log for r in runs], [to_incremental_gold(u) for u in corpus])
    po = processing_overhead(r.classifications for r in runs)
    td_rm, td_rp = time_to_detection([r.outputs for r in runs],
                                     [[(x.rm_start, x.rp_start) for x in u.repairs] for u in corpus])
    flags = []
    if rm.undefined:
        flags.append("f_rm_undefined")
    if fs.undefined:
        flags.append("f_s_undefined")
    return MetricsReport(rm.f, fs.f, da, curve, eo, po, td_rm, td_rp,
                         precision_rm=rm.precision, recall_rm=rm.recall, flags=flags)


def format_table(rows: Sequence[tuple[str, MetricsReport]]) -> str:
    """Plain-text table with one row per labelled report."""
    head = f"{'setting':<28}{'F_rm':>8}{'F_s':>8}{'DA':>8}{'EO':>8}{'PO':>8}{'TD_rm':>8}{'TD_rp':>8}{'TS':>8}"
    lines = [head, "-" * len(head)]

    def fmt(v):
        return f"{v:8.3f}" if isinstance(v, (int, float)) and not (isinstance(v, float) and math.isnan(v)) else f"{'-':>8}"

    for label, r in rows:
        lines.append(f"{label:<28}{fmt(r.f_rm)}{fmt(r.f_s)}{fmt(r.da)}{fmt(r.eo)}{fmt(r.po)}"
                     f"{fmt(r.td_rm)}{fmt(r.td_rp)}{fmt(r.ts)}")
    return "\n".join(lines)
