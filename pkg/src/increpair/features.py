"""Per-stage feature vectors and information-gain feature ranking.

All stages read a :class:`PrefixView`: the words and POS tags seen so far,
which of them are currently believed to be edit terms, and which are excised
as reparanda.  The "clean history" of a position is the sequence of earlier
positions that are neither; language-model features condition on it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lm import BOS, NGramModel

STAGES = ("edit", "rp_start", "rm_start", "rp_end")
MODELS = ("lex", "pos")
MAX_BACK = 7
BEST_SCAN = 3

_RP_START_PER_MODEL = ("s", "WML", "DeltaWML", "BestWMLBoost", "H", "InformationGain",
                       "DeltaH", "BestEntropyReduce")
_RM_START_PER_MODEL = ("WMLboost", "DeltaWMLboost", "s_cand", "WML_cand", "H_cand",
                       "s_rp_clean", "H_rp_clean", "SurprisalDrop", "KL")
_RP_END_PER_MODEL = ("KL", "RRD", "s", "WML", "H", "DeltaWML")

FEATURE_NAMES: dict[str, tuple[str, ...]] = {
    "edit": ("s_edit", "s_lex", "s_diff", "s_edit_o", "s_lex_o", "s_diff_o",
             "skip_gain", "delayed", "o_is_ed"),
    "rp_start": tuple(f"{f}_{m}" for m in MODELS for f in _RP_START_PER_MODEL) + (
        "w_i-1=w_i", "w_i-2=w_i", "w_i-3=w_i", "POS_i-1=POS_i", "POS_i-2=POS_i",
        "POS_i-3=POS_i", "edit"),
    "rm_start": tuple(f"{f}_{m}" for m in MODELS for f in _RM_START_PER_MODEL) + (
        "distance", "rm_len", "w_cand=w_rp", "POS_cand=POS_rp", "w_cand+1=w_rp",
        "POS_cand+1=POS_rp", "w_cand-1=w_rp", "POS_cand-1=POS_rp", "edit_in_span",
        "edit_before_rp", "InformationGain_rp_clean_lex", "cand_is_utt_initial",
        "cand_in_repair", "BoostMargin_lex"),
    "rp_end": tuple(f"{f}_{m}" for f in _RP_END_PER_MODEL for m in MODELS) + (
        "rp_len", "rm_len", "len_diff", "len_equal", "w_cand=w_rm_end", "POS_cand=POS_rm_end",
        "words_equal", "pos_equal", "edit_before", "KL_onsets_pos", "at_onset"),
}
EXPECTED_SIZES = {"edit": 9, "rp_start": 23, "rm_start": 32, "rp_end": 23}


class FeatureError(ValueError):
    pass


class FeatureVector:
    """Named feature values for one classification decision."""

    __slots__ = ("stage", "names", "values")

    def __init__(self, stage: str, values: Sequence[float], names: tuple[str, ...] | None = None):
        self.stage = stage
        self.names = FEATURE_NAMES[stage] if names is None else tuple(names)
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.shape != (len(self.names),):
            raise FeatureError(f"{stage}: {self.values.shape[0]} values for {len(self.names)} names")

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


@dataclass
class PrefixView:
    """Read-only picture of the input so far as seen by the feature functions.

    ``repair_phase`` holds positions inside repair phases of accepted repairs.
    """

    words: list[str]
    pos: list[str]
    edits: set[int] = field(default_factory=set)
    excised: set[int] = field(default_factory=set)
    repair_phase: set[int] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.words)

    def clean_before(self, i: int, keep: Sequence[int] = ()) -> list[int]:
        """Positions before ``i`` that are neither edits nor excised (``keep`` overrides excision)."""
        edits, ex = self.edits, self.excised
        if keep:
            ex = ex - set(keep)
        return [j for j in range(i) if j not in edits and j not in ex]

    def toks(self, model: str) -> list[str]:
        return self.words if model == "lex" else self.pos


@dataclass(frozen=True)
class LMSet:
    lex: NGramModel
    pos: NGramModel
    edit: NGramModel

    def get(self, key: str) -> NGramModel:
        return self.lex if key == "lex" else self.pos if key == "pos" else self.edit


class LMScorer:
    """Memoised language-model lookups keyed by (model, two-token context, token)."""

    def __init__(self, lms: LMSet):
        self.lms = lms
        self._ctx: dict = {}
        self._ent: dict = {}
        self._kl: dict = {}

    def _context(self, key: str, hist: Sequence[str]) -> tuple:
        m = self.lms.get(key)
        return m._effective(m.context(hist))

    def word(self, key: str, hist: Sequence[str], tok: str) -> tuple[float, float]:
        """(surprisal, WML) of ``tok`` after ``hist``."""
        k = (key, tuple(hist[-2:]), tok)
        val = self._ctx.get(k)
        if val is None:
            m = self.lms.get(key)
            p = m.prob(tok, hist[-2:])
            pu = m.unigram_prob(tok)
            s = -math.log2(p)
            denom = -math.log2(pu)
            val = self._ctx[k] = (s, -s / denom if denom else 0.0)
        return val

    def entropy(self, key: str, hist: Sequence[str]) -> float:
        k = (key, tuple(hist[-2:]))
        val = self._ent.get(k)
        if val is None:
            val = self._ent[k] = self.lms.get(key).entropy(hist[-2:])
        return val

    def kl(self, key: str, h1: Sequence[str], h2: Sequence[str]) -> float:
        k = (key, tuple(h1[-2:]), tuple(h2[-2:]))
        val = self._kl.get(k)
        if val is None:
            val = self._kl[k] = self.lms.get(key).kl_divergence(h1[-2:], h2[-2:])
        return val

    def logprob(self, key: str, hist: Sequence[str], toks: Sequence[str]) -> float:
        hist = list(hist)
        total = 0.0
        for t in toks:
            total -= self.word(key, hist, t)[0]
            hist.append(t)
        return total


def _hist(view: PrefixView, key: str, idxs: Sequence[int]) -> list[str]:
    toks = view.toks(key)
    return [toks[j] for j in idxs[-2:]]


class FeatureExtractor:
    """Computes the four stage vectors from a :class:`PrefixView`."""

    def __init__(self, lms: LMSet, scorer: LMScorer | None = None):
        self.lms = lms
        self.scorer = scorer or LMScorer(lms)

    # -- edit stage -----------------------------------------------------------

    def _edit_scores(self, view: PrefixView, t: int) -> tuple[float, float]:
        sc = self.scorer
        prev = [view.words[t - 1]] if t > 0 and (t - 1) in view.edits else [BOS]
        s_edit = sc.word("edit", prev, view.words[t])[0]
        s_lex = sc.word("lex", _hist(view, "lex", view.clean_before(t)), view.words[t])[0]
        return s_edit, s_lex

    def edit_features(self, view: PrefixView, n: int, revisit: bool = False) -> FeatureVector:
        """Edit-term features for ``w_n`` or, with ``revisit``, for ``w_{n-1}``."""
        t = n - 1 if revisit else n
        if t < 0 or n >= len(view):
            raise FeatureError(f"edit target {t} outside prefix of length {len(view)}")
        s_edit, s_lex = self._edit_scores(view, t)
        o = n if revisit else n - 1
        if o >= 0:
            s_edit_o, s_lex_o = self._edit_scores(view, o)
        else:
            s_edit_o = s_lex_o = 0.0
        skip_gain = 0.0
        if revisit:
            # how much easier w_n becomes once w_{n-1} is skipped
            with_t = view.clean_before(n, keep=())
            without = [j for j in with_t if j != t]
            if t not in with_t:
                with_t = sorted(with_t + [t])
            sc = self.scorer
            skip_gain = (sc.word("lex", _hist(view, "lex", with_t), view.words[n])[0]
                         - sc.word("lex", _hist(view, "lex", without), view.words[n])[0])
        o_is_ed = float(o >= 0 and o in view.edits)
        return FeatureVector("edit", [s_edit, s_lex, s_lex - s_edit, s_edit_o, s_lex_o,
                                      s_lex_o - s_edit_o, skip_gain, float(revisit), o_is_ed])

    # -- rp_start -------------------------------------------------------------

    def _node(self, view: PrefixView, key: str, i: int, hist_idx: Sequence[int]):
        """(s, WML, H_before, H_after) of position ``i`` after the positions ``hist_idx``."""
        sc = self.scorer
        h = _hist(view, key, hist_idx)
        tok = view.toks(key)[i]
        s, w = sc.word(key, h, tok)
        return s, w, sc.entropy(key, h), sc.entropy(key, (h + [tok])[-2:])

    def rp_start_features(self, view: PrefixView, n: int) -> FeatureVector:
        hist = view.clean_before(n)
        vals: list[float] = []
        for key in MODELS:
            s, wml_n, h_before, h_n = self._node(view, key, n, hist)
            if hist:
                p = hist[-1]
                wml_prev = self._node(view, key, p, hist[:-1])[1]
            else:
                wml_prev = wml_n
            best_boost = best_reduce = 0.0
            have = False
            for k in range(1, min(BEST_SCAN, len(hist)) + 1):
                _, w_ex, _, h_ex = self._node(view, key, n, hist[:-k])
                boost, reduce = w_ex - wml_n, h_n - h_ex
                if not have:
                    best_boost, best_reduce, have = boost, reduce, True
                else:
                    best_boost, best_reduce = max(best_boost, boost), max(best_reduce, reduce)
            vals += [s, wml_n, wml_prev - wml_n, best_boost, h_n, h_before - s,
                     h_before - h_n, best_reduce]
        for toks in (view.words, view.pos):
            for x in (1, 2, 3):
                vals.append(float(len(hist) >= x and toks[hist[-x]] == toks[n]))
        vals.append(float(n > 0 and (n - 1) in view.edits))
        return FeatureVector("rp_start", vals)

    # -- rm_start -------------------------------------------------------------

    def candidates(self, view: PrefixView, rp: int) -> list[int]:
        """Clean positions within the backward window of ``rp``, nearest first."""
        return [j for j in reversed(view.clean_before(rp)) if rp - j <= MAX_BACK]

    def _boost(self, view: PrefixView, key: str, rp: int, hist: list[int], cand: int) -> float:
        ex = [j for j in hist if j < cand]
        sc = self.scorer
        tok = view.toks(key)[rp]
        return sc.word(key, _hist(view, key, ex), tok)[1] - sc.word(key, _hist(view, key, hist), tok)[1]

    def rm_start_features(self, view: PrefixView, rp: int, cand: int) -> FeatureVector:
        if not 1 <= rp - cand <= MAX_BACK:
            raise FeatureError(f"candidate {cand} outside the {MAX_BACK}-word window of {rp}")
        hist = view.clean_before(rp)
        if cand not in hist:
            raise FeatureError(f"candidate {cand} is not on the clean path")
        ex = [j for j in hist if j < cand]
        span = [j for j in hist if j >= cand]
        closer = span[1] if len(span) > 1 else None
        sc = self.scorer
        vals: list[float] = []
        for key in MODELS:
            toks = view.toks(key)
            boost = self._boost(view, key, rp, hist, cand)
            delta = boost - (self._boost(view, key, rp, hist, closer) if closer is not None else 0.0)
            s_c, w_c, _, h_c = self._node(view, key, cand, ex)
            s_n = sc.word(key, _hist(view, key, hist), toks[rp])[0]
            s_clean, _, _, h_clean = self._node(view, key, rp, ex)
            pre = _hist(view, key, ex)[-1:]
            kl = sc.kl(key, pre + [toks[cand]], pre + [toks[rp]])
            vals += [boost, delta, s_c, w_c, h_c, s_clean, h_clean, s_n - s_clean, kl]
        w, p = view.words, view.pos
        nxt = span[1] if len(span) > 1 else None
        prv = ex[-1] if ex else None
        vals += [float(rp - cand), float(len(span)),
                 float(w[cand] == w[rp]), float(p[cand] == p[rp]),
                 float(nxt is not None and w[nxt] == w[rp]),
                 float(nxt is not None and p[nxt] == p[rp]),
                 float(prv is not None and w[prv] == w[rp]),
                 float(prv is not None and p[prv] == p[rp]),
                 float(any(cand < j < rp for j in view.edits)),
                 float((rp - 1) in view.edits)]
        s_clean_lex, _, h_before_lex, _ = self._node(view, "lex", rp, ex)
        others = [self._boost(view, "lex", rp, hist, c) for c in self.candidates(view, rp) if c != cand]
        boost_lex = vals[0]
        vals += [h_before_lex - s_clean_lex, float(not ex), float(cand in view.repair_phase),
                 boost_lex - max(others) if others else 0.0]
        return FeatureVector("rm_start", vals)

    # -- rp_end ---------------------------------------------------------------

    def rp_end_features(self, view: PrefixView, hyp, cand_end: int) -> FeatureVector:
        """Features for closing ``hyp``'s repair phase at ``cand_end``.

        ``hyp`` needs ``rm_start`` and ``rp_start``; its reparandum is the clean
        positions between them when excision is ignored.
        """
        rs, ps = hyp.rm_start, hyp.rp_start
        if cand_end < ps or cand_end - ps > MAX_BACK:
            raise FeatureError(f"repair end {cand_end} outside the window of onset {ps}")
        own = range(rs, ps)
        raw_hist = view.clean_before(ps, keep=own)
        rm = [j for j in raw_hist if j >= rs]
        pre = [j for j in raw_hist if j < rs]
        rp = [j for j in view.clean_before(cand_end + 1) if ps <= j]
        if not rm:
            raise FeatureError("hypothesis has an empty reparandum")
        rm_end = rm[-1]
        hist_e = view.clean_before(cand_end)
        sc = self.scorer
        kl_vals, rrd_vals, s_vals, w_vals, h_vals, d_vals = [], [], [], [], [], []
        for key in MODELS:
            toks = view.toks(key)
            rm_ctx = _hist(view, key, raw_hist)
            cand_ctx = (_hist(view, key, hist_e) + [toks[cand_end]])[-2:]
            kl_vals.append(sc.kl(key, rm_ctx, cand_ctx) if rm_ctx != cand_ctx else 0.0)
            pre_t = _hist(view, key, pre)
            rp_t = [toks[j] for j in rp]
            rm_t = [toks[j] for j in rm]
            rrd_vals.append(0.0 if rp_t == rm_t else
                            sc.logprob(key, pre_t, rp_t) - sc.logprob(key, pre_t, rm_t))
            s, w, _, h = self._node(view, key, cand_end, hist_e)
            s_vals.append(s)
            w_vals.append(w)
            h_vals.append(h)
            w_prev = self._node(view, key, hist_e[-1], hist_e[:-1])[1] if hist_e else w
            d_vals.append(w_prev - w)
        words, pos = view.words, view.pos
        pre_pos = _hist(view, "pos", pre)[-1:]
        kl_onsets = sc.kl("pos", pre_pos + [pos[rs]], pre_pos + [pos[ps]])
        vals = kl_vals + rrd_vals + s_vals + w_vals + h_vals + d_vals + [
            float(len(rp)), float(len(rm)), float(len(rp) - len(rm)), float(len(rp) == len(rm)),
            float(words[cand_end] == words[rm_end]), float(pos[cand_end] == pos[rm_end]),
            float([words[j] for j in rp] == [words[j] for j in rm]),
            float([pos[j] for j in rp] == [pos[j] for j in rm]),
            float((cand_end - 1) in view.edits), kl_onsets, float(cand_end == ps)]
        return FeatureVector("rp_end", vals)


def repair_kind(view: PrefixView, rm_idx: Sequence[int], rp_idx: Sequence[int],
                closed_at_onset: bool) -> str:
    """repeat iff the words match; delete iff closed at the onset with an unrelated onset POS."""
    rm_w = [view.words[j] for j in rm_idx]
    rp_w = [view.words[j] for j in rp_idx]
    if rm_w == rp_w:
        return "repeat"
    if closed_at_onset and view.pos[rp_idx[0]] not in {view.pos[j] for j in rm_idx}:
        return "delete"
    return "substitute"


# -- information gain ranking ---------------------------------------------------


@dataclass(frozen=True)
class RankedFeature:
    name: str
    merit: float
    merit_sd: float
    rank: float
    rank_sd: float


def _entropy_counts(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def discretize(x: np.ndarray, bins: int = 10) -> np.ndarray:
    """Bin codes: distinct values when there are at most ``bins``, else equal-frequency bins."""
    uniq = np.unique(x)
    if len(uniq) <= bins:
        return np.searchsorted(uniq, x)
    edges = np.unique(np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1]))
    return np.searchsorted(edges, x, side="right")


def information_gain(x: np.ndarray, y: np.ndarray, bins: int = 10) -> float:
    y = np.asarray(y).astype(int)
    codes = discretize(np.asarray(x, dtype=float), bins)
    h_y = _entropy_counts(np.bincount(y, minlength=2))
    cond = 0.0
    n = len(y)
    for c in np.unique(codes):
        sel = y[codes == c]
        cond += len(sel) / n * _entropy_counts(np.bincount(sel, minlength=2))
    return max(0.0, h_y - cond)


def information_gain_ranking(X: np.ndarray, y: np.ndarray, names: Sequence[str],
                             folds: int = 10, seed: int = 0) -> list[RankedFeature]:
    """Rank features by information gain with respect to a binary label.

    Merits are computed on the training part of each of ``folds`` splits;
    the returned merits and ranks are means (with standard deviations) over
    folds, sorted by decreasing merit.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or X.shape[1] != len(names):
        raise FeatureError("X must be 2-D with one column per name")
    d = X.shape[1]
    if len(np.unique(y)) < 2:
        warnings.warn("single-class dataset: all information gains are 0", RuntimeWarning)
        return [RankedFeature(n, 0.0, 0.0, float(i + 1), 0.0) for i, n in enumerate(names)]
    n = len(y)
    folds = max(1, min(folds, n))
    order = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(order, folds) if folds > 1 else [np.array([], dtype=int)]
    merits = np.zeros((len(parts), d))
    ranks = np.zeros((len(parts), d))
    for f, held in enumerate(parts):
        train = np.setdiff1d(order, held, assume_unique=True) if len(held) else order
        for j in range(d):
            merits[f, j] = information_gain(X[train, j], y[train])
        # competition ranking by merit; ties share the best rank
        for j in range(d):
            ranks[f, j] = 1 + np.sum(merits[f] > merits[f, j])
    out = [RankedFeature(names[j], float(merits[:, j].mean()), float(merits[:, j].std()),
                         float(ranks[:, j].mean()), float(ranks[:, j].std())) for j in range(d)]
    out.sort(key=lambda r: (-r.merit, r.rank, r.name))
    return out


# functional aliases matching the stage names


def edit_features(extractor: FeatureExtractor, view: PrefixView, n: int, revisit: bool = False):
    return extractor.edit_features(view, n, revisit)


def rp_start_features(extractor: FeatureExtractor, view: PrefixView, n: int):
    return extractor.rp_start_features(view, n)


def rm_start_features(extractor: FeatureExtractor, view: PrefixView, rp: int, cand: int):
    return extractor.rm_start_features(view, rp, cand)


def rp_end_features(extractor: FeatureExtractor, view: PrefixView, hyp, cand_end: int):
    return extractor.rp_end_features(view, hyp, cand_end)
