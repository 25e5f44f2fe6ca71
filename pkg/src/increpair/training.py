"""Teacher-forced training data, cross-fold language-model features and bundles.

Stage datasets are built from gold annotations as the detector would see
them if every earlier decision had been correct.  With ``folds > 1`` the
language models used for an utterance's features never saw that utterance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import Utterance, split_fold_indices
from .features import (FEATURE_NAMES, MAX_BACK, STAGES, FeatureExtractor, LMScorer, LMSet,
                       PrefixView)
from .forest import CostMatrix, Forest, ForestParams, train_forest
from .lm import NGramModel, train_edit_bigram, train_kn
from .pipeline import Detector

BUNDLE_FORMAT = "increpair-bundle"
BUNDLE_VERSION = 1
DEFAULT_COSTS = {"edit": 1.0, "rp_start": 2.0, "rm_start": 16.0, "rp_end": 8.0}
BEST_F_COSTS = {"edit": 1.0, "rp_start": 64.0, "rm_start": 8.0, "rp_end": 2.0}


class TrainingError(ValueError):
    pass


class _Hyp(NamedTuple):
    rm_start: int
    rp_start: int


def clean_sequences(corpus: Sequence[Utterance]) -> tuple[list[list[str]], list[list[str]]]:
    """Word and POS sequences with reparanda and edit terms removed."""
    words, tags = [], []
    for u in corpus:
        toks = u.cleaned()
        if toks:
            words.append([t.word for t in toks])
            tags.append([t.pos for t in toks])
    return words, tags


def edit_spans(corpus: Sequence[Utterance]) -> list[list[str]]:
    """Maximal runs of consecutive edit-term words."""
    spans = []
    for u in corpus:
        eds = sorted(u.edit_indices())
        run: list[int] = []
        for i in eds:
            if run and i != run[-1] + 1:
                spans.append([u.tokens[j].word for j in run])
                run = []
            run.append(i)
        if run:
            spans.append([u.tokens[j].word for j in run])
    return spans


def train_lms(corpus: Sequence[Utterance]) -> LMSet:
    words, tags = clean_sequences(corpus)
    spans = edit_spans(corpus)
    if not spans:
        # keep the edit model defined on corpora without edit terms
        spans = [["uh"]]
    return LMSet(train_kn(words, 3), train_kn(tags, 3), train_edit_bigram(spans))


def _gold_view(u: Utterance, n: int, edits: set, onset_limit: int) -> PrefixView:
    """View of words 0..n with gold edits below n and gold reparanda of onsets <= onset_limit."""
    excised: set[int] = set()
    phase: set[int] = set()
    for r in u.repairs:
        if r.rp_start <= onset_limit:
            excised.update(j for j in r.reparandum if j not in edits)
            if r.rp_end < n:
                phase.update(r.repair)
    return PrefixView([t.word for t in u.tokens[:n + 1]], [t.pos for t in u.tokens[:n + 1]],
                      {j for j in edits if j < n}, excised, phase)


def extract_utterance(u: Utterance, extractor: FeatureExtractor) -> dict[str, tuple[list, list]]:
    """Teacher-forced feature rows and labels for every stage of one utterance."""
    rows: dict[str, tuple[list, list]] = {s: ([], []) for s in STAGES}
    gold_ed = u.edit_indices()
    onsets = {r.rp_start: r for r in u.repairs}
    for n in range(len(u)):
        view = _gold_view(u, n, gold_ed, n - 1)
        rows["edit"][0].append(extractor.edit_features(view, n).values)
        rows["edit"][1].append(n in gold_ed)
        if n >= 1:
            rv = _gold_view(u, n, gold_ed, n - 1)
            rv.edits.discard(n - 1)
            if n in gold_ed:
                rv.edits.add(n)
            rows["edit"][0].append(extractor.edit_features(rv, n, revisit=True).values)
            rows["edit"][1].append((n - 1) in gold_ed)
        if n in gold_ed or not view.clean_before(n):
            continue
        rows["rp_start"][0].append(extractor.rp_start_features(view, n).values)
        rows["rp_start"][1].append(n in onsets)
        if n in onsets:
            r = onsets[n]
            for cand in extractor.candidates(view, n):
                rows["rm_start"][0].append(extractor.rm_start_features(view, n, cand).values)
                rows["rm_start"][1].append(cand == r.rm_start)
    for r in u.repairs:
        if r.rm_start in gold_ed:
            continue
        hyp = _Hyp(r.rm_start, r.rp_start)
        for e in range(r.rp_start, min(r.rp_end, r.rp_start + MAX_BACK) + 1):
            if e in gold_ed:
                continue
            view = _gold_view(u, e, gold_ed, e)
            rows["rp_end"][0].append(extractor.rp_end_features(view, hyp, e).values)
            rows["rp_end"][1].append(e == r.rp_end)
    return rows


@dataclass
class StageData:
    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.y)


def _pool(per_utt: list[dict]) -> dict[str, StageData]:
    out = {}
    for s in STAGES:
        xs = [x for d in per_utt for x in d[s][0]]
        ys = [y for d in per_utt for y in d[s][1]]
        d = len(FEATURE_NAMES[s])
        X = np.vstack(xs) if xs else np.zeros((0, d))
        out[s] = StageData(np.ascontiguousarray(X, dtype=np.float64),
                           np.asarray(ys, dtype=np.int8), FEATURE_NAMES[s])
    return out


def extract_stage_data(corpus: Sequence[Utterance], lms: LMSet) -> dict[str, StageData]:
    ex = FeatureExtractor(lms, LMScorer(lms))
    return _pool([extract_utterance(u, ex) for u in corpus])


def cross_fold_stage_data(corpus: Sequence[Utterance], folds: int = 10,
                          seed: int = 0) -> dict[str, StageData]:
    """Stage datasets whose LM features come from models trained on the other folds."""
    if folds < 2:
        raise TrainingError("cross-fold feature generation needs at least 2 folds")
    if len(corpus) < folds:
        raise TrainingError(f"corpus of {len(corpus)} utterances is too small for {folds} folds")
    parts = split_fold_indices(len(corpus), folds, seed)
    per_utt: list = [None] * len(corpus)
    for held in parts:
        held_set = set(held)
        train = [u for i, u in enumerate(corpus) if i not in held_set]
        lms = train_lms(train)
        ex = FeatureExtractor(lms, LMScorer(lms))
        for i in held:
            per_utt[i] = extract_utterance(corpus[i], ex)
    return _pool(per_utt)


def train_stage_forests(data: dict[str, StageData], costs: dict | None = None,
                        params: ForestParams | None = None) -> dict[str, Forest]:
    costs = {**DEFAULT_COSTS, **(costs or {})}
    params = params or ForestParams()
    forests = {}
    for k, s in enumerate(STAGES):
        d = data[s]
        if len(d) == 0:
            raise TrainingError(f"no training rows for stage {s!r}")
        p = ForestParams(**{**asdict(params), "seed": params.seed + k})
        forests[s] = train_forest(d.X, d.y, CostMatrix(costs[s], 1.0), p, d.names, s)
    return forests


@dataclass
class Bundle:
    lms: LMSet
    forests: dict[str, Forest]
    data: dict[str, StageData] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def detector(self, capacity: int = 1, **kwargs) -> Detector:
        return Detector(self.lms, self.forests, capacity, **kwargs)

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.lms.lex.save(out / "lex.counts")
        self.lms.pos.save(out / "pos.counts")
        self.lms.edit.save(out / "edit.counts")
        for s, f in self.forests.items():
            f.save(out / f"forest_{s}.json")
        for s, d in self.data.items():
            with open(out / f"data_{s}.npz", "wb") as fh:
                np.savez(fh, X=d.X, y=d.y)
        manifest = {"format": BUNDLE_FORMAT, "version": BUNDLE_VERSION,
                    "features": {s: list(FEATURE_NAMES[s]) for s in STAGES},
                    "meta": self.meta}
        with open(out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, bundle_dir: str | Path, with_data: bool = False) -> "Bundle":
        d = Path(bundle_dir)
        try:
            with open(d / "manifest.json", encoding="utf-8") as fh:
                manifest = json.load(fh)
        except FileNotFoundError:
            raise TrainingError(f"{d} is not a bundle (no manifest.json)") from None
        if manifest.get("format") != BUNDLE_FORMAT or manifest.get("version") != BUNDLE_VERSION:
            raise TrainingError("unsupported bundle format or version")
        for s in STAGES:
            if tuple(manifest["features"][s]) != FEATURE_NAMES[s]:
                raise TrainingError(f"bundle feature manifest for {s!r} does not match this build")
        lms = LMSet(NGramModel.load(d / "lex.counts"), NGramModel.load(d / "pos.counts"),
                    NGramModel.load(d / "edit.counts"))
        forests = {s: Forest.load(d / f"forest_{s}.json", FEATURE_NAMES[s]) for s in STAGES}
        data = {}
        if with_data:
            for s in STAGES:
                p = d / f"data_{s}.npz"
                if p.exists():
                    with np.load(p) as z:
                        data[s] = StageData(z["X"], z["y"], FEATURE_NAMES[s])
        return cls(lms, forests, data, manifest.get("meta", {}))


def corpus_digest(corpus: Sequence[Utterance]) -> str:
    from .corpus import serialize_utterance
    h = hashlib.sha256()
    for u in corpus:
        h.update(serialize_utterance(u).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()[:16]


def train_bundle(corpus: Sequence[Utterance], folds: int = 10, seed: int = 0,
                 costs: dict | None = None, params: ForestParams | None = None) -> Bundle:
    """Cross-fold stage data, per-stage forests and full-corpus runtime models."""
    if folds < 2:
        raise TrainingError("folds must be at least 2")
    data = cross_fold_stage_data(corpus, folds, seed)
    params = params or ForestParams(seed=seed)
    forests = train_stage_forests(data, costs, params)
    meta = {"folds": folds, "seed": seed, "n_utterances": len(corpus),
            "corpus_digest": corpus_digest(corpus),
            "costs": {**DEFAULT_COSTS, **(costs or {})}}
    return Bundle(train_lms(corpus), forests, data, meta)
