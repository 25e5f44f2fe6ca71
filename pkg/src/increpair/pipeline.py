"""The incremental detector: a four-stage classifier cascade over a repair stack.

Each consumed word runs, in order, the edit-term stage, the repair-onset
stage, a backward search for the reparandum onset, and the repair-end stage
for every open hypothesis; hypotheses leave the stack seven words after their
onset.  Output labels are a pure function of the edit decisions and the
hypotheses, and every step's edit script is the difference between the label
states before and after the step, so replaying the scripts always reproduces
the current state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from .corpus import (ED, RM_END, RM_MID, RM_START, RP_END, RP_MID, RP_START, FLUENT, Token,
                     coarse)
from .features import (FEATURE_NAMES, MAX_BACK, FeatureExtractor, FeatureVector, LMScorer,
                       LMSet, PrefixView, repair_kind)

STAGE_ORDER = ("edit", "rp_start", "rm_start", "rp_end")
WINDOW = MAX_BACK
ADD, REVOKE = "add", "revoke"


class PipelineError(ValueError):
    pass


class LabelEdit(NamedTuple):
    op: str
    index: int
    tag: str

    def as_dict(self) -> dict:
        return {"op": self.op, "index": self.index, "tag": self.tag}


LabelState = tuple  # tuple of frozenset of tags, one per word


def diff_states(old: Sequence[frozenset], new: Sequence[frozenset]) -> list[LabelEdit]:
    """Edit script turning ``old`` into ``new``.

    Words present only in ``new`` are new arrivals; an arrival without tags
    gets an ``add fluent`` edit.  Fluent is never revoked.
    """
    edits: list[LabelEdit] = []
    for i, tags in enumerate(new):
        before = old[i] if i < len(old) else frozenset()
        for t in sorted(before - tags):
            edits.append(LabelEdit(REVOKE, i, t))
        for t in sorted(tags - before):
            edits.append(LabelEdit(ADD, i, t))
        if i >= len(old) and not tags:
            edits.append(LabelEdit(ADD, i, FLUENT))
    return edits


def replay(edits: Iterable[LabelEdit]) -> list[set]:
    """Fold an edit script into a label state; raises on revoking an absent tag."""
    state: list[set] = []
    for e in edits:
        while len(state) <= e.index:
            state.append(set())
        if e.tag == FLUENT:
            continue
        if e.op == ADD:
            state[e.index].add(e.tag)
        elif e.op == REVOKE:
            if e.tag not in state[e.index]:
                raise PipelineError(f"revoke of unasserted tag {e.tag} at {e.index}")
            state[e.index].discard(e.tag)
        else:
            raise PipelineError(f"unknown edit op {e.op!r}")
    return state


def coarse_state(state: Sequence[frozenset]) -> LabelState:
    return tuple(coarse(t) for t in state)


def hypothesis_count_bound(n: int, capacity: int = 1) -> int:
    """Cap on reparandum-onset evaluations for an utterance of ``n`` words."""
    if n < 0:
        raise PipelineError("n must be non-negative")
    return capacity * sum(min(p, WINDOW) for p in range(1, n + 1))


@dataclass(eq=False)
class RepairHypothesis:
    rm_start: int
    rp_start: int
    rm_idx: tuple[int, ...]
    score: float
    rp_end: int | None = None
    shadow: bool = False
    interregnum: tuple[int, ...] = ()
    kind: str | None = None

    @property
    def state(self) -> str:
        return "open" if self.rp_end is None else "closed"

    def end(self, current: int) -> int:
        return current if self.rp_end is None else self.rp_end


class RepairStack:
    """Live hypotheses, at most ``capacity`` per onset."""

    def __init__(self, capacity: int):
        if capacity not in (1, 2):
            raise PipelineError("stack capacity must be 1 or 2")
        self.capacity = capacity
        self.entries: list[RepairHypothesis] = []

    def __iter__(self):
        return iter(list(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def push(self, hyp: RepairHypothesis) -> None:
        if sum(h.rp_start == hyp.rp_start for h in self.entries) >= self.capacity:
            raise PipelineError("stack capacity exceeded for onset")
        self.entries.append(hyp)

    def remove(self, hyp: RepairHypothesis) -> None:
        self.entries = [h for h in self.entries if h is not hyp]

    def primaries(self) -> list[RepairHypothesis]:
        return [h for h in self.entries if not h.shadow]


class PrefixDAG:
    """Append-only store of per-position language-model values.

    Node ``i`` keeps one record per distinct history it has been reached
    from; records are written once.  ``edges`` holds the current clean-path
    predecessor of each node, which changes when words are reclassified as
    edit terms or excised as reparanda.
    """

    def __init__(self, scorer: LMScorer):
        self.scorer = scorer
        self.words: list[str] = []
        self.pos: list[str] = []
        self.nodes: list[dict] = []
        self.edges: list[int | None] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def add(self, word: str, pos: str, history: Sequence[int]) -> None:
        self.words.append(word)
        self.pos.append(pos)
        self.nodes.append({})
        self.edges.append(None)
        self.route(len(self.nodes) - 1, history)

    def route(self, i: int, history: Sequence[int]) -> None:
        self.edges[i] = history[-1] if history else None
        key = tuple(history[-2:])
        if key in self.nodes[i]:
            return
        vals = {}
        for m, toks in (("lex", self.words), ("pos", self.pos)):
            h = [toks[j] for j in key]
            s, w = self.scorer.word(m, h, toks[i])
            vals[m] = (s, w, self.scorer.entropy(m, (h + [toks[i]])[-2:]))
        self.nodes[i][key] = vals


@dataclass
class StepRecord:
    edits: list[LabelEdit]
    state: LabelState
    output: frozenset
    classifications: int
    rm_evals: int


class Detector:
    """Strongly incremental repair detector for one utterance stream.

    Parameters
    ----------
    lms : LMSet
        Fluent word and POS trigram models and the edit-term bigram model.
    classifiers : mapping
        Stage name to a classifier; forests are checked against the stage's
        feature manifest.  Objects with a ``decide(fv, info)`` method are
        called with positional context and may script decisions.
    capacity : int
        Hypotheses kept per onset (1 or 2).
    revisit_min_score : float
        An edit-stage revisit of ``w_{n-1}`` runs only when its own edit
        score reached this value.
    """

    def __init__(self, lms: LMSet, classifiers: Mapping, capacity: int = 1,
                 revisit_min_score: float = 0.2, scorer: LMScorer | None = None):
        if capacity not in (1, 2):
            raise PipelineError("stack capacity must be 1 or 2")
        for stage in STAGE_ORDER:
            if stage not in classifiers:
                raise PipelineError(f"missing classifier for stage {stage!r}")
            manifest = getattr(classifiers[stage], "manifest", None)
            if manifest is not None and tuple(manifest) != FEATURE_NAMES[stage]:
                raise PipelineError(f"feature manifest mismatch for stage {stage!r}")
        self.lms = lms
        self.classifiers = dict(classifiers)
        self.capacity = capacity
        self.revisit_min_score = revisit_min_score
        self.scorer = scorer or LMScorer(lms)
        self.extractor = FeatureExtractor(lms, self.scorer)
        self.reset()

    def reset(self) -> None:
        self.words: list[str] = []
        self.pos: list[str] = []
        self.edits: set[int] = set()
        self.edit_scores: list[float] = []
        self.stack = RepairStack(self.capacity)
        self.committed: list[RepairHypothesis] = []
        self.state: LabelState = ()
        self.history: list[StepRecord] = []
        self.dag = PrefixDAG(self.scorer)
        self.n_classifications = 0
        self.rm_evals = 0

    # -- views --------------------------------------------------------------

    def _accepted(self) -> list[RepairHypothesis]:
        return self.committed + self.stack.primaries()

    def view(self, extra: RepairHypothesis | None = None, skip_onset: int | None = None) -> PrefixView:
        excised: set[int] = set()
        phase: set[int] = set()
        for h in self._accepted():
            if skip_onset is not None and h.rp_start == skip_onset:
                continue
            excised.update(h.rm_idx)
            if h.rp_end is not None:
                phase.update(range(h.rp_start, h.rp_end + 1))
        if extra is not None:
            excised.update(extra.rm_idx)
        return PrefixView(self.words, self.pos, set(self.edits), excised, phase)

    def _decide(self, stage: str, fv: FeatureVector, **info) -> tuple[bool, float]:
        self.n_classifications += 1
        self._step_count += 1
        clf = self.classifiers[stage]
        if hasattr(clf, "decide"):
            label, score = clf.decide(fv, {"stage": stage, **info})
        else:
            label, score = clf.classify(fv)
        return bool(label), float(score)

    # -- main step ------------------------------------------------------------

    def consume(self, token: Token) -> list[LabelEdit]:
        n = len(self.words)
        if token.index != n:
            raise PipelineError(f"expected token index {n}, got {token.index}")
        self.words.append(token.word)
        self.pos.append(token.pos)
        self._step_count = 0
        evals_before = self.rm_evals
        self._edit_stage(n)
        if n not in self.edits:
            self._onset_stage(n)
            self._end_stage(n)
        self._expire(n)
        self.dag.add(token.word, token.pos, self.view().clean_before(n))
        new_state = self._derive_state(n)
        edits = diff_states(self.state, new_state)
        self.state = new_state
        output = frozenset((h.rm_start, h.rp_start) for h in self._accepted())
        self.history.append(StepRecord(edits, new_state, output, self._step_count,
                                       self.rm_evals - evals_before))
        return edits

    def consume_all(self, tokens: Iterable[Token]) -> list[list[LabelEdit]]:
        return [self.consume(t) for t in tokens]

    def _edit_stage(self, n: int) -> None:
        view = self.view()
        is_ed, score = self._decide("edit", self.extractor.edit_features(view, n),
                                    n=n, target=n)
        self.edit_scores.append(score)
        if is_ed:
            self.edits.add(n)
        if n >= 1 and (n - 1) not in self.edits and self.edit_scores[n - 1] >= self.revisit_min_score:
            fv = self.extractor.edit_features(self.view(), n, revisit=True)
            late, _ = self._decide("edit", fv, n=n, target=n - 1)
            if late:
                self.edits.add(n - 1)
                self._cancel_covering(n - 1, n)
        if n in self.edits:
            # an edit term right after a hypothesised onset means the onset
            # word was itself the reparandum; retract that hypothesis
            for h in self.stack:
                if h.rp_end is None and h.rp_start == n - 1:
                    self.stack.remove(h)

    def _cancel_covering(self, i: int, n: int) -> None:
        for h in self.stack:
            if h.rm_start <= i <= h.end(n):
                self.stack.remove(h)

    def _onset_stage(self, n: int) -> None:
        view = self.view()
        if not view.clean_before(n):
            return
        onset, score = self._decide("rp_start", self.extractor.rp_start_features(view, n),
                                    n=n)
        if not onset:
            return
        found = []
        for cand in self.extractor.candidates(view, n):
            self.rm_evals += 1
            pos_, sc = self._decide("rm_start", self.extractor.rm_start_features(view, n, cand),
                                    n=n, cand=cand)
            if pos_:
                found.append((-sc, n - cand, cand))
        found.sort()
        hist = view.clean_before(n)
        for rank, (neg, _, cand) in enumerate(found[:self.capacity]):
            rm_idx = tuple(j for j in hist if j >= cand)
            inter = tuple(j for j in range(rm_idx[-1] + 1, n) if j in self.edits)
            self.stack.push(RepairHypothesis(cand, n, rm_idx, -neg, shadow=rank > 0,
                                             interregnum=inter))

    def _end_stage(self, n: int) -> None:
        for h in self.stack:
            if h.rp_end is not None or not any(g is h for g in self.stack.entries):
                continue
            if n - h.rp_start > WINDOW:
                continue
            view = self.view(extra=h, skip_onset=h.rp_start)
            close, _ = self._decide("rp_end", self.extractor.rp_end_features(view, h, n),
                                    n=n, hyp=(h.rm_start, h.rp_start))
            if not close:
                continue
            h.rp_end = n
            rp_idx = [j for j in range(h.rp_start, n + 1) if j not in self.edits]
            h.kind = repair_kind(view, h.rm_idx, rp_idx, n == h.rp_start)
            rivals = [g for g in self.stack if g is not h and g.rp_start == h.rp_start]
            if h.shadow:
                # a shadow closing alone takes over its onset
                if all(g.rp_end is None for g in rivals):
                    for g in rivals:
                        self.stack.remove(g)
                    h.shadow = False
            else:
                for g in rivals:
                    self.stack.remove(g)

    def _expire(self, n: int) -> None:
        for h in self.stack:
            if n - h.rp_start >= WINDOW:
                self.stack.remove(h)
                if h.rp_end is not None and not h.shadow:
                    self.committed.append(h)

    # -- labels ---------------------------------------------------------------

    def _derive_state(self, n: int) -> LabelState:
        tags: list[set] = [set() for _ in range(n + 1)]
        for i in self.edits:
            tags[i].add(ED)
        for h in sorted(self._accepted(), key=lambda h: h.rp_start):
            rm = list(h.rm_idx)
            tags[rm[0]].add(RM_START)
            tags[rm[-1]].add(RM_END)
            for j in rm[1:-1]:
                tags[j].add(RM_MID)
            rp = [j for j in range(h.rp_start, h.end(n) + 1) if j not in self.edits]
            if not rp:
                continue
            tags[rp[0]].add(RP_START)
            if h.rp_end is not None:
                tags[rp[-1]].add(RP_END)
                mids = rp[1:-1]
            else:
                mids = rp[1:]
            for j in mids:
                tags[j].add(RP_MID)
        return tuple(frozenset(t) for t in tags)

    # -- summaries -------------------------------------------------------------

    @property
    def processing_overhead(self) -> float:
        return self.n_classifications / len(self.words) if self.words else 0.0

    def snapshots(self) -> list[LabelState]:
        return [r.state for r in self.history]

    def edit_log(self) -> list[list[LabelEdit]]:
        return [r.edits for r in self.history]

    def final_repairs(self) -> list[RepairHypothesis]:
        return sorted(self._accepted(), key=lambda h: h.rp_start)


def new_detector(fluent_lex, fluent_pos, edit_model, forests: Mapping, stack_capacity: int = 1,
                 **kwargs) -> Detector:
    return Detector(LMSet(fluent_lex, fluent_pos, edit_model), forests, stack_capacity, **kwargs)


@dataclass
class UtteranceRun:
    """Everything the evaluator needs from one detector pass."""

    snapshots: list[LabelState]
    edit_log: list[list[LabelEdit]]
    outputs: list[frozenset]
    classifications: list[int]
    rm_evals: list[int]
    final: LabelState = field(default=())


def run_detector(detector: Detector, tokens: Sequence[Token]) -> UtteranceRun:
    detector.reset()
    for t in tokens:
        detector.consume(t)
    h = detector.history
    return UtteranceRun([r.state for r in h], [r.edits for r in h], [r.output for r in h],
                        [r.classifications for r in h], [r.rm_evals for r in h],
                        detector.state)
