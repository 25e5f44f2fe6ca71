"""Disfluency-marked transcripts: parsing, gold labels, folds and synthetic data.

Markup grammar (one utterance per line)::

    john/NNP [ likes/VBZ + {uh/UH} loves/VBZ ] mary/NNP

``[`` reparandum ``+`` optional ``{edit}`` groups, repair phase ``]``; a
``{...}`` group anywhere else is an isolated edit term.  A repair with an
empty repair phase (``[ a/DT + ]``) is a delete; its onset is the next word.
Repairs may nest only at the start of a repair phase, so that the inner
reparandum onset coincides with the outer repair onset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

RM_START, RM_MID, RM_END = "rm_start", "rm_mid", "rm_end"
RP_START, RP_MID, RP_END = "rp_start", "rp_mid", "rp_end"
ED = "ed"
FLUENT = "fluent"
REPAIR_TAGS = (RM_START, RM_MID, RM_END, ED, RP_START, RP_MID, RP_END)

REPEAT, SUBSTITUTE, DELETE = "repeat", "substitute", "delete"
KINDS = (REPEAT, SUBSTITUTE, DELETE)


class CorpusError(ValueError):
    """Malformed markup or an invalid annotation."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at character {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class Token:
    word: str
    pos: str
    index: int

    def __post_init__(self):
        if not self.word:
            raise CorpusError("empty word")
        if self.index < 0:
            raise CorpusError(f"negative token index {self.index}")


@dataclass(frozen=True)
class RepairAnnotation:
    rm_start: int
    rm_end: int
    interregnum: tuple[int, ...]
    rp_start: int
    rp_end: int
    kind: str

    def __post_init__(self):
        if not (self.rm_start <= self.rm_end < self.rp_start <= self.rp_end):
            raise CorpusError(f"bad repair span {self}")
        if any(not (self.rm_end < i < self.rp_start) for i in self.interregnum):
            raise CorpusError(f"interregnum outside rm_end..rp_start in {self}")
        if self.kind not in KINDS:
            raise CorpusError(f"unknown repair kind {self.kind!r}")
        if self.kind == DELETE and self.rp_start != self.rp_end:
            raise CorpusError("delete repairs have a zero-length repair phase")

    @property
    def reparandum(self) -> range:
        return range(self.rm_start, self.rm_end + 1)

    @property
    def repair(self) -> range:
        """Indices of the repair phase (the continuation word for deletes)."""
        return range(self.rp_start, self.rp_end + 1)


@dataclass(frozen=True)
class Utterance:
    tokens: tuple[Token, ...]
    repairs: tuple[RepairAnnotation, ...] = ()
    isolated_edits: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        validate_utterance(self)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.word for t in self.tokens]

    @property
    def pos_tags(self) -> list[str]:
        return [t.pos for t in self.tokens]

    def edit_indices(self) -> set[int]:
        out = set(self.isolated_edits)
        for r in self.repairs:
            out.update(r.interregnum)
        return out

    def reparandum_indices(self) -> set[int]:
        out: set[int] = set()
        for r in self.repairs:
            out.update(r.reparandum)
        return out

    def cleaned(self) -> list[Token]:
        """Tokens with reparanda and edit terms removed."""
        drop = self.edit_indices() | self.reparandum_indices()
        return [t for t in self.tokens if t.index not in drop]


def validate_utterance(u: Utterance) -> None:
    n = len(u.tokens)
    for i, t in enumerate(u.tokens):
        if t.index != i:
            raise CorpusError(f"token indices must be contiguous from 0; got {t.index} at {i}")
    edits = set(u.isolated_edits)
    if any(not 0 <= i < n for i in edits):
        raise CorpusError("isolated edit index out of range")
    rm_starts = set()
    for r in u.repairs:
        if r.rp_end >= n:
            raise CorpusError(f"repair {r} runs past the utterance end")
        if r.rm_start in rm_starts:
            raise CorpusError("two repairs share a reparandum onset")
        rm_starts.add(r.rm_start)
        body = set(r.reparandum) | set(r.repair)
        if body & edits:
            raise CorpusError("isolated edit inside a reparandum or repair phase")
        if set(r.interregnum) & set(r.reparandum):
            raise CorpusError("interregnum overlaps reparandum")
    for a in u.repairs:
        for b in u.repairs:
            if a is b:
                continue
            _check_pair(a, b)


def _check_pair(a: RepairAnnotation, b: RepairAnnotation) -> None:
    a_lo, a_hi = a.rm_start, a.rp_end
    b_lo, b_hi = b.rm_start, b.rp_end
    if a_hi < b_lo or b_hi < a_lo:
        return
    # embedded: b's reparandum starts at a's repair onset and b sits inside a's repair phase
    if b.rm_start == a.rp_start and b.rp_end <= a.rp_end and a.kind != DELETE:
        return
    if a.rm_start == b.rp_start and a.rp_end <= b.rp_end and b.kind != DELETE:
        return
    # a delete's continuation word may open the next repair
    if a.kind == DELETE and a.rp_start == b.rm_start and a.rp_end <= b.rm_end + 1:
        return
    if b.kind == DELETE and b.rp_start == a.rm_start and b.rp_end <= a.rm_end + 1:
        return
    raise CorpusError(f"overlapping repairs {a} and {b}")


def infer_kind(rm_words: Sequence[str], rp_words: Sequence[str]) -> str:
    if not rp_words:
        return DELETE
    if list(rm_words) == list(rp_words):
        return REPEAT
    return SUBSTITUTE


# ---------------------------------------------------------------------------
# parsing

_SPECIAL = "[]+{}"


def _lex(line: str):
    """Yield (kind, text, offset) with kind in {'sym', 'word'}."""
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if ch.isspace():
            i += 1
        elif ch in _SPECIAL:
            yield "sym", ch, i
            i += 1
        else:
            j = i
            while j < n and not line[j].isspace() and line[j] not in _SPECIAL:
                j += 1
            yield "word", line[i:j], i
            i = j


class _Parser:
    def __init__(self, line: str):
        self.items = list(_lex(line))
        self.pos = 0
        self.line = line
        self.tokens: list[Token] = []
        self.repairs: list[dict] = []
        self.isolated: set[int] = set()
        self.edits: set[int] = set()
        self.pending_deletes: list[dict] = []

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else None

    def eof_offset(self) -> int:
        return len(self.line)

    def take_word(self, text: str, offset: int) -> int:
        word, sep, pos = text.rpartition("/")
        if not sep or not word or not pos:
            raise CorpusError(f"token {text!r} is not of the form word/POS", offset)
        idx = len(self.tokens)
        self.tokens.append(Token(word.lower(), pos, idx))
        for d in self.pending_deletes:
            d["rp_start"] = d["rp_end"] = idx
        self.pending_deletes = []
        return idx

    def parse(self) -> Utterance:
        while self.peek() is not None:
            self.item(top=True)
        if self.pending_deletes:
            raise CorpusError("delete repair at utterance end has no continuation word",
                              self.eof_offset())
        repairs = []
        for r in self.repairs:
            rm_words = [self.tokens[i].word for i in range(r["rm_start"], r["rm_end"] + 1)]
            if r["delete"]:
                kind = DELETE
                if r["rp_start"] in self.edits:
                    raise CorpusError("delete repair continuation word is an edit term",
                                      r["offset"])
            else:
                rp_words = [self.tokens[i].word for i in r["rp_words"]]
                kind = infer_kind(rm_words, rp_words)
            repairs.append(RepairAnnotation(r["rm_start"], r["rm_end"], tuple(r["interregnum"]),
                                            r["rp_start"], r["rp_end"], kind))
        repairs.sort(key=lambda r: (r.rm_start, r.rp_start))
        try:
            return Utterance(tuple(self.tokens), tuple(repairs), frozenset(self.isolated))
        except CorpusError as exc:
            raise CorpusError(str(exc), 0) from None

    def item(self, top: bool) -> None:
        kind, text, off = self.items[self.pos]
        if kind == "word":
            self.pos += 1
            self.take_word(text, off)
        elif text == "{":
            for idx in self.edit_group():
                self.isolated.add(idx)
        elif text == "[":
            self.repair()
        elif text == "+":
            raise CorpusError("'+' outside [ ]", off)
        elif text == "]":
            raise CorpusError("unbalanced ']'", off)
        else:
            raise CorpusError(f"unexpected {text!r}", off)

    def edit_group(self) -> list[int]:
        _, _, open_off = self.items[self.pos]
        self.pos += 1
        out = []
        while True:
            it = self.peek()
            if it is None:
                raise CorpusError("unbalanced '{'", open_off)
            kind, text, off = it
            if kind == "word":
                self.pos += 1
                idx = self.take_word(text, off)
                self.edits.add(idx)
                out.append(idx)
            elif text == "}":
                self.pos += 1
                break
            else:
                raise CorpusError(f"{text!r} inside an edit group", off)
        if not out:
            raise CorpusError("empty edit group", open_off)
        return out

    def repair(self) -> dict:
        _, _, open_off = self.items[self.pos]
        self.pos += 1
        rec = {"offset": open_off, "interregnum": [], "rp_words": [], "delete": False}
        rm = []
        while True:
            it = self.peek()
            if it is None:
                raise CorpusError("unbalanced '['", open_off)
            kind, text, off = it
            if kind == "word":
                self.pos += 1
                rm.append(self.take_word(text, off))
            elif text == "+":
                self.pos += 1
                break
            elif text == "{":
                raise CorpusError("'{' inside reparandum", off)
            elif text == "[":
                raise CorpusError("nested repair inside reparandum", off)
            elif text == "]":
                raise CorpusError("repair without '+'", off)
            else:
                raise CorpusError(f"unexpected {text!r}", off)
        if not rm:
            raise CorpusError("empty reparandum", open_off)
        rec["rm_start"], rec["rm_end"] = rm[0], rm[-1]
        self.repairs.append(rec)
        # interregnum: edit groups directly after '+'
        while (it := self.peek()) is not None and it[1] == "{" and it[0] == "sym":
            rec["interregnum"].extend(self.edit_group())
        phase: list[int] = []
        first = True
        while True:
            it = self.peek()
            if it is None:
                raise CorpusError("unbalanced '['", open_off)
            kind, text, off = it
            if kind == "word":
                self.pos += 1
                phase.append(self.take_word(text, off))
            elif text == "]":
                self.pos += 1
                break
            elif text == "[":
                if not first:
                    raise CorpusError("nested repair must open the repair phase", off)
                before = len(self.tokens)
                inner = self.repair()
                if inner["delete"]:
                    raise CorpusError("embedded delete repairs are not supported", off)
                phase.extend(range(before, len(self.tokens)))
            elif text == "{":
                raise CorpusError("edit term inside repair phase", off)
            elif text == "+":
                raise CorpusError("second '+' in repair", off)
            else:
                raise CorpusError(f"unexpected {text!r}", off)
            first = False
        if phase:
            rec["rp_start"], rec["rp_end"] = phase[0], phase[-1]
            rec["rp_words"] = [i for i in phase if i not in self.edits]
        else:
            rec["delete"] = True
            self.pending_deletes.append(rec)
        return rec


def parse_utterance(line: str) -> Utterance:
    """Parse one line of bracket markup into an :class:`Utterance`."""
    return _Parser(line.strip()).parse()


def serialize_utterance(u: Utterance) -> str:
    tok = u.tokens
    starts = {r.rm_start: r for r in u.repairs}
    edits = set(u.isolated_edits)
    out: list[str] = []

    def word(i: int) -> str:
        return f"{tok[i].word}/{tok[i].pos}"

    def group(idxs: list[int]) -> None:
        out.append("{" + " ".join(word(i) for i in idxs) + "}")

    def emit(i: int, end: int) -> None:
        while i < end:
            if i in starts:
                r = starts[i]
                out.append("[")
                out.extend(word(j) for j in r.reparandum)
                out.append("+")
                run: list[int] = []
                for j in r.interregnum:
                    if run and j != run[-1] + 1:
                        group(run)
                        run = []
                    run.append(j)
                if run:
                    group(run)
                if r.kind == DELETE:
                    out.append("]")
                    i = r.rp_start
                else:
                    emit(r.rp_start, r.rp_end + 1)
                    out.append("]")
                    i = r.rp_end + 1
            elif i in edits:
                run = [i]
                while run[-1] + 1 < end and run[-1] + 1 in edits:
                    run.append(run[-1] + 1)
                group(run)
                i = run[-1] + 1
            else:
                out.append(word(i))
                i += 1

    emit(0, len(tok))
    return " ".join(out)


def read_corpus(path: str | Path) -> list[Utterance]:
    """Read a corpus file; ``#`` lines and blank lines are skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                out.append(parse_utterance(s))
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return out


def write_corpus(path: str | Path, corpus: Iterable[Utterance], header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for u in corpus:
            fh.write(serialize_utterance(u) + "\n")


# ---------------------------------------------------------------------------
# gold labels

GoldLabels = tuple  # tuple[frozenset[str], ...]; an empty set means fluent


def gold_labels(u: Utterance) -> GoldLabels:
    tags: list[set[str]] = [set() for _ in u.tokens]
    edits = u.edit_indices()
    for i in edits:
        tags[i].add(ED)
    for r in u.repairs:
        _tag_span(tags, list(r.reparandum), RM_START, RM_MID, RM_END)
        if r.kind == DELETE:
            tags[r.rp_start].update((RP_START, RP_END))
        else:
            _tag_span(tags, [i for i in r.repair if i not in edits], RP_START, RP_MID, RP_END)
    return tuple(frozenset(t) for t in tags)


def _tag_span(tags, idxs, first, mid, last) -> None:
    tags[idxs[0]].add(first)
    tags[idxs[-1]].add(last)
    for i in idxs[1:-1]:
        tags[i].add(mid)


def to_incremental_gold(u: Utterance) -> list[GoldLabels]:
    """Gold label state after each prefix.

    Element ``t`` covers tokens ``0..t``.  Reparandum tags are withheld
    until the prefix reaches the repair onset they belong to.
    """
    final = gold_labels(u)
    out = []
    for t in range(len(u.tokens)):
        state = [set(final[i]) for i in range(t + 1)]
        for r in u.repairs:
            if r.rp_start > t:
                for i in r.reparandum:
                    if i <= t:
                        state[i] -= {RM_START, RM_MID, RM_END}
        out.append(tuple(frozenset(s) for s in state))
    return out


def coarse(tags: Iterable[str]) -> frozenset[str]:
    """Project fine tags onto the rm / ed / rp categories."""
    out = set()
    for t in tags:
        if t.startswith("rm"):
            out.add("rm")
        elif t.startswith("rp"):
            out.add("rp")
        elif t == ED:
            out.add(ED)
    return frozenset(out)


# ---------------------------------------------------------------------------
# splits


def split_fold_indices(n: int, k: int, seed: int = 0) -> list[list[int]]:
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > n:
        raise ValueError(f"cannot split {n} utterances into {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    folds, at = [], 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        folds.append(sorted(int(i) for i in order[at:at + size]))
        at += size
    return folds


def split_folds(corpus: Sequence[Utterance], k: int, seed: int = 0) -> list[list[Utterance]]:
    return [[corpus[i] for i in fold] for fold in split_fold_indices(len(corpus), k, seed)]


def write_fold_manifest(path: str | Path, folds: list[list[int]]) -> None:
    """One line per fold: ``fold<TAB>comma-separated 1-based corpus line numbers``."""
    with open(path, "w", encoding="utf-8") as fh:
        for f, idxs in enumerate(folds):
            fh.write(f"{f}\t{','.join(str(i + 1) for i in idxs)}\n")


def read_fold_manifest(path: str | Path) -> list[list[int]]:
    folds = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            _, nums = line.rstrip("\n").split("\t")
            folds.append([int(x) - 1 for x in nums.split(",") if x])
    return folds


def train_test_split(corpus: Sequence[Utterance], test_fraction: float, seed: int = 0):
    order = np.random.default_rng(seed).permutation(len(corpus))
    cut = int(round(len(corpus) * (1 - test_fraction)))
    return [corpus[i] for i in sorted(order[:cut])], [corpus[i] for i in sorted(order[cut:])]


# ---------------------------------------------------------------------------
# synthetic corpora

_FIXED = {
    "PRP": ["i", "we", "you", "they", "he", "she"],
    "DT": ["the", "a", "this", "my"],
    "IN": ["in", "on", "with", "for", "at", "about"],
    "TO": ["to"],
    "MD": ["can", "will", "would", "should"],
    "RB": ["really", "just", "very", "still"],
    "CC": ["and", "but"],
}
_CONTENT_BASE = {
    "NN": ["car", "house", "dog", "book", "job", "school", "game", "movie", "plan", "street",
           "garden", "computer", "phone", "kitchen", "trip", "team", "store", "bike", "river", "song"],
    "NNS": ["kids", "cars", "friends", "books", "games", "people", "things", "days", "dogs",
            "prices", "taxes", "shows", "rules", "jobs", "houses", "trees", "boats", "cats"],
    "VB": ["see", "buy", "get", "fix", "find", "watch", "sell", "keep", "make", "read",
           "clean", "paint", "build", "visit", "call", "change", "move", "try"],
    "VBP": ["like", "want", "need", "have", "love", "hate", "use", "own", "remember",
            "prefer", "enjoy", "miss", "think", "hear", "believe"],
    "VBD": ["saw", "bought", "got", "fixed", "found", "watched", "sold", "kept", "made",
            "read", "cleaned", "painted", "built", "visited", "called", "changed"],
    "JJ": ["good", "big", "old", "new", "red", "small", "nice", "cheap", "long", "great",
           "bad", "young", "quiet", "busy", "cold", "warm"],
}
_TEMPLATES = [
    "PRP VBP DT NN",
    "PRP VBP DT JJ NN",
    "PRP VBD DT NN IN DT NN",
    "PRP MD VB DT NN",
    "PRP VBP TO VB DT NN",
    "DT NN VBD DT JJ NN",
    "it/PRP was/VBD RB JJ",
    "PRP VBP NNS CC PRP VBP DT NN",
    "IN DT NN PRP VBD DT NN",
    "PRP VBD TO VB IN DT NN",
    "PRP MD RB VB DT JJ NNS",
    "DT JJ NN VBD RB JJ",
]
_EDIT_TERMS = [
    ((("uh", "UH"),), 0.35),
    ((("um", "UH"),), 0.25),
    ((("i", "PRP"), ("mean", "VBP")), 0.1),
    ((("you", "PRP"), ("know", "VBP")), 0.1),
    ((("well", "UH"),), 0.1),
    ((("oh", "UH"),), 0.1),
]
_MIN_PER_CLASS = 2
MIN_VOCAB = _MIN_PER_CLASS * len(_CONTENT_BASE)


@dataclass
class SynthConfig:
    n_utts: int = 1000
    vocab_size: int = 60
    repair_rate: float = 0.1
    kind_mix: dict = field(default_factory=lambda: {REPEAT: 0.6, SUBSTITUTE: 0.3, DELETE: 0.1})
    seed: int = 0
    interregnum_rate: float = 0.2
    edit_rate: float = 0.03


def _content_lexicon(vocab_size: int) -> dict[str, list[str]]:
    classes = list(_CONTENT_BASE)
    per = [vocab_size // len(classes)] * len(classes)
    for i in range(vocab_size - sum(per)):
        per[i] += 1
    lex = {}
    for cls, k in zip(classes, per):
        base = _CONTENT_BASE[cls]
        words = list(base[:k])
        j = 0
        while len(words) < k:
            words.append(f"{base[j % len(base)]}{j // len(base) + 2}")
            j += 1
        lex[cls] = words
    return lex


class _Generator:
    def __init__(self, cfg: SynthConfig):
        if cfg.vocab_size < MIN_VOCAB:
            raise ValueError(f"vocab_size must be >= {MIN_VOCAB} for the template grammar")
        if not 0.0 <= cfg.repair_rate <= 1.0:
            raise ValueError("repair_rate must lie in [0, 1]")
        mix = {k: float(cfg.kind_mix.get(k, 0.0)) for k in KINDS}
        if set(cfg.kind_mix) - set(KINDS) or any(v < 0 for v in mix.values()):
            raise ValueError(f"kind_mix keys must be among {KINDS}")
        if not math.isclose(sum(mix.values()), 1.0, abs_tol=1e-9):
            raise ValueError("kind_mix must sum to 1")
        self.cfg = cfg
        self.mix = mix
        self.rng = np.random.default_rng(cfg.seed)
        self.lex = dict(_FIXED)
        self.lex.update(_content_lexicon(cfg.vocab_size))
        self.templates = [[tuple(s.split("/")) if "/" in s else (None, s) for s in t.split()]
                          for t in _TEMPLATES]
        # verbs prefer a few objects, which gives the word model something to learn
        nouns = self.lex["NN"] + self.lex["NNS"]
        self.prefs = {}
        for cls in ("VB", "VBP", "VBD"):
            for j, v in enumerate(self.lex[cls]):
                self.prefs[v] = [nouns[(3 * j + d) % len(nouns)] for d in range(3)]
        self.edit_choices = [e for e, _ in _EDIT_TERMS]
        self.edit_p = np.array([p for _, p in _EDIT_TERMS])
        self.edit_p /= self.edit_p.sum()

    def pick(self, cls: str) -> str:
        words = self.lex[cls]
        return words[int(self.rng.integers(len(words)))]

    def skeleton(self) -> list[tuple[str, str]]:
        tpl = self.templates[int(self.rng.integers(len(self.templates)))]
        out: list[tuple[str, str]] = []
        verb = None
        for word, pos in tpl:
            if word is None:
                if pos in ("NN", "NNS") and verb in self.prefs and self.rng.random() < 0.7:
                    cands = [w for w in self.prefs[verb] if w in self.lex[pos]]
                    word = cands[int(self.rng.integers(len(cands)))] if cands else self.pick(pos)
                else:
                    word = self.pick(pos)
            if pos.startswith("VB"):
                verb = word
            out.append((word, pos))
        return out

    def edit_term(self) -> tuple[tuple[str, str], ...]:
        return self.edit_choices[int(self.rng.choice(len(self.edit_choices), p=self.edit_p))]

    def span_length(self, limit: int) -> int:
        length = int(self.rng.choice([1, 2, 3], p=[0.6, 0.3, 0.1]))
        return max(1, min(length, limit))

    def utterance(self) -> Utterance:
        cfg = self.cfg
        skel = self.skeleton()
        s = len(skel)
        mean_interregnum = cfg.interregnum_rate * 1.2
        expected_edits = cfg.edit_rate * (s + 1) * 1.2
        denom = 1.5 - cfg.repair_rate * (1.5 + mean_interregnum)
        lam = cfg.repair_rate * (s + expected_edits) / denom if denom > 0 else float(s)
        n_rep = int(self.rng.poisson(lam)) if cfg.repair_rate > 0 else 0
        # choose non-overlapping skeleton spans
        spans: list[tuple[int, int, str]] = []
        taken = [False] * s
        kinds = list(self.mix)
        kp = np.array([self.mix[k] for k in kinds])
        for _ in range(n_rep):
            kind = kinds[int(self.rng.choice(len(kinds), p=kp))]
            for _attempt in range(8):
                start = int(self.rng.integers(s))
                length = 1 if kind == DELETE else self.span_length(s - start)
                if any(taken[start:start + length]):
                    continue
                if kind == SUBSTITUTE and not any(len(self.lex[skel[j][1]]) > 1
                                                  for j in range(start, start + length)):
                    continue
                if start > 0 and taken[start - 1]:
                    continue
                for j in range(start, start + length):
                    taken[j] = True
                spans.append((start, length, kind))
                break
        spans.sort()
        by_start = {st: (ln, k) for st, ln, k in spans}

        tokens: list[tuple[str, str]] = []
        repairs = []
        isolated: set[int] = set()

        def push(word_pos) -> int:
            tokens.append(word_pos)
            return len(tokens) - 1

        i = 0
        while i <= s:
            if i > 0 and i < s and i not in by_start and self.rng.random() < cfg.edit_rate:
                for wp in self.edit_term():
                    isolated.add(push(wp))
            if i == s:
                break
            if i in by_start:
                length, kind = by_start[i]
                span = skel[i:i + length]
                if kind == REPEAT:
                    rm_words = list(span)
                elif kind == SUBSTITUTE:
                    rm_words = list(span)
                    cands = [j for j in range(length) if len(self.lex[span[j][1]]) > 1]
                    j = cands[int(self.rng.integers(len(cands)))]
                    w, p = span[j]
                    alt = [x for x in self.lex[p] if x != w]
                    rm_words[j] = (alt[int(self.rng.integers(len(alt)))], p)
                else:
                    frag = self.skeleton()
                    rm_words = frag[:int(self.rng.integers(1, 3))]
                rm_idx = [push(wp) for wp in rm_words]
                inter = []
                if self.rng.random() < cfg.interregnum_rate:
                    inter = [push(wp) for wp in self.edit_term()]
                if kind == DELETE:
                    rp_idx = [push(skel[i])]
                    i += 1
                else:
                    rp_idx = [push(wp) for wp in span]
                    i += length
                repairs.append(RepairAnnotation(rm_idx[0], rm_idx[-1], tuple(inter),
                                                rp_idx[0], rp_idx[-1], kind))
                continue
            push(skel[i])
            i += 1
        toks = tuple(Token(w, p, k) for k, (w, p) in enumerate(tokens))
        return Utterance(toks, tuple(repairs), frozenset(isolated))


def generate_synthetic(config: SynthConfig | dict | None = None, **kwargs) -> list[Utterance]:
    """Sample a corpus from a template grammar with injected, exactly annotated repairs."""
    if config is None:
        config = SynthConfig(**kwargs)
    elif isinstance(config, dict):
        config = SynthConfig(**{**config, **kwargs})
    gen = _Generator(config)
    return [gen.utterance() for _ in range(config.n_utts)]


def repair_token_proportion(corpus: Iterable[Utterance]) -> float:
    rm = total = 0
    for u in corpus:
        total += len(u)
        rm += len(u.reparandum_indices())
    return rm / total if total else 0.0
