"""Interpolated Kneser-Ney n-gram models and the information measures built on them.

Every model keeps counts per context length.  The highest order stores raw
counts; each lower order stores continuation counts (the number of distinct
left extensions a lower-order n-gram has among the types of the order above).
The lowest level is interpolated with a uniform distribution over the vocabulary.

Entropy and KL are computed over the full vocabulary, but only the observed
continuations of each context are visited explicitly.  The unobserved tail of
a context ``h`` is ``gamma_h * P(.|h')`` where ``h'`` drops the oldest word, so
its contribution follows from quantities of ``h'``, which are precomputed for
all lower-order contexts when the model is built.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
MAGIC = "#increpair-ngram-counts v1"
DEFAULT_DISCOUNT = 0.75
CACHE_FRACTION = 0.2

_LOG2 = math.log2


class LMError(ValueError):
    pass


class NGramModel:
    """Interpolated Kneser-Ney model of a fixed order.

    Parameters
    ----------
    ngram_counts : dict
        Raw counts of padded top-order n-grams (tuples of length ``order``).
    vocab : iterable of str
        Predictable types.  Must contain ``</s>`` and ``<unk>``; ``<s>`` is
        excluded because it only occurs as history.
    order : int
    discount : float
        Absolute discount ``D`` in (0, 1).
    """

    def __init__(self, ngram_counts: dict, vocab: Iterable[str], order: int,
                 discount: float = DEFAULT_DISCOUNT, unk_hapax: bool = True):
        if order < 1:
            raise LMError("order must be >= 1")
        if not 0.0 < discount < 1.0:
            raise LMError("discount must lie in (0, 1)")
        if not ngram_counts:
            raise LMError("no n-grams to build a model from")
        self.order = order
        self.discount = float(discount)
        self.unk_hapax = unk_hapax
        self.vocab_list = sorted(set(vocab) | {EOS, UNK})
        if BOS in self.vocab_list:
            self.vocab_list.remove(BOS)
        self.vocab = frozenset(self.vocab_list)
        self.word_index = {w: i for i, w in enumerate(self.vocab_list)}
        self.ngram_counts = {tuple(k): int(v) for k, v in ngram_counts.items()}
        for gram in self.ngram_counts:
            if len(gram) != order:
                raise LMError(f"n-gram {gram} does not match order {order}")
        self._build_tables()
        self._h_lower: dict[tuple, float] = {}
        self._xmemo: dict[tuple, float] = {}
        self._precompute_lower_entropies()
        self.entropy_cache: dict[tuple, float] = {}
        self._fill_entropy_cache()

    # -- construction -----------------------------------------------------

    def _build_tables(self) -> None:
        n = self.order
        # tables[k][context] -> {word: count}; context length k
        levels: list[dict] = [defaultdict(dict) for _ in range(n)]
        # sorted so sums (and so entropies) do not depend on insertion order
        for gram, c in sorted(self.ngram_counts.items()):
            levels[n - 1][gram[:-1]][gram[-1]] = c
        for k in range(n - 2, -1, -1):
            cont: dict = defaultdict(Counter)
            for ctx, row in levels[k + 1].items():
                lower = ctx[1:]
                for w in row:
                    cont[lower][w] += 1
            levels[k] = defaultdict(dict, {c: dict(r) for c, r in cont.items()})
        D = self.discount
        self.tables: list[dict] = []
        for k in range(n):
            table = {}
            for ctx, row in levels[k].items():
                total = sum(row.values())
                table[ctx] = (row, total, D * len(row) / total)
            self.tables.append(table)
        if () not in self.tables[0]:
            raise LMError("empty model")
        self._uniform = 1.0 / len(self.vocab_list)
        row0, tot0, g0 = self.tables[0][()]
        p0 = np.full(len(self.vocab_list), g0 * self._uniform)
        for w, c in row0.items():
            p0[self.word_index[w]] += max(c - D, 0.0) / tot0
        self._p0 = p0
        self._p0_list = p0.tolist()

    def _precompute_lower_entropies(self) -> None:
        p0 = self._p0
        self._h_lower[()] = float(-np.sum(p0 * np.log2(p0)))
        for k in range(1, self.order - 1):
            for ctx in sorted(self.tables[k]):
                self._h_lower[ctx] = self._entropy_node(ctx)

    def _fill_entropy_cache(self) -> None:
        if self.order < 2:
            return
        top = self.tables[self.order - 1]
        ranked = sorted(top.items(), key=lambda kv: (-kv[1][1], kv[0]))
        k = math.ceil(CACHE_FRACTION * len(ranked))
        for ctx, _ in ranked[:k]:
            self.entropy_cache[ctx] = self._entropy_node(ctx)

    # -- mapping ----------------------------------------------------------

    def map_word(self, w: str) -> str:
        return w if w in self.vocab or w == BOS else UNK

    def context(self, history: Sequence[str]) -> tuple:
        """Last ``order - 1`` words of ``history``, left-padded with ``<s>``."""
        k = self.order - 1
        if k == 0:
            return ()
        h = [self.map_word(w) for w in list(history)[-k:]]
        return tuple([BOS] * (k - len(h)) + h)

    def _effective(self, ctx: tuple) -> tuple:
        """Longest suffix of ``ctx`` observed as a context in training."""
        while ctx and ctx not in self.tables[len(ctx)]:
            ctx = ctx[1:]
        return ctx

    # -- probabilities ----------------------------------------------------

    def _prob_eff(self, w: str, ctx: tuple) -> float:
        """P(w | ctx) for a mapped word and an effective (observed) context."""
        D = self.discount
        p = self._p0_list[self.word_index[w]]
        for k in range(1, len(ctx) + 1):
            row, total, gamma = self.tables[k][ctx[-k:]]
            c = row.get(w, 0)
            p = (c - D) / total + gamma * p if c else gamma * p
        return p

    def prob(self, word: str, history: Sequence[str] = ()) -> float:
        w = self.map_word(word)
        if w == BOS:
            raise LMError("<s> is not predictable")
        return self._prob_eff(w, self._effective(self.context(history)))

    def unigram_prob(self, word: str) -> float:
        w = self.map_word(word)
        return self._p0_list[self.word_index[w]]

    def distribution(self, history: Sequence[str] = ()) -> np.ndarray:
        """Full distribution over ``vocab_list`` (vectorised)."""
        ctx = self._effective(self.context(history))
        D = self.discount
        p = self._p0.copy()
        for k in range(1, len(ctx) + 1):
            row, total, gamma = self.tables[k][ctx[-k:]]
            p *= gamma
            for w, c in row.items():
                p[self.word_index[w]] += (c - D) / total
        return p

    def logprob(self, words: Sequence[str], history: Sequence[str] = ()) -> float:
        """Sum of log2 probabilities of ``words`` following ``history``."""
        hist = list(history)
        total = 0.0
        for w in words:
            total += _LOG2(self.prob(w, hist))
            hist.append(w)
        return total

    def surprisal(self, word: str, history: Sequence[str] = ()) -> float:
        return -_LOG2(self.prob(word, history))

    def wml(self, word: str, history: Sequence[str] = ()) -> float:
        return wml_from_probs(self.prob(word, history), self.unigram_prob(word))

    # -- entropy ----------------------------------------------------------

    def _entropy_node(self, ctx: tuple) -> float:
        """Exact entropy (bits) of P(.|ctx) for an effective context."""
        if not ctx:
            return self._h_lower[()]
        row, total, gamma = self.tables[len(ctx)][ctx]
        parent = self._effective(ctx[1:])
        h_parent = self._h_lower[parent] if parent in self._h_lower else self._entropy_node(parent)
        D = self.discount
        seen = 0.0
        q_seen = 0.0
        q_logq = 0.0
        for w, c in row.items():
            q = self._prob_eff(w, parent)
            p = (c - D) / total + gamma * q
            seen -= p * _LOG2(p)
            q_seen += q
            q_logq += q * _LOG2(q)
        tail_q = 1.0 - q_seen
        return seen + gamma * h_parent + gamma * q_logq - gamma * tail_q * _LOG2(gamma)

    def entropy(self, history: Sequence[str] = (), tail: str = "exact") -> float:
        """Entropy in bits of the continuation distribution after ``history``.

        ``tail="exact"`` is exact over the full vocabulary; ``tail="uniform"``
        spreads the unobserved mass evenly over the unobserved words.
        """
        ctx = self._effective(self.context(history))
        if tail == "uniform":
            return self._uniform_tail_entropy(ctx)
        if tail != "exact":
            raise LMError(f"unknown tail mode {tail!r}")
        cached = self.entropy_cache.get(ctx)
        if cached is not None:
            return cached
        if ctx in self._h_lower:
            return self._h_lower[ctx]
        return self._entropy_node(ctx)

    def continuation(self, history: Sequence[str] = ()) -> "ContinuationDistribution":
        return self.continuation_for(self._effective(self.context(history)))

    def _uniform_tail_entropy(self, ctx: tuple) -> float:
        dist = self.continuation_for(ctx)
        return approx_entropy(list(dist.support.values()), dist.unseen_count)

    def continuation_for(self, ctx: tuple) -> "ContinuationDistribution":
        seen = self.tables[len(ctx)][ctx][0]
        support = {w: self._prob_eff(w, ctx) for w in sorted(seen)}
        return ContinuationDistribution(ctx, support, len(self.vocab_list) - len(support))

    # -- KL ---------------------------------------------------------------

    def kl_divergence(self, history1: Sequence[str], history2: Sequence[str],
                      tail: str = "exact") -> float:
        """KL(P(.|history1) || P(.|history2)) in bits."""
        a = self._effective(self.context(history1))
        b = self._effective(self.context(history2))
        if a == b:
            return 0.0
        if tail == "uniform":
            return self._uniform_tail_kl(a, b)
        if tail != "exact":
            raise LMError(f"unknown tail mode {tail!r}")
        kl = -self._entropy_node_cached(a) - self._cross(a, b)
        return max(kl, 0.0)

    def _entropy_node_cached(self, ctx: tuple) -> float:
        if ctx in self.entropy_cache:
            return self.entropy_cache[ctx]
        if ctx in self._h_lower:
            return self._h_lower[ctx]
        return self._entropy_node(ctx)

    def _cross(self, a: tuple, b: tuple) -> float:
        """Sum over the vocabulary of P(w|a) log2 P(w|b), for effective contexts."""
        if a == b:
            return -self._entropy_node_cached(a)
        if len(a) < self.order - 1 and len(b) < self.order - 1:
            return self._cross_lower(a, b)
        return self._cross_impl(a, b)

    def _cross_lower(self, a: tuple, b: tuple) -> float:
        key = (a, b)
        val = self._xmemo.get(key)
        if val is None:
            val = self._xmemo[key] = self._cross_impl(a, b)
        return val

    def _cross_impl(self, a: tuple, b: tuple) -> float:
        la, lb = len(a), len(b)
        pa = self._prob_eff
        if la == lb:
            ra, _, ga = self.tables[la][a]
            rb, _, gb = self.tables[lb][b]
            a1, b1 = self._effective(a[1:]), self._effective(b[1:])
            acc = 0.0
            qa_seen = 0.0
            qa_logqb = 0.0
            for w in set(ra) | set(rb):
                acc += pa(w, a) * _LOG2(pa(w, b))
                qa = pa(w, a1)
                qa_seen += qa
                qa_logqb += qa * _LOG2(pa(w, b1))
            rest = 1.0 - qa_seen
            return acc + ga * (_LOG2(gb) * rest + self._cross(a1, b1) - qa_logqb)
        if la > lb:
            ra, _, ga = self.tables[la][a]
            a1 = self._effective(a[1:])
            acc = 0.0
            qa_logpb = 0.0
            for w in ra:
                lpb = _LOG2(pa(w, b))
                acc += pa(w, a) * lpb
                qa_logpb += pa(w, a1) * lpb
            return acc + ga * (self._cross(a1, b) - qa_logpb)
        rb, _, gb = self.tables[lb][b]
        b1 = self._effective(b[1:])
        acc = 0.0
        pa_seen = 0.0
        pa_logqb = 0.0
        for w in rb:
            p = pa(w, a)
            acc += p * _LOG2(pa(w, b))
            pa_seen += p
            pa_logqb += p * _LOG2(pa(w, b1))
        return acc + _LOG2(gb) * (1.0 - pa_seen) + self._cross(a, b1) - pa_logqb

    def _uniform_tail_kl(self, a: tuple, b: tuple) -> float:
        da, db = self.continuation_for(a), self.continuation_for(b)
        shared = sorted(set(da.support) & set(db.support))
        kl = sum(da.support[w] * _LOG2(da.support[w] / db.support[w]) for w in shared)
        lam_a, lam_b = da.unseen_lambda, db.unseen_lambda
        m = len(self.vocab_list) - len(shared)
        if m and lam_a > 0 and lam_b > 0:
            kl += m * lam_a * _LOG2(lam_a / lam_b)
        return kl

    # -- persistence ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    def dumps(self) -> str:
        lines = [MAGIC, f"order\t{self.order}", f"discount\t{self.discount!r}",
                 f"unk_hapax\t{int(self.unk_hapax)}", f"vocab\t{len(self.vocab_list)}"]
        lines.extend(self.vocab_list)
        lines.append(f"ngrams\t{len(self.ngram_counts)}")
        for gram in sorted(self.ngram_counts):
            lines.append("\t".join(gram) + f"\t{self.ngram_counts[gram]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, path: str | Path) -> "NGramModel":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    @classmethod
    def loads(cls, text: str) -> "NGramModel":
        lines = text.split("\n")
        if not lines or lines[0] != MAGIC:
            raise LMError("not an increpair count file (bad magic header)")
        try:
            header = {}
            i = 1
            for key in ("order", "discount", "unk_hapax", "vocab"):
                k, v = lines[i].split("\t")
                if k != key:
                    raise LMError(f"expected {key!r} header, got {k!r}")
                header[key] = v
                i += 1
            nv = int(header["vocab"])
            vocab = lines[i:i + nv]
            i += nv
            k, v = lines[i].split("\t")
            if k != "ngrams":
                raise LMError("missing ngrams section")
            i += 1
            counts = {}
            for line in lines[i:i + int(v)]:
                parts = line.split("\t")
                counts[tuple(parts[:-1])] = int(parts[-1])
        except (IndexError, ValueError) as exc:
            if isinstance(exc, LMError):
                raise
            raise LMError(f"corrupt count file: {exc}") from None
        return cls(counts, vocab, int(header["order"]), float(header["discount"]),
                   bool(int(header["unk_hapax"])))


class ContinuationDistribution:
    """Observed continuations of one context plus the aggregate unobserved mass."""

    def __init__(self, context: tuple, support: dict, unseen_count: int):
        self.context = context
        self.support = support
        self.unseen_count = unseen_count
        self.unseen_mass = max(0.0, 1.0 - sum(support.values()))

    @property
    def unseen_lambda(self) -> float:
        return self.unseen_mass / self.unseen_count if self.unseen_count else 0.0


def approx_entropy(support_probs: Sequence[float], unseen_count: int) -> float:
    """Entropy with the unobserved mass spread uniformly over ``unseen_count`` words."""
    h = -sum(p * _LOG2(p) for p in support_probs if p > 0)
    mass = max(0.0, 1.0 - sum(support_probs))
    if unseen_count and mass > 0:
        lam = mass / unseen_count
        h -= unseen_count * lam * _LOG2(lam)
    return h


def wml_from_probs(p_ngram: float, p_unigram: float) -> float:
    """log2 p_ngram / -log2 p_unigram; 0 when the unigram probability is 1."""
    denom = -_LOG2(p_unigram)
    if denom == 0.0:
        return 0.0
    return _LOG2(p_ngram) / denom


def _replace_hapax(seqs: list[list[str]]) -> tuple[list[list[str]], set[str]]:
    freq = Counter(w for s in seqs for w in s)
    keep = {w for w, c in freq.items() if c > 1}
    return [[w if w in keep else UNK for w in s] for s in seqs], keep


def count_ngrams(seqs: Iterable[Sequence[str]], order: int) -> Counter:
    counts: Counter = Counter()
    for s in seqs:
        padded = [BOS] * (order - 1) + list(s) + [EOS]
        for i in range(order - 1, len(padded)):
            counts[tuple(padded[i - order + 1:i + 1])] += 1
    return counts


def train_kn(sequences: Iterable[Sequence[str]], order: int = 3,
             discount: float = DEFAULT_DISCOUNT, unk_hapax: bool = True) -> NGramModel:
    """Train an interpolated Kneser-Ney model on token sequences.

    Words seen once are replaced by ``<unk>`` when ``unk_hapax`` is set, so
    unknown query words receive a trained estimate.
    """
    seqs = [list(s) for s in sequences]
    if not seqs or not any(seqs):
        raise LMError("cannot train on an empty corpus")
    if any(BOS in s or EOS in s for s in seqs):
        raise LMError("training data may not contain boundary symbols")
    if unk_hapax:
        seqs, vocab = _replace_hapax(seqs)
    else:
        vocab = {w for s in seqs for w in s}
    return NGramModel(count_ngrams(seqs, order), vocab, order, discount, unk_hapax)


def train_edit_bigram(edit_spans: Iterable[Sequence[str]],
                      discount: float = DEFAULT_DISCOUNT) -> NGramModel:
    """Bigram model over edit-term spans.

    Hapax replacement is off: edit vocabularies are small and closed, and an
    unseen word should score below every observed edit word.
    """
    spans = [list(s) for s in edit_spans if len(s)]
    if not spans:
        raise LMError("cannot train the edit model on an empty edit corpus")
    return train_kn(spans, order=2, discount=discount, unk_hapax=False)


# functional aliases


def surprisal(m: NGramModel, w2: str, w1: str, w: str) -> float:
    return m.surprisal(w, [w2, w1])


def wml(m: NGramModel, window: Sequence[str]) -> float:
    *hist, w = window
    return m.wml(w, hist)


def entropy(m: NGramModel, context: Sequence[str], tail: str = "exact") -> float:
    return m.entropy(context, tail=tail)


def kl_divergence(m: NGramModel, c1: Sequence[str], c2: Sequence[str], tail: str = "exact") -> float:
    return m.kl_divergence(c1, c2, tail=tail)
