"""Next-token scorers.

A scorer maps a :class:`ScoreContext` (source words, MT words, output prefix)
to a log-probability vector over the vocabulary.  Everything here is
table-driven or count-based; the decoders never see anything else.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import EmptyCorpus, MalformedTable, UnknownWord
from .text import Vocabulary, segment

__all__ = [
    "ScoreContext",
    "Scorer",
    "TableScorer",
    "NGramScorer",
    "CopyBiasScorer",
    "SoftPenaltyScorer",
    "table_scorer_load",
    "ngram_train",
    "copy_bias_wrap",
    "soft_penalty_wrap",
    "input_token_set",
    "score_tokens",
]

BOS = -1
_CACHE_LIMIT = 200_000


@dataclass(frozen=True)
class ScoreContext:
    source_words: tuple[str, ...] = ()
    mt_words: tuple[str, ...] = ()
    prefix: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "source_words", tuple(self.source_words))
        object.__setattr__(self, "mt_words", tuple(self.mt_words))
        object.__setattr__(self, "prefix", tuple(self.prefix))

    def with_prefix(self, prefix) -> "ScoreContext":
        return ScoreContext(self.source_words, self.mt_words, tuple(prefix))


def _frozen(arr):
    arr = np.asarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


class Scorer:
    """Base class for next-token scorers.

    Subclasses implement ``_compute`` and may narrow ``state_key`` to the part
    of the context their output depends on; results are memoized on that key,
    so equal contexts always get the very same array back.
    """

    vocab: Vocabulary

    def state_key(self, ctx: ScoreContext) -> Hashable:
        return (ctx.source_words, ctx.mt_words, ctx.prefix)

    def _compute(self, ctx: ScoreContext) -> np.ndarray:
        raise NotImplementedError

    def next_logprobs(self, ctx: ScoreContext) -> np.ndarray:
        cache = self.__dict__.setdefault("_memo", {})
        key = self.state_key(ctx)
        out = cache.get(key)
        if out is None:
            if len(cache) >= _CACHE_LIMIT:
                cache.clear()
            out = _frozen(self._compute(ctx))
            cache[key] = out
        return out

    __call__ = next_logprobs


def score_tokens(scorer: Scorer, ctx: ScoreContext, tokens: Sequence[int]) -> float:
    """Cumulative log-probability of `tokens` appended to ``ctx.prefix``."""
    total = 0.0
    prefix = list(ctx.prefix)
    for tok in tokens:
        total += float(scorer.next_logprobs(ctx.with_prefix(prefix))[tok])
        prefix.append(tok)
    return total


class TableScorer(Scorer):
    """Replays fixed distributions keyed by the exact output prefix.

    `rows` maps prefix tuples of token ids to ``{token id: probability}``;
    any prefix without a row gets `default`.  Unlisted tokens get zero mass.
    """

    def __init__(self, vocab: Vocabulary, rows: Mapping, default: Mapping):
        self.vocab = vocab
        self._rows = {tuple(p): self._row(dist, p) for p, dist in rows.items()}
        self._default = self._row(default, "*")

    def _row(self, dist, where):
        probs = np.zeros(len(self.vocab))
        for tok, p in dist.items():
            if not 0 <= tok < len(self.vocab):
                raise MalformedTable(f"row {where!r}: unknown token id {tok}")
            if p < 0:
                raise MalformedTable(f"row {where!r}: negative probability")
            probs[tok] += p
        if abs(probs.sum() - 1.0) > 1e-6:
            raise MalformedTable(f"row {where!r}: probabilities sum to {probs.sum():.9g}")
        with np.errstate(divide="ignore"):
            return _frozen(np.log(probs))

    def state_key(self, ctx):
        return ctx.prefix if ctx.prefix in self._rows else None

    def _compute(self, ctx):
        return self._rows.get(ctx.prefix, self._default)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("*|" + self._format(self._default) + "\n")
            for prefix in sorted(self._rows):
                f.write(" ".join(self.vocab.strings(prefix)) + "|" + self._format(self._rows[prefix]) + "\n")

    def _format(self, logp):
        return ",".join(
            f"{self.vocab.tokens[i]}:{math.exp(lp)!r}" for i, lp in enumerate(logp) if lp > -np.inf
        )


def table_scorer_load(path, vocab: Vocabulary) -> TableScorer:
    """Load a table scorer.

    Each line is ``prefix tokens|token:prob,token:prob,...``.  An empty prefix
    is the row for the empty output; the prefix ``*`` declares the default row
    used for every prefix not listed.
    """
    rows = {}
    default = None
    with open(path, encoding="utf-8") as f:
        for n, raw in enumerate(f, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            if "|" not in line:
                raise MalformedTable(f"{path}:{n}: missing '|'")
            prefix_s, _, dist_s = line.rpartition("|")
            dist = {}
            for item in dist_s.split(","):
                tok, sep, p = item.strip().rpartition(":")
                if not sep:
                    raise MalformedTable(f"{path}:{n}: bad entry {item!r}")
                if tok not in vocab:
                    raise MalformedTable(f"{path}:{n}: unknown token {tok!r}")
                try:
                    dist[vocab.id(tok)] = dist.get(vocab.id(tok), 0.0) + float(p)
                except ValueError:
                    raise MalformedTable(f"{path}:{n}: bad probability {p!r}") from None
            if prefix_s.strip() == "*":
                default = dist
                continue
            try:
                prefix = tuple(vocab.ids(prefix_s.split()))
            except UnknownWord as e:
                raise MalformedTable(f"{path}:{n}: {e}") from None
            rows[prefix] = dist
    if default is None:
        raise MalformedTable(f"{path}: no default row ('*|...')")
    return TableScorer(vocab, rows, default)


class NGramScorer(Scorer):
    """Add-k smoothed n-gram model over token ids.

    ``P(t | h) = (count(h, t) + k) / (count(h) + k |V|)`` where `h` is the
    last ``n - 1`` tokens of the prefix, left-padded with a begin marker.
    """

    def __init__(self, vocab: Vocabulary, order: int, k: float, counts: Mapping):
        if order < 1:
            raise ValueError("order must be >= 1")
        if not k > 0:
            raise ValueError("add-k constant must be positive")
        self.vocab = vocab
        self.order = order
        self.k = float(k)
        self.counts = {tuple(h): np.asarray(c, dtype=np.float64) for h, c in counts.items()}

    def history(self, prefix) -> tuple[int, ...]:
        m = self.order - 1
        if m == 0:
            return ()
        h = tuple(prefix[-m:])
        return (BOS,) * (m - len(h)) + h

    def state_key(self, ctx):
        return self.history(ctx.prefix)

    def _compute(self, ctx):
        V = len(self.vocab)
        c = self.counts.get(self.history(ctx.prefix))
        if c is None:
            return np.full(V, -math.log(V))
        return np.log((c + self.k) / (c.sum() + self.k * V))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#order {self.order} #addk {self.k!r}\n")
            for h in sorted(self.counts):
                hs = " ".join("<s>" if t == BOS else self.vocab.tokens[t] for t in h)
                for t in np.flatnonzero(self.counts[h]):
                    f.write(f"{hs}\t{self.vocab.tokens[t]}\t{int(self.counts[h][t])}\n")

    @classmethod
    def load(cls, path, vocab: Vocabulary) -> "NGramScorer":
        with open(path, encoding="utf-8") as f:
            header = f.readline().split()
            if len(header) != 4 or header[0] != "#order" or header[2] != "#addk":
                raise ValueError(f"{path}: expected '#order n #addk k' header")
            order, k = int(header[1]), float(header[3])
            counts = defaultdict(lambda: np.zeros(len(vocab)))
            for raw in f:
                line = raw.rstrip("\n")
                if not line:
                    continue
                hs, tok, n = line.split("\t")
                h = tuple(BOS if t == "<s>" else vocab.id(t) for t in hs.split())
                counts[h][vocab.id(tok)] += int(n)
        return cls(vocab, order, k, dict(counts))


def ngram_train(corpus: Iterable[Sequence[int]], n: int, k: float, vocab: Vocabulary) -> NGramScorer:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not k > 0:
        raise ValueError("k must be positive")
    V = len(vocab)
    counts = defaultdict(lambda: np.zeros(V))
    m = n - 1
    seen = False
    for seq in corpus:
        seq = list(seq)
        if not seq or seq[-1] != vocab.eos_id:
            raise ValueError("every corpus sequence must end with eos")
        seen = True
        padded = [BOS] * m + seq
        for i, tok in enumerate(seq):
            counts[tuple(padded[i : i + m])][tok] += 1
    if not seen:
        raise EmptyCorpus("cannot train an n-gram model on an empty corpus")
    return NGramScorer(vocab, n, k, dict(counts))


def input_token_set(ctx: ScoreContext, vocab: Vocabulary) -> frozenset[int]:
    """Token ids of the source and MT words; unsegmentable words are skipped."""
    out = set()
    for w in ctx.source_words + ctx.mt_words:
        try:
            out.update(segment(w, vocab).pieces)
        except UnknownWord:
            pass
    return frozenset(out)


class CopyBiasScorer(Scorer):
    """Mixes a base scorer with a uniform copy distribution.

    The copy distribution is uniform over the input token set plus EOS.
    """

    def __init__(self, base: Scorer, lam: float):
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        self.base = base
        self.vocab = base.vocab
        self.lam = float(lam)
        self._copy = {}

    def state_key(self, ctx):
        return (ctx.source_words, ctx.mt_words, self.base.state_key(ctx))

    def copy_probs(self, ctx) -> np.ndarray:
        key = (ctx.source_words, ctx.mt_words)
        vec = self._copy.get(key)
        if vec is None:
            toks = set(input_token_set(ctx, self.vocab)) | {self.vocab.eos_id}
            vec = np.zeros(len(self.vocab))
            vec[sorted(toks)] = 1.0 / len(toks)
            vec = self._copy[key] = _frozen(vec)
        return vec

    def _compute(self, ctx):
        if self.lam == 1.0:
            return self.base.next_logprobs(ctx)
        base = np.exp(self.base.next_logprobs(ctx))
        with np.errstate(divide="ignore"):
            return np.log(self.lam * base + (1.0 - self.lam) * self.copy_probs(ctx))


class SoftPenaltyScorer(Scorer):
    """Subtracts `beta` from every token outside the inputs, then renormalizes.

    EOS is never penalized.
    """

    def __init__(self, base: Scorer, beta: float):
        if beta < 0:
            raise ValueError("beta must be non-negative")
        self.base = base
        self.vocab = base.vocab
        self.beta = float(beta)
        self._masks = {}

    def state_key(self, ctx):
        return (ctx.source_words, ctx.mt_words, self.base.state_key(ctx))

    def penalty_mask(self, ctx) -> np.ndarray:
        key = (ctx.source_words, ctx.mt_words)
        mask = self._masks.get(key)
        if mask is None:
            inside = set(input_token_set(ctx, self.vocab)) | {self.vocab.eos_id}
            mask = np.ones(len(self.vocab), dtype=bool)
            mask[sorted(inside)] = False
            mask.flags.writeable = False
            self._masks[key] = mask
        return mask

    def _compute(self, ctx):
        logp = self.base.next_logprobs(ctx)
        if self.beta == 0.0:
            return logp
        shifted = logp - self.beta * self.penalty_mask(ctx)
        return shifted - logsumexp(shifted)


def copy_bias_wrap(base: Scorer, lam: float) -> CopyBiasScorer:
    return CopyBiasScorer(base, lam)


def soft_penalty_wrap(base: Scorer, beta: float) -> SoftPenaltyScorer:
    return SoftPenaltyScorer(base, beta)
