"""Translation edit rate, corpus BLEU and the over-correction (deterioration) rate.

Inputs are pre-tokenized word lists; comparison is case-sensitive.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

from .errors import EmptyReference, LengthMismatch

__all__ = [
    "TERResult",
    "BleuResult",
    "ter",
    "corpus_ter",
    "levenshtein",
    "apply_shift",
    "bleu_corpus",
    "deterioration_rate",
]

MAX_SHIFT_SIZE = 10
MAX_SHIFT_DIST = 50
MAX_SHIFT_CANDIDATES = 1000


@dataclass
class TERResult:
    """Edit counts plus the edit script that produced them.

    `shift_ops` are ``(start, length, dest)`` moves applied in order to the
    hypothesis (see :func:`apply_shift`).  `alignment` then turns the shifted
    hypothesis into the reference: ``("M"|"S", i, j)`` pairs hyp word `i`
    with ref word `j`, ``("D", i, None)`` deletes hyp word `i`, and
    ``("I", None, j)`` inserts ref word `j`.
    """

    insertions: int
    deletions: int
    substitutions: int
    shifts: int
    ref_len: int
    shift_ops: list = field(default_factory=list)
    alignment: list = field(default_factory=list)

    @property
    def edits(self) -> int:
        return self.insertions + self.deletions + self.substitutions + self.shifts

    @property
    def score(self) -> float:
        return self.edits / self.ref_len


@dataclass
class BleuResult:
    precisions: list
    brevity_penalty: float
    score: float
    hyp_len: int
    ref_len: int
    matches: list = field(default_factory=list)
    totals: list = field(default_factory=list)


def _edit_table(hyp, ref):
    n, m = len(hyp), len(ref)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        hi = hyp[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            row[j] = min(
                prev[j - 1] + (hi != ref[j - 1]),
                prev[j] + 1,
                row[j - 1] + 1,
            )
    return d


def levenshtein(hyp: Sequence[str], ref: Sequence[str]) -> int:
    return _edit_table(tuple(hyp), tuple(ref))[-1][-1]


@lru_cache(maxsize=65536)
def _align(hyp: tuple, ref: tuple):
    d = _edit_table(hyp, ref)
    i, j = len(hyp), len(ref)
    ops = []
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1]):
            ops.append(("M" if hyp[i - 1] == ref[j - 1] else "S", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            ops.append(("D", i - 1, None))
            i -= 1
        else:
            ops.append(("I", None, j - 1))
            j -= 1
    ops.reverse()
    return d[-1][-1], tuple(ops)


def apply_shift(words, start, length, dest):
    """Move ``words[start:start+length]`` so it begins at `dest` of the remainder."""
    words = list(words)
    block = words[start : start + length]
    rest = words[:start] + words[start + length :]
    return rest[:dest] + block + rest[dest:]


def _best_shift(hyp, ref, budget):
    score, ops = _align(hyp, ref)
    hyp_err = [True] * len(hyp)
    ref_err = [True] * len(ref)
    ref_to_hyp = {}
    last_h = -1
    for op, i, j in ops:
        if i is not None:
            last_h = i
        if op == "M":
            hyp_err[i] = ref_err[j] = False
        if j is not None:
            ref_to_hyp[j] = last_h

    best = None
    for s in range(len(hyp)):
        for r in range(len(ref)):
            if abs(r - s) > MAX_SHIFT_DIST:
                continue
            length = 0
            while (
                length < MAX_SHIFT_SIZE
                and s + length < len(hyp)
                and r + length < len(ref)
                and hyp[s + length] == ref[r + length]
            ):
                length += 1
                if not any(hyp_err[s : s + length]) or not any(ref_err[r : r + length]):
                    continue
                if s <= ref_to_hyp.get(r, -2) < s + length:
                    continue
                seen = set()
                for off in range(-1, length):
                    if r + off == -1:
                        idx = 0
                    elif r + off in ref_to_hyp:
                        idx = ref_to_hyp[r + off] + 1
                    else:
                        break
                    if idx in seen or s <= idx <= s + length:
                        continue
                    seen.add(idx)
                    dest = idx if idx < s else idx - length
                    shifted = tuple(apply_shift(hyp, s, length, dest))
                    budget -= 1
                    cand = (score - _align(shifted, ref)[0], length, -s, -dest)
                    if best is None or cand > best[0]:
                        best = (cand, (s, length, dest), shifted)
                if budget <= 0:
                    return best, budget
    return best, budget


def ter(hyp_words: Sequence[str], ref_words: Sequence[str]) -> TERResult:
    """Sentence-level TER with greedy block shifts.

    Shifts are applied one at a time, always the one that most reduces the
    remaining edit distance, until no shift helps.  A shifted block must
    match reference words exactly and must cover at least one misaligned
    word on both sides.
    """
    ref = tuple(ref_words)
    if not ref:
        raise EmptyReference("TER needs a non-empty reference")
    hyp = tuple(hyp_words)
    shift_ops = []
    budget = MAX_SHIFT_CANDIDATES
    while budget > 0:
        best, budget = _best_shift(hyp, ref, budget)
        if best is None or best[0][0] <= 0:
            break
        shift_ops.append(best[1])
        hyp = best[2]
    _, ops = _align(hyp, ref)
    counts = Counter(op for op, _, _ in ops)
    return TERResult(
        insertions=counts["I"],
        deletions=counts["D"],
        substitutions=counts["S"],
        shifts=len(shift_ops),
        ref_len=len(ref),
        shift_ops=shift_ops,
        alignment=list(ops),
    )


def corpus_ter(hyps, refs) -> float:
    """Total edits over total reference words."""
    if len(hyps) != len(refs):
        raise LengthMismatch(f"{len(hyps)} hypotheses vs {len(refs)} references")
    results = [ter(h, r) for h, r in zip(hyps, refs)]
    return sum(r.edits for r in results) / sum(r.ref_len for r in results)


def _ngrams(words, n):
    return Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def bleu_corpus(hyps, refs, max_order: int = 4) -> BleuResult:
    """Corpus BLEU-4 on a 0-100 scale.

    Orders above one with no matches are smoothed to ``1 / (total + 1)``;
    the unigram precision is never smoothed.
    """
    if len(hyps) != len(refs):
        raise LengthMismatch(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not any(len(r) for r in refs):
        raise EmptyReference("BLEU needs at least one non-empty reference")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_order + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    precisions = []
    for n in range(max_order):
        if matches[n] == 0 and n > 0:
            precisions.append(1.0 / (totals[n] + 1))
        else:
            precisions.append(matches[n] / totals[n] if totals[n] else 0.0)
    if hyp_len == 0:
        return BleuResult(precisions, 0.0, 0.0, hyp_len, ref_len, matches, totals)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    if min(precisions) == 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_order)
    return BleuResult(precisions, bp, score, hyp_len, ref_len, matches, totals)


def deterioration_rate(ape_outs, mt_outs, refs) -> float:
    """Fraction of instances whose APE output has a strictly higher TER than the MT."""
    if not len(ape_outs) == len(mt_outs) == len(refs):
        raise LengthMismatch("ape_outs, mt_outs and refs must have equal length")
    if not refs:
        return 0.0
    worse = sum(ter(a, r).score > ter(m, r).score for a, m, r in zip(ape_outs, mt_outs, refs))
    return worse / len(refs)
