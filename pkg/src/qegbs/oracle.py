"""Exhaustive constrained search, used to certify decoder outputs on tiny problems."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SpaceTooLarge
from .scoring import ScoreContext, Scorer

__all__ = ["OracleResult", "brute_force_constrained", "find_disjoint_runs", "search_space_size"]

DEFAULT_CAP = 10**7


@dataclass(frozen=True)
class OracleResult:
    tokens: tuple[int, ...] | None
    score: float
    enumerated: int

    @property
    def feasible(self) -> bool:
        return self.tokens is not None


def search_space_size(vocab_size: int, max_len: int) -> int:
    """Number of EOS-terminated sequences of length 1..max_len."""
    free = vocab_size - 1
    return sum(free**n for n in range(max_len))


def _occurrences(seq, pat, starts_ok):
    L = len(pat)
    return [i for i in range(len(seq) - L + 1) if seq[i : i + L] == pat and starts_ok(i)]


def find_disjoint_runs(seq, patterns, word_start=None):
    """Start positions placing every pattern in `seq` without overlap, or None.

    `word_start`, if given, is a predicate restricting where a run may begin.
    """
    seq = tuple(seq)
    ok = word_start or (lambda i: True)
    options = [_occurrences(seq, tuple(p), ok) for p in patterns]
    order = sorted(range(len(patterns)), key=lambda i: len(options[i]))
    used = [False] * len(seq)
    chosen = [None] * len(patterns)

    def place(n):
        if n == len(order):
            return True
        i = order[n]
        L = len(patterns[i])
        for s in options[i]:
            if any(used[s : s + L]):
                continue
            for p in range(s, s + L):
                used[p] = True
            chosen[i] = s
            if place(n + 1):
                return True
            for p in range(s, s + L):
                used[p] = False
        return False

    return list(chosen) if place(0) else None


def brute_force_constrained(
    scorer: Scorer,
    ctx: ScoreContext,
    constraints,
    max_len: int,
    word_aligned: bool = False,
    cap: int = DEFAULT_CAP,
) -> OracleResult:
    """Best-scoring EOS-terminated sequence that contains every constraint.

    Enumerates all sequences of length at most `max_len` whose only EOS is
    the last token, keeps those holding each constraint's tokens as its own
    contiguous run, and returns the maximum; ties go to the smaller
    sequence.  Zero-probability prefixes are not extended.  With
    `word_aligned`, runs may only begin at the start of a word.
    """
    vocab = scorer.vocab
    size = search_space_size(len(vocab), max_len)
    if size > cap:
        raise SpaceTooLarge(f"{size} sequences exceed the cap of {cap}")
    patterns = [tuple(c) for c in (constraints.token_lists if hasattr(constraints, "token_lists") else constraints)]
    eos = vocab.eos_id
    ctx = ctx.with_prefix(())
    best_key = None
    best = None
    count = 0

    def word_start_for(seq):
        return lambda i: i == 0 or not vocab.is_continuation(seq[i - 1])

    stack = [((), 0.0)]
    while stack:
        prefix, score = stack.pop()
        logp = scorer.next_logprobs(ctx.with_prefix(prefix))
        for tok in range(len(vocab)):
            lp = float(logp[tok])
            if lp == float("-inf"):
                continue
            seq, s = prefix + (tok,), score + lp
            if tok == eos:
                count += 1
                body = seq[:-1]
                runs = find_disjoint_runs(body, patterns, word_start_for(body) if word_aligned else None)
                if runs is not None:
                    key = (-s, seq)
                    if best_key is None or key < best_key:
                        best_key, best = key, (seq, s)
            elif len(seq) < max_len:
                stack.append((seq, s))
    if best is None:
        return OracleResult(None, float("-inf"), count)
    return OracleResult(best[0], best[1], count)
