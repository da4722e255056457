"""Grid Beam Search for lexically constrained decoding.

The search space is a grid of beams indexed by timestep ``t`` and the number
``c`` of constraint tokens already placed.  Cell ``[t][c]`` is filled from the
cell to its left (free generation by open hypotheses) and the cell diagonally
below-left (opening a new constraint, or forcing the next token of the one in
progress).  Finished hypotheses are read off the top row, ``c == numC``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constraints import ConstraintSet
from .errors import ConstraintsUnsatisfiable, DecodeIncomplete
from .scoring import ScoreContext, Scorer

__all__ = [
    "MatchMode",
    "Hypothesis",
    "DecodeResult",
    "GBSResult",
    "start_hypothesis",
    "step_generate",
    "step_start",
    "step_continue",
    "prune",
    "loop_bounds",
    "decode_gbs",
]

NEG_INF = float("-inf")


class MatchMode(str, enum.Enum):
    TOKEN = "token"
    WORD = "word"


@dataclass(frozen=True)
class Hypothesis:
    """A partial output on the grid.

    `coverage` holds, per constraint, how many of its tokens are placed;
    `runs` holds the output position where each constraint's run began
    (``-1`` while untouched).  ``closed`` is the index of the constraint
    being forced, or ``None`` for an open hypothesis.
    """

    tokens: tuple[int, ...] = ()
    score: float = 0.0
    coverage: tuple[int, ...] = ()
    runs: tuple[int, ...] = ()
    closed: int | None = None
    finished: bool = False

    @property
    def covered(self) -> int:
        return sum(self.coverage)

    @property
    def is_open(self) -> bool:
        return self.closed is None

    def sort_key(self):
        return (-self.score, self.tokens, self.coverage, -1 if self.closed is None else self.closed)


@dataclass
class DecodeResult:
    hypothesis: Hypothesis
    diagnostics: dict = field(default_factory=dict)
    grid: list | None = None

    @property
    def tokens(self):
        return self.hypothesis.tokens

    @property
    def score(self):
        return self.hypothesis.score

    @property
    def finished(self):
        return self.hypothesis.finished


GBSResult = DecodeResult


def start_hypothesis(constraints: ConstraintSet) -> Hypothesis:
    n = len(constraints)
    return Hypothesis((), 0.0, (0,) * n, (-1,) * n, None, False)


def loop_bounds(t: int, max_len: int, num_c: int) -> range:
    """Coverage rows visited at timestep `t`."""
    return range(max(0, num_c + t - max_len), min(t, num_c) + 1)


def _can_start(hyp: Hypothesis, vocab, mode: MatchMode) -> bool:
    if mode is MatchMode.WORD and hyp.tokens:
        return not vocab.is_continuation(hyp.tokens[-1])
    return True


def _logprobs(scorer, ctx, hyp):
    return scorer.next_logprobs(ctx.with_prefix(hyp.tokens))


def step_generate(hyp: Hypothesis, scorer: Scorer, ctx: ScoreContext, constraints: ConstraintSet) -> list[Hypothesis]:
    """Free continuations of an open hypothesis, one per vocabulary token.

    Free tokens never earn coverage, even when they happen to match
    constraint content.  EOS is only allowed once every constraint token is
    placed; zero-probability tokens are dropped.
    """
    if not hyp.is_open or hyp.finished:
        raise ValueError("generate needs an open, unfinished hypothesis")
    eos = scorer.vocab.eos_id
    top = hyp.covered == constraints.total_tokens
    logp = _logprobs(scorer, ctx, hyp)
    out = []
    for tok in range(len(logp)):
        lp = float(logp[tok])
        if lp == NEG_INF or (tok == eos and not top):
            continue
        out.append(
            Hypothesis(hyp.tokens + (tok,), hyp.score + lp, hyp.coverage, hyp.runs, None, tok == eos)
        )
    return out


def step_start(
    hyp: Hypothesis,
    constraint_idx: int,
    scorer: Scorer,
    ctx: ScoreContext,
    constraints: ConstraintSet,
    mode: MatchMode = MatchMode.WORD,
) -> list[Hypothesis]:
    """Open constraint `constraint_idx` by emitting its first token.

    In word mode a constraint may only open on a word boundary of the
    hypothesis.  Returns an empty list when the move is not permitted.
    """
    if not hyp.is_open or hyp.finished:
        raise ValueError("start needs an open, unfinished hypothesis")
    if hyp.coverage[constraint_idx] != 0:
        raise ValueError(f"constraint {constraint_idx} already touched")
    if not _can_start(hyp, scorer.vocab, MatchMode(mode)):
        return []
    toks = constraints[constraint_idx].tokens
    lp = float(_logprobs(scorer, ctx, hyp)[toks[0]])
    if lp == NEG_INF:
        return []
    coverage = list(hyp.coverage)
    coverage[constraint_idx] = 1
    runs = list(hyp.runs)
    runs[constraint_idx] = len(hyp.tokens)
    closed = None if len(toks) == 1 else constraint_idx
    return [Hypothesis(hyp.tokens + (toks[0],), hyp.score + lp, tuple(coverage), tuple(runs), closed, False)]


def step_continue(hyp: Hypothesis, scorer: Scorer, ctx: ScoreContext, constraints: ConstraintSet) -> Hypothesis | None:
    """Force the next token of the constraint in progress.

    Returns ``None`` if the scorer gives that token zero probability.
    """
    if hyp.is_open:
        raise ValueError("continue needs a closed hypothesis")
    i = hyp.closed
    toks = constraints[i].tokens
    j = hyp.coverage[i]
    lp = float(_logprobs(scorer, ctx, hyp)[toks[j]])
    if lp == NEG_INF:
        return None
    coverage = list(hyp.coverage)
    coverage[i] = j + 1
    closed = None if j + 1 == len(toks) else i
    return Hypothesis(hyp.tokens + (toks[j],), hyp.score + lp, tuple(coverage), hyp.runs, closed, False)


def prune(cell: Sequence[Hypothesis], k: int) -> list[Hypothesis]:
    """Best `k` by score; ties go to the lexicographically smaller sequence."""
    return sorted(cell, key=Hypothesis.sort_key)[:k]


def _fill_cell(gen_parents, diag_parents, scorer, ctx, constraints, k, mode, top, stats):
    vocab = scorer.vocab
    eos = vocab.eos_id
    extra = []
    for hyp in diag_parents:
        if hyp.finished:
            continue
        if hyp.is_open:
            for i, cov in enumerate(hyp.coverage):
                if cov == 0:
                    extra.extend(step_start(hyp, i, scorer, ctx, constraints, mode))
        else:
            nxt = step_continue(hyp, scorer, ctx, constraints)
            if nxt is not None:
                extra.append(nxt)
    stats["expanded"] += len(extra)

    parents = [h for h in gen_parents if h.is_open and not h.finished]
    if not parents:
        return prune(extra, k)
    base = np.array([h.score for h in parents])
    scores = base[:, None] + np.vstack([_logprobs(scorer, ctx, h) for h in parents])
    if not top:
        scores[:, eos] = NEG_INF
    stats["expanded"] += int(np.isfinite(scores).sum())

    flat = scores.ravel()
    finite = np.flatnonzero(flat > NEG_INF)
    if len(finite) + len(extra) > k:
        # only candidates tied with or above the k-th best can survive
        pool = np.concatenate([flat[finite], [h.score for h in extra]])
        kth = -np.partition(-pool, k - 1)[k - 1]
        finite = finite[flat[finite] >= kth]
        extra = [h for h in extra if h.score >= kth]
    V = scores.shape[1]
    cands = extra
    for idx in finite.tolist():
        p, tok = divmod(idx, V)
        h = parents[p]
        cands.append(Hypothesis(h.tokens + (tok,), float(flat[idx]), h.coverage, h.runs, None, tok == eos))
    return prune(cands, k)


def decode_gbs(
    scorer: Scorer,
    ctx: ScoreContext,
    constraints: ConstraintSet,
    max_len: int,
    k: int,
    mode: MatchMode | str = MatchMode.WORD,
    normalize: bool = False,
    keep_grid: bool = False,
    check: bool = False,
) -> GBSResult:
    """Constrained decoding with Grid Beam Search.

    Parameters
    ----------
    scorer
        Next-token scorer.  It never sees the constraints.
    ctx
        Source and MT words; ``ctx.prefix`` is ignored.
    constraints
        Token sequences that must each appear once, contiguously.
    max_len
        Longest output, EOS included.  Must be at least ``numC + 1``.
    k
        Beam width of every grid cell.
    mode
        ``"word"`` only lets constraints open on a word boundary;
        ``"token"`` lets them open anywhere.
    normalize
        Rank finished hypotheses by per-token score instead of total score.
    keep_grid, check
        Return the full grid / assert grid invariants while decoding.

    Returns
    -------
    GBSResult
        The best finished top-row hypothesis.  If none finished, the best
        unfinished top-row hypothesis from the latest timestep that has one,
        with ``diagnostics["fallback"] = True``.
    """
    mode = MatchMode(mode)
    num_c = constraints.total_tokens
    if k < 1:
        raise ValueError("beam width must be >= 1")
    if max_len < num_c + 1:
        raise ConstraintsUnsatisfiable(
            f"max_len={max_len} cannot hold {num_c} constraint tokens plus eos"
        )
    ctx = ctx.with_prefix(())
    grid = [[[] for _ in range(num_c + 1)] for _ in range(max_len + 1)]
    grid[0][0] = [start_hypothesis(constraints)]
    stats = {"expanded": 0}
    for t in range(1, max_len + 1):
        for c in loop_bounds(t, max_len, num_c):
            diag = grid[t - 1][c - 1] if c > 0 else []
            grid[t][c] = _fill_cell(
                grid[t - 1][c], diag, scorer, ctx, constraints, k, mode, c == num_c, stats
            )
            if check:
                _check_cell(grid[t][c], t, c, k)

    top = [h for t in range(max_len + 1) for h in grid[t][num_c]]
    finished = [h for h in top if h.finished]
    diagnostics = {
        "expanded": stats["expanded"],
        "row_occupancy": [sum(len(grid[t][c]) for t in range(max_len + 1)) for c in range(num_c + 1)],
        "finished": len(finished),
        "fallback": False,
        "max_len": max_len,
        "num_c": num_c,
        "mode": mode.value,
    }
    if finished:
        if normalize:
            best = min(finished, key=lambda h: (-h.score / len(h.tokens), h.tokens))
        else:
            best = min(finished, key=Hypothesis.sort_key)
    else:
        best = None
        for t in range(max_len, 0, -1):
            live = [h for h in grid[t][num_c] if h.is_open]
            if live:
                best = min(live, key=Hypothesis.sort_key)
                break
        if best is None:
            raise DecodeIncomplete("no hypothesis reached the top row of the grid")
        diagnostics["fallback"] = True
    return GBSResult(best, diagnostics, grid if keep_grid else None)


def _check_cell(cell, t, c, k):
    assert len(cell) <= k, (t, c, len(cell))
    keys = [h.sort_key() for h in cell]
    assert keys == sorted(keys), (t, c)
    for h in cell:
        assert len(h.tokens) == t, (t, c, h)
        assert h.covered == c, (t, c, h)
        assert h.closed is None or 0 < h.coverage[h.closed], h
        assert not h.finished or h.is_open, h
