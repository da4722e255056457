"""Unconstrained comparison decoders: greedy, beam, sampling, top-k, soft penalty."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .gbs import NEG_INF, DecodeResult, Hypothesis
from .scoring import ScoreContext, Scorer, soft_penalty_wrap

__all__ = [
    "DecoderKind",
    "DecodeConfig",
    "TOP_K_PRESETS",
    "make_rng",
    "decode_greedy",
    "decode_beam",
    "decode_sample",
    "decode_topk",
    "decode_soft_penalty",
]

# best truncation values per language pair in the original experiments
TOP_K_PRESETS = {"en-de": 25, "en-hi": 30, "en-mr": 25}
DEFAULT_BEAM = 5


class DecoderKind(str, enum.Enum):
    GREEDY = "greedy"
    BEAM = "beam"
    SAMPLE = "sample"
    TOPK = "topk"
    GBS = "gbs"
    SOFT_PENALTY = "soft-penalty"


@dataclass(frozen=True)
class DecodeConfig:
    decoder: DecoderKind = DecoderKind.BEAM
    max_len: int = 0
    beam: int = DEFAULT_BEAM
    top_k: int = TOP_K_PRESETS["en-de"]
    seed: int = 0
    beta: float = 1.0
    match_mode: str = "word"

    def __post_init__(self):
        object.__setattr__(self, "decoder", DecoderKind(self.decoder))
        if self.beam < 1:
            raise ValueError("beam must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_len < 0:
            raise ValueError("max_len must be >= 1 (or 0 for automatic)")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; decoders draw exactly one uniform per timestep."""
    return np.random.Generator(np.random.PCG64(seed))


def _extend(hyp, tok, lp, eos):
    return Hypothesis(hyp.tokens + (tok,), hyp.score + lp, (), (), None, tok == eos)


def decode_greedy(scorer: Scorer, ctx: ScoreContext, max_len: int) -> DecodeResult:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    eos = scorer.vocab.eos_id
    hyp = Hypothesis()
    for _ in range(max_len):
        logp = scorer.next_logprobs(ctx.with_prefix(hyp.tokens))
        tok = int(np.argmax(logp))
        hyp = _extend(hyp, tok, float(logp[tok]), eos)
        if hyp.finished:
            break
    return DecodeResult(hyp, {"fallback": not hyp.finished})


def decode_beam(scorer: Scorer, ctx: ScoreContext, max_len: int, k: int = DEFAULT_BEAM) -> DecodeResult:
    """Standard beam search over cumulative log-probability.

    Each step keeps the best `k` expansions; those ending in EOS move to a
    finished pool and stop occupying the beam.  Search ends at `max_len`, or
    once the best live score falls strictly below the best finished score.
    """
    if k < 1:
        raise ValueError("beam width must be >= 1")
    eos = scorer.vocab.eos_id
    live = [Hypothesis()]
    last_live = live
    finished = []
    expanded = 0
    for _ in range(max_len):
        base = np.array([h.score for h in live])
        scores = base[:, None] + np.vstack([scorer.next_logprobs(ctx.with_prefix(h.tokens)) for h in live])
        flat = scores.ravel()
        idx = np.flatnonzero(flat > NEG_INF)
        expanded += len(idx)
        if len(idx) > k:
            kth = -np.partition(-flat[idx], k - 1)[k - 1]
            idx = idx[flat[idx] >= kth]
        V = scores.shape[1]
        cands = []
        for i in idx.tolist():
            p, tok = divmod(i, V)
            cands.append(Hypothesis(live[p].tokens + (tok,), float(flat[i]), (), (), None, tok == eos))
        cands = sorted(cands, key=Hypothesis.sort_key)[:k]
        finished.extend(h for h in cands if h.finished)
        live = [h for h in cands if not h.finished]
        if not live:
            break
        last_live = live
        if finished and max(h.score for h in live) < max(h.score for h in finished):
            break
    diagnostics = {"expanded": expanded, "finished": len(finished), "fallback": not finished}
    if finished:
        return DecodeResult(min(finished, key=Hypothesis.sort_key), diagnostics)
    return DecodeResult(min(last_live, key=Hypothesis.sort_key), diagnostics)


def _draw(logp, k_trunc, u):
    order = np.argsort(-logp, kind="stable")[:k_trunc]
    cdf = np.cumsum(np.exp(logp[order]))
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return int(order[min(i, len(order) - 1)])


def _sample(scorer, ctx, max_len, k_trunc, seed):
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    rng = make_rng(seed)
    eos = scorer.vocab.eos_id
    hyp = Hypothesis()
    for _ in range(max_len):
        logp = scorer.next_logprobs(ctx.with_prefix(hyp.tokens))
        tok = _draw(logp, k_trunc, rng.random())
        hyp = _extend(hyp, tok, float(logp[tok]), eos)
        if hyp.finished:
            break
    return DecodeResult(hyp, {"fallback": not hyp.finished, "seed": seed})


def decode_sample(scorer: Scorer, ctx: ScoreContext, max_len: int, seed: int) -> DecodeResult:
    """Ancestral sampling from the full next-token distribution."""
    return _sample(scorer, ctx, max_len, len(scorer.vocab), seed)


def decode_topk(scorer: Scorer, ctx: ScoreContext, max_len: int, k_trunc: int, seed: int) -> DecodeResult:
    """Sample from the `k_trunc` most probable tokens, renormalized.

    The reported score is under the untruncated distribution.
    """
    if k_trunc < 1:
        raise ValueError("k_trunc must be >= 1")
    return _sample(scorer, ctx, max_len, k_trunc, seed)


def decode_soft_penalty(scorer: Scorer, ctx: ScoreContext, max_len: int, k: int, beta: float) -> DecodeResult:
    return decode_beam(soft_penalty_wrap(scorer, beta), ctx, max_len, k)
