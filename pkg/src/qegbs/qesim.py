"""Oracle word-level QE tags from post-edits, and seeded tag noise."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constraints import QETag

__all__ = ["NoiseSpec", "oracle_tags", "perturb_tags", "align_mt_pe"]


@dataclass(frozen=True)
class NoiseSpec:
    """Tag noise rates.

    p_fp: chance that a truly BAD word is reported OK.
    p_fn: chance that a truly OK word is reported BAD.
    """

    p_fp: float = 0.0
    p_fn: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("p_fp", "p_fn"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def align_mt_pe(mt_words: Sequence[str], pe_words: Sequence[str]) -> list[tuple[str, int | None, int | None]]:
    """Minimum-edit alignment of MT against its post-edit.

    Among alignments with the fewest edits, the one with the most exact
    matches wins; remaining ties prefer match, then substitution, then
    deletion, then insertion when walking back from the end.
    """
    n, m = len(mt_words), len(pe_words)
    # cost is (edits, -matches), compared lexicographically
    cost = [[(0, 0)] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = (i, 0)
    for j in range(1, m + 1):
        cost[0][j] = (j, 0)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            e, nm = cost[i - 1][j - 1]
            diag = (e, nm - 1) if mt_words[i - 1] == pe_words[j - 1] else (e + 1, nm)
            up = (cost[i - 1][j][0] + 1, cost[i - 1][j][1])
            left = (cost[i][j - 1][0] + 1, cost[i][j - 1][1])
            cost[i][j] = min(diag, up, left)

    ops = []
    i, j = n, m
    while i or j:
        here = cost[i][j]
        if i and j:
            e, nm = cost[i - 1][j - 1]
            same = mt_words[i - 1] == pe_words[j - 1]
            if same and (e, nm - 1) == here:
                ops.append(("M", i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
            if not same and (e + 1, nm) == here:
                ops.append(("S", i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i and (cost[i - 1][j][0] + 1, cost[i - 1][j][1]) == here:
            ops.append(("D", i - 1, None))
            i -= 1
        else:
            ops.append(("I", None, j - 1))
            j -= 1
    ops.reverse()
    return ops


def oracle_tags(mt_words: Sequence[str], pe_words: Sequence[str]) -> list[QETag]:
    """OK for MT words kept verbatim by the post-edit, BAD for the rest."""
    if not pe_words:
        raise ValueError("post-edit must be non-empty")
    tags = [QETag.BAD] * len(mt_words)
    for op, i, _ in align_mt_pe(mt_words, pe_words):
        if op == "M":
            tags[i] = QETag.OK
    return tags


def perturb_tags(tags: Sequence[QETag], spec: NoiseSpec) -> list[QETag]:
    """Flip tags independently: OK->BAD with p_fn, BAD->OK with p_fp.

    One uniform is drawn per tag, in order, so for a fixed seed the set of
    flipped positions grows monotonically with either rate.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    u = rng.random(len(tags))
    out = []
    for tag, x in zip(tags, u):
        tag = QETag(tag)
        if tag is QETag.OK:
            out.append(QETag.BAD if x < spec.p_fn else QETag.OK)
        else:
            out.append(QETag.OK if x < spec.p_fp else QETag.BAD)
    return out
