"""Turn word-level OK/BAD quality tags into decoding constraints.

Every maximal run of consecutive OK words in the MT output becomes one
constraint.  Words are the smallest unit: when tags arrive per subword
token they are first lifted to words.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .errors import LengthMismatch
from .text import SegmentedWord, Vocabulary, detokenize, segment, word_boundaries

__all__ = [
    "QETag",
    "Constraint",
    "ConstraintSet",
    "lift_tags_to_words",
    "extract_constraints",
    "parse_tags",
]


class QETag(str, enum.Enum):
    OK = "OK"
    BAD = "BAD"

    def __str__(self):
        return self.value


def parse_tags(values) -> list[QETag]:
    try:
        return [QETag(v) for v in values]
    except ValueError as e:
        raise ValueError(f"tags must be 'OK' or 'BAD': {e}") from None


@dataclass(frozen=True)
class Constraint:
    words: tuple[SegmentedWord, ...]
    source_span: tuple[int, int]

    def __post_init__(self):
        if not self.words:
            raise ValueError("constraint needs at least one word")
        start, end = self.source_span
        if end - start != len(self.words):
            raise ValueError("source_span length must equal the word count")

    @property
    def tokens(self) -> tuple[int, ...]:
        return tuple(t for w in self.words for t in w.pieces)

    @property
    def surface(self) -> list[str]:
        return [w.surface for w in self.words]

    @property
    def first_word_len(self) -> int:
        return len(self.words[0].pieces)

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        prev_end = 0
        for c in self.constraints:
            if c.source_span[0] < prev_end:
                raise ValueError("constraint spans must be ordered and disjoint")
            prev_end = c.source_span[1]

    @property
    def total_tokens(self) -> int:
        return sum(len(c) for c in self.constraints)

    @property
    def token_lists(self) -> list[tuple[int, ...]]:
        return [c.tokens for c in self.constraints]

    def __len__(self):
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def __getitem__(self, i):
        return self.constraints[i]

    @classmethod
    def from_token_lists(cls, token_lists, vocab: Vocabulary) -> "ConstraintSet":
        """Build constraints straight from token-id lists (testing helper).

        Words are recovered from the continuation markers; spans are
        synthetic, laid end to end with a one-word gap.
        """
        out = []
        pos = 0
        for toks in token_lists:
            toks = tuple(toks)
            words = tuple(
                SegmentedWord(detokenize(toks[s:e], vocab)[0], toks[s:e])
                for s, e in word_boundaries(toks, vocab)
            )
            out.append(Constraint(words, (pos, pos + len(words))))
            pos += len(words) + 1
        return cls(tuple(out))


def lift_tags_to_words(
    token_tags: Sequence[QETag],
    boundaries: Sequence[tuple[int, int]],
    rule: str = "all",
) -> list[QETag]:
    """Collapse per-token tags to one tag per word.

    With ``rule="all"`` a word is OK only if every one of its pieces is OK;
    ``rule="any"`` marks it OK if at least one piece is.
    """
    if rule not in ("all", "any"):
        raise ValueError(f"unknown lifting rule {rule!r}")
    n_tokens = boundaries[-1][1] if boundaries else 0
    if len(token_tags) != n_tokens:
        raise LengthMismatch(f"{len(token_tags)} tags for {n_tokens} tokens")
    agg = all if rule == "all" else any
    return [
        QETag.OK if agg(QETag(t) is QETag.OK for t in token_tags[s:e]) else QETag.BAD
        for s, e in boundaries
    ]


def extract_constraints(
    mt_words: Sequence[str], word_tags: Sequence[QETag], vocab: Vocabulary
) -> ConstraintSet:
    if len(mt_words) != len(word_tags):
        raise LengthMismatch(f"{len(word_tags)} tags for {len(mt_words)} words")
    constraints = []
    run_start = None
    for i, tag in enumerate(list(word_tags) + [QETag.BAD]):
        ok = QETag(tag) is QETag.OK
        if ok and run_start is None:
            run_start = i
        elif not ok and run_start is not None:
            words = tuple(segment(w, vocab) for w in mt_words[run_start:i])
            constraints.append(Constraint(words, (run_start, i)))
            run_start = None
    return ConstraintSet(tuple(constraints))
