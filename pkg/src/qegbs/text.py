"""Vocabulary, lexicon-driven subword segmentation and detokenization.

Tokens follow the BPE suffix convention: a piece ending in the continuation
marker (``"@@"`` by default) is glued to the piece after it.  Segmentation is
not learned; a static lexicon maps each word to its pieces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DanglingContinuation, UnknownWord

__all__ = [
    "Vocabulary",
    "SegmentedWord",
    "segment",
    "detokenize",
    "word_boundaries",
    "load_vocabulary",
    "save_vocabulary",
    "load_lexicon",
    "save_lexicon",
]


@dataclass(frozen=True)
class SegmentedWord:
    surface: str
    pieces: tuple[int, ...]

    def __len__(self):
        return len(self.pieces)


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Dense token inventory plus the word-to-pieces lexicon.

    Parameters
    ----------
    tokens
        Token strings; the position of a token is its id.
    eos
        The end-of-sequence token string.  Must be in `tokens`.
    marker
        Suffix that marks a non-final piece of a word.
    lexicon
        Optional ``word -> piece strings`` mapping.  Words missing from the
        lexicon fall back to a single token of the same spelling.
    unk
        Optional token used for words that cannot be segmented at all.
    """

    tokens: tuple[str, ...]
    eos: str = "</s>"
    marker: str = "@@"
    lexicon: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    unk: str | None = None

    def __post_init__(self):
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        if any(not t for t in tokens):
            raise ValueError("empty token string in vocabulary")
        index = {}
        for i, t in enumerate(tokens):
            if t in index:
                raise ValueError(f"duplicate token {t!r}")
            index[t] = i
        if self.eos not in index:
            raise ValueError(f"eos token {self.eos!r} not in vocabulary")
        if self.eos.endswith(self.marker):
            raise ValueError("eos must not carry the continuation marker")
        if self.unk is not None and self.unk not in index:
            raise ValueError(f"unk token {self.unk!r} not in vocabulary")
        lex = {}
        for word, pieces in dict(self.lexicon).items():
            pieces = tuple(pieces)
            _check_pieces(word, pieces, self.marker)
            for p in pieces:
                if p not in index:
                    raise ValueError(f"lexicon piece {p!r} (word {word!r}) not in vocabulary")
            lex[word] = pieces
        object.__setattr__(self, "lexicon", lex)
        object.__setattr__(self, "_index", index)
        object.__setattr__(
            self, "_cont", tuple(t.endswith(self.marker) for t in tokens)
        )
        object.__setattr__(self, "_seg_cache", {})

    def __len__(self):
        return len(self.tokens)

    @property
    def eos_id(self) -> int:
        return self._index[self.eos]

    def id(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise UnknownWord(f"token {token!r} not in vocabulary") from None

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def __contains__(self, token):
        return token in self._index

    def is_continuation(self, token_id: int) -> bool:
        return self._cont[token_id]

    def strings(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]


def _check_pieces(word, pieces, marker):
    if not pieces:
        raise ValueError(f"word {word!r} has no pieces")
    for p in pieces[:-1]:
        if not p.endswith(marker):
            raise ValueError(f"non-final piece {p!r} of {word!r} lacks marker")
    if pieces[-1].endswith(marker):
        raise ValueError(f"final piece {pieces[-1]!r} of {word!r} carries marker")
    glued = "".join(p[: -len(marker)] for p in pieces[:-1]) + pieces[-1]
    if glued != word:
        raise ValueError(f"pieces {pieces} do not spell {word!r}")


def segment(word: str, vocab: Vocabulary) -> SegmentedWord:
    """Split `word` into vocabulary pieces.

    Lookup order: lexicon entry, then the word itself as a token, then the
    UNK fallback if one is configured.
    """
    cache = vocab._seg_cache
    hit = cache.get(word)
    if hit is not None:
        return hit
    if not word:
        raise UnknownWord("cannot segment the empty string")
    if word in vocab.lexicon:
        pieces = tuple(vocab.id(p) for p in vocab.lexicon[word])
    elif word in vocab and not word.endswith(vocab.marker) and word != vocab.eos:
        pieces = (vocab.id(word),)
    elif vocab.unk is not None:
        pieces = (vocab.id(vocab.unk),)
    else:
        raise UnknownWord(f"no segmentation for word {word!r}")
    seg = SegmentedWord(word, pieces)
    cache[word] = seg
    return seg


def word_boundaries(tokens: Sequence[int], vocab: Vocabulary) -> list[tuple[int, int]]:
    """Half-open ``(start, end)`` token spans, one per surface word."""
    spans = []
    start = 0
    for i, tok in enumerate(tokens):
        if not vocab.is_continuation(tok):
            spans.append((start, i + 1))
            start = i + 1
    if start != len(tokens):
        raise DanglingContinuation(
            f"sequence ends on continuation piece {vocab.tokens[tokens[-1]]!r}"
        )
    return spans


def detokenize(tokens: Sequence[int], vocab: Vocabulary) -> list[str]:
    tokens = list(tokens)
    if tokens and tokens[-1] == vocab.eos_id:
        tokens.pop()
    if vocab.eos_id in tokens:
        raise ValueError("eos may only appear in final position")
    cut = len(vocab.marker)
    words = []
    for start, end in word_boundaries(tokens, vocab):
        parts = [vocab.tokens[t][:-cut] for t in tokens[start : end - 1]]
        parts.append(vocab.tokens[tokens[end - 1]])
        words.append("".join(parts))
    return words


def load_vocabulary(path, lexicon=None, unk=None) -> Vocabulary:
    """Read a vocabulary file.

    The file holds one token per line; a header line ``#eos <token>`` names
    the end-of-sequence token (optionally ``#marker <suffix>`` too).  Header
    lines do not consume ids.
    """
    eos = None
    marker = "@@"
    tokens = []
    with open(path, encoding="utf-8") as f:
        for raw in f:
            line = raw.rstrip("\n")
            if line.startswith("#eos "):
                eos = line[5:].strip()
            elif line.startswith("#marker "):
                marker = line[8:].strip()
            elif line:
                tokens.append(line)
    if eos is None:
        raise ValueError(f"{path}: missing '#eos <token>' header")
    if isinstance(lexicon, (str, Path)):
        lexicon = load_lexicon(lexicon)
    return Vocabulary(tuple(tokens), eos=eos, marker=marker, lexicon=lexicon or {}, unk=unk)


def save_vocabulary(vocab: Vocabulary, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"#eos {vocab.eos}\n")
        if vocab.marker != "@@":
            f.write(f"#marker {vocab.marker}\n")
        for t in vocab.tokens:
            f.write(t + "\n")


def load_lexicon(path) -> dict[str, tuple[str, ...]]:
    lex = {}
    with open(path, encoding="utf-8") as f:
        for n, raw in enumerate(f, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            try:
                word, pieces = line.split("\t")
            except ValueError:
                raise ValueError(f"{path}:{n}: expected 'word<TAB>pieces'") from None
            lex[word] = tuple(pieces.split())
    return lex


def save_lexicon(lexicon: Mapping[str, Sequence[str]], path):
    with open(path, "w", encoding="utf-8") as f:
        for word in sorted(lexicon):
            f.write(f"{word}\t{' '.join(lexicon[word])}\n")
