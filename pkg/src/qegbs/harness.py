"""Dataset I/O, batch decoding, experiment reports and the synthetic corpus generator."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .constraints import ConstraintSet, QETag, extract_constraints, lift_tags_to_words, parse_tags
from .decoders import (
    DecodeConfig,
    DecoderKind,
    decode_beam,
    decode_greedy,
    decode_sample,
    decode_soft_penalty,
    decode_topk,
)
from .errors import ParseError, QEGBSError, SchemaError
from .gbs import MatchMode, decode_gbs
from .metrics import bleu_corpus, ter
from .qesim import NoiseSpec, oracle_tags, perturb_tags
from .scoring import ScoreContext, Scorer
from .text import Vocabulary, detokenize, segment, word_boundaries

log = logging.getLogger(__name__)

__all__ = [
    "TaggedInstance",
    "load_jsonl",
    "dump_jsonl",
    "instance_word_tags",
    "instance_constraints",
    "auto_max_len",
    "run_decode",
    "write_records",
    "ExperimentConfig",
    "ExperimentReport",
    "run_experiment",
    "SyntheticConfig",
    "SyntheticCorpus",
    "make_synthetic",
    "fingerprint",
]


@dataclass
class TaggedInstance:
    id: str
    src: list[str]
    mt: list[str]
    tags: list[QETag]
    tag_level: str = "word"
    mt_tokens: list[str] | None = None
    pe: list[str] | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = {"id": self.id, "src": self.src, "mt": self.mt, "tags": [str(t) for t in self.tags], "tag_level": self.tag_level}
        if self.mt_tokens is not None:
            d["mt_tokens"] = self.mt_tokens
        if self.pe is not None:
            d["pe"] = self.pe
        if self.meta:
            d["meta"] = self.meta
        return d


def _word_list(obj, name, iid):
    if not isinstance(obj, list) or not all(isinstance(w, str) and w for w in obj):
        raise SchemaError(name, f"instance {iid!r}: expected a list of non-empty strings")
    return obj


def _instance_from_json(d, tag_level) -> TaggedInstance:
    if not isinstance(d, dict):
        raise SchemaError("<root>", "each line must be a JSON object")
    iid = d.get("id")
    if not isinstance(iid, str) or not iid:
        raise SchemaError("id", "missing or not a non-empty string")
    for key in ("src", "mt", "tags"):
        if key not in d:
            raise SchemaError(key, f"instance {iid!r}: field missing")
    src = _word_list(d["src"], "src", iid) if d["src"] else []
    mt = _word_list(d["mt"], "mt", iid) if d["mt"] else []
    try:
        tags = parse_tags(d["tags"])
    except (ValueError, TypeError) as e:
        raise SchemaError("tags", f"instance {iid!r}: {e}") from None
    level = d.get("tag_level", tag_level)
    if level not in ("word", "token"):
        raise SchemaError("tag_level", f"instance {iid!r}: must be 'word' or 'token'")
    mt_tokens = d.get("mt_tokens")
    if mt_tokens is not None:
        mt_tokens = _word_list(mt_tokens, "mt_tokens", iid)
    pe = d.get("pe")
    if pe is not None:
        pe = _word_list(pe, "pe", iid) if pe else []
    if level == "word" and len(tags) != len(mt):
        raise SchemaError("tags", f"instance {iid!r}: {len(tags)} tags for {len(mt)} MT words")
    if level == "token":
        if mt_tokens is None:
            raise SchemaError("mt_tokens", f"instance {iid!r}: token-level tags need mt_tokens")
        if len(tags) != len(mt_tokens):
            raise SchemaError("tags", f"instance {iid!r}: {len(tags)} tags for {len(mt_tokens)} MT tokens")
    return TaggedInstance(iid, src, mt, tags, level, mt_tokens, pe, d.get("meta") or {})


def load_jsonl(path, tag_level: str = "word") -> list[TaggedInstance]:
    """Read and validate a dataset file, one instance per line.

    `tag_level` is the file-wide default; a line may override it with its
    own ``"tag_level"`` field.
    """
    out = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for n, raw in enumerate(f, 1):
            if not raw.strip():
                continue
            try:
                d = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(n, str(e)) from None
            inst = _instance_from_json(d, tag_level)
            if inst.id in seen:
                raise SchemaError("id", f"duplicate id {inst.id!r} on line {n}")
            seen.add(inst.id)
            out.append(inst)
    return out


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def dump_jsonl(instances: Sequence[TaggedInstance], path):
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(_dumps(inst.to_json()) + "\n")


def instance_word_tags(inst: TaggedInstance, vocab: Vocabulary, rule: str = "all") -> list[QETag]:
    if inst.tag_level == "word":
        return list(inst.tags)
    ids = vocab.ids(inst.mt_tokens)
    return lift_tags_to_words(inst.tags, word_boundaries(ids, vocab), rule)


def instance_constraints(inst: TaggedInstance, vocab: Vocabulary, tags=None, rule: str = "all") -> ConstraintSet:
    word_tags = instance_word_tags(inst, vocab, rule) if tags is None else tags
    return extract_constraints(inst.mt, word_tags, vocab)


def auto_max_len(inst: TaggedInstance, vocab: Vocabulary, num_c: int = 0) -> int:
    """Twice the MT token count plus two, never below ``num_c + 1``."""
    n_tok = sum(len(segment(w, vocab)) for w in inst.mt)
    return max(2 * n_tok + 2, num_c + 1)


def instance_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def decode_instance(inst, index, scorer: Scorer, config: DecodeConfig, tags=None):
    vocab = scorer.vocab
    ctx = ScoreContext(tuple(inst.src), tuple(inst.mt))
    kind = config.decoder
    constraints = None
    if kind is DecoderKind.GBS:
        constraints = instance_constraints(inst, vocab, tags)
    num_c = constraints.total_tokens if constraints is not None else 0
    max_len = config.max_len or auto_max_len(inst, vocab, num_c)
    if kind is DecoderKind.GBS:
        res = decode_gbs(scorer, ctx, constraints, max_len, config.beam, MatchMode(config.match_mode))
    elif kind is DecoderKind.BEAM:
        res = decode_beam(scorer, ctx, max_len, config.beam)
    elif kind is DecoderKind.GREEDY:
        res = decode_greedy(scorer, ctx, max_len)
    elif kind is DecoderKind.SAMPLE:
        res = decode_sample(scorer, ctx, max_len, instance_seed(config.seed, index))
    elif kind is DecoderKind.TOPK:
        res = decode_topk(scorer, ctx, max_len, config.top_k, instance_seed(config.seed, index))
    else:
        res = decode_soft_penalty(scorer, ctx, max_len, config.beam, config.beta)
    return res, constraints


def _record(inst, config, res, constraints, vocab):
    hyp = res.hypothesis
    toks = list(hyp.tokens)
    body = toks[:-1] if hyp.finished else toks
    while body and vocab.is_continuation(body[-1]):
        body = body[:-1]  # unfinished output cut mid-word
    rec = {
        "id": inst.id,
        "decoder": config.decoder.value,
        "output": detokenize(body, vocab),
        "tokens": vocab.strings(toks),
        "score": hyp.score,
        "finished": hyp.finished,
        "diagnostics": res.diagnostics,
        "error": None,
    }
    if constraints is not None:
        rec["constraints"] = [c.surface for c in constraints]
        rec["runs"] = list(hyp.runs)
    return rec


def run_decode(instances, scorer: Scorer, config: DecodeConfig, tags_override=None, out_path=None) -> list[dict]:
    """Decode every instance; failures are recorded per instance, not raised.

    `tags_override` optionally maps instance id to word-level tags used
    instead of the instance's own tags (GBS only).
    """
    records = []
    for i, inst in enumerate(instances):
        tags = tags_override.get(inst.id) if tags_override else None
        try:
            res, constraints = decode_instance(inst, i, scorer, config, tags)
            records.append(_record(inst, config, res, constraints, scorer.vocab))
        except QEGBSError as e:
            log.warning("instance %s failed: %s", inst.id, e)
            records.append({"id": inst.id, "decoder": config.decoder.value, "output": None, "error": f"{type(e).__name__}: {e}"})
    if out_path is not None:
        write_records(records, out_path)
    return records


def write_records(records, path):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(_dumps(r) + "\n")


def fingerprint(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, (str, Path)) and Path(p).is_file():
            h.update(Path(p).read_bytes())
        else:
            h.update(_dumps(p).encode())
        h.update(b"\0")
    return h.hexdigest()


# -- experiments -----------------------------------------------------------

SYSTEMS = (
    "do-nothing",
    "beam",
    "gbs-token@oracle",
    "gbs-word@oracle",
    "greedy",
    "sample",
    "topk",
    "soft-penalty",
)


@dataclass
class ExperimentConfig:
    """Decoder matrix to run over one dataset.

    System names: ``do-nothing``, ``beam``, ``greedy``, ``sample``, ``topk``,
    ``soft-penalty`` and ``gbs-<token|word>@<oracle|given|perturbed>``, where
    the suffix picks the tag source (oracle tags from the post-edit, the
    file's own tags, or oracle tags run through ``perturb_tags``).
    """

    systems: tuple = SYSTEMS
    beam: int = 5
    top_k: int = 25
    beta: float = 1.0
    max_len: int = 0
    seed: int = 0
    p_fp: float = 0.0
    p_fn: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise SchemaError("config", f"unknown keys {sorted(unknown)}")
        d = dict(d)
        if "systems" in d:
            d["systems"] = tuple(d["systems"])
        return cls(**d)


@dataclass
class ExperimentReport:
    systems: dict
    records: list
    fingerprint: str
    seed: int
    partial: bool = False

    def to_json(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        lines = [f"{'system':<22} {'TER':>8} {'BLEU':>8} {'deter.':>8} {'errors':>6}"]
        for name, s in self.systems.items():
            lines.append(f"{name:<22} {100 * s['ter']:8.2f} {s['bleu']:8.2f} {100 * s['deterioration']:7.1f}% {s['errors']:6d}")
        return "\n".join(lines)


def _system_config(name, cfg: ExperimentConfig):
    base, _, _ = name.partition("@")
    common = dict(max_len=cfg.max_len, beam=cfg.beam, top_k=cfg.top_k, seed=cfg.seed, beta=cfg.beta)
    if base.startswith("gbs-"):
        return DecodeConfig(decoder="gbs", match_mode=base[4:], **common)
    return DecodeConfig(decoder=base, **common)


def experiment_tags(instances, source, cfg: ExperimentConfig):
    if source == "given":
        return None
    out = {}
    for i, inst in enumerate(instances):
        tags = oracle_tags(inst.mt, inst.pe)
        if source == "perturbed":
            tags = perturb_tags(tags, NoiseSpec(cfg.p_fp, cfg.p_fn, instance_seed(cfg.seed, i)))
        elif source != "oracle":
            raise SchemaError("systems", f"unknown tag source {source!r}")
        out[inst.id] = tags
    return out


def run_experiment(instances, scorer: Scorer, cfg: ExperimentConfig, dataset_fingerprint=None) -> ExperimentReport:
    for inst in instances:
        if not inst.pe:
            raise SchemaError("pe", f"instance {inst.id!r}: experiments need a post-edit")
    refs = [inst.pe for inst in instances]
    mt_ter = [ter(inst.mt, inst.pe) for inst in instances]
    systems = {}
    records = []
    partial = False
    for name in cfg.systems:
        if name == "do-nothing":
            outs = [inst.mt for inst in instances]
            errors = [None] * len(instances)
        else:
            base, _, source = name.partition("@")
            tags = experiment_tags(instances, source, cfg) if base.startswith("gbs-") else None
            recs = run_decode(instances, scorer, _system_config(name, cfg), tags)
            outs = [r["output"] if r["output"] is not None else [] for r in recs]
            errors = [r["error"] for r in recs]
        per = [ter(o, r) for o, r in zip(outs, refs)]
        n_err = sum(e is not None for e in errors)
        partial |= n_err > 0
        for inst, o, t, m, e in zip(instances, outs, per, mt_ter, errors):
            records.append({
                "id": inst.id,
                "system": name,
                "output": o,
                "edits": t.edits,
                "ref_len": t.ref_len,
                "ter": t.score,
                "mt_ter": m.score,
                "error": e,
            })
        systems[name] = {
            "ter": sum(t.edits for t in per) / sum(t.ref_len for t in per),
            "bleu": bleu_corpus(outs, refs).score,
            "deterioration": sum(t.score > m.score for t, m in zip(per, mt_ter)) / len(per),
            "errors": n_err,
        }
    fp = fingerprint(dataset_fingerprint or [i.to_json() for i in instances], asdict(cfg), cfg.seed)
    return ExperimentReport(systems, records, fp, cfg.seed, partial)


def summarize_records(records) -> dict:
    """Recompute per-system corpus TER and deterioration from instance records."""
    by = {}
    for r in records:
        by.setdefault(r["system"], []).append(r)
    out = {}
    for name, rs in by.items():
        out[name] = {
            "ter": sum(r["edits"] for r in rs) / sum(r["ref_len"] for r in rs),
            "deterioration": sum(r["ter"] > r["mt_ter"] for r in rs) / len(rs),
        }
    return out


# -- synthetic data --------------------------------------------------------

_ONSETS = "k t p m n s r l d g b h"
_VOWELS = "a e i o u"


@dataclass
class SyntheticConfig:
    """Knobs for :func:`make_synthetic`.

    Words are built from CV syllables; `split_fraction` of them are two
    pieces long (``"ka@@" "ri"``), and multi-piece words deliberately share
    first pieces.  Post-edits come from a layered bigram process: word slots
    are split across `n_layers` positions, each word is followed by
    `branching` words of the next layer (Dirichlet weights, sharper for
    larger `skew`), and words at or beyond position ``min_len - 1`` are
    terminal with probability `p_terminal`.  A terminal word always ends
    the sentence, the last layer is all terminal.
    """

    n_words: int = 120
    n_sentences: int = 1000
    n_lm_sentences: int = 5000
    n_layers: int = 6
    branching: int = 2
    skew: float = 1.0
    p_terminal: float = 0.0
    min_len: int = 4
    split_fraction: float = 0.6
    p_sub: float = 0.3
    p_del: float = 0.05
    p_ins: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("p_sub", "p_del", "p_ins", "p_terminal", "split_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.n_layers < 1 or not 1 <= self.min_len <= self.n_layers:
            raise ValueError("need 1 <= min_len <= n_layers")
        if self.n_words < 2 * self.n_layers:
            raise ValueError("need at least two words per layer")
        if self.branching < 1 or self.skew <= 0:
            raise ValueError("branching must be >= 1 and skew > 0")


@dataclass
class SyntheticCorpus:
    instances: list
    vocab: Vocabulary
    lexicon: dict
    lm_corpus: list  # token-string sequences ending in eos
    config: SyntheticConfig


def _make_lexicon(n_words, split_fraction, rng):
    syllables = [o + v for o in _ONSETS.split() for v in _VOWELS.split()]
    n_split = int(round(n_words * split_fraction))
    n_single = n_words - n_split
    if n_single > len(syllables):
        raise ValueError("too many single-piece words for the syllable inventory")
    order = rng.permutation(len(syllables))
    singles = [syllables[i] for i in order[:n_single]]
    # few distinct first pieces so that multi-piece words share prefixes
    n_heads = max(1, int(math.ceil(n_split / 3)))
    heads = [syllables[i] for i in rng.permutation(len(syllables))[:n_heads]]
    lexicon = {w: (w,) for w in singles}
    words = list(singles)
    tails = rng.permutation(len(syllables))
    ti = 0
    for h in range(n_split):
        head = heads[h % n_heads]
        while True:
            tail = syllables[tails[ti % len(syllables)]]
            ti += 1
            word = head + tail
            if word not in lexicon:
                break
        lexicon[word] = (head + "@@", tail)
        words.append(word)
    return words, lexicon


def make_synthetic(cfg: SyntheticConfig) -> SyntheticCorpus:
    """Generate a seeded triplet corpus (src, mt, pe) with oracle tags.

    MT is derived from the post-edit word by word: substitution with
    probability `p_sub` (by a word absent from that post-edit), otherwise
    deletion with probability `p_del`; independently, a random word is
    inserted after it with probability `p_ins`.
    The source side is a verbatim copy of the post-edit, identified by the
    instance id; it stands in for a source sentence without modelling
    translation.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    words, lexicon = _make_lexicon(cfg.n_words, cfg.split_fraction, rng)
    layers = np.array_split(rng.permutation(len(words)), cfg.n_layers)
    layer_of = {int(w): i for i, ws in enumerate(layers) for w in ws}
    succ, weights = {}, {}
    for w, i in layer_of.items():
        if i + 1 < cfg.n_layers:
            nxt = layers[i + 1]
            succ[w] = rng.choice(nxt, size=min(cfg.branching, len(nxt)), replace=False)
            weights[w] = rng.dirichlet(np.full(len(succ[w]), 1.0 / cfg.skew))
    terminal = {
        w for w, i in layer_of.items()
        if i == cfg.n_layers - 1 or (i >= cfg.min_len - 1 and rng.random() < cfg.p_terminal)
    }
    first = layers[0]
    first_w = rng.dirichlet(np.full(len(first), 1.0 / cfg.skew))

    def sentence():
        w = int(first[rng.choice(len(first), p=first_w)])
        out = [w]
        while w not in terminal:
            w = int(succ[w][rng.choice(len(succ[w]), p=weights[w])])
            out.append(w)
        return [words[i] for i in out]

    tokens = sorted({p for ps in lexicon.values() for p in ps}) + ["</s>"]
    vocab = Vocabulary(tuple(tokens), eos="</s>", lexicon=lexicon)

    lm_corpus = []
    for _ in range(cfg.n_lm_sentences):
        pe = sentence()
        lm_corpus.append([p for w in pe for p in lexicon[w]] + ["</s>"])

    instances = []
    width = len(str(cfg.n_sentences))
    for n in range(cfg.n_sentences):
        pe = sentence()
        present = set(pe)
        pool = [w for w in words if w not in present] or words
        mt = []
        n_sub = n_del = n_ins = 0
        for w in pe:
            u_sub, u_del, u_ins = rng.random(3)
            if u_sub < cfg.p_sub:
                mt.append(pool[rng.integers(len(pool))])
                n_sub += 1
            elif u_del < cfg.p_del:
                n_del += 1
            else:
                mt.append(w)
            if u_ins < cfg.p_ins:
                mt.append(pool[rng.integers(len(pool))])
                n_ins += 1
        iid = f"syn-{n:0{width}d}"
        src = list(pe)
        tags = oracle_tags(mt, pe)
        instances.append(
            TaggedInstance(
                iid, src, mt, tags, "word", None, pe,
                {"substitutions": n_sub, "deletions": n_del, "insertions": n_ins, "pe_words": len(pe)},
            )
        )
    return SyntheticCorpus(instances, vocab, lexicon, lm_corpus, cfg)
