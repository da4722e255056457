"""Word-level QE constrained decoding with Grid Beam Search."""

from .constraints import Constraint, ConstraintSet, QETag, extract_constraints, lift_tags_to_words
from .decoders import (
    DecodeConfig,
    decode_beam,
    decode_greedy,
    decode_sample,
    decode_soft_penalty,
    decode_topk,
)
from .gbs import DecodeResult, Hypothesis, MatchMode, decode_gbs
from .metrics import bleu_corpus, corpus_ter, deterioration_rate, ter
from .oracle import brute_force_constrained
from .qesim import NoiseSpec, oracle_tags, perturb_tags
from .scoring import (
    ScoreContext,
    Scorer,
    copy_bias_wrap,
    ngram_train,
    soft_penalty_wrap,
    table_scorer_load,
)
from .text import Vocabulary, detokenize, segment, word_boundaries

__version__ = "0.1.0"
