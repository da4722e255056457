## Grid beam search on a hand-written next-token table.
##
## A toy German vocabulary where "über" is split into the pieces "üb@@ er".
## We force the phrase "über geht" into the output and look at what the
## decoder does with it, then compare the two ways a constraint may open.

import math

from qegbs import ConstraintSet, MatchMode, ScoreContext, Vocabulary, decode_beam, decode_gbs, detokenize
from qegbs.scoring import TableScorer

vocab = Vocabulary(("das", "ist", "üb@@", "er", "el", "geht", "</s>"))
DAS, IST, UB, ER, EL, GEHT, EOS = range(len(vocab))

## Next-token probabilities keyed by prefix, with a default row for every
## other prefix.  The model really likes to say "das ist" and stop.
default = {DAS: 0.15, IST: 0.15, UB: 0.1, ER: 0.1, EL: 0.1, GEHT: 0.1, EOS: 0.3}
rows = {
    (): {DAS: 0.7, UB: 0.3},
    (DAS,): {IST: 0.9, UB: 0.1},
    (DAS, IST): {EOS: 0.8, UB: 0.2},
}
scorer = TableScorer(vocab, rows, default)
ctx = ScoreContext()

## Plain beam search ignores the phrase entirely
plain = decode_beam(scorer, ctx, max_len=8, k=3)
print("beam:", detokenize(plain.tokens, vocab), f"logp={plain.score:.3f}")

## One constraint made of two words, three tokens
cons = ConstraintSet.from_token_lists([[UB, ER, GEHT]], vocab)
res = decode_gbs(scorer, ctx, cons, max_len=8, k=3, keep_grid=True)
print("gbs: ", detokenize(res.tokens, vocab), f"logp={res.score:.3f}", "run starts at", res.hypothesis.runs)

## How full each coverage row of the grid got
print("hypotheses per coverage row:", res.diagnostics["row_occupancy"])
print("expanded:", res.diagnostics["expanded"])

## Best hypothesis in the top row at each timestep.  Only these cells can
## finish, because every constraint token is placed there.
for t, row in enumerate(res.grid):
    for h in row[-1][:1]:
        tag = "finished" if h.finished else ""
        print(f"  t={t}  {' '.join(vocab.strings(h.tokens)):<34} p={math.exp(h.score):.4f} {tag}")

## Word vs token matching.  Here the model likes to open a word with "üb@@"
## and then continue it with another "üb@@" (the start of "übel" etc).
## Token mode may open the constraint right there, gluing two pieces into a
## broken word.  Word mode waits for a word boundary.
sticky = {
    (): {DAS: 0.2, UB: 0.7, EOS: 0.1},
    (UB,): {UB: 0.5, EL: 0.38, ER: 0.02, EOS: 0.1},
}
sticky_scorer = TableScorer(vocab, sticky, default)
short = ConstraintSet.from_token_lists([[UB, ER]], vocab)
for mode in (MatchMode.TOKEN, MatchMode.WORD):
    r = decode_gbs(sticky_scorer, ctx, short, max_len=6, k=3, mode=mode)
    print(f"{mode.value:>5} mode:", " ".join(vocab.strings(r.tokens)), "->", detokenize(r.tokens, vocab),
          f"logp={r.score:.3f}")
