## From word-level OK/BAD tags to forced phrases.
##
## Each maximal run of OK words becomes one constraint.  Token-level tags are
## first collapsed to words; a word counts as OK only if all its pieces are.

from qegbs import QETag, Vocabulary, extract_constraints, lift_tags_to_words, oracle_tags, word_boundaries
from qegbs.qesim import NoiseSpec, perturb_tags

OK, BAD = QETag.OK, QETag.BAD

vocab = Vocabulary(("der", "hund", "läuft", "schnell", "üb@@", "er", "die", "straße", "</s>"))
lexicon = {"über": ("üb@@", "er")}
vocab = Vocabulary(vocab.tokens, lexicon=lexicon)

mt = ["der", "hund", "läuft", "schnell", "über", "die", "straße"]
pe = ["der", "hund", "rennt", "über", "die", "straße"]

## Oracle tags: align MT to the post-edit with the fewest edits
tags = oracle_tags(mt, pe)
print(" ".join(f"{w}/{t}" for w, t in zip(mt, tags)))

for c in extract_constraints(mt, tags, vocab):
    print("constraint", c.surface, "tokens", vocab.strings(c.tokens), "mt span", c.source_span)

## Token-level tags on the pieces of "über": one BAD piece spoils the word
pieces = ["der", "hund", "läuft", "schnell", "üb@@", "er", "die", "straße"]
tok_tags = [OK, OK, BAD, BAD, OK, BAD, OK, OK]
bounds = word_boundaries(vocab.ids(pieces), vocab)
print("rule=all:", [str(t) for t in lift_tags_to_words(tok_tags, bounds, "all")])
print("rule=any:", [str(t) for t in lift_tags_to_words(tok_tags, bounds, "any")])

## Tag noise.  p_fp turns BAD into OK (the QE model missed an error), which
## grows or merges constraints; p_fn splits them.
for p_fp, p_fn in [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (1.0, 0.0)]:
    noisy = perturb_tags(tags, NoiseSpec(p_fp, p_fn, seed=1))
    spans = [c.surface for c in extract_constraints(mt, noisy, vocab)]
    print(f"p_fp={p_fp} p_fn={p_fn}:", spans)
