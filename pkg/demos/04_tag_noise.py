## How wrong QE tags leak into the output.
##
## Missed errors (BAD reported as OK) get forced into the output verbatim.
## Sweep the miss rate and count how many truly BAD words end up forced,
## alongside corpus TER.

import numpy as np

from qegbs import QETag, copy_bias_wrap, ngram_train
from qegbs.decoders import DecodeConfig
from qegbs.harness import SyntheticConfig, instance_constraints, instance_seed, make_synthetic, run_decode
from qegbs.metrics import corpus_ter
from qegbs.qesim import NoiseSpec, perturb_tags

corpus = make_synthetic(SyntheticConfig(n_sentences=200, p_sub=0.3, seed=6))
lm = ngram_train([corpus.vocab.ids(s) for s in corpus.lm_corpus], 3, 0.001, corpus.vocab)
scorer = copy_bias_wrap(lm, 0.25)
n_words = sum(len(i.mt) for i in corpus.instances)

print(f"{'p_fp':>5} {'forced BAD':>11} {'TER':>7}")
for p_fp in np.arange(0.0, 0.6, 0.1):
    noisy = {inst.id: perturb_tags(inst.tags, NoiseSpec(p_fp, 0.0, instance_seed(0, i)))
             for i, inst in enumerate(corpus.instances)}
    recs = run_decode(corpus.instances, scorer, DecodeConfig(decoder="gbs"), noisy)
    wrong = 0
    for inst in corpus.instances:
        for c in instance_constraints(inst, corpus.vocab, noisy[inst.id]):
            a, b = c.source_span
            wrong += sum(t is QETag.BAD for t in inst.tags[a:b])
    outs = [r["output"] or [] for r in recs]
    t = corpus_ter(outs, [i.pe for i in corpus.instances])
    print(f"{p_fp:5.1f} {wrong / n_words:11.3f} {t:7.3f}")
