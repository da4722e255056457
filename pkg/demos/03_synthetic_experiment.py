## A desk-scale post-editing experiment, end to end.
##
## 1. generate a seeded corpus of (src, mt, pe) with oracle tags
## 2. train a trigram model on separate sentences from the same source
## 3. mix it with a copy distribution over the input words
## 4. compare leaving the MT alone, beam search and QE-constrained GBS

import time

from qegbs import copy_bias_wrap, ngram_train
from qegbs.harness import ExperimentConfig, SyntheticConfig, make_synthetic, run_experiment

cfg = SyntheticConfig(n_sentences=300, p_sub=0.3, seed=0)
corpus = make_synthetic(cfg)
print(len(corpus.instances), "instances,", len(corpus.vocab), "tokens in the vocabulary")

inst = corpus.instances[0]
print("mt  :", " ".join(inst.mt))
print("pe  :", " ".join(inst.pe))
print("tags:", " ".join(str(t) for t in inst.tags))

lm = ngram_train([corpus.vocab.ids(s) for s in corpus.lm_corpus], 3, 0.001, corpus.vocab)
scorer = copy_bias_wrap(lm, 0.25)

systems = ("do-nothing", "beam", "greedy", "gbs-token@oracle", "gbs-word@oracle", "gbs-word@perturbed", "soft-penalty")
t0 = time.time()
report = run_experiment(corpus.instances, scorer, ExperimentConfig(systems=systems, p_fp=0.3))
print(f"\n{report.table()}\n({time.time() - t0:.1f}s, fingerprint {report.fingerprint[:12]})")

## The copy weight matters a lot.  A small weight makes every input word and
## the end of sentence cheap, so a good search finds short outputs.
for lam in (0.1, 0.25, 0.5):
    r = run_experiment(corpus.instances, copy_bias_wrap(lm, lam),
                       ExperimentConfig(systems=("beam", "gbs-word@oracle")))
    print(f"lambda={lam}: beam TER {r.systems['beam']['ter']:.3f}  gbs TER {r.systems['gbs-word@oracle']['ter']:.3f}")
