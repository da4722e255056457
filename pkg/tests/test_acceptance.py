"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line (shown even
under output capture) and then asserts the same condition.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from qegbs.constraints import ConstraintSet, QETag
from qegbs.decoders import DecodeConfig, decode_beam, decode_greedy, decode_soft_penalty, decode_topk
from qegbs.errors import DecodeIncomplete
from qegbs.gbs import MatchMode, decode_gbs
from qegbs.harness import (
    ExperimentConfig,
    SyntheticConfig,
    instance_constraints,
    instance_seed,
    make_synthetic,
    run_decode,
    run_experiment,
)
from qegbs.metrics import apply_shift, bleu_corpus, levenshtein, ter
from qegbs.oracle import brute_force_constrained
from qegbs.qesim import NoiseSpec, perturb_tags
from qegbs.scoring import ScoreContext, TableScorer, copy_bias_wrap, ngram_train
from qegbs.text import Vocabulary

from suites import CTX, RandomScorer, exists_disjoint_placement, make_vocab, placed_runs_ok, random_constraints

OK, BAD = QETag.OK, QETag.BAD


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return _report


def test_c1_constraint_satisfaction(report):
    t0 = time.perf_counter()
    v = make_vocab(14, 5)  # 20 tokens
    rng = np.random.default_rng(101)
    n = finished = bad = 0
    for i in range(1200):
        cs = random_constraints(rng, v, int(rng.integers(0, 5)))
        max_len = int(rng.integers(cs.total_tokens + 1, 26))
        k = int(rng.integers(1, 6))
        mode = MatchMode.WORD if i % 2 else MatchMode.TOKEN
        sc = RandomScorer(v, i, eos_boost=4.0)
        try:
            res = decode_gbs(sc, CTX, cs, max_len, k, mode)
        except DecodeIncomplete:
            continue
        n += 1
        if not res.finished:
            continue
        finished += 1
        toks = res.tokens
        if not (placed_runs_ok(toks, cs, res.hypothesis.runs) and exists_disjoint_placement(toks, cs.token_lists)):
            bad += 1
    dt = time.perf_counter() - t0
    ok = n >= 1000 and bad == 0 and dt < 60
    report(1, ok, f"{n} decodes, {finished} finished, {bad} violations, {dt:.1f}s")


def test_c2_beam_reduction(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    mismatches = 0
    for i in range(500):
        v = make_vocab(int(rng.integers(3, 12)), int(rng.integers(0, 3)))
        sc = RandomScorer(v, 5000 + i, eos_boost=float(rng.uniform(0.2, 2)))
        max_len, k = int(rng.integers(1, 12)), int(rng.integers(1, 7))
        g = decode_gbs(sc, CTX, ConstraintSet(), max_len, k)
        b = decode_beam(sc, CTX, max_len, k)
        if g.tokens != b.tokens or abs(g.score - b.score) > 1e-9:
            mismatches += 1
    dt = time.perf_counter() - t0
    report(2, mismatches == 0 and dt < 30, f"500 instances, {mismatches} mismatches, {dt:.1f}s")


def test_c3_oracle_optimality(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    mismatches = checked = 0
    for i in range(200):
        v = make_vocab(int(rng.integers(2, 5)), int(rng.integers(0, 2)))  # |V| <= 6 with eos
        word = bool(i % 2)
        cs = random_constraints(rng, v, int(rng.integers(0, 3)), max_words=1)
        max_len = int(rng.integers(cs.total_tokens + 1, 8))
        sc = RandomScorer(v, 9000 + i, levels=3)  # coarse weights force exact score ties
        ref = brute_force_constrained(sc, CTX, cs, max_len, word_aligned=word)
        # a beam wider than the number of sequences in any cell never prunes
        k = len(v) ** max_len
        try:
            res = decode_gbs(sc, CTX, cs, max_len, k, MatchMode.WORD if word else MatchMode.TOKEN)
            got = (res.tokens, res.score) if res.finished else (None, -math.inf)
        except DecodeIncomplete:
            got = (None, -math.inf)
        checked += 1
        if got != (ref.tokens, ref.score):
            mismatches += 1
    dt = time.perf_counter() - t0
    report(3, checked == 200 and mismatches == 0 and dt < 120, f"{checked} instances, {mismatches} mismatches, {dt:.1f}s")


ADV = Vocabulary(("das", "ist", "üb@@", "er", "el", "geht", "</s>"))


def adversarial_instance(rng):
    """A table where the distractor 'üb@@ el' competes with the constraint 'üb@@ er'.

    The model likes to open a word with 'üb@@'.  After that piece it gives
    real mass to another 'üb@@', so token-level matching can open the
    constraint in the middle of the distractor word.
    """
    p_ub = rng.uniform(0.4, 0.8)
    rows = {
        (): {0: 0.9 - p_ub, 2: p_ub, 6: 0.1},
        (2,): {2: rng.uniform(0.3, 0.6), 4: 0.2, 3: 0.05},
    }
    rows[(2,)][6] = 1.0 - sum(rows[(2,)].values())
    default = {0: 0.15, 1: 0.15, 2: 0.1, 3: 0.1, 4: 0.1, 5: 0.1, 6: 0.3}
    sc = TableScorer(ADV, rows, default)
    lists = [ADV.ids(["üb@@", "er"])]
    if rng.random() < 0.5:
        lists[0] += ADV.ids(["geht"])
    return sc, ConstraintSet.from_token_lists(lists, ADV)


def misfires(res, vocab):
    h = res.hypothesis
    return sum(s > 0 and vocab.is_continuation(h.tokens[s - 1]) for s in h.runs)


def test_c4_word_vs_token_adversarial(report):
    rates = {}
    for mode in (MatchMode.WORD, MatchMode.TOKEN):
        rng = np.random.default_rng(404)
        starts = fired = 0
        for _ in range(100):
            sc, cs = adversarial_instance(rng)
            res = decode_gbs(sc, CTX, cs, cs.total_tokens + 4, 3, mode)
            starts += len(cs)
            fired += misfires(res, ADV)
        rates[mode.value] = fired / starts
    again = np.random.default_rng(404)
    sc, cs = adversarial_instance(again)
    stable = decode_gbs(sc, CTX, cs, cs.total_tokens + 4, 3, "token").tokens == \
        decode_gbs(sc, CTX, cs, cs.total_tokens + 4, 3, "token").tokens
    ok = rates["word"] == 0 and rates["token"] > 0 and stable
    report(4, ok, f"misfire rate word={rates['word']:.3f} token={rates['token']:.3f}")


def synthetic_setup(p_sub, n=1000, seed=0):
    corpus = make_synthetic(SyntheticConfig(n_sentences=n, p_sub=p_sub, seed=seed))
    lm = ngram_train([corpus.vocab.ids(s) for s in corpus.lm_corpus], 3, 0.001, corpus.vocab)
    return corpus, copy_bias_wrap(lm, 0.25)


@pytest.mark.parametrize("p_sub", [0.3, 0.5])
def test_c5_directional_ordering(report, p_sub):
    t0 = time.perf_counter()
    corpus, scorer = synthetic_setup(p_sub)
    cfg = ExperimentConfig(systems=("do-nothing", "beam", "gbs-word@oracle"), seed=0)
    s = run_experiment(corpus.instances, scorer, cfg).systems
    dn, beam, gbs = (s[k] for k in ("do-nothing", "beam", "gbs-word@oracle"))
    dt = time.perf_counter() - t0
    ok = gbs["ter"] < beam["ter"] < dn["ter"] and gbs["deterioration"] <= beam["deterioration"] and dt < 300
    report(5, ok, f"noise={p_sub} TER gbs={gbs['ter']:.3f} beam={beam['ter']:.3f} do-nothing={dn['ter']:.3f}; "
                  f"deterioration gbs={gbs['deterioration']:.3f} beam={beam['deterioration']:.3f}; {dt:.1f}s")


def forced_bad_rate(instances, scorer, vocab, p_fp, seed=0):
    """Share of MT words that GBS was made to copy although the oracle tags them BAD."""
    truth = {inst.id: inst.tags for inst in instances}
    noisy = {inst.id: perturb_tags(inst.tags, NoiseSpec(p_fp, 0.0, instance_seed(seed, i)))
             for i, inst in enumerate(instances)}
    recs = run_decode(instances, scorer, DecodeConfig(decoder="gbs"), noisy)
    wrong = total = 0
    for inst, rec in zip(instances, recs):
        total += len(inst.mt)
        if rec["output"] is None:
            continue
        for c in instance_constraints(inst, vocab, noisy[inst.id]):
            a, b = c.source_span
            wrong += sum(t is BAD for t in truth[inst.id][a:b])
    return wrong / total


def test_c6_noise_sensitivity(report):
    corpus, scorer = synthetic_setup(0.3, n=200, seed=6)
    sweep = [0.0, 0.1, 0.3, 0.5]
    rates = [forced_bad_rate(corpus.instances, scorer, corpus.vocab, p) for p in sweep]
    ok = all(a <= b for a, b in zip(rates, rates[1:]))
    report(6, ok, "incorrect forced-word rate " + ", ".join(f"p_fp={p}: {r:.3f}" for p, r in zip(sweep, rates)))


def fewest_edits_one_move(hyp, ref):
    best = levenshtein(hyp, ref)
    for start, length in itertools.product(range(len(hyp)), range(1, len(hyp) + 1)):
        for dest in range(len(hyp) - length + 1 if start + length <= len(hyp) else 0):
            moved = apply_shift(hyp, start, length, dest)
            if moved != list(hyp):
                best = min(best, 1 + levenshtein(moved, ref))
    return best


def test_c7_metric_goldens(report):
    checks = {
        "ter identity": ter("a b c".split(), "a b c".split()).score == 0,
        "ter one substitution": ter("a x c d".split(), "a b c d".split()).score == 0.25,
        "ter shift": ter(["b", "a"], ["a", "b"]).score == 0.5 == fewest_edits_one_move(["b", "a"], ["a", "b"]) / 2,
        "bleu identity": abs(bleu_corpus([list("abcd")], [list("abcd")]).score - 100) < 1e-9,
    }
    short = bleu_corpus([list("abcd")], [list("abcde")]).score
    # unit precisions leave only the brevity penalty exp(1 - 5/4)
    checks["bleu 4 vs 5"] = abs(short - 100 * math.exp(1 - 5 / 4)) < 1e-9 and abs(short - 77.88) <= 0.01
    failed = [k for k, v in checks.items() if not v]
    report(7, not failed, f"{len(checks) - len(failed)}/{len(checks)} goldens, BLEU 4-vs-5 = {short:.4f}")


def test_c8_decoder_reductions(report):
    rng = np.random.default_rng(808)
    counts = {"beam(1)=greedy": 0, "topk(1)=greedy": 0, "soft(0)=beam": 0}
    for i in range(200):
        v = make_vocab(int(rng.integers(3, 15)), int(rng.integers(0, 3)))
        sc = RandomScorer(v, 800 + i, zero_frac=0.1)
        ctx = ScoreContext(("t0", "t1"), ("t2",))
        max_len, k = int(rng.integers(1, 15)), int(rng.integers(1, 6))
        g = decode_greedy(sc, ctx, max_len).tokens
        counts["beam(1)=greedy"] += decode_beam(sc, ctx, max_len, 1).tokens == g
        counts["topk(1)=greedy"] += decode_topk(sc, ctx, max_len, 1, seed=i).tokens == g
        counts["soft(0)=beam"] += decode_soft_penalty(sc, ctx, max_len, k, 0.0).tokens == decode_beam(sc, ctx, max_len, k).tokens
    report(8, all(c == 200 for c in counts.values()), ", ".join(f"{k} {c}/200" for k, c in counts.items()))


def test_c9_cli_determinism(report, tmp_path, capsys):
    from qegbs.cli import main

    syn = ["--n-sentences", "25", "--n-lm-sentences", "300", "--seed", "9"]
    ws = tmp_path / "ws"
    main(["make-synthetic", "--out-dir", str(ws), *syn])
    vl = ["--vocab", str(ws / "vocab.txt"), "--lexicon", str(ws / "lexicon.tsv")]
    main(["train-lm", "--corpus", str(ws / "lm_corpus.txt"), "--output", str(ws / "lm.json"), *vl[:2]])
    data = str(ws / "data.jsonl")
    first = open(data, encoding="utf-8").readline()
    tiny = ws / "tiny.jsonl"
    d = json.loads(first)
    tiny.write_text(json.dumps(dict(d, mt=d["mt"][:2], tags=d["tags"][:2])) + "\n")
    m = ["--model", str(ws / "lm.json")]

    def commands(out):
        return [
            ["make-synthetic", "--out-dir", f"{out}/syn", *syn],
            ["train-lm", "--corpus", str(ws / "lm_corpus.txt"), "--output", f"{out}/lm.json", *vl[:2]],
            ["tag-oracle", "--input", data, "--output", f"{out}/tagged.jsonl"],
            ["perturb-tags", "--input", data, "--output", f"{out}/noisy.jsonl", "--p-fp", "0.3", "--seed", "2"],
            ["extract-constraints", "--input", data, "--output", f"{out}/cons.jsonl", *vl],
            *[["decode", "--input", data, "--output", f"{out}/{d}.jsonl", "--decoder", d, "--seed", "3", *vl, *m]
              for d in ("gbs", "beam", "greedy", "sample", "topk", "soft-penalty")],
            ["evaluate", "--hyps", f"{out}/gbs.jsonl", "--refs", data, "--output", f"{out}/eval.jsonl",
             "--summary", f"{out}/eval.json"],
            ["experiment", "--input", data, "--output", f"{out}/report.json", "--table", f"{out}/table.txt",
             "--p-fp", "0.2", *vl, *m],
            ["oracle-decode", "--input", str(tiny), "--output", f"{out}/oracle.jsonl", "--max-len", "3", *vl, *m],
        ]

    codes = []
    for run in ("a", "b"):
        (tmp_path / run).mkdir()
        codes += [main(c) for c in commands(tmp_path / run)]
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    differ = [str(f) for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    subs = sorted({c[0] for c in commands(a)})
    ok = not differ and all(c == 0 for c in codes) and len(subs) == 9
    report(9, ok, f"{len(subs)} subcommands, {len(files)} files compared, {len(differ)} differ")
