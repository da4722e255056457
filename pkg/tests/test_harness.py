import json
import math

import pytest

from qegbs.constraints import QETag
from qegbs.decoders import DecodeConfig
from qegbs.errors import ParseError, SchemaError
from qegbs.harness import (
    ExperimentConfig,
    SyntheticConfig,
    TaggedInstance,
    dump_jsonl,
    load_jsonl,
    make_synthetic,
    run_decode,
    run_experiment,
    summarize_records,
)
from qegbs.metrics import corpus_ter
from qegbs.scoring import copy_bias_wrap, ngram_train

OK, BAD = QETag.OK, QETag.BAD


@pytest.fixture(scope="module")
def small():
    corpus = make_synthetic(SyntheticConfig(n_sentences=40, n_lm_sentences=800, seed=7))
    lm = ngram_train([corpus.vocab.ids(s) for s in corpus.lm_corpus], 3, 0.001, corpus.vocab)
    return corpus, copy_bias_wrap(lm, 0.25)


def _line(**kw):
    d = {"id": "x", "src": ["s"], "mt": ["a", "b"], "tags": ["OK", "BAD"]}
    d.update(kw)
    return json.dumps(d)


def test_load_three_lines(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("\n".join(_line(id=f"i{n}") for n in range(3)) + "\n")
    insts = load_jsonl(p)
    assert [i.id for i in insts] == ["i0", "i1", "i2"]
    assert insts[0].tags == [OK, BAD]


@pytest.mark.parametrize(
    "text, err, needle",
    [
        (_line(id="bad7", tags=["OK"]), SchemaError, "bad7"),
        (_line() + "\n" + _line(), SchemaError, "duplicate"),
        (_line(tags=["MAYBE", "OK"]), SchemaError, "tags"),
        (_line(tag_level="token"), SchemaError, "mt_tokens"),
        (_line() + "\n{oops", ParseError, "line 2"),
    ],
)
def test_load_rejects(tmp_path, text, err, needle):
    p = tmp_path / "d.jsonl"
    p.write_text(text + "\n")
    with pytest.raises(err, match=needle):
        load_jsonl(p)


def test_token_level_tags_are_lifted(tmp_path, small):
    corpus, scorer = small
    inst = next(i for i in corpus.instances if any(len(corpus.lexicon[w]) == 2 for w in i.mt))
    pieces = [p for w in inst.mt for p in corpus.lexicon[w]]
    tok_tags = ["OK"] * len(pieces)
    tok_tags[0] = "BAD"
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps({"id": "t", "src": inst.src, "mt": inst.mt, "mt_tokens": pieces,
                             "tags": tok_tags, "tag_level": "token"}) + "\n")
    (loaded,) = load_jsonl(p)
    rec = run_decode([loaded], scorer, DecodeConfig(decoder="gbs"))[0]
    assert rec["constraints"] == [inst.mt[1:]]


def test_gbs_with_all_bad_tags_equals_beam(small):
    corpus, scorer = small
    insts = [TaggedInstance(i.id, i.src, i.mt, [BAD] * len(i.mt), pe=i.pe) for i in corpus.instances[:15]]
    g = run_decode(insts, scorer, DecodeConfig(decoder="gbs", beam=4))
    b = run_decode(insts, scorer, DecodeConfig(decoder="beam", beam=4))
    assert [r["tokens"] for r in g] == [r["tokens"] for r in b]


def test_gbs_with_all_ok_oracle_tags_keeps_mt():
    corpus = make_synthetic(SyntheticConfig(n_sentences=10, n_lm_sentences=500, p_sub=0, p_del=0, p_ins=0, seed=2))
    lm = ngram_train([corpus.vocab.ids(s) for s in corpus.lm_corpus], 2, 0.01, corpus.vocab)
    for rec, inst in zip(run_decode(corpus.instances, copy_bias_wrap(lm, 0.5), DecodeConfig(decoder="gbs")),
                         corpus.instances):
        out, mt = rec["output"], inst.mt
        assert any(out[i : i + len(mt)] == mt for i in range(len(out) - len(mt) + 1))


def test_decode_file_is_byte_identical_on_rerun(tmp_path, small):
    corpus, scorer = small
    for dec in ("gbs", "sample", "topk"):
        cfg = DecodeConfig(decoder=dec, seed=5, top_k=3)
        run_decode(corpus.instances, scorer, cfg, out_path=tmp_path / "a.jsonl")
        run_decode(corpus.instances, scorer, cfg, out_path=tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_per_instance_errors_do_not_stop_the_run(small):
    corpus, scorer = small
    broken = TaggedInstance("broken", ["zz"], ["not-a-word"], [OK])
    recs = run_decode([broken] + corpus.instances[:2], scorer, DecodeConfig(decoder="gbs"))
    assert recs[0]["output"] is None and "UnknownWord" in recs[0]["error"]
    assert all(r["error"] is None for r in recs[1:])


def test_experiment_bookkeeping(small):
    corpus, scorer = small
    cfg = ExperimentConfig(systems=("do-nothing", "beam", "gbs-word@oracle", "gbs-word@perturbed", "sample"),
                           p_fp=0.3, seed=1)
    rep = run_experiment(corpus.instances, scorer, cfg)
    mts = [i.mt for i in corpus.instances]
    pes = [i.pe for i in corpus.instances]
    assert rep.systems["do-nothing"]["ter"] == corpus_ter(mts, pes)
    assert rep.systems["do-nothing"]["deterioration"] == 0
    again = summarize_records(rep.records)
    for name, s in rep.systems.items():
        assert abs(again[name]["ter"] - s["ter"]) <= 1e-12
        assert abs(again[name]["deterioration"] - s["deterioration"]) <= 1e-12
    assert rep.systems["gbs-word@oracle"]["ter"] <= rep.systems["do-nothing"]["ter"]
    assert "gbs-word@oracle" in rep.table()
    rep2 = run_experiment(corpus.instances, scorer, cfg)
    assert rep2.fingerprint == rep.fingerprint and rep2.records == rep.records


def test_experiment_needs_post_edits(small):
    _, scorer = small
    with pytest.raises(SchemaError):
        run_experiment([TaggedInstance("a", [], ["x"], [OK])], scorer, ExperimentConfig())


def test_experiment_config_from_dict():
    cfg = ExperimentConfig.from_dict({"systems": ["beam"], "beam": 3})
    assert cfg.systems == ("beam",) and cfg.beam == 3
    with pytest.raises(SchemaError):
        ExperimentConfig.from_dict({"beams": 3})


def test_synthetic_noise_free_and_all_substituted():
    clean = make_synthetic(SyntheticConfig(n_sentences=50, n_lm_sentences=10, p_sub=0, p_del=0, p_ins=0))
    assert all(i.mt == i.pe and all(t is OK for t in i.tags) for i in clean.instances)
    dirty = make_synthetic(SyntheticConfig(n_sentences=50, n_lm_sentences=10, p_sub=1, p_del=0, p_ins=0))
    assert all(all(t is BAD for t in i.tags) for i in dirty.instances)


def test_synthetic_substitution_rate():
    p = 0.3
    corpus = make_synthetic(SyntheticConfig(n_sentences=1000, n_lm_sentences=10, p_sub=p, seed=11))
    n = sum(i.meta["pe_words"] for i in corpus.instances)
    subs = sum(i.meta["substitutions"] for i in corpus.instances)
    assert abs(subs / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_synthetic_is_seeded_and_roundtrips(tmp_path):
    a = make_synthetic(SyntheticConfig(n_sentences=20, n_lm_sentences=20, seed=3))
    b = make_synthetic(SyntheticConfig(n_sentences=20, n_lm_sentences=20, seed=3))
    assert [i.to_json() for i in a.instances] == [i.to_json() for i in b.instances]
    assert a.lm_corpus == b.lm_corpus
    dump_jsonl(a.instances, tmp_path / "d.jsonl")
    back = load_jsonl(tmp_path / "d.jsonl")
    assert [i.to_json() for i in back] == [i.to_json() for i in a.instances]
    # shared first pieces exist, which the word-boundary rule relies on
    heads = [ps[0] for ps in a.lexicon.values() if len(ps) > 1]
    assert len(heads) > len(set(heads))


def test_synthetic_config_validation():
    with pytest.raises(ValueError):
        SyntheticConfig(p_sub=1.2)
    with pytest.raises(ValueError):
        SyntheticConfig(min_len=9, n_layers=6)
